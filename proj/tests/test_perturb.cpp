#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <vector>

#include "stochseq/perturb.hpp"

using namespace stochseq;
using perturb::CurriculumState;
using perturb::IndexMask;

namespace {
void check_partition(const IndexMask& m) {
    std::vector<int> all = m.sampled;
    all.insert(all.end(), m.complement.begin(), m.complement.end());
    std::sort(all.begin(), all.end());
    REQUIRE(static_cast<int>(all.size()) == m.length);
    for (int i = 0; i < m.length; ++i) REQUIRE(all[i] == i);
}
}  // namespace

TEST_CASE("deterministic prefix at c=0") {
    Rng rng(1);
    CurriculumState curr;
    curr.c = 0;
    curr.c_max = 2;
    IndexMask m = perturb::sample_mask(4, 0.5, rng, curr);
    REQUIRE(m.sampled == std::vector<int>{0, 1});
    REQUIRE(m.complement == std::vector<int>{2, 3});
}

TEST_CASE("sampled count is always ceil(alpha L)") {
    Rng rng(2);
    IndexMask m = perturb::sample_mask(10, 0.55, rng);
    REQUIRE(static_cast<int>(m.sampled.size()) == 6);
    for (int trial = 0; trial < 200; ++trial) {
        double alpha = uniform(rng);
        int L = uniform_int(rng, 1, 40);
        IndexMask mm = perturb::sample_mask(L, alpha, rng);
        REQUIRE(static_cast<int>(mm.sampled.size()) == perturb::sampled_count(L, alpha));
        check_partition(mm);
    }
}

TEST_CASE("uniform inclusion frequency at c = c_max") {
    Rng rng(3);
    const int L = 8;
    const int draws = 100000;
    std::vector<int> counts(L, 0);
    for (int i = 0; i < draws; ++i) {
        IndexMask m = perturb::sample_mask(L, 0.5, rng);
        for (int idx : m.sampled) counts[idx]++;
    }
    for (int i = 0; i < L; ++i) {
        double freq = static_cast<double>(counts[i]) / draws;
        REQUIRE(freq == Catch::Approx(0.5).margin(0.01));
    }
}

TEST_CASE("intermediate curriculum keeps m - c prefix indices") {
    Rng rng(4);
    CurriculumState curr;
    curr.c_max = 8;
    curr.c = 3;
    for (int trial = 0; trial < 200; ++trial) {
        IndexMask m = perturb::sample_mask(16, 0.5, rng, curr);
        check_partition(m);
        int from_prefix = 0;
        for (int idx : m.sampled)
            if (idx < 8) ++from_prefix;
        REQUIRE(from_prefix >= 8 - 3);  // at least the kept prefix slots
    }
}

TEST_CASE("resample routes sampled indices from a and the rest from b") {
    IndexMask m;
    m.length = 4;
    m.alpha = 0.5;
    m.sampled = {0, 2};
    m.complement = {1, 3};
    std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8};
    REQUIRE(perturb::resample(a, b, m) == std::vector<double>{1, 6, 3, 8});
    REQUIRE(perturb::resample(a, a, m) == a);

    // swap symmetry: resample(b, a, I) == resample(a, b, complement of I)
    REQUIRE(perturb::resample(b, a, m) == perturb::resample(a, b, perturb::swapped(m)));

    std::vector<double> shorter{1, 2};
    REQUIRE_THROWS_AS(perturb::resample(shorter, b, m), std::invalid_argument);
}

TEST_CASE("boundary masks alpha=0 and alpha=1") {
    Rng rng(5);
    std::vector<double> a{1, 2, 3}, b{4, 5, 6};
    IndexMask all = perturb::sample_mask(3, 1.0, rng);
    IndexMask none = perturb::sample_mask(3, 0.0, rng);
    REQUIRE(perturb::resample(a, b, all) == a);
    REQUIRE(perturb::resample(a, b, none) == b);
    REQUIRE_THROWS_AS(perturb::sample_mask(3, 1.5, rng), std::invalid_argument);
    REQUIRE_THROWS_AS(perturb::sample_mask(3, -0.1, rng), std::invalid_argument);
}

TEST_CASE("curriculum schedule walk") {
    CurriculumState s;
    s.c_max = 16;
    s.step_size = 1;
    s.interval = 10;
    REQUIRE(perturb::curriculum_step(s, 0).c == 0);
    REQUIRE(perturb::curriculum_step(s, 9).c == 0);
    REQUIRE(perturb::curriculum_step(s, 10).c == 1);
    REQUIRE(perturb::curriculum_step(s, 160).c == 16);

    // c never exceeds c_max over a long walk and is monotone
    int prev = 0;
    for (long step = 0; step <= 1000000; step += 997) {
        int c = perturb::curriculum_step(s, step).c;
        REQUIRE(c >= prev);
        REQUIRE(c <= s.c_max);
        prev = c;
    }
}

TEST_CASE("make_curriculum reaches full randomness halfway through training") {
    CurriculumState s = perturb::make_curriculum(128, 0.5, 1000);
    // c_max = 64 increments at interval ~= 1000 / (2*64)
    REQUIRE(s.c_max == 64);
    long half = 500;
    REQUIRE(perturb::curriculum_step(s, half).c == s.c_max);
    REQUIRE(perturb::curriculum_step(s, 0).c == 0);
}

TEST_CASE("indicator matches resample semantics") {
    Rng rng(6);
    IndexMask m = perturb::sample_mask(12, 0.4, rng);
    Eigen::RowVectorXd ind = perturb::indicator(m);
    REQUIRE(ind.sum() == Catch::Approx(static_cast<double>(m.sampled.size())));
    for (int i : m.sampled) REQUIRE(ind[i] == 1.0);
    for (int i : m.complement) REQUIRE(ind[i] == 0.0);
}
