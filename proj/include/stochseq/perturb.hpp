#pragma once

// Mix-and-Match index sampling, vector resampling, and the curriculum
// schedule that ramps index randomness over training.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "stochseq/rng.hpp"

namespace stochseq::perturb {

struct IndexMask {
    int length = 0;
    double alpha = 0.0;
    std::vector<int> sampled;     // I, sorted
    std::vector<int> complement;  // complement of I, sorted
};

inline int sampled_count(int length, double alpha) {
    return static_cast<int>(std::ceil(alpha * static_cast<double>(length)));
}

struct CurriculumState {
    int c = 0;      // number of randomized index slots
    int c_max = 0;  // ceil(alpha * L)
    int step_size = 1;
    int interval = 1;  // training steps between increments
};

inline CurriculumState make_curriculum(int length, double alpha, int total_steps,
                                       int step_size = 1) {
    CurriculumState s;
    s.c_max = sampled_count(length, alpha);
    s.step_size = std::max(1, step_size);
    // Full randomness is reached halfway through training by default.
    int increments = (s.c_max + s.step_size - 1) / std::max(1, s.step_size);
    s.interval = std::max(1, increments > 0 ? total_steps / (2 * increments) : 1);
    return s;
}

inline CurriculumState curriculum_step(CurriculumState state, long training_step) {
    if (training_step < 0) throw std::invalid_argument("curriculum_step: negative step");
    long increments = training_step / std::max(1, state.interval);
    long c = increments * state.step_size;
    state.c = static_cast<int>(std::min<long>(c, state.c_max));
    return state;
}

// Draws the index set I with |I| = ceil(alpha*L). At c == 0 the set is
// the deterministic prefix {0..|I|-1}; at c == c_max it is a uniform
// random |I|-subset; in between, c of the prefix slots are re-drawn
// uniformly from the indices not already kept.
inline IndexMask sample_mask(int length, double alpha, Rng& rng, const CurriculumState& curr) {
    if (length <= 0) throw std::invalid_argument("sample_mask: length must be positive");
    if (alpha < 0.0 || alpha > 1.0)
        throw std::invalid_argument("sample_mask: alpha outside [0,1]");
    int m = sampled_count(length, alpha);
    int c = std::clamp(curr.c, 0, m);

    std::vector<char> in_set(length, 0);
    if (c == 0) {
        for (int i = 0; i < m; ++i) in_set[i] = 1;
    } else {
        // Keep a uniformly chosen (m-c)-subset of the prefix, then fill
        // the remaining c slots from everything not kept.
        std::vector<int> prefix(m);
        std::iota(prefix.begin(), prefix.end(), 0);
        for (int i = 0; i < m - c; ++i) {
            int pick = uniform_int(rng, i, m - 1);
            std::swap(prefix[i], prefix[pick]);
            in_set[prefix[i]] = 1;
        }
        std::vector<int> pool;
        pool.reserve(length);
        for (int i = 0; i < length; ++i)
            if (!in_set[i]) pool.push_back(i);
        for (int i = 0; i < c; ++i) {
            int pick = uniform_int(rng, i, static_cast<int>(pool.size()) - 1);
            std::swap(pool[i], pool[pick]);
            in_set[pool[i]] = 1;
        }
    }

    IndexMask mask;
    mask.length = length;
    mask.alpha = alpha;
    for (int i = 0; i < length; ++i) (in_set[i] ? mask.sampled : mask.complement).push_back(i);
    return mask;
}

// Fully random mask (the c == c_max regime used at inference).
inline IndexMask sample_mask(int length, double alpha, Rng& rng) {
    CurriculumState full;
    full.c_max = sampled_count(length, alpha);
    full.c = full.c_max;
    return sample_mask(length, alpha, rng, full);
}

inline IndexMask swapped(const IndexMask& mask) {
    IndexMask out = mask;
    std::swap(out.sampled, out.complement);
    out.alpha = 1.0 - mask.alpha;
    return out;
}

// out[i] = a[i] for i in I, b[i] otherwise.
template <typename Vec>
Vec resample(const Vec& a, const Vec& b, const IndexMask& mask) {
    if (static_cast<int>(a.size()) != mask.length || static_cast<int>(b.size()) != mask.length)
        throw std::invalid_argument("resample: vector length does not match mask");
    Vec out = b;
    for (int i : mask.sampled) out[i] = a[i];
    return out;
}

// 0/1 row indicating membership of I, for mask-based fusion inside
// computation graphs: resample(a,b) == m .* a + (1-m) .* b.
inline Eigen::RowVectorXd indicator(const IndexMask& mask) {
    Eigen::RowVectorXd m = Eigen::RowVectorXd::Zero(mask.length);
    for (int i : mask.sampled) m[i] = 1.0;
    return m;
}

}  // namespace stochseq::perturb
