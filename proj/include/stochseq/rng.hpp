#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace stochseq {

using Rng = std::mt19937_64;

// Stable seed derivation for independent sub-streams (per family, per
// worker). splitmix64 finalizer keeps nearby seeds uncorrelated.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
    std::normal_distribution<double> d(mean, stddev);
    return d(rng);
}

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {  // inclusive bounds
    std::uniform_int_distribution<int> d(lo, hi);
    return d(rng);
}

inline Eigen::MatrixXd randn(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                             double stddev = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    std::normal_distribution<double> d(0.0, stddev);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = d(rng);
    return m;
}

// Glorot-style uniform init for weight matrices.
inline Eigen::MatrixXd glorot(Rng& rng, Eigen::Index fan_in, Eigen::Index fan_out) {
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Eigen::MatrixXd m(fan_in, fan_out);
    std::uniform_real_distribution<double> d(-limit, limit);
    for (Eigen::Index r = 0; r < fan_in; ++r)
        for (Eigen::Index c = 0; c < fan_out; ++c) m(r, c) = d(rng);
    return m;
}

}  // namespace stochseq
