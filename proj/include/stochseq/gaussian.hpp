#pragma once

#include <Eigen/Dense>

#include <stdexcept>

namespace stochseq {

// Mean/stddev vectors of a diagonal Gaussian (an approximate posterior or
// a learned prior).
struct GaussianParams {
    Eigen::VectorXd mu;
    Eigen::VectorXd sigma;

    int dim() const { return static_cast<int>(mu.size()); }

    void validate() const {
        if (mu.size() != sigma.size())
            throw std::invalid_argument("GaussianParams: mu/sigma size mismatch");
        if (!mu.allFinite() || !sigma.allFinite())
            throw std::invalid_argument("GaussianParams: non-finite entries");
        if ((sigma.array() <= 0.0).any())
            throw std::invalid_argument("GaussianParams: sigma must be positive");
    }
};

}  // namespace stochseq
