#pragma once

// Shared test helpers: finite-difference gradient checking and
// Monte-Carlo KL estimation. These stay independent of the autodiff
// pullback implementations they are used to check.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <vector>

#include "stochseq/autodiff.hpp"
#include "stochseq/gaussian.hpp"
#include "stochseq/rng.hpp"

namespace testsupport {

using Mat = Eigen::MatrixXd;

// Rebuilds the loss through `forward` for perturbed copies of `params`
// and compares central finite differences against the analytic gradient.
// `forward` must be a pure function of the parameter values.
struct GradCheckResult {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    long checked = 0;
};

inline GradCheckResult finite_difference_check(
    const std::vector<Mat>& params,
    const std::function<double(const std::vector<Mat>&)>& forward,
    const std::function<std::vector<Mat>(const std::vector<Mat>&)>& analytic_grads,
    double h = 1e-5) {
    GradCheckResult res;
    std::vector<Mat> grads = analytic_grads(params);
    std::vector<Mat> work = params;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (Eigen::Index r = 0; r < params[p].rows(); ++r) {
            for (Eigen::Index c = 0; c < params[p].cols(); ++c) {
                double orig = work[p](r, c);
                work[p](r, c) = orig + h;
                double up = forward(work);
                work[p](r, c) = orig - h;
                double down = forward(work);
                work[p](r, c) = orig;
                double fd = (up - down) / (2.0 * h);
                double an = grads[p](r, c);
                double abs_err = std::abs(fd - an);
                double rel = abs_err / std::max({std::abs(fd), std::abs(an), 1e-6});
                res.max_abs_err = std::max(res.max_abs_err, abs_err);
                res.max_rel_err = std::max(res.max_rel_err, rel);
                ++res.checked;
            }
        }
    }
    return res;
}

// Convenience wrapper: builds the graph once for gradients and re-runs
// the same builder for finite differences.
inline GradCheckResult check_graph_gradients(
    const std::vector<Mat>& params,
    const std::function<stochseq::ad::Var(stochseq::ad::Tape&, const std::vector<stochseq::ad::Var>&)>&
        build,
    double h = 1e-5) {
    auto forward = [&](const std::vector<Mat>& vals) {
        stochseq::ad::Tape tape;
        std::vector<stochseq::ad::Var> vars;
        vars.reserve(vals.size());
        for (const Mat& v : vals) vars.push_back(tape.constant(v));
        return tape.scalar(build(tape, vars));
    };
    auto analytic = [&](const std::vector<Mat>& vals) {
        stochseq::ad::Tape tape;
        std::vector<stochseq::ad::Var> vars;
        vars.reserve(vals.size());
        for (const Mat& v : vals) vars.push_back(tape.param(v));
        stochseq::ad::Var root = build(tape, vars);
        tape.backward(root);
        std::vector<Mat> grads;
        grads.reserve(vars.size());
        for (auto v : vars) grads.push_back(tape.grad(v));
        return grads;
    };
    return finite_difference_check(params, forward, analytic, h);
}

// Monte-Carlo estimate of KL(N(p1) || N(p2)) for diagonal Gaussians.
inline double mc_gaussian_kl(const stochseq::GaussianParams& p1,
                             const stochseq::GaussianParams& p2, long samples,
                             stochseq::Rng& rng) {
    const int d = p1.dim();
    double acc = 0.0;
    for (long s = 0; s < samples; ++s) {
        double logp1 = 0.0, logp2 = 0.0;
        for (int j = 0; j < d; ++j) {
            double x = p1.mu[j] + p1.sigma[j] * stochseq::normal(rng);
            double z1 = (x - p1.mu[j]) / p1.sigma[j];
            double z2 = (x - p2.mu[j]) / p2.sigma[j];
            logp1 += -0.5 * z1 * z1 - std::log(p1.sigma[j]);
            logp2 += -0.5 * z2 * z2 - std::log(p2.sigma[j]);
        }
        acc += logp1 - logp2;
    }
    return acc / static_cast<double>(samples);
}

}  // namespace testsupport
