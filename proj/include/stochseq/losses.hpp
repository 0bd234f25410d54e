#pragma once

// Training objectives: the anticipation loss family with its weight
// schedules, quaternion/3D-position reconstruction losses, the Gaussian
// KL terms (standard, general diagonal, learned-conditional-prior), and
// logistic KL annealing.
//
// Every differentiable loss is written once as a graph builder over
// autodiff Vars; the plain double overloads evaluate the same graph on
// constants.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "stochseq/autodiff.hpp"
#include "stochseq/gaussian.hpp"
#include "stochseq/kinematics.hpp"

namespace stochseq::loss {

using ad::Mat;
using ad::Tape;
using ad::Var;

constexpr double kProbEps = 1e-7;  // probability clamp before logs

// ---------------------------------------------------------------------------
// Weight schedules w(t), t = 1..T

struct WeightSchedule {
    enum class Kind { constant_last_frame, linear, sigmoid, exponential };

    Kind kind = Kind::linear;
    // sigmoid parameters; w(t) = e^(alpha*t - beta) / (1 + e^(alpha*t - beta))
    double alpha = 3.0;
    double beta = 6.0;

    double weight(int t, int total) const {
        switch (kind) {
            case Kind::constant_last_frame:
                return t == total ? 1.0 : 0.0;
            case Kind::linear:
                return static_cast<double>(t) / static_cast<double>(total);
            case Kind::sigmoid: {
                double e = alpha * static_cast<double>(t) - beta;
                return 1.0 / (1.0 + std::exp(-e));
            }
            case Kind::exponential:
                return std::exp(-static_cast<double>(total - t));
        }
        throw std::logic_error("unknown weight schedule kind");
    }

    static WeightSchedule linear() { return {Kind::linear}; }
    static WeightSchedule sigmoid(double a = 3.0, double b = 6.0) {
        return {Kind::sigmoid, a, b};
    }
    static WeightSchedule exponential() { return {Kind::exponential}; }
    static WeightSchedule constant_last_frame() { return {Kind::constant_last_frame}; }
};

// Logistic KL annealing weight; starts below 0.01 and saturates at 1.
struct AnnealSchedule {
    double midpoint_step = 1000.0;
    double steepness = 0.01;

    void validate() const {
        if (steepness <= 0.0) throw std::invalid_argument("AnnealSchedule: steepness must be > 0");
        if (steepness * midpoint_step < std::log(99.0))
            throw std::invalid_argument("AnnealSchedule: lambda(0) must be below 0.01");
    }
};

inline double kl_anneal_weight(long step, const AnnealSchedule& sched) {
    return 1.0 / (1.0 + std::exp(-sched.steepness * (static_cast<double>(step) -
                                                     sched.midpoint_step)));
}

// ---------------------------------------------------------------------------
// Per-frame class-probability losses. probs is T x N, one row per frame,
// each row a distribution over the N classes.

namespace detail {

inline void validate_prediction(const Mat& probs, int label) {
    if (probs.rows() < 1 || probs.cols() < 2)
        throw std::invalid_argument("prediction matrix must be T x N with N >= 2");
    if (label < 0 || label >= probs.cols())
        throw std::invalid_argument("label out of range");
    for (Eigen::Index t = 0; t < probs.rows(); ++t) {
        if (std::abs(probs.row(t).sum() - 1.0) > 1e-6)
            throw std::invalid_argument("prediction row " + std::to_string(t) +
                                        " does not sum to 1");
        if ((probs.row(t).array() < -1e-12).any() || (probs.row(t).array() > 1.0 + 1e-12).any())
            throw std::invalid_argument("prediction row " + std::to_string(t) +
                                        " has entries outside [0,1]");
    }
}

// -scale * sum_t sum_k [ fn_w(t) * y log p + fp_w(t) * (1-y) log(1-p) ]
inline Var weighted_binary_ce(Tape& tape, Var probs, int label,
                              const std::vector<double>& fn_w,
                              const std::vector<double>& fp_w, double scale_factor) {
    const Mat& pv = tape.val(probs);
    const Eigen::Index T = pv.rows(), N = pv.cols();
    Mat fn = Mat::Zero(T, N), fp = Mat::Zero(T, N);
    for (Eigen::Index t = 0; t < T; ++t) {
        for (Eigen::Index k = 0; k < N; ++k) {
            if (k == label)
                fn(t, k) = fn_w[t];
            else
                fp(t, k) = fp_w[t];
        }
    }
    Var p = ad::clamp(probs, kProbEps, 1.0 - kProbEps);
    Var one_minus_p = ad::add_scalar(ad::neg(p), 1.0);
    Var term = ad::add(ad::mul(tape.constant(fn), ad::log_(p)),
                       ad::mul(tape.constant(fp), ad::log_(one_minus_p)));
    return ad::scale(ad::sum_all(term), -scale_factor);
}

}  // namespace detail

// False negatives carry weight 1 at every frame; false positives carry
// w(t), so early mistakes toward wrong classes are forgiven and correct
// classes are rewarded from the start. Averaged over classes.
inline Var anticipation_loss(Tape& tape, Var probs, int label, const WeightSchedule& sched) {
    const Mat& pv = tape.val(probs);
    detail::validate_prediction(pv, label);
    int T = static_cast<int>(pv.rows());
    std::vector<double> fn(T, 1.0), fp(T);
    for (int t = 1; t <= T; ++t) fp[t - 1] = sched.weight(t, T);
    return detail::weighted_binary_ce(tape, probs, label, fn, fp,
                                      1.0 / static_cast<double>(pv.cols()));
}

// Binary-style cross-entropy on the final frame only (no 1/N factor).
inline Var ce_loss(Tape& tape, Var probs, int label) {
    const Mat& pv = tape.val(probs);
    detail::validate_prediction(pv, label);
    int T = static_cast<int>(pv.rows());
    std::vector<double> w(T, 0.0);
    w[T - 1] = 1.0;
    return detail::weighted_binary_ce(tape, probs, label, w, w, 1.0);
}

// Exponentially weighted cross-entropy: frame t weighted e^{-(T-t)}.
inline Var ece_loss(Tape& tape, Var probs, int label) {
    const Mat& pv = tape.val(probs);
    detail::validate_prediction(pv, label);
    int T = static_cast<int>(pv.rows());
    std::vector<double> w(T);
    for (int t = 1; t <= T; ++t) w[t - 1] = std::exp(-static_cast<double>(T - t));
    return detail::weighted_binary_ce(tape, probs, label, w, w, 1.0);
}

// Linearly growing cross-entropy: both terms scaled by t/T.
inline Var lgl_loss(Tape& tape, Var probs, int label) {
    const Mat& pv = tape.val(probs);
    detail::validate_prediction(pv, label);
    int T = static_cast<int>(pv.rows());
    std::vector<double> w(T);
    for (int t = 1; t <= T; ++t) w[t - 1] = static_cast<double>(t) / T;
    return detail::weighted_binary_ce(tape, probs, label, w, w, 1.0);
}

inline double anticipation_loss(const Mat& probs, int label, const WeightSchedule& sched) {
    Tape t;
    return t.scalar(anticipation_loss(t, t.constant(probs), label, sched));
}
inline double ce_loss(const Mat& probs, int label) {
    Tape t;
    return t.scalar(ce_loss(t, t.constant(probs), label));
}
inline double ece_loss(const Mat& probs, int label) {
    Tape t;
    return t.scalar(ece_loss(t, t.constant(probs), label));
}
inline double lgl_loss(const Mat& probs, int label) {
    Tape t;
    return t.scalar(lgl_loss(t, t.constant(probs), label));
}

// ---------------------------------------------------------------------------
// Quaternion / 3D-position reconstruction losses. A sequence in graph
// form is one Var per frame, each of shape batch x (J*4), packed
// (w,x,y,z) per joint.

inline Var rot_loss(Tape& tape, const std::vector<Var>& pred, const std::vector<Var>& gt) {
    if (pred.size() != gt.size() || pred.empty())
        throw std::invalid_argument("rot_loss: sequence length mismatch");
    Var total = ad::squared_error(pred[0], gt[0]);
    for (std::size_t f = 1; f < pred.size(); ++f)
        total = ad::add(total, ad::squared_error(pred[f], gt[f]));
    return total;
}

inline double rot_loss(const kin::PoseSequence& pred, const kin::PoseSequence& gt) {
    if (pred.size() != gt.size()) throw std::invalid_argument("rot_loss: length mismatch");
    Eigen::VectorXd d = kin::flatten(pred) - kin::flatten(gt);
    return d.squaredNorm();
}

// Graph quaternion product of two batch x 4 blocks.
inline Var quat_mul(Tape&, Var a, Var b) {
    Var aw = ad::slice_cols(a, 0, 1), ax = ad::slice_cols(a, 1, 1), ay = ad::slice_cols(a, 2, 1),
        az = ad::slice_cols(a, 3, 1);
    Var bw = ad::slice_cols(b, 0, 1), bx = ad::slice_cols(b, 1, 1), by = ad::slice_cols(b, 2, 1),
        bz = ad::slice_cols(b, 3, 1);
    using ad::add;
    using ad::mul;
    using ad::sub;
    Var w = sub(sub(sub(mul(aw, bw), mul(ax, bx)), mul(ay, by)), mul(az, bz));
    Var x = sub(add(add(mul(aw, bx), mul(ax, bw)), mul(ay, bz)), mul(az, by));
    Var y = add(add(sub(mul(aw, by), mul(ax, bz)), mul(ay, bw)), mul(az, bx));
    Var z = add(add(add(mul(aw, bz), mul(ax, by)), ad::neg(mul(ay, bx))), mul(az, bw));
    return ad::concat_cols({w, x, y, z});
}

// Rotate the fixed offset v by each quaternion of a batch x 4 block:
// p = v + w*t2 + u x t2 with t2 = 2 (u x v).
inline Var rotate_offset(Tape& tape, Var q, const kin::Vec3& v) {
    using ad::add;
    using ad::mul;
    using ad::scale;
    using ad::slice_cols;
    using ad::sub;
    Var w = slice_cols(q, 0, 1);
    Var ux = slice_cols(q, 1, 1), uy = slice_cols(q, 2, 1), uz = slice_cols(q, 3, 1);
    Var tx = sub(scale(uy, 2.0 * v.z()), scale(uz, 2.0 * v.y()));
    Var ty = sub(scale(uz, 2.0 * v.x()), scale(ux, 2.0 * v.z()));
    Var tz = sub(scale(ux, 2.0 * v.y()), scale(uy, 2.0 * v.x()));
    Var cx = sub(mul(uy, tz), mul(uz, ty));
    Var cy = sub(mul(uz, tx), mul(ux, tz));
    Var cz = sub(mul(ux, ty), mul(uy, tx));
    Var px = ad::add_scalar(add(mul(w, tx), cx), v.x());
    Var py = ad::add_scalar(add(mul(w, ty), cy), v.y());
    Var pz = ad::add_scalar(add(mul(w, tz), cz), v.z());
    return ad::concat_cols({px, py, pz});
}

// Differentiable forward kinematics: pose is batch x (J*4) of unit
// quaternions, result is batch x (J*3) joint positions, root at origin.
inline Var fk_positions(Tape& tape, Var pose, const kin::Skeleton& skel) {
    const int J = skel.joints();
    if (tape.val(pose).cols() != 4 * J)
        throw std::invalid_argument("fk_positions: pose width != 4*joints");
    const Eigen::Index batch = tape.val(pose).rows();
    std::vector<Var> global(J), pos(J);
    for (int j : skel.topological_order()) {
        Var local = ad::slice_cols(pose, 4 * j, 4);
        if (skel.parent[j] == -1) {
            global[j] = local;
            pos[j] = tape.constant(Mat::Zero(batch, 3));
        } else {
            int p = skel.parent[j];
            pos[j] = ad::add(pos[p], rotate_offset(tape, global[p], skel.offset[j]));
            global[j] = quat_mul(tape, global[p], local);
        }
    }
    std::vector<Var> cols(pos.begin(), pos.end());
    return ad::concat_cols(cols);
}

// Root rotation replaced by the identity; the rest of the pose is kept.
inline Var align_root(Tape& tape, Var pose) {
    const Mat& pv = tape.val(pose);
    if (pv.cols() < 4) throw std::invalid_argument("align_root: pose width < 4");
    Mat ident(pv.rows(), 4);
    ident.col(0).setOnes();
    ident.rightCols(3).setZero();
    Var id = tape.constant(std::move(ident));
    if (pv.cols() == 4) return id;
    return ad::concat_cols({id, ad::slice_cols(pose, 4, static_cast<int>(pv.cols()) - 4)});
}

// 3D position loss; expects root-aligned inputs.
inline Var skl_loss(Tape& tape, const std::vector<Var>& pred, const std::vector<Var>& gt,
                    const kin::Skeleton& skel) {
    if (pred.size() != gt.size() || pred.empty())
        throw std::invalid_argument("skl_loss: sequence length mismatch");
    Var total{};
    for (std::size_t f = 0; f < pred.size(); ++f) {
        Var d = ad::squared_error(fk_positions(tape, pred[f], skel),
                                  fk_positions(tape, gt[f], skel));
        total = (f == 0) ? d : ad::add(total, d);
    }
    return total;
}

inline double skl_loss(const kin::PoseSequence& pred, const kin::PoseSequence& gt,
                       const kin::Skeleton& skel) {
    if (pred.size() != gt.size()) throw std::invalid_argument("skl_loss: length mismatch");
    double total = 0.0;
    for (std::size_t f = 0; f < pred.size(); ++f) {
        auto pp = kin::forward_kinematics(skel, pred[f]);
        auto pg = kin::forward_kinematics(skel, gt[f]);
        for (std::size_t j = 0; j < pp.size(); ++j) total += (pp[j] - pg[j]).squaredNorm();
    }
    return total;
}

// ---------------------------------------------------------------------------
// Gaussian KL terms (diagonal covariances throughout).

// KL( N(mu, diag(sigma^2)) || N(0, I) ) = -1/2 sum(1 + log s^2 - mu^2 - s^2).
// mu/sigma may be batched (rows are samples); the result sums over all
// entries.
inline Var gaussian_kl_standard(Tape& tape, Var mu, Var sigma) {
    Var s2 = ad::square(sigma);
    Var inner = ad::sub(ad::sub(ad::add_scalar(ad::log_(s2), 1.0), ad::square(mu)), s2);
    return ad::scale(ad::sum_all(inner), -0.5);
}

inline double gaussian_kl_standard(const GaussianParams& p) {
    p.validate();
    Tape t;
    return t.scalar(gaussian_kl_standard(t, t.constant(p.mu.transpose()),
                                         t.constant(p.sigma.transpose())));
}

// KL( N(mu1, diag(sigma1^2)) || N(mu2, diag(sigma2^2)) ), the diagonal
// case of the closed form
//   1/2 [ log |S2|/|S1| - d + tr(S2^-1 S1) + (m2-m1)^T S2^-1 (m2-m1) ].
inline Var gaussian_kl_general(Tape& tape, Var mu1, Var sigma1, Var mu2, Var sigma2) {
    Var s1 = ad::square(sigma1);
    Var s2 = ad::square(sigma2);
    Var logdet = ad::sub(ad::log_(s2), ad::log_(s1));
    Var trace = ad::div(s1, s2);
    Var quad = ad::div(ad::square(ad::sub(mu2, mu1)), s2);
    Var inner = ad::add(ad::add(ad::add_scalar(logdet, -1.0), trace), quad);
    return ad::scale(ad::sum_all(inner), 0.5);
}

inline double gaussian_kl_general(const GaussianParams& p1, const GaussianParams& p2) {
    p1.validate();
    p2.validate();
    if (p1.dim() != p2.dim()) throw std::invalid_argument("gaussian_kl_general: dim mismatch");
    Tape t;
    return t.scalar(gaussian_kl_general(t, t.constant(p1.mu.transpose()),
                                        t.constant(p1.sigma.transpose()),
                                        t.constant(p2.mu.transpose()),
                                        t.constant(p2.sigma.transpose())));
}

// KL between the composed posterior N(mu + sigma .* mu_c, diag((sigma .*
// sigma_c)^2)) and the condition posterior N(mu_c, diag(sigma_c^2)); the
// condition parameters enter as constants so no gradient reaches them.
// Reduces to 1/2 sum[ s^2 - log s^2 - 1 + (mu + s*mu_c - mu_c)^2 / s_c^2 ].
inline Var lcp_kl(Tape& tape, Var mu, Var sigma, const Mat& mu_c, const Mat& sigma_c) {
    if ((tape.val(sigma).array() <= 0.0).any() || (sigma_c.array() <= 0.0).any())
        throw std::invalid_argument("lcp_kl: sigma must be positive");
    Var s2 = ad::square(sigma);
    Var cmu = tape.constant(mu_c);
    Var inv_c2 = tape.constant(sigma_c.array().square().inverse().matrix());
    Var mean_gap = ad::sub(ad::add(mu, ad::mul(sigma, cmu)), cmu);
    Var quad = ad::mul(ad::square(mean_gap), inv_c2);
    Var inner = ad::add(ad::sub(ad::add_scalar(s2, -1.0), ad::log_(s2)), quad);
    return ad::scale(ad::sum_all(inner), 0.5);
}

inline double lcp_kl(const GaussianParams& post, const GaussianParams& cond) {
    post.validate();
    cond.validate();
    if (post.dim() != cond.dim()) throw std::invalid_argument("lcp_kl: dim mismatch");
    Tape t;
    return t.scalar(lcp_kl(t, t.constant(post.mu.transpose()),
                           t.constant(post.sigma.transpose()), cond.mu.transpose(),
                           cond.sigma.transpose()));
}

}  // namespace stochseq::loss
