#pragma once

// Class activation maps over abstract post-activation feature tensors:
// global pooling to per-channel features, linear class scores, the
// per-location class evidence map, and action-aware feature masking.

#include <Eigen/Dense>

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace stochseq::cam {

// H x W x L feature tensor stored as one H x W matrix per channel.
struct FeatureMap {
    std::vector<Eigen::MatrixXd> channels;

    int height() const { return channels.empty() ? 0 : static_cast<int>(channels[0].rows()); }
    int width() const { return channels.empty() ? 0 : static_cast<int>(channels[0].cols()); }
    int depth() const { return static_cast<int>(channels.size()); }

    void validate() const {
        if (channels.empty()) throw std::invalid_argument("feature map: no channels");
        for (const auto& c : channels) {
            if (c.rows() != channels[0].rows() || c.cols() != channels[0].cols())
                throw std::invalid_argument("feature map: ragged channels");
            if (!c.allFinite()) throw std::invalid_argument("feature map: non-finite values");
        }
    }
};

// Per-channel spatial pooling F^l = sum_{x,y} f_l(x,y). The written form
// is a plain sum; `mean` switches to the spatial average used by the
// common CAM formulation (the two differ by the constant H*W).
inline Eigen::VectorXd gap(const FeatureMap& fm, bool mean = false) {
    fm.validate();
    Eigen::VectorXd f(fm.depth());
    // accumulate in location order so loop oracles agree bit-for-bit
    for (int l = 0; l < fm.depth(); ++l) {
        double acc = 0.0;
        for (Eigen::Index x = 0; x < fm.channels[l].rows(); ++x)
            for (Eigen::Index y = 0; y < fm.channels[l].cols(); ++y) acc += fm.channels[l](x, y);
        f[l] = acc;
    }
    if (mean) f /= static_cast<double>(fm.height() * fm.width());
    return f;
}

// S_k = sum_l w_l^k F_l, with weights stored as L x N.
inline Eigen::VectorXd class_scores(const Eigen::VectorXd& features, const Eigen::MatrixXd& w) {
    if (w.rows() != features.size())
        throw std::invalid_argument("class_scores: weight rows != feature length");
    Eigen::VectorXd s = Eigen::VectorXd::Zero(w.cols());
    for (Eigen::Index k = 0; k < w.cols(); ++k)
        for (Eigen::Index l = 0; l < w.rows(); ++l) s[k] += w(l, k) * features[l];
    return s;
}

// M_k(x,y) = sum_l w_l^k f_l(x,y)
inline Eigen::MatrixXd cam_map(const FeatureMap& fm, const Eigen::MatrixXd& w, int k) {
    fm.validate();
    if (w.rows() != fm.depth()) throw std::invalid_argument("cam_map: weight rows != channels");
    if (k < 0 || k >= w.cols()) throw std::invalid_argument("cam_map: class index out of range");
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(fm.height(), fm.width());
    for (Eigen::Index x = 0; x < m.rows(); ++x)
        for (Eigen::Index y = 0; y < m.cols(); ++y)
            for (int l = 0; l < fm.depth(); ++l) m(x, y) += w(l, k) * fm.channels[l](x, y);
    return m;
}

// A_k(x,y) = late(x,y) * ReLU(M_k(x,y)): every channel of the late
// feature map scaled per location by the rectified evidence map.
inline FeatureMap action_aware_mask(const FeatureMap& late, const Eigen::MatrixXd& cam) {
    late.validate();
    if (cam.rows() != late.height() || cam.cols() != late.width())
        throw std::invalid_argument("action_aware_mask: map size mismatch");
    Eigen::MatrixXd gate = cam.cwiseMax(0.0);
    FeatureMap out;
    out.channels.reserve(late.channels.size());
    for (const auto& c : late.channels) out.channels.push_back(c.cwiseProduct(gate));
    return out;
}

// Grayscale PGM export of an evidence map (min-max scaled).
inline void write_pgm(const Eigen::MatrixXd& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write image: " + path);
    double lo = m.minCoeff(), hi = m.maxCoeff();
    double range = (hi - lo) > 1e-12 ? hi - lo : 1.0;
    out << "P2\n" << m.cols() << " " << m.rows() << "\n255\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            int v = static_cast<int>(255.0 * (m(r, c) - lo) / range);
            out << v << (c + 1 == m.cols() ? "" : " ");
        }
        out << "\n";
    }
}

}  // namespace stochseq::cam
