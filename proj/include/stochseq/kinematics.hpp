#pragma once

// Quaternion algebra, skeletal forward kinematics, root alignment and
// Euler-angle error for pose sequences.

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace stochseq::kin {

using Vec3 = Eigen::Vector3d;

struct Quaternion {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    Quaternion conjugate() const { return {w, -x, -y, -z}; }

    bool operator==(const Quaternion& o) const = default;
};

// Unit norm with w >= 0 (a quaternion and its negation denote the same
// rotation; the w >= 0 hemisphere is the canonical representative).
inline Quaternion normalize(const Quaternion& q) {
    double n = q.norm();
    if (n <= 1e-12) throw std::invalid_argument("normalize: degenerate rotation (near-zero norm)");
    double s = (q.w < 0.0) ? -1.0 / n : 1.0 / n;
    return {q.w * s, q.x * s, q.y * s, q.z * s};
}

inline Quaternion mul(const Quaternion& a, const Quaternion& b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

inline Quaternion from_axis_angle(const Vec3& axis, double angle) {
    Vec3 u = axis.normalized();
    double h = 0.5 * angle;
    double s = std::sin(h);
    return {std::cos(h), u.x() * s, u.y() * s, u.z() * s};
}

inline Vec3 rotate(const Quaternion& q, const Vec3& v) {
    Vec3 u(q.x, q.y, q.z);
    Vec3 t = 2.0 * u.cross(v);
    return v + q.w * t + u.cross(t);
}

inline Eigen::Matrix3d to_matrix(const Quaternion& q) {
    Eigen::Matrix3d m;
    double w = q.w, x = q.x, y = q.y, z = q.z;
    m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return m;
}

// Shepperd's method: pick the largest diagonal combination for stability.
inline Quaternion from_matrix(const Eigen::Matrix3d& m) {
    double tr = m.trace();
    Quaternion q;
    if (tr > 0.0) {
        double s = std::sqrt(tr + 1.0) * 2.0;
        q = {0.25 * s, (m(2, 1) - m(1, 2)) / s, (m(0, 2) - m(2, 0)) / s, (m(1, 0) - m(0, 1)) / s};
    } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
        double s = std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2)) * 2.0;
        q = {(m(2, 1) - m(1, 2)) / s, 0.25 * s, (m(0, 1) + m(1, 0)) / s, (m(0, 2) + m(2, 0)) / s};
    } else if (m(1, 1) > m(2, 2)) {
        double s = std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2)) * 2.0;
        q = {(m(0, 2) - m(2, 0)) / s, (m(0, 1) + m(1, 0)) / s, 0.25 * s, (m(1, 2) + m(2, 1)) / s};
    } else {
        double s = std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1)) * 2.0;
        q = {(m(1, 0) - m(0, 1)) / s, (m(0, 2) + m(2, 0)) / s, (m(1, 2) + m(2, 1)) / s, 0.25 * s};
    }
    return normalize(q);
}

// Intrinsic ZYX decomposition: R = Rz(yaw) * Ry(pitch) * Rx(roll).
// Pitch is clamped at the gimbal boundary so the metric stays finite.
struct EulerZYX {
    double yaw = 0.0, pitch = 0.0, roll = 0.0;
};

inline EulerZYX to_euler_zyx(const Quaternion& q) {
    double w = q.w, x = q.x, y = q.y, z = q.z;
    double sp = -2.0 * (x * z - w * y);
    if (sp > 1.0) sp = 1.0;
    if (sp < -1.0) sp = -1.0;
    EulerZYX e;
    e.pitch = std::asin(sp);
    e.yaw = std::atan2(2.0 * (x * y + w * z), 1.0 - 2.0 * (y * y + z * z));
    e.roll = std::atan2(2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y));
    return e;
}

struct Pose {
    std::vector<Quaternion> rotations;

    int joints() const { return static_cast<int>(rotations.size()); }
};

using PoseSequence = std::vector<Pose>;

struct Skeleton {
    std::vector<int> parent;  // parent[root] == -1
    std::vector<Vec3> offset;

    int joints() const { return static_cast<int>(parent.size()); }

    // Evaluation order with parents before children; throws on cycles,
    // missing/extra roots or out-of-range parents.
    std::vector<int> topological_order() const {
        int n = joints();
        if (n == 0) throw std::invalid_argument("skeleton: empty");
        if (static_cast<int>(offset.size()) != n)
            throw std::invalid_argument("skeleton: offset/parent size mismatch");
        int roots = 0;
        for (int j = 0; j < n; ++j) {
            if (parent[j] == -1)
                ++roots;
            else if (parent[j] < 0 || parent[j] >= n || parent[j] == j)
                throw std::invalid_argument("skeleton: bad parent index");
        }
        if (roots != 1) throw std::invalid_argument("skeleton: must have exactly one root");
        std::vector<int> order;
        std::vector<char> placed(n, 0);
        order.reserve(n);
        while (static_cast<int>(order.size()) < n) {
            bool progressed = false;
            for (int j = 0; j < n; ++j) {
                if (placed[j]) continue;
                if (parent[j] == -1 || placed[parent[j]]) {
                    placed[j] = 1;
                    order.push_back(j);
                    progressed = true;
                }
            }
            if (!progressed) throw std::invalid_argument("skeleton: parent graph has a cycle");
        }
        return order;
    }
};

// Simple chain skeleton: joint j hangs off j-1 with a unit x offset; the
// root carries no offset.
inline Skeleton chain_skeleton(int joints) {
    Skeleton s;
    s.parent.resize(joints);
    s.offset.resize(joints);
    for (int j = 0; j < joints; ++j) {
        s.parent[j] = j - 1;
        s.offset[j] = (j == 0) ? Vec3::Zero() : Vec3(1, 0, 0);
    }
    return s;
}

// Text skeleton format: one line per joint, `index parent ox oy oz`.
inline Skeleton load_skeleton(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open skeleton file: " + path);
    Skeleton s;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        int idx, par;
        double ox, oy, oz;
        if (!(ss >> idx >> par >> ox >> oy >> oz))
            throw std::runtime_error("skeleton parse error: " + line);
        if (idx != static_cast<int>(s.parent.size()))
            throw std::runtime_error("skeleton joints must be listed in index order");
        s.parent.push_back(par);
        s.offset.emplace_back(ox, oy, oz);
    }
    s.topological_order();  // validate
    return s;
}

inline void save_skeleton(const Skeleton& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write skeleton file: " + path);
    out.precision(17);
    for (int j = 0; j < s.joints(); ++j)
        out << j << " " << s.parent[j] << " " << s.offset[j].x() << " " << s.offset[j].y() << " "
            << s.offset[j].z() << "\n";
}

// position[j] = position[parent] + R_global(parent chain) * offset[j],
// with the root pinned at the origin.
inline std::vector<Vec3> forward_kinematics(const Skeleton& skel, const Pose& pose) {
    if (pose.joints() != skel.joints())
        throw std::invalid_argument("forward_kinematics: pose/skeleton joint count mismatch");
    std::vector<int> order = skel.topological_order();
    std::vector<Vec3> pos(skel.joints());
    std::vector<Quaternion> global(skel.joints());
    for (int j : order) {
        if (skel.parent[j] == -1) {
            pos[j] = Vec3::Zero();
            global[j] = pose.rotations[j];
        } else {
            int p = skel.parent[j];
            pos[j] = pos[p] + rotate(global[p], skel.offset[j]);
            global[j] = mul(global[p], pose.rotations[j]);
        }
    }
    return pos;
}

// Global alignment before the 3D pose loss: the root rotation is reset to
// identity, all other joints are untouched.
inline Pose align_root(const Pose& pose) {
    Pose out = pose;
    if (!out.rotations.empty()) out.rotations[0] = Quaternion{1, 0, 0, 0};
    return out;
}

inline PoseSequence align_root(const PoseSequence& seq) {
    PoseSequence out;
    out.reserve(seq.size());
    for (const Pose& p : seq) out.push_back(align_root(p));
    return out;
}

// Per-frame L2 distance over the concatenated ZYX Euler triplets of all
// joints (the MAE metric's per-frame term).
inline std::vector<double> euler_angle_error(const PoseSequence& pred, const PoseSequence& gt) {
    if (pred.size() != gt.size())
        throw std::invalid_argument("euler_angle_error: sequence length mismatch");
    std::vector<double> out;
    out.reserve(pred.size());
    for (std::size_t f = 0; f < pred.size(); ++f) {
        if (pred[f].joints() != gt[f].joints())
            throw std::invalid_argument("euler_angle_error: joint count mismatch");
        double sq = 0.0;
        for (int j = 0; j < pred[f].joints(); ++j) {
            EulerZYX a = to_euler_zyx(pred[f].rotations[j]);
            EulerZYX b = to_euler_zyx(gt[f].rotations[j]);
            sq += (a.yaw - b.yaw) * (a.yaw - b.yaw) + (a.pitch - b.pitch) * (a.pitch - b.pitch) +
                  (a.roll - b.roll) * (a.roll - b.roll);
        }
        out.push_back(std::sqrt(sq));
    }
    return out;
}

// Flattened quaternion view of a sequence (frames x joints x 4 in frame,
// joint, component order). Shared by the losses and the diversity metric.
inline Eigen::VectorXd flatten(const PoseSequence& seq) {
    if (seq.empty()) return Eigen::VectorXd();
    int j = seq.front().joints();
    Eigen::VectorXd v(static_cast<Eigen::Index>(seq.size()) * j * 4);
    Eigen::Index at = 0;
    for (const Pose& p : seq) {
        for (const Quaternion& q : p.rotations) {
            v[at++] = q.w;
            v[at++] = q.x;
            v[at++] = q.y;
            v[at++] = q.z;
        }
    }
    return v;
}

}  // namespace stochseq::kin
