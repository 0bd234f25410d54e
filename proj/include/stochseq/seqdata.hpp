#pragma once

// Synthetic condition -> future pose datasets with controllable hidden
// multimodality, plus text-format pose-sequence I/O and windowing.
//
// Each condition family is a per-joint sinusoidal angle trajectory. The
// dataset stores exactly one future per observed prefix; the num_modes
// continuations of a family differ by a mode-dependent angle component
// that ramps in around the observation boundary, so prefixes stay close
// while futures separate cleanly.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stochseq/kinematics.hpp"
#include "stochseq/rng.hpp"

namespace stochseq::data {

struct SyntheticSpec {
    int num_modes = 4;     // hidden futures per condition family
    int obs_len = 16;      // t
    int fut_len = 24;      // T - t
    int joint_count = 2;   // J
    double noise_std = 0.0;
    std::uint64_t seed = 1;

    // dataset-size knobs
    int num_families = 32;
    int repeats = 1;  // samples per (family, mode)
    double train_frac = 0.70;
    double val_frac = 0.15;
    double test_frac = 0.15;

    int total_len() const { return obs_len + fut_len; }

    void validate() const {
        if (num_modes < 1) throw std::invalid_argument("spec: num_modes must be >= 1");
        if (obs_len < 2) throw std::invalid_argument("spec: obs_len must be >= 2");
        if (fut_len < 1) throw std::invalid_argument("spec: fut_len must be >= 1");
        if (joint_count < 1) throw std::invalid_argument("spec: joint_count must be >= 1");
        if (noise_std < 0.0) throw std::invalid_argument("spec: noise_std must be >= 0");
        if (num_families < 1) throw std::invalid_argument("spec: num_families must be >= 1");
        if (repeats < 1) throw std::invalid_argument("spec: repeats must be >= 1");
        double total = train_frac + val_frac + test_frac;
        if (std::abs(total - 1.0) > 1e-9)
            throw std::invalid_argument("spec: split fractions must sum to 1");
    }
};

struct MotionSample {
    kin::PoseSequence observed;
    kin::PoseSequence future;
    int mode_label = 0;  // generator-side ground truth; -1 when unknown

    void validate() const {
        if (observed.empty() || future.empty())
            throw std::invalid_argument("sample: empty observed or future part");
        int j = observed.front().joints();
        for (const kin::Pose* part : {&observed.front(), &future.front()})
            if (part->joints() != j) throw std::invalid_argument("sample: joint count mismatch");
        for (const auto& seq : {observed, future})
            for (const auto& pose : seq)
                for (const auto& q : pose.rotations)
                    if (std::abs(q.norm() - 1.0) > 1e-6)
                        throw std::invalid_argument("sample: quaternion not unit norm");
    }

    kin::PoseSequence full() const {
        kin::PoseSequence s = observed;
        s.insert(s.end(), future.begin(), future.end());
        return s;
    }
};

struct DatasetSplit {
    SyntheticSpec spec;
    kin::Skeleton skeleton;
    std::vector<MotionSample> train, val, test;

    const std::vector<MotionSample>& split(const std::string& name) const {
        if (name == "train") return train;
        if (name == "val") return val;
        if (name == "test") return test;
        throw std::invalid_argument("unknown split: " + name);
    }
};

namespace detail {

inline kin::Vec3 joint_axis(int j) {
    switch (j % 3) {
        case 0: return {0, 0, 1};
        case 1: return {0, 1, 0};
        default: return {1, 0, 0};
    }
}

struct FamilyParams {
    std::vector<double> amp, freq, phase;  // per joint
};

inline FamilyParams family_params(const SyntheticSpec& spec, int family) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(family)));
    FamilyParams p;
    for (int j = 0; j < spec.joint_count; ++j) {
        p.amp.push_back(uniform(rng, 0.45, 0.65));
        p.freq.push_back(uniform(rng, 0.10, 0.16));
        p.phase.push_back(uniform(rng, 0.0, 0.6));
    }
    return p;
}

// Smoothstep ramp for the mode component: zero well before the
// observation boundary, a small lead-in over the last frames of the
// prefix (so the condition carries the mode), one afterwards.
inline double mode_ramp(int frame, int obs_len) {
    const double lead_in = 4.0, settle = 8.0;
    double s = (static_cast<double>(frame) - (obs_len - lead_in)) / (lead_in + settle);
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return 1.0;
    return s * s * (3.0 - 2.0 * s);
}

inline double mode_delta(int frame, int obs_len, int mode, int num_modes) {
    const double b = 0.8;
    double psi = 2.0 * std::numbers::pi * static_cast<double>(mode) / num_modes;
    return b * std::sin(0.25 * static_cast<double>(frame - obs_len) + psi);
}

}  // namespace detail

// The deterministic mode-conditioned mean trajectory of one family, as
// joint angles per frame (before quaternionization); exposed so tests
// can build clustering oracles against the generator's own definition.
inline std::vector<std::vector<double>> mean_angle_trajectory(const SyntheticSpec& spec,
                                                              int family, int mode) {
    detail::FamilyParams fam = detail::family_params(spec, family);
    std::vector<std::vector<double>> out;
    for (int n = 0; n < spec.total_len(); ++n) {
        std::vector<double> row(spec.joint_count);
        for (int j = 0; j < spec.joint_count; ++j) {
            double base = fam.amp[j] * std::sin(fam.freq[j] * n + fam.phase[j]);
            double delta = detail::mode_ramp(n, spec.obs_len) *
                           detail::mode_delta(n, spec.obs_len, mode, spec.num_modes);
            row[j] = base + delta;
        }
        out.push_back(std::move(row));
    }
    return out;
}

inline MotionSample synthesize_sample(const SyntheticSpec& spec, int family, int mode,
                                      int repeat) {
    Rng noise_rng(derive_seed(derive_seed(spec.seed, 0x5a17'0000ull + family),
                              static_cast<std::uint64_t>(mode) * 1000003ull + repeat));
    auto angles = mean_angle_trajectory(spec, family, mode);
    MotionSample s;
    s.mode_label = mode;
    for (int n = 0; n < spec.total_len(); ++n) {
        kin::Pose pose;
        for (int j = 0; j < spec.joint_count; ++j) {
            double theta = angles[n][j];
            if (spec.noise_std > 0.0) theta += normal(noise_rng, 0.0, spec.noise_std);
            pose.rotations.push_back(kin::from_axis_angle(detail::joint_axis(j), theta));
        }
        (n < spec.obs_len ? s.observed : s.future).push_back(std::move(pose));
    }
    return s;
}

inline DatasetSplit generate_synthetic_dataset(const SyntheticSpec& spec) {
    spec.validate();
    DatasetSplit ds;
    ds.spec = spec;
    ds.skeleton = kin::chain_skeleton(spec.joint_count);
    int train_fams = static_cast<int>(std::round(spec.train_frac * spec.num_families));
    int val_fams = static_cast<int>(std::round(spec.val_frac * spec.num_families));
    train_fams = std::max(1, std::min(train_fams, spec.num_families));
    for (int f = 0; f < spec.num_families; ++f) {
        auto& bucket = (f < train_fams)                ? ds.train
                       : (f < train_fams + val_fams)   ? ds.val
                                                       : ds.test;
        for (int m = 0; m < spec.num_modes; ++m)
            for (int r = 0; r < spec.repeats; ++r)
                bucket.push_back(synthesize_sample(spec, f, m, r));
    }
    if (ds.test.empty()) ds.test = ds.val.empty() ? ds.train : ds.val;
    return ds;
}

// ---------------------------------------------------------------------------
// Pose sequence text format. One frame per line; a header line declares
// the joint count and per-joint encoding.

enum class JointEncoding { quaternion, rotation_matrix };

struct PoseFileLayout {
    int joints = 0;
    JointEncoding encoding = JointEncoding::quaternion;
    // When > 0, the file holds consecutive sequences of this many frames;
    // when 0 the whole file is one sequence.
    int frames_per_sequence = 0;
};

namespace detail {

inline kin::Quaternion parse_joint(const std::vector<double>& nums, std::size_t at,
                                   JointEncoding enc, std::size_t row) {
    if (enc == JointEncoding::quaternion) {
        kin::Quaternion q{nums[at], nums[at + 1], nums[at + 2], nums[at + 3]};
        if (q.norm() <= 1e-12)
            throw std::runtime_error("row " + std::to_string(row) +
                                     ": non-normalizable quaternion (zero norm)");
        return kin::normalize(q);
    }
    Eigen::Matrix3d m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = nums[at + 3 * r + c];
    return kin::from_matrix(m);
}

}  // namespace detail

// Raw numeric text (no header): every non-empty line is one frame.
// Malformed rows are rejected with their index.
inline std::vector<kin::PoseSequence> load_pose_sequences(const std::string& path,
                                                          const PoseFileLayout& layout) {
    if (layout.joints < 1) throw std::invalid_argument("layout: joints must be >= 1");
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open pose file: " + path);
    const std::size_t per_joint = layout.encoding == JointEncoding::quaternion ? 4 : 9;
    const std::size_t row_len = per_joint * static_cast<std::size_t>(layout.joints);

    std::vector<kin::Pose> frames;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::istringstream ss(line);
        std::vector<double> nums;
        double v;
        while (ss >> v) nums.push_back(v);
        if (!ss.eof())
            throw std::runtime_error("row " + std::to_string(row) + ": non-numeric token");
        if (nums.size() != row_len)
            throw std::runtime_error("row " + std::to_string(row) + ": expected " +
                                     std::to_string(row_len) + " values, got " +
                                     std::to_string(nums.size()));
        kin::Pose pose;
        for (int j = 0; j < layout.joints; ++j)
            pose.rotations.push_back(
                detail::parse_joint(nums, per_joint * static_cast<std::size_t>(j),
                                    layout.encoding, row));
        frames.push_back(std::move(pose));
        ++row;
    }

    std::vector<kin::PoseSequence> out;
    if (frames.empty()) return out;
    if (layout.frames_per_sequence <= 0) {
        out.push_back(std::move(frames));
        return out;
    }
    if (frames.size() % static_cast<std::size_t>(layout.frames_per_sequence) != 0)
        throw std::runtime_error("frame count " + std::to_string(frames.size()) +
                                 " is not a multiple of the declared sequence length");
    for (std::size_t at = 0; at < frames.size();
         at += static_cast<std::size_t>(layout.frames_per_sequence)) {
        out.emplace_back(frames.begin() + at,
                         frames.begin() + at + layout.frames_per_sequence);
    }
    return out;
}

// Sliding windows [i, i+t) observed / [i+t, i+T) future, i = 0, stride, ...
inline std::vector<MotionSample> window_sequence(const kin::PoseSequence& seq, int t, int total,
                                                 int stride) {
    if (t < 1 || total <= t) throw std::invalid_argument("window_sequence: need 1 <= t < T");
    if (stride < 1) throw std::invalid_argument("window_sequence: stride must be >= 1");
    std::vector<MotionSample> out;
    if (static_cast<int>(seq.size()) < total) return out;
    for (int i = 0; i + total <= static_cast<int>(seq.size()); i += stride) {
        MotionSample s;
        s.mode_label = -1;
        s.observed.assign(seq.begin() + i, seq.begin() + i + t);
        s.future.assign(seq.begin() + i + t, seq.begin() + i + total);
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset directory layout: `meta` header, `skeleton.txt`, and train/,
// val/, test/ with numbered sample files.

namespace detail {

inline void write_sample(const MotionSample& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write sample file: " + path);
    out.precision(17);
    int j = s.observed.front().joints();
    out << "J=" << j << " enc=quat mode=" << s.mode_label << "\n";
    for (const auto& seq : {s.observed, s.future}) {
        for (const auto& pose : seq) {
            for (int k = 0; k < j; ++k) {
                const auto& q = pose.rotations[k];
                out << q.w << " " << q.x << " " << q.y << " " << q.z
                    << (k + 1 == j ? "" : " ");
            }
            out << "\n";
        }
    }
}

inline MotionSample read_sample(const std::string& path, int obs_len) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open sample file: " + path);
    std::string header;
    std::getline(in, header);
    int joints = 0, mode = -1;
    {
        std::istringstream ss(header);
        std::string tok;
        bool quat_enc = false;
        while (ss >> tok) {
            if (tok.rfind("J=", 0) == 0) joints = std::stoi(tok.substr(2));
            if (tok.rfind("mode=", 0) == 0) mode = std::stoi(tok.substr(5));
            if (tok == "enc=quat") quat_enc = true;
        }
        if (joints < 1 || !quat_enc)
            throw std::runtime_error("bad sample header in " + path + ": " + header);
    }
    MotionSample s;
    s.mode_label = mode;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::istringstream ss(line);
        kin::Pose pose;
        for (int j = 0; j < joints; ++j) {
            kin::Quaternion q;
            if (!(ss >> q.w >> q.x >> q.y >> q.z))
                throw std::runtime_error(path + " row " + std::to_string(row) +
                                         ": malformed frame");
            pose.rotations.push_back(q);
        }
        (static_cast<int>(row) < obs_len ? s.observed : s.future).push_back(std::move(pose));
        ++row;
    }
    return s;
}

}  // namespace detail

inline void save_dataset(const DatasetSplit& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream meta(fs::path(dir) / "meta");
        if (!meta) throw std::runtime_error("cannot write meta file in " + dir);
        meta << "J=" << ds.spec.joint_count << "\n"
             << "t=" << ds.spec.obs_len << "\n"
             << "T=" << ds.spec.total_len() << "\n"
             << "num_modes=" << ds.spec.num_modes << "\n"
             << "seed=" << ds.spec.seed << "\n"
             << "noise_std=" << ds.spec.noise_std << "\n"
             << "skeleton=skeleton.txt\n";
    }
    kin::save_skeleton(ds.skeleton, (fs::path(dir) / "skeleton.txt").string());
    for (const char* split : {"train", "val", "test"}) {
        fs::path sub = fs::path(dir) / split;
        fs::create_directories(sub);
        const auto& samples = ds.split(split);
        char name[32];
        for (std::size_t i = 0; i < samples.size(); ++i) {
            std::snprintf(name, sizeof(name), "%06zu.txt", i);
            detail::write_sample(samples[i], (sub / name).string());
        }
    }
}

inline DatasetSplit load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    DatasetSplit ds;
    std::map<std::string, std::string> meta;
    {
        std::ifstream in(fs::path(dir) / "meta");
        if (!in) throw std::runtime_error("cannot open dataset meta in " + dir);
        std::string line;
        while (std::getline(in, line)) {
            auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            meta[line.substr(0, eq)] = line.substr(eq + 1);
        }
    }
    ds.spec.joint_count = std::stoi(meta.at("J"));
    ds.spec.obs_len = std::stoi(meta.at("t"));
    ds.spec.fut_len = std::stoi(meta.at("T")) - ds.spec.obs_len;
    ds.spec.num_modes = std::stoi(meta.at("num_modes"));
    ds.spec.seed = std::stoull(meta.at("seed"));
    if (meta.count("noise_std")) ds.spec.noise_std = std::stod(meta.at("noise_std"));
    ds.skeleton = kin::load_skeleton((fs::path(dir) / meta.at("skeleton")).string());
    for (const char* split : {"train", "val", "test"}) {
        fs::path sub = fs::path(dir) / split;
        if (!fs::exists(sub)) continue;
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(sub)) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        auto& bucket = const_cast<std::vector<MotionSample>&>(ds.split(split));
        for (const auto& f : files) bucket.push_back(detail::read_sample(f.string(), ds.spec.obs_len));
    }
    return ds;
}

}  // namespace stochseq::data
