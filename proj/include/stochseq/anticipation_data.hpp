#pragma once

// Synthetic per-frame feature sequences for the anticipation task.
// Classes are grouped into confusable pairs: the shared pair pattern is
// visible from the start, while the component that disambiguates the
// class within its pair only appears in the last fraction of frames.
// This mirrors videos whose early frames are ambiguous between related
// actions.

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "stochseq/rng.hpp"

namespace stochseq::data {

struct AnticipationSpec {
    int num_classes = 4;
    int seq_len = 30;       // T
    int feat_dim = 8;       // per-frame feature width
    int per_class = 64;     // samples per class per split
    double noise_std = 0.8;
    double late_start_frac = 0.7;  // class signal appears from this point on
    double pair_scale = 1.0;
    double class_scale = 1.6;
    std::uint64_t seed = 1;

    void validate() const {
        if (num_classes < 2 || num_classes % 2 != 0)
            throw std::invalid_argument("anticipation spec: num_classes must be even and >= 2");
        if (seq_len < 4) throw std::invalid_argument("anticipation spec: seq_len too short");
        if (feat_dim < num_classes)
            throw std::invalid_argument("anticipation spec: feat_dim must be >= num_classes");
        if (late_start_frac <= 0.0 || late_start_frac >= 1.0)
            throw std::invalid_argument("anticipation spec: late_start_frac in (0,1)");
    }
};

struct AnticipationSample {
    Eigen::MatrixXd features;  // T x D
    int label = 0;
};

struct AnticipationDataset {
    AnticipationSpec spec;
    std::vector<AnticipationSample> train, test;
};

namespace detail {

// Fixed orthogonal-ish direction per pattern index inside feat_dim.
inline Eigen::RowVectorXd pattern(int index, int dim) {
    Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(dim);
    v[index % dim] = 1.0;
    v[(index + 3) % dim] = 0.5;
    return v;
}

inline AnticipationSample make_anticipation_sample(const AnticipationSpec& spec, int label,
                                                   Rng& rng) {
    AnticipationSample s;
    s.label = label;
    s.features.resize(spec.seq_len, spec.feat_dim);
    int pair = label / 2;
    int late_start = static_cast<int>(spec.late_start_frac * spec.seq_len);
    Eigen::RowVectorXd pair_dir = pattern(pair, spec.feat_dim) * spec.pair_scale;
    Eigen::RowVectorXd class_dir =
        pattern(spec.num_classes / 2 + label, spec.feat_dim) * spec.class_scale;
    for (int t = 0; t < spec.seq_len; ++t) {
        Eigen::RowVectorXd row = randn(rng, 1, spec.feat_dim, spec.noise_std).row(0);
        row += pair_dir;
        if (t >= late_start) row += class_dir;
        s.features.row(t) = row;
    }
    return s;
}

}  // namespace detail

inline AnticipationDataset generate_anticipation_dataset(const AnticipationSpec& spec) {
    spec.validate();
    AnticipationDataset ds;
    ds.spec = spec;
    Rng train_rng(derive_seed(spec.seed, 101));
    Rng test_rng(derive_seed(spec.seed, 202));
    for (int k = 0; k < spec.num_classes; ++k) {
        for (int i = 0; i < spec.per_class; ++i) {
            ds.train.push_back(detail::make_anticipation_sample(spec, k, train_rng));
            ds.test.push_back(detail::make_anticipation_sample(spec, k, test_rng));
        }
    }
    return ds;
}

// Two-modality variant for the two-stage classifier: "context" features
// carry only the pair pattern at every frame, "action" features carry the
// class pattern (from the start), so only the action stream can fully
// disambiguate classes.
struct TwoModalitySample {
    Eigen::MatrixXd context;  // T x D
    Eigen::MatrixXd action;   // T x D
    int label = 0;
};

inline std::vector<TwoModalitySample> generate_two_modality_dataset(const AnticipationSpec& spec,
                                                                    int per_class,
                                                                    std::uint64_t seed) {
    spec.validate();
    std::vector<TwoModalitySample> out;
    Rng rng(derive_seed(seed, 303));
    for (int k = 0; k < spec.num_classes; ++k) {
        for (int i = 0; i < per_class; ++i) {
            TwoModalitySample s;
            s.label = k;
            s.context.resize(spec.seq_len, spec.feat_dim);
            s.action.resize(spec.seq_len, spec.feat_dim);
            Eigen::RowVectorXd pair_dir = detail::pattern(k / 2, spec.feat_dim) * spec.pair_scale;
            Eigen::RowVectorXd class_dir =
                detail::pattern(spec.num_classes / 2 + k, spec.feat_dim) * spec.class_scale;
            for (int t = 0; t < spec.seq_len; ++t) {
                s.context.row(t) =
                    randn(rng, 1, spec.feat_dim, spec.noise_std).row(0) + pair_dir;
                s.action.row(t) =
                    randn(rng, 1, spec.feat_dim, spec.noise_std).row(0) + class_dir;
            }
            out.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace stochseq::data
