#pragma once

// Recurrent building blocks on top of the autodiff tape: GRU/LSTM cells,
// sequence encoders, the autoregressive pose decoder with teacher
// forcing, the two-stage and multi-modal classifier architectures, the
// Adam optimizer and global-norm gradient clipping.

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stochseq/autodiff.hpp"
#include "stochseq/rng.hpp"

namespace stochseq::rec {

using ad::Mat;
using ad::Tape;
using ad::Var;

// ---------------------------------------------------------------------------
// Parameter binding: one Var per parameter matrix per graph build.

class Binder {
  public:
    Binder(Tape& tape, bool trainable = true) : tape_(&tape), trainable_(trainable) {}

    Var operator()(Mat& m) {
        auto it = cache_.find(&m);
        if (it != cache_.end()) return it->second;
        Var v = trainable_ ? tape_->param(m) : tape_->constant(m);
        cache_.emplace(&m, v);
        return v;
    }

    // Gradients of every bound parameter after tape.backward().
    std::map<Mat*, Mat> grads() const {
        std::map<Mat*, Mat> out;
        for (const auto& [ptr, var] : cache_) out[ptr] = tape_->grad(var);
        return out;
    }

  private:
    Tape* tape_;
    bool trainable_;
    std::map<Mat*, Var> cache_;
};

using NamedParams = std::vector<std::pair<std::string, Mat*>>;

// Scales all gradients so the global L2 norm does not exceed max_norm;
// returns the pre-clip norm.
inline double clip_global_norm(std::map<Mat*, Mat>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [ptr, g] : grads) sq += g.squaredNorm();
    double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        double s = max_norm / norm;
        for (auto& [ptr, g] : grads) g *= s;
    }
    return norm;
}

// Adaptive moment estimation with bias correction.
class Adam {
  public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::map<Mat*, Mat>& grads) {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, t_);
        double bc2 = 1.0 - std::pow(beta2_, t_);
        for (const auto& [ptr, g] : grads) {
            State& s = state_[ptr];
            if (s.m.size() == 0) {
                s.m = Mat::Zero(g.rows(), g.cols());
                s.v = Mat::Zero(g.rows(), g.cols());
            }
            s.m = beta1_ * s.m + (1.0 - beta1_) * g;
            s.v = beta2_ * s.v + (1.0 - beta2_) * g.cwiseProduct(g);
            Mat mhat = s.m / bc1;
            Mat vhat = s.v / bc2;
            ptr->array() -= lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
        }
    }

    double learning_rate() const { return lr_; }

  private:
    struct State {
        Mat m, v;
    };
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::map<Mat*, State> state_;
};

// ---------------------------------------------------------------------------
// Layers

struct Linear {
    Mat w;  // in x out
    Mat b;  // 1 x out

    static Linear init(int in, int out, Rng& rng) {
        return {glorot(rng, in, out), Mat::Zero(1, out)};
    }

    Var apply(Tape& tape, Binder& bind, Var x) {
        return ad::add_rowvec(ad::matmul(x, bind(w)), bind(b));
    }

    void visit(const std::string& prefix, NamedParams& out) {
        out.emplace_back(prefix + ".w", &w);
        out.emplace_back(prefix + ".b", &b);
    }
};

// Gated recurrent unit:
//   r = sigm(x Wxr + h Whr + br)
//   z = sigm(x Wxz + h Whz + bz)
//   hbar = tanh(x Wxh + (r .* h) Whh + bh)
//   h' = z .* h + (1 - z) .* hbar
struct GruCell {
    int in_dim = 0, hidden = 0;
    Mat wxr, whr, br, wxz, whz, bz, wxh, whh, bh;

    static GruCell init(int in, int h, Rng& rng) {
        GruCell c;
        c.in_dim = in;
        c.hidden = h;
        c.wxr = glorot(rng, in, h);
        c.whr = glorot(rng, h, h);
        c.br = Mat::Zero(1, h);
        c.wxz = glorot(rng, in, h);
        c.whz = glorot(rng, h, h);
        c.bz = Mat::Zero(1, h);
        c.wxh = glorot(rng, in, h);
        c.whh = glorot(rng, h, h);
        c.bh = Mat::Zero(1, h);
        return c;
    }

    Var step(Tape& tape, Binder& bind, Var x, Var h) {
        using namespace ad;
        Var r = sigmoid(add_rowvec(add(matmul(x, bind(wxr)), matmul(h, bind(whr))), bind(br)));
        Var z = sigmoid(add_rowvec(add(matmul(x, bind(wxz)), matmul(h, bind(whz))), bind(bz)));
        Var hbar = tanh_(
            add_rowvec(add(matmul(x, bind(wxh)), matmul(mul(r, h), bind(whh))), bind(bh)));
        Var keep = mul(z, h);
        Var blend = mul(add_scalar(neg(z), 1.0), hbar);
        return add(keep, blend);
    }

    void visit(const std::string& p, NamedParams& out) {
        out.emplace_back(p + ".wxr", &wxr);
        out.emplace_back(p + ".whr", &whr);
        out.emplace_back(p + ".br", &br);
        out.emplace_back(p + ".wxz", &wxz);
        out.emplace_back(p + ".whz", &whz);
        out.emplace_back(p + ".bz", &bz);
        out.emplace_back(p + ".wxh", &wxh);
        out.emplace_back(p + ".whh", &whh);
        out.emplace_back(p + ".bh", &bh);
    }
};

// LSTM with forget/input/output gates and cell state.
struct LstmCell {
    int in_dim = 0, hidden = 0;
    Mat wxf, whf, bf, wxi, whi, bi, wxc, whc, bc, wxo, who, bo;

    static LstmCell init(int in, int h, Rng& rng) {
        LstmCell c;
        c.in_dim = in;
        c.hidden = h;
        c.wxf = glorot(rng, in, h);
        c.whf = glorot(rng, h, h);
        c.bf = Mat::Ones(1, h);  // open forget gate at init
        c.wxi = glorot(rng, in, h);
        c.whi = glorot(rng, h, h);
        c.bi = Mat::Zero(1, h);
        c.wxc = glorot(rng, in, h);
        c.whc = glorot(rng, h, h);
        c.bc = Mat::Zero(1, h);
        c.wxo = glorot(rng, in, h);
        c.who = glorot(rng, h, h);
        c.bo = Mat::Zero(1, h);
        return c;
    }

    struct State {
        Var h, c;
    };

    State step(Tape& tape, Binder& bind, Var x, State s) {
        using namespace ad;
        Var f = sigmoid(add_rowvec(add(matmul(x, bind(wxf)), matmul(s.h, bind(whf))), bind(bf)));
        Var i = sigmoid(add_rowvec(add(matmul(x, bind(wxi)), matmul(s.h, bind(whi))), bind(bi)));
        Var g = tanh_(add_rowvec(add(matmul(x, bind(wxc)), matmul(s.h, bind(whc))), bind(bc)));
        Var o = sigmoid(add_rowvec(add(matmul(x, bind(wxo)), matmul(s.h, bind(who))), bind(bo)));
        Var c = add(mul(f, s.c), mul(i, g));
        return {mul(o, tanh_(c)), c};
    }

    void visit(const std::string& p, NamedParams& out) {
        out.emplace_back(p + ".wxf", &wxf);
        out.emplace_back(p + ".whf", &whf);
        out.emplace_back(p + ".bf", &bf);
        out.emplace_back(p + ".wxi", &wxi);
        out.emplace_back(p + ".whi", &whi);
        out.emplace_back(p + ".bi", &bi);
        out.emplace_back(p + ".wxc", &wxc);
        out.emplace_back(p + ".whc", &whc);
        out.emplace_back(p + ".bc", &bc);
        out.emplace_back(p + ".wxo", &wxo);
        out.emplace_back(p + ".who", &who);
        out.emplace_back(p + ".bo", &bo);
    }
};

inline Var zero_state(Tape& tape, Eigen::Index batch, int hidden) {
    return tape.constant(Mat::Zero(batch, hidden));
}

// Last hidden state of a GRU pass over the frame sequence.
inline Var encode_sequence(Tape& tape, Binder& bind, GruCell& cell,
                           const std::vector<Var>& frames, Var h0 = {}) {
    if (frames.empty()) throw std::invalid_argument("encode_sequence: empty input");
    Var h = h0.valid() ? h0 : zero_state(tape, tape.val(frames[0]).rows(), cell.hidden);
    for (Var x : frames) h = cell.step(tape, bind, x, h);
    return h;
}

// ---------------------------------------------------------------------------
// Teacher forcing

struct TeacherForcingSchedule {
    double decay_per_epoch = 0.02;  // P_tf(0) = 1, linear decay to 0

    double prob(double epoch) const {
        double p = 1.0 - decay_per_epoch * epoch;
        return p < 0.0 ? 0.0 : (p > 1.0 ? 1.0 : p);
    }
};

inline double teacher_forcing_prob(double epoch, const TeacherForcingSchedule& sched) {
    return sched.prob(epoch);
}

// Autoregressive pose decoder. Per step a Bernoulli(P_tf) draw picks the
// ground-truth pose or the model's previous output as next input; the
// output head maps hidden -> J*4 followed by per-joint quaternion
// normalization.
struct PoseDecoder {
    GruCell cell;
    Linear head;

    static PoseDecoder init(int pose_dim, int hidden, Rng& rng) {
        return {GruCell::init(pose_dim, hidden, rng), Linear::init(hidden, pose_dim, rng)};
    }

    std::vector<Var> decode(Tape& tape, Binder& bind, Var h_init, Var seed_pose, int length,
                            double p_tf, Rng& rng, const std::vector<Var>* gt = nullptr) {
        if (p_tf > 0.0 && gt == nullptr)
            throw std::invalid_argument("decode: teacher forcing requires ground truth");
        if (gt && static_cast<int>(gt->size()) < length)
            throw std::invalid_argument("decode: ground truth shorter than rollout");
        std::vector<Var> out;
        out.reserve(length);
        Var h = h_init;
        Var input = seed_pose;
        for (int k = 0; k < length; ++k) {
            h = cell.step(tape, bind, input, h);
            Var pose = ad::normalize_groups(head.apply(tape, bind, h), 4);
            out.push_back(pose);
            if (k + 1 < length) {
                bool use_gt = p_tf > 0.0 && uniform(rng) < p_tf;
                input = use_gt ? (*gt)[k] : pose;
            }
        }
        return out;
    }

    void visit(const std::string& p, NamedParams& out) {
        cell.visit(p + ".cell", out);
        head.visit(p + ".head", out);
    }
};

// ---------------------------------------------------------------------------
// Per-frame classifiers

// GRU over frames with a softmax head at every step.
struct RecurrentClassifier {
    GruCell cell;
    Linear head;

    static RecurrentClassifier init(int in, int hidden, int classes, Rng& rng) {
        return {GruCell::init(in, hidden, rng), Linear::init(hidden, classes, rng)};
    }

    // Returns per-frame probability rows (each batch x N).
    std::vector<Var> forward(Tape& tape, Binder& bind, const std::vector<Var>& frames) {
        std::vector<Var> probs;
        probs.reserve(frames.size());
        Var h = zero_state(tape, tape.val(frames[0]).rows(), cell.hidden);
        for (Var x : frames) {
            h = cell.step(tape, bind, x, h);
            probs.push_back(ad::softmax_rows(head.apply(tape, bind, h)));
        }
        return probs;
    }

    void visit(const std::string& p, NamedParams& out) {
        cell.visit(p + ".cell", out);
        head.visit(p + ".head", out);
    }
};

// Two-stage architecture: stage one consumes context features; stage two
// consumes [stage-1 hidden, action features] and refines the prediction.
// Both stages emit per-frame softmax rows and both are supervised.
struct MsLstm {
    LstmCell stage1, stage2;
    Linear head1, head2;

    static MsLstm init(int feat_dim, int hidden, int classes, Rng& rng) {
        MsLstm m;
        m.stage1 = LstmCell::init(feat_dim, hidden, rng);
        m.stage2 = LstmCell::init(hidden + feat_dim, hidden, rng);
        m.head1 = Linear::init(hidden, classes, rng);
        m.head2 = Linear::init(hidden, classes, rng);
        return m;
    }

    struct Output {
        std::vector<Var> stage1_probs, stage2_probs;  // per frame, batch x N
    };

    Output forward(Tape& tape, Binder& bind, const std::vector<Var>& context,
                   const std::vector<Var>& action) {
        if (context.size() != action.size() || context.empty())
            throw std::invalid_argument("ms_lstm: context/action length mismatch");
        Output out;
        Eigen::Index batch = tape.val(context[0]).rows();
        LstmCell::State s1{zero_state(tape, batch, stage1.hidden),
                           zero_state(tape, batch, stage1.hidden)};
        LstmCell::State s2{zero_state(tape, batch, stage2.hidden),
                           zero_state(tape, batch, stage2.hidden)};
        for (std::size_t f = 0; f < context.size(); ++f) {
            s1 = stage1.step(tape, bind, context[f], s1);
            out.stage1_probs.push_back(ad::softmax_rows(head1.apply(tape, bind, s1.h)));
            Var merged = ad::concat_cols({s1.h, action[f]});
            s2 = stage2.step(tape, bind, merged, s2);
            out.stage2_probs.push_back(ad::softmax_rows(head2.apply(tape, bind, s2.h)));
        }
        return out;
    }

    void visit(const std::string& p, NamedParams& out) {
        stage1.visit(p + ".stage1", out);
        stage2.visit(p + ".stage2", out);
        head1.visit(p + ".head1", out);
        head2.visit(p + ".head2", out);
    }
};

// Multi-modal fusion: FC-Pool learns per-modality mixing weights, a
// second recurrent layer models the pooled sequence, and its output is
// stacked with the M original hiddens ((M+1) x H) before a second
// FC-Pool compacts everything back to H.
struct MmLstmFusion {
    int modalities = 0, hidden = 0;
    Mat pool1_w;  // 1 x M
    Mat pool1_b;  // 1 x H
    LstmCell second;
    Mat pool2_w;  // 1 x (M+1)
    Mat pool2_b;  // 1 x H

    static MmLstmFusion init(int modalities, int hidden, Rng& rng) {
        MmLstmFusion m;
        m.modalities = modalities;
        m.hidden = hidden;
        m.pool1_w = glorot(rng, 1, modalities);
        m.pool1_b = Mat::Zero(1, hidden);
        m.second = LstmCell::init(hidden, hidden, rng);
        m.pool2_w = glorot(rng, 1, modalities + 1);
        m.pool2_b = Mat::Zero(1, hidden);
        return m;
    }

    struct State {
        LstmCell::State rec;
    };

    State initial_state(Tape& tape, Eigen::Index batch) {
        return {{zero_state(tape, batch, hidden), zero_state(tape, batch, hidden)}};
    }

    // One fusion step on M modal hidden vectors (each batch x H).
    Var fuse_step(Tape& tape, Binder& bind, const std::vector<Var>& modal, State& state) {
        if (static_cast<int>(modal.size()) != modalities)
            throw std::invalid_argument("mm_lstm: wrong modality count");
        Var w1 = bind(pool1_w);
        Var pooled{};
        // weighted sum over modalities with learned scalar weights
        for (int m = 0; m < modalities; ++m) {
            Var term = scale_by_entry(tape, modal[m], w1, m);
            pooled = (m == 0) ? term : ad::add(pooled, term);
        }
        pooled = ad::add_rowvec(pooled, bind(pool1_b));
        state.rec = second.step(tape, bind, pooled, state.rec);

        Var w2 = bind(pool2_w);
        Var fused = scale_by_entry(tape, state.rec.h, w2, 0);
        for (int m = 0; m < modalities; ++m)
            fused = ad::add(fused, scale_by_entry(tape, modal[m], w2, m + 1));
        return ad::add_rowvec(fused, bind(pool2_b));
    }

    void visit(const std::string& p, NamedParams& out) {
        out.emplace_back(p + ".pool1_w", &pool1_w);
        out.emplace_back(p + ".pool1_b", &pool1_b);
        second.visit(p + ".second", out);
        out.emplace_back(p + ".pool2_w", &pool2_w);
        out.emplace_back(p + ".pool2_b", &pool2_b);
    }

  private:
    // x (B x H) scaled by the scalar weights(0, idx), differentiably.
    static Var scale_by_entry(Tape& tape, Var x, Var weights, int idx) {
        Var w = ad::slice_cols(weights, idx, 1);  // 1 x 1
        Var wrow = ad::broadcast_rows(w, static_cast<int>(tape.val(x).rows()));  // B x 1
        Var wfull = ad::matmul(wrow, tape.constant(Mat::Ones(1, tape.val(x).cols())));
        return ad::mul(wfull, x);
    }
};

// ---------------------------------------------------------------------------
// Inference-time temporal average pooling: mean of the per-frame
// probability rows 1..t.
inline Eigen::RowVectorXd temporal_average_pool(const Mat& per_frame_probs, int t) {
    if (t < 1 || t > per_frame_probs.rows())
        throw std::invalid_argument("temporal_average_pool: t out of range");
    return per_frame_probs.topRows(t).colwise().mean();
}

}  // namespace stochseq::rec
