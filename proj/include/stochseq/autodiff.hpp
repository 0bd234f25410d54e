#pragma once

// Reverse-mode automatic differentiation on dense double matrices.
// A Tape owns the computation graph of one forward pass; ops append
// nodes together with a pull-back closure that routes the output
// gradient into the inputs. Graphs are rebuilt per step (define-by-run).

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stochseq::ad {

using Mat = Eigen::MatrixXd;

class Tape;

// Cheap handle into a Tape. Invalidated by Tape::clear().
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
};

namespace detail {
inline void accumulate(Mat& dst, const Mat& g) {
    if (dst.size() == 0) {
        dst = g;
    } else {
        dst += g;
    }
}
}  // namespace detail

class Tape {
  public:
    using Pull = std::function<void(Tape&, const Mat&)>;

    struct Node {
        Mat value;
        Mat grad;  // lazily allocated on first accumulation
        bool needs_grad = false;
        Pull pull;  // empty for leaves
    };

    Var constant(Mat v) { return push(std::move(v), false, {}); }

    Var constant_scalar(double v) {
        Mat m(1, 1);
        m(0, 0) = v;
        return constant(std::move(m));
    }

    // Differentiable leaf. The value is copied; gradients are read back
    // through grad() after backward().
    Var param(const Mat& v) { return push(v, true, {}); }

    const Mat& val(Var v) const { return nodes_.at(v.id).value; }

    double scalar(Var v) const {
        const Mat& m = val(v);
        if (m.size() != 1) throw std::logic_error("scalar() on non-1x1 node");
        return m(0, 0);
    }

    // Gradient of the last backward() root w.r.t. node v (zeros if none
    // flowed).
    Mat grad(Var v) const {
        const Node& n = nodes_.at(v.id);
        if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    void backward(Var root) {
        Node& r = nodes_.at(root.id);
        if (r.value.size() != 1) throw std::logic_error("backward root must be scalar");
        detail::accumulate(r.grad, Mat::Ones(1, 1));
        for (int i = root.id; i >= 0; --i) {
            Node& n = nodes_[i];
            if (!n.needs_grad || !n.pull || n.grad.size() == 0) continue;
            n.pull(*this, n.grad);
        }
    }

    void accumulate_grad(int id, const Mat& g) { detail::accumulate(nodes_[id].grad, g); }

    bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

    std::size_t size() const { return nodes_.size(); }

    void clear() { nodes_.clear(); }

    Var push(Mat value, bool needs, Pull pull) {
        nodes_.push_back(Node{std::move(value), Mat(), needs, std::move(pull)});
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    int next_id() const { return static_cast<int>(nodes_.size()); }

  private:
    std::vector<Node> nodes_;
};

namespace detail {
inline Tape& tape_of(Var a) {
    if (!a.valid()) throw std::logic_error("use of invalid Var");
    return *a.tape;
}
inline void check_same_tape(Var a, Var b) {
    if (a.tape != b.tape) throw std::logic_error("Vars belong to different tapes");
}
inline void check_same_shape(const Mat& a, const Mat& b, const char* who) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(who) + ": shape mismatch (" +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()) + ")");
}
}  // namespace detail

inline Var add(Var a, Var b) {
    Tape& t = detail::tape_of(a);
    detail::check_same_tape(a, b);
    detail::check_same_shape(t.val(a), t.val(b), "add");
    bool ng = t.needs_grad(a) || t.needs_grad(b);
    int ia = a.id, ib = b.id;
    return t.push(t.val(a) + t.val(b), ng, [ia, ib](Tape& tt, const Mat& g) {
        if (tt.needs_grad({&tt, ia})) tt.accumulate_grad(ia, g);
        if (tt.needs_grad({&tt, ib})) tt.accumulate_grad(ib, g);
    });
}

inline Var sub(Var a, Var b) {
    Tape& t = detail::tape_of(a);
    detail::check_same_tape(a, b);
    detail::check_same_shape(t.val(a), t.val(b), "sub");
    bool ng = t.needs_grad(a) || t.needs_grad(b);
    int ia = a.id, ib = b.id;
    return t.push(t.val(a) - t.val(b), ng, [ia, ib](Tape& tt, const Mat& g) {
        if (tt.needs_grad({&tt, ia})) tt.accumulate_grad(ia, g);
        if (tt.needs_grad({&tt, ib})) tt.accumulate_grad(ib, -g);
    });
}

// Elementwise product.
inline Var mul(Var a, Var b) {
    Tape& t = detail::tape_of(a);
    detail::check_same_tape(a, b);
    detail::check_same_shape(t.val(a), t.val(b), "mul");
    bool ng = t.needs_grad(a) || t.needs_grad(b);
    int ia = a.id, ib = b.id;
    return t.push(t.val(a).cwiseProduct(t.val(b)), ng, [ia, ib](Tape& tt, const Mat& g) {
        if (tt.needs_grad({&tt, ia})) tt.accumulate_grad(ia, g.cwiseProduct(tt.val({&tt, ib})));
        if (tt.needs_grad({&tt, ib})) tt.accumulate_grad(ib, g.cwiseProduct(tt.val({&tt, ia})));
    });
}

// Elementwise quotient.
inline Var div(Var a, Var b) {
    Tape& t = detail::tape_of(a);
    detail::check_same_tape(a, b);
    detail::check_same_shape(t.val(a), t.val(b), "div");
    bool ng = t.needs_grad(a) || t.needs_grad(b);
    int ia = a.id, ib = b.id;
    return t.push(t.val(a).cwiseQuotient(t.val(b)), ng, [ia, ib](Tape& tt, const Mat& g) {
        const Mat& bv = tt.val({&tt, ib});
        if (tt.needs_grad({&tt, ia})) tt.accumulate_grad(ia, g.cwiseQuotient(bv));
        if (tt.needs_grad({&tt, ib})) {
            const Mat& av = tt.val({&tt, ia});
            tt.accumulate_grad(
                ib, (-g.array() * av.array() / (bv.array() * bv.array())).matrix());
        }
    });
}

inline Var matmul(Var a, Var b) {
    Tape& t = detail::tape_of(a);
    detail::check_same_tape(a, b);
    if (t.val(a).cols() != t.val(b).rows())
        throw std::invalid_argument("matmul: inner dimension mismatch");
    bool ng = t.needs_grad(a) || t.needs_grad(b);
    int ia = a.id, ib = b.id;
    return t.push(t.val(a) * t.val(b), ng, [ia, ib](Tape& tt, const Mat& g) {
        if (tt.needs_grad({&tt, ia})) tt.accumulate_grad(ia, g * tt.val({&tt, ib}).transpose());
        if (tt.needs_grad({&tt, ib})) tt.accumulate_grad(ib, tt.val({&tt, ia}).transpose() * g);
    });
}

inline Var scale(Var a, double s) {
    Tape& t = detail::tape_of(a);
    int ia = a.id;
    return t.push(t.val(a) * s, t.needs_grad(a), [ia, s](Tape& tt, const Mat& g) {
        if (tt.needs_grad({&tt, ia})) tt.accumulate_grad(ia, g * s);
    });
}

inline Var neg(Var a) { return scale(a, -1.0); }

inline Var add_scalar(Var a, double s) {
    Tape& t = detail::tape_of(a);
    int ia = a.id;
    return t.push(t.val(a).array() + s, t.needs_grad(a), [ia](Tape& tt, const Mat& g) {
        if (tt.needs_grad({&tt, ia})) tt.accumulate_grad(ia, g);
    });
}

// a (m x n) plus row vector b (1 x n), broadcast over rows.
inline Var add_rowvec(Var a, Var b) {
    Tape& t = detail::tape_of(a);
    detail::check_same_tape(a, b);
    if (t.val(b).rows() != 1 || t.val(a).cols() != t.val(b).cols())
        throw std::invalid_argument("add_rowvec: b must be 1 x cols(a)");
    bool ng = t.needs_grad(a) || t.needs_grad(b);
    int ia = a.id, ib = b.id;
    Mat v = t.val(a);
    v.rowwise() += t.val(b).row(0);
    return t.push(std::move(v), ng, [ia, ib](Tape& tt, const Mat& g) {
        if (tt.needs_grad({&tt, ia})) tt.accumulate_grad(ia, g);
        if (tt.needs_grad({&tt, ib})) tt.accumulate_grad(ib, g.colwise().sum());
    });
}

// Replicate a 1 x n row to m x n.
inline Var broadcast_rows(Var a, int m) {
    Tape& t = detail::tape_of(a);
    if (t.val(a).rows() != 1) throw std::invalid_argument("broadcast_rows: input must have 1 row");
    int ia = a.id;
    return t.push(t.val(a).replicate(m, 1), t.needs_grad(a), [ia](Tape& tt, const Mat& g) {
        if (tt.needs_grad({&tt, ia})) tt.accumulate_grad(ia, g.colwise().sum());
    });
}

namespace detail {
template <typename Fwd, typename Bwd>
Var unary(Var a, Fwd fwd, Bwd bwd) {
    Tape& t = tape_of(a);
    int ia = a.id;
    int out = t.next_id();
    return t.push(fwd(t.val(a)), t.needs_grad(a), [ia, out, bwd](Tape& tt, const Mat& g) {
        if (!tt.needs_grad({&tt, ia})) return;
        tt.accumulate_grad(ia, bwd(g, tt.val({&tt, ia}), tt.val({&tt, out})));
    });
}
}  // namespace detail

inline Var sigmoid(Var a) {
    return detail::unary(
        a, [](const Mat& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); },
        [](const Mat& g, const Mat&, const Mat& y) {
            return (g.array() * y.array() * (1.0 - y.array())).matrix();
        });
}

inline Var tanh_(Var a) {
    return detail::unary(
        a, [](const Mat& x) { return x.array().tanh().matrix(); },
        [](const Mat& g, const Mat&, const Mat& y) {
            return (g.array() * (1.0 - y.array().square())).matrix();
        });
}

inline Var relu(Var a) {
    return detail::unary(
        a, [](const Mat& x) { return x.cwiseMax(0.0); },
        [](const Mat& g, const Mat& x, const Mat&) {
            return (g.array() * (x.array() > 0.0).cast<double>()).matrix();
        });
}

inline Var softplus(Var a) {
    return detail::unary(
        a,
        [](const Mat& x) {
            return (x.array().max(0.0) + (-x.array().abs()).exp().log1p()).matrix();
        },
        [](const Mat& g, const Mat& x, const Mat&) {
            return (g.array() / (1.0 + (-x.array()).exp())).matrix();
        });
}

inline Var exp_(Var a) {
    return detail::unary(
        a, [](const Mat& x) { return x.array().exp().matrix(); },
        [](const Mat& g, const Mat&, const Mat& y) { return (g.array() * y.array()).matrix(); });
}

inline Var log_(Var a) {
    return detail::unary(
        a, [](const Mat& x) { return x.array().log().matrix(); },
        [](const Mat& g, const Mat& x, const Mat&) { return (g.array() / x.array()).matrix(); });
}

inline Var square(Var a) { return mul(a, a); }

// Clamp with pass-through gradient on the interior.
inline Var clamp(Var a, double lo, double hi) {
    return detail::unary(
        a, [lo, hi](const Mat& x) { return x.cwiseMax(lo).cwiseMin(hi); },
        [lo, hi](const Mat& g, const Mat& x, const Mat&) {
            return (g.array() * ((x.array() > lo) && (x.array() < hi)).cast<double>()).matrix();
        });
}

inline Var softmax_rows(Var a) {
    Tape& t = detail::tape_of(a);
    const Mat& x = t.val(a);
    Mat y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        Eigen::ArrayXd e = (x.row(r).array() - x.row(r).maxCoeff()).exp();
        y.row(r) = (e / e.sum()).matrix();
    }
    int ia = a.id;
    int out = t.next_id();
    return t.push(std::move(y), t.needs_grad(a), [ia, out](Tape& tt, const Mat& g) {
        if (!tt.needs_grad({&tt, ia})) return;
        const Mat& yy = tt.val({&tt, out});
        Mat gx(g.rows(), g.cols());
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
            double dot = g.row(r).dot(yy.row(r));
            gx.row(r) = (yy.row(r).array() * (g.row(r).array() - dot)).matrix();
        }
        tt.accumulate_grad(ia, gx);
    });
}

inline Var sum_all(Var a) {
    Tape& t = detail::tape_of(a);
    Mat s(1, 1);
    s(0, 0) = t.val(a).sum();
    int ia = a.id;
    return t.push(std::move(s), t.needs_grad(a), [ia](Tape& tt, const Mat& g) {
        if (!tt.needs_grad({&tt, ia})) return;
        const Mat& x = tt.val({&tt, ia});
        tt.accumulate_grad(ia, Mat::Constant(x.rows(), x.cols(), g(0, 0)));
    });
}

inline Var mean_all(Var a) {
    Tape& t = detail::tape_of(a);
    return scale(sum_all(a), 1.0 / static_cast<double>(t.val(a).size()));
}

inline Var slice_cols(Var a, int first, int n) {
    Tape& t = detail::tape_of(a);
    const Mat& x = t.val(a);
    if (first < 0 || n < 0 || first + n > x.cols())
        throw std::invalid_argument("slice_cols: range out of bounds");
    int ia = a.id;
    return t.push(x.middleCols(first, n), t.needs_grad(a), [ia, first, n](Tape& tt, const Mat& g) {
        if (!tt.needs_grad({&tt, ia})) return;
        const Mat& x = tt.val({&tt, ia});
        Mat gx = Mat::Zero(x.rows(), x.cols());
        gx.middleCols(first, n) = g;
        tt.accumulate_grad(ia, gx);
    });
}

inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
    Tape& t = detail::tape_of(parts.front());
    Eigen::Index rows = t.val(parts.front()).rows();
    Eigen::Index cols = 0;
    bool ng = false;
    for (Var p : parts) {
        detail::check_same_tape(parts.front(), p);
        if (t.val(p).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += t.val(p).cols();
        ng = ng || t.needs_grad(p);
    }
    Mat v(rows, cols);
    std::vector<int> ids;
    std::vector<int> offsets;
    Eigen::Index at = 0;
    for (Var p : parts) {
        v.middleCols(at, t.val(p).cols()) = t.val(p);
        ids.push_back(p.id);
        offsets.push_back(static_cast<int>(at));
        at += t.val(p).cols();
    }
    return t.push(std::move(v), ng, [ids, offsets](Tape& tt, const Mat& g) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            Var p{&tt, ids[i]};
            if (!tt.needs_grad(p)) continue;
            tt.accumulate_grad(ids[i], g.middleCols(offsets[i], tt.val(p).cols()));
        }
    });
}

inline Var concat_cols(std::initializer_list<Var> parts) {
    return concat_cols(std::vector<Var>(parts));
}

// out.col(j) = a.col(idx[j])
inline Var gather_cols(Var a, const std::vector<int>& idx) {
    Tape& t = detail::tape_of(a);
    const Mat& x = t.val(a);
    Mat v(x.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
        if (idx[j] < 0 || idx[j] >= x.cols()) throw std::invalid_argument("gather_cols: bad index");
        v.col(static_cast<Eigen::Index>(j)) = x.col(idx[j]);
    }
    int ia = a.id;
    return t.push(std::move(v), t.needs_grad(a), [ia, idx](Tape& tt, const Mat& g) {
        if (!tt.needs_grad({&tt, ia})) return;
        const Mat& x = tt.val({&tt, ia});
        Mat gx = Mat::Zero(x.rows(), x.cols());
        for (std::size_t j = 0; j < idx.size(); ++j)
            gx.col(idx[j]) += g.col(static_cast<Eigen::Index>(j));
        tt.accumulate_grad(ia, gx);
    });
}

// Place a.col(j) at out.col(idx[j]) of an m x total matrix, zeros elsewhere.
inline Var scatter_cols(Var a, const std::vector<int>& idx, int total) {
    Tape& t = detail::tape_of(a);
    const Mat& x = t.val(a);
    if (static_cast<int>(idx.size()) != x.cols())
        throw std::invalid_argument("scatter_cols: index count != cols");
    Mat v = Mat::Zero(x.rows(), total);
    for (std::size_t j = 0; j < idx.size(); ++j) {
        if (idx[j] < 0 || idx[j] >= total) throw std::invalid_argument("scatter_cols: bad index");
        v.col(idx[j]) = x.col(static_cast<Eigen::Index>(j));
    }
    int ia = a.id;
    return t.push(std::move(v), t.needs_grad(a), [ia, idx](Tape& tt, const Mat& g) {
        if (!tt.needs_grad({&tt, ia})) return;
        const Mat& x = tt.val({&tt, ia});
        Mat gx(x.rows(), x.cols());
        for (std::size_t j = 0; j < idx.size(); ++j)
            gx.col(static_cast<Eigen::Index>(j)) = g.col(idx[j]);
        tt.accumulate_grad(ia, gx);
    });
}

// Row-wise L2 normalization of contiguous column groups of width `group`
// (e.g. group=4 renormalizes packed quaternions).
inline Var normalize_groups(Var a, int group) {
    Tape& t = detail::tape_of(a);
    const Mat& x = t.val(a);
    if (group <= 0 || x.cols() % group != 0)
        throw std::invalid_argument("normalize_groups: cols not divisible by group");
    Mat y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (Eigen::Index c = 0; c < x.cols(); c += group) {
            double n = x.row(r).segment(c, group).norm();
            if (n < 1e-300) n = 1e-300;
            y.row(r).segment(c, group) = x.row(r).segment(c, group) / n;
        }
    }
    int ia = a.id;
    int out = t.next_id();
    return t.push(std::move(y), t.needs_grad(a), [ia, out, group](Tape& tt, const Mat& g) {
        if (!tt.needs_grad({&tt, ia})) return;
        const Mat& x = tt.val({&tt, ia});
        const Mat& yy = tt.val({&tt, out});
        Mat gx(x.rows(), x.cols());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            for (Eigen::Index c = 0; c < x.cols(); c += group) {
                double n = x.row(r).segment(c, group).norm();
                if (n < 1e-300) n = 1e-300;
                auto yv = yy.row(r).segment(c, group);
                auto gv = g.row(r).segment(c, group);
                double dot = gv.dot(yv);
                gx.row(r).segment(c, group) = (gv - dot * yv) / n;
            }
        }
        tt.accumulate_grad(ia, gx);
    });
}

// Sum of squared entries of (a - b), as a scalar node.
inline Var squared_error(Var a, Var b) { return sum_all(square(sub(a, b))); }

}  // namespace stochseq::ad
