#ifndef DGVAE_AUTODIFF_HPP
#define DGVAE_AUTODIFF_HPP

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dgvae/rng.hpp"

namespace dgvae::ad {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Handle into a Tape. Only meaningful for the tape that produced it.
struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over dense row-major matrices. Rows index batch
/// entities (scene x node or scene x edge), columns index features. Every op
/// evaluates eagerly and records a closure that pushes the output gradient
/// into its inputs; backward() walks the tape once in reverse creation order,
/// which is a topological order by construction.
///
/// Gradients of intermediate nodes are released as soon as they have been
/// propagated, so peak memory is dominated by forward values.
template <typename S>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // ---- leaves ---------------------------------------------------------

    Var constant(Mat<S> v) { return push(std::move(v), false, {}); }

    /// Gradient-tracked input; its gradient survives backward() for querying.
    Var leaf(Mat<S> v) {
        Var out = push(std::move(v), true, {});
        nodes_[out.id].keep_grad = true;
        return out;
    }

    // ---- linear algebra -------------------------------------------------

    Var matmul(Var a, Var b) {
        Mat<S> y = val(a) * val(b);
        return push(std::move(y), tracked(a) || tracked(b), [this, a, b](Var o) {
            const Mat<S>& g = grad(o);
            if (tracked(a)) acc_grad(a) += g * val(b).transpose();
            if (tracked(b)) acc_grad(b) += val(a).transpose() * g;
        });
    }

    /// y = x*W + bias (bias is [1 x out], broadcast over rows).
    Var linear(Var x, Var w, Var b) {
        Mat<S> y = val(x) * val(w);
        y.rowwise() += val(b).row(0);
        return push(std::move(y), tracked(x) || tracked(w) || tracked(b),
                    [this, x, w, b](Var o) {
                        const Mat<S>& g = grad(o);
                        if (tracked(x)) acc_grad(x) += g * val(w).transpose();
                        if (tracked(w)) acc_grad(w) += val(x).transpose() * g;
                        if (tracked(b)) acc_grad(b) += g.colwise().sum();
                    });
    }

    /// y = x1*W1 + x2*W2 + bias. Equivalent to linear(concat(x1,x2), [W1;W2])
    /// without materializing the concatenation.
    Var linear2(Var x1, Var w1, Var x2, Var w2, Var b) {
        Mat<S> y = val(x1) * val(w1);
        y.noalias() += val(x2) * val(w2);
        y.rowwise() += val(b).row(0);
        bool tr = tracked(x1) || tracked(w1) || tracked(x2) || tracked(w2) || tracked(b);
        return push(std::move(y), tr, [this, x1, w1, x2, w2, b](Var o) {
            const Mat<S>& g = grad(o);
            if (tracked(x1)) acc_grad(x1) += g * val(w1).transpose();
            if (tracked(w1)) acc_grad(w1) += val(x1).transpose() * g;
            if (tracked(x2)) acc_grad(x2) += g * val(w2).transpose();
            if (tracked(w2)) acc_grad(w2) += val(x2).transpose() * g;
            if (tracked(b)) acc_grad(b) += g.colwise().sum();
        });
    }

    Var linear3(Var x1, Var w1, Var x2, Var w2, Var x3, Var w3, Var b) {
        Mat<S> y = val(x1) * val(w1);
        y.noalias() += val(x2) * val(w2);
        y.noalias() += val(x3) * val(w3);
        y.rowwise() += val(b).row(0);
        bool tr = tracked(x1) || tracked(w1) || tracked(x2) || tracked(w2) ||
                  tracked(x3) || tracked(w3) || tracked(b);
        return push(std::move(y), tr, [this, x1, w1, x2, w2, x3, w3, b](Var o) {
            const Mat<S>& g = grad(o);
            if (tracked(x1)) acc_grad(x1) += g * val(w1).transpose();
            if (tracked(w1)) acc_grad(w1) += val(x1).transpose() * g;
            if (tracked(x2)) acc_grad(x2) += g * val(w2).transpose();
            if (tracked(w2)) acc_grad(w2) += val(x2).transpose() * g;
            if (tracked(x3)) acc_grad(x3) += g * val(w3).transpose();
            if (tracked(w3)) acc_grad(w3) += val(x3).transpose() * g;
            if (tracked(b)) acc_grad(b) += g.colwise().sum();
        });
    }

    // ---- elementwise ----------------------------------------------------

    Var add(Var a, Var b) {
        Mat<S> y = val(a) + val(b);
        return push(std::move(y), tracked(a) || tracked(b), [this, a, b](Var o) {
            if (tracked(a)) acc_grad(a) += grad(o);
            if (tracked(b)) acc_grad(b) += grad(o);
        });
    }

    Var sub(Var a, Var b) {
        Mat<S> y = val(a) - val(b);
        return push(std::move(y), tracked(a) || tracked(b), [this, a, b](Var o) {
            if (tracked(a)) acc_grad(a) += grad(o);
            if (tracked(b)) acc_grad(b) -= grad(o);
        });
    }

    Var cmul(Var a, Var b) {
        Mat<S> y = val(a).cwiseProduct(val(b));
        return push(std::move(y), tracked(a) || tracked(b), [this, a, b](Var o) {
            const Mat<S>& g = grad(o);
            if (tracked(a)) acc_grad(a) += g.cwiseProduct(val(b));
            if (tracked(b)) acc_grad(b) += g.cwiseProduct(val(a));
        });
    }

    Var scale(Var a, S s) {
        Mat<S> y = val(a) * s;
        return push(std::move(y), tracked(a), [this, a, s](Var o) {
            if (tracked(a)) acc_grad(a) += grad(o) * s;
        });
    }

    Var add_scalar(Var a, S s) {
        Mat<S> y = val(a).array() + s;
        return push(std::move(y), tracked(a), [this, a](Var o) {
            if (tracked(a)) acc_grad(a) += grad(o);
        });
    }

    /// Elementwise product with a constant matrix (masks, fixed weights).
    Var cmul_const(Var a, const Mat<S>& m) {
        if (m.rows() != val(a).rows() || m.cols() != val(a).cols())
            throw std::invalid_argument("cmul_const: shape mismatch");
        Mat<S> y = val(a).cwiseProduct(m);
        Mat<S> mc = m;
        return push(std::move(y), tracked(a), [this, a, mc = std::move(mc)](Var o) {
            if (tracked(a)) acc_grad(a) += grad(o).cwiseProduct(mc);
        });
    }

    /// Scales row r of a by v(r, 0); v is [rows x 1].
    Var mul_colvec(Var a, Var v) {
        if (val(v).cols() != 1 || val(v).rows() != val(a).rows())
            throw std::invalid_argument("mul_colvec: v must be [rows x 1]");
        Mat<S> y = val(a).array().colwise() * val(v).col(0).array();
        return push(std::move(y), tracked(a) || tracked(v), [this, a, v](Var o) {
            const Mat<S>& g = grad(o);
            if (tracked(a)) acc_grad(a) += g.array().colwise() * val(v).col(0).array();
            if (tracked(v))
                acc_grad(v) += g.cwiseProduct(val(a)).rowwise().sum();
        });
    }

    Var square(Var a) {
        Mat<S> y = val(a).array().square();
        return push(std::move(y), tracked(a), [this, a](Var o) {
            if (tracked(a))
                acc_grad(a).array() += grad(o).array() * val(a).array() * S(2);
        });
    }

    // ---- activations ----------------------------------------------------

    Var elu(Var a) {
        Mat<S> y = val(a).array().max(S(0)) +
                   (val(a).array().min(S(0)).exp() - S(1));
        return push(std::move(y), tracked(a), [this, a](Var o) {
            // d/dx = 1 for x>0, exp(x) = y+1 for x<=0
            auto pos = (val(a).array() > S(0)).template cast<S>();
            acc_grad(a).array() +=
                grad(o).array() * (pos + (S(1) - pos) * (val(o).array() + S(1)));
        });
    }

    Var relu(Var a) {
        Mat<S> y = val(a).array().max(S(0));
        return push(std::move(y), tracked(a), [this, a](Var o) {
            auto& g = acc_grad(a);
            g.array() += grad(o).array() * (val(a).array() > S(0)).template cast<S>();
        });
    }

    Var sigmoid(Var a) {
        Mat<S> y = (S(1) / (S(1) + (-val(a).array()).exp()));
        return push(std::move(y), tracked(a), [this, a](Var o) {
            acc_grad(a).array() +=
                grad(o).array() * val(o).array() * (S(1) - val(o).array());
        });
    }

    Var tanh_(Var a) {
        Mat<S> y = val(a).array().tanh();
        return push(std::move(y), tracked(a), [this, a](Var o) {
            acc_grad(a).array() +=
                grad(o).array() * (S(1) - val(o).array().square());
        });
    }

    // ---- shape ops ------------------------------------------------------

    Var gather_rows(Var a, const std::vector<int>& idx) {
        Mat<S> y(static_cast<Eigen::Index>(idx.size()), val(a).cols());
        for (std::size_t r = 0; r < idx.size(); ++r) y.row(r) = val(a).row(idx[r]);
        return push(std::move(y), tracked(a), [this, a, idx](Var o) {
            if (!tracked(a)) return;
            auto& g = acc_grad(a);
            for (std::size_t r = 0; r < idx.size(); ++r)
                g.row(idx[r]) += grad(o).row(r);
        });
    }

    /// y[j] = sum over rows r with idx[r] == j of a[r]; deterministic
    /// accumulation in row order.
    Var scatter_sum_rows(Var a, const std::vector<int>& idx, int out_rows) {
        Mat<S> y = Mat<S>::Zero(out_rows, val(a).cols());
        for (std::size_t r = 0; r < idx.size(); ++r) y.row(idx[r]) += val(a).row(r);
        return push(std::move(y), tracked(a), [this, a, idx](Var o) {
            if (!tracked(a)) return;
            auto& g = acc_grad(a);
            for (std::size_t r = 0; r < idx.size(); ++r)
                g.row(r) += grad(o).row(idx[r]);
        });
    }

    Var concat_cols(Var a, Var b) {
        Mat<S> y(val(a).rows(), val(a).cols() + val(b).cols());
        y.leftCols(val(a).cols()) = val(a);
        y.rightCols(val(b).cols()) = val(b);
        const Eigen::Index ca = val(a).cols();
        return push(std::move(y), tracked(a) || tracked(b), [this, a, b, ca](Var o) {
            const Mat<S>& g = grad(o);
            if (tracked(a)) acc_grad(a) += g.leftCols(ca);
            if (tracked(b)) acc_grad(b) += g.rightCols(g.cols() - ca);
        });
    }

    Var slice_cols(Var a, int c0, int n) {
        Mat<S> y = val(a).middleCols(c0, n);
        return push(std::move(y), tracked(a), [this, a, c0, n](Var o) {
            if (tracked(a)) acc_grad(a).middleCols(c0, n) += grad(o);
        });
    }

    // ---- reductions / probability ---------------------------------------

    Var sum_all(Var a) {
        Mat<S> y(1, 1);
        y(0, 0) = val(a).sum();
        return push(std::move(y), tracked(a), [this, a](Var o) {
            if (tracked(a))
                acc_grad(a).array() += grad(o)(0, 0);
        });
    }

    Var softmax_rows(Var a) {
        Mat<S> y = val(a);
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            auto row = y.row(r).array();
            row -= row.maxCoeff();
            row = row.exp();
            row /= row.sum();
        }
        return push(std::move(y), tracked(a), [this, a](Var o) {
            if (!tracked(a)) return;
            const Mat<S>& y2 = val(o);
            const Mat<S>& g = grad(o);
            Mat<S> dot = (g.cwiseProduct(y2)).rowwise().sum();
            acc_grad(a) += y2.cwiseProduct(g.colwise() - dot.col(0));
        });
    }

    /// log(max(a, floor)); zero sub-gradient where clamped.
    Var log_floor(Var a, S floor) {
        Mat<S> y = val(a).array().max(floor).log();
        return push(std::move(y), tracked(a), [this, a, floor](Var o) {
            if (!tracked(a)) return;
            auto& g = acc_grad(a);
            g.array() += grad(o).array() * (val(a).array() > floor).template cast<S>() /
                         val(a).array().max(floor);
        });
    }

    // ---- stochastic ------------------------------------------------------

    /// Inverted dropout; identity when rate == 0.
    Var dropout(Var a, S rate, RngStream& rng) {
        if (rate <= S(0)) return a;
        Mat<S> mask(val(a).rows(), val(a).cols());
        const S keep = S(1) - rate;
        for (Eigen::Index r = 0; r < mask.rows(); ++r)
            for (Eigen::Index c = 0; c < mask.cols(); ++c)
                mask(r, c) = rng.uniform() < static_cast<double>(rate) ? S(0) : S(1) / keep;
        return cmul_const(a, mask);
    }

    /// Forward value is `hard`, gradient flows as if the output were `soft`.
    Var straight_through(Var soft, Mat<S> hard) {
        if (hard.rows() != val(soft).rows() || hard.cols() != val(soft).cols())
            throw std::invalid_argument("straight_through: shape mismatch");
        return push(std::move(hard), tracked(soft), [this, soft](Var o) {
            if (tracked(soft)) acc_grad(soft) += grad(o);
        });
    }

    // ---- access / backward ------------------------------------------------

    const Mat<S>& val(Var v) const { return nodes_[v.id].value; }

    /// Gradient of a kept node (leaf) after backward().
    const Mat<S>& grad_of(Var v) const {
        if (nodes_[v.id].grad.size() == 0)
            throw std::logic_error("grad_of: gradient not retained or not computed");
        return nodes_[v.id].grad;
    }

    std::size_t size() const { return nodes_.size(); }

    /// Seeds d(root)/d(root) = 1 and propagates to all tracked ancestors.
    /// Root must be a scalar [1 x 1] node.
    void backward(Var root) {
        if (val(root).rows() != 1 || val(root).cols() != 1)
            throw std::invalid_argument("backward: root must be scalar");
        nodes_[root.id].grad = Mat<S>::Ones(1, 1);
        for (std::int32_t i = root.id; i >= 0; --i) {
            Node& n = nodes_[i];
            if (!n.track || n.grad.size() == 0) continue;
            if (n.back) n.back(Var{i});
            if (!n.keep_grad) n.grad.resize(0, 0);
        }
    }

private:
    struct Node {
        Mat<S> value;
        Mat<S> grad;
        bool track = false;
        bool keep_grad = false;
        std::function<void(Var)> back;
    };

    bool tracked(Var v) const { return nodes_[v.id].track; }

    const Mat<S>& grad(Var v) const { return nodes_[v.id].grad; }

    /// Gradient accumulator, zero-initialized on first touch.
    Mat<S>& acc_grad(Var v) {
        Node& n = nodes_[v.id];
        if (n.grad.size() == 0)
            n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    Var push(Mat<S> value, bool track, std::function<void(Var)> back) {
        Node n;
        n.value = std::move(value);
        n.track = track;
        n.back = track ? std::move(back) : std::function<void(Var)>{};
        nodes_.push_back(std::move(n));
        return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    std::vector<Node> nodes_;
};

}  // namespace dgvae::ad

#endif  // DGVAE_AUTODIFF_HPP
