#ifndef DGVAE_NN_HPP
#define DGVAE_NN_HPP

#include <cmath>
#include <cstring>
#include <iostream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgvae/autodiff.hpp"
#include "dgvae/rng.hpp"

namespace dgvae::nn {

using ad::Mat;
using ad::Tape;
using ad::Var;

template <typename S>
struct Param {
    std::string name;
    Mat<S> value;
    Mat<S> grad;
    Mat<S> adam_m;
    Mat<S> adam_v;

    void zero_grad() { grad.setZero(); }
};

/// Owns all parameters of a model in creation order; creation order defines
/// the serialization order, so identical construction code yields identical
/// checkpoints.
template <typename S>
class ParamStore {
public:
    Param<S>& create(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
        for (const auto& p : params_)
            if (p->name == name) throw std::invalid_argument("duplicate param: " + name);
        auto p = std::make_unique<Param<S>>();
        p->name = name;
        p->value = Mat<S>::Zero(rows, cols);
        p->grad = Mat<S>::Zero(rows, cols);
        p->adam_m = Mat<S>::Zero(rows, cols);
        p->adam_v = Mat<S>::Zero(rows, cols);
        params_.push_back(std::move(p));
        return *params_.back();
    }

    std::size_t size() const { return params_.size(); }
    Param<S>& at(std::size_t i) { return *params_[i]; }
    const Param<S>& at(std::size_t i) const { return *params_[i]; }

    Param<S>* find(const std::string& name) {
        for (auto& p : params_)
            if (p->name == name) return p.get();
        return nullptr;
    }

    void zero_grads() {
        for (auto& p : params_) p->zero_grad();
    }

    std::int64_t num_scalars() const {
        std::int64_t n = 0;
        for (const auto& p : params_) n += p->value.size();
        return n;
    }

    /// Raw little-endian blob: count, then (name, rows, cols, data) per param.
    void save(std::ostream& os) const {
        write_u64(os, params_.size());
        for (const auto& p : params_) {
            write_u64(os, p->name.size());
            os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
            write_u64(os, static_cast<std::uint64_t>(p->value.rows()));
            write_u64(os, static_cast<std::uint64_t>(p->value.cols()));
            os.write(reinterpret_cast<const char*>(p->value.data()),
                     static_cast<std::streamsize>(sizeof(S) * p->value.size()));
        }
    }

    /// Loads values into an already-constructed store; names and shapes must
    /// match the creation order exactly.
    void load(std::istream& is) {
        const std::uint64_t n = read_u64(is);
        if (n != params_.size())
            throw std::runtime_error("param blob: count mismatch");
        for (auto& p : params_) {
            const std::uint64_t len = read_u64(is);
            std::string name(len, '\0');
            is.read(name.data(), static_cast<std::streamsize>(len));
            if (name != p->name)
                throw std::runtime_error("param blob: expected " + p->name + ", got " + name);
            const auto rows = static_cast<Eigen::Index>(read_u64(is));
            const auto cols = static_cast<Eigen::Index>(read_u64(is));
            if (rows != p->value.rows() || cols != p->value.cols())
                throw std::runtime_error("param blob: shape mismatch for " + p->name);
            is.read(reinterpret_cast<char*>(p->value.data()),
                    static_cast<std::streamsize>(sizeof(S) * p->value.size()));
        }
        if (!is) throw std::runtime_error("param blob: truncated");
    }

private:
    static void write_u64(std::ostream& os, std::uint64_t v) {
        os.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    static std::uint64_t read_u64(std::istream& is) {
        std::uint64_t v = 0;
        is.read(reinterpret_cast<char*>(&v), sizeof(v));
        return v;
    }

    std::vector<std::unique_ptr<Param<S>>> params_;
};

/// Binds a persistent parameter into a tape as a leaf and wires gradient
/// accumulation back into Param::grad.
template <typename S>
Var use(Tape<S>& tape, Param<S>& p) {
    Var v = tape.leaf(p.value);
    // Gradient is pulled after backward() by the optimizer step via collect().
    return v;
}

// ---- initializers ---------------------------------------------------------

template <typename S>
void init_glorot(Param<S>& p, RngStream& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
    for (Eigen::Index r = 0; r < p.value.rows(); ++r)
        for (Eigen::Index c = 0; c < p.value.cols(); ++c)
            p.value(r, c) = static_cast<S>(rng.uniform_range(-a, a));
}

template <typename S>
void init_uniform(Param<S>& p, double a, RngStream& rng) {
    for (Eigen::Index r = 0; r < p.value.rows(); ++r)
        for (Eigen::Index c = 0; c < p.value.cols(); ++c)
            p.value(r, c) = static_cast<S>(rng.uniform_range(-a, a));
}

// ---- layers ----------------------------------------------------------------
//
// Layers are thin parameter bundles. Each forward pass re-binds parameters
// into the current tape, so the same layer object serves training and eval.

template <typename S>
struct Dense {
    Param<S>* w = nullptr;
    Param<S>* b = nullptr;

    static Dense create(ParamStore<S>& ps, const std::string& name, int in, int out) {
        Dense d;
        d.w = &ps.create(name + ".w", in, out);
        d.b = &ps.create(name + ".b", 1, out);
        return d;
    }

    void init(RngStream& rng) { init_glorot(*w, rng); }

    Var operator()(Tape<S>& t, Var x) const {
        return t.linear(x, bind(t, *w), bind(t, *b));
    }

    /// linear on an implicit concat of two inputs.
    Var forward2(Tape<S>& t, Var x1, Var x2) const {
        const int c1 = static_cast<int>(t.val(x1).cols());
        Var wv = bind(t, *w);
        Var w1 = t.slice_rows_of_param(wv, 0, c1);
        (void)w1;
        return Var{};  // not used; see Mlp2::forward2
    }

    static Var bind(Tape<S>& t, Param<S>& p) {
        Var v = t.leaf(p.value);
        t.bind_param(v, &p.grad);
        return v;
    }
};

/// Two-layer perceptron with ELU after the hidden layer (read-out heads and
/// message functions share this shape).
template <typename S>
struct Mlp2 {
    Param<S>* w1 = nullptr;
    Param<S>* b1 = nullptr;
    Param<S>* w2 = nullptr;
    Param<S>* b2 = nullptr;

    static Mlp2 create(ParamStore<S>& ps, const std::string& name, int in, int hidden,
                       int out) {
        Mlp2 m;
        m.w1 = &ps.create(name + ".w1", in, hidden);
        m.b1 = &ps.create(name + ".b1", 1, hidden);
        m.w2 = &ps.create(name + ".w2", hidden, out);
        m.b2 = &ps.create(name + ".b2", 1, out);
        return m;
    }

    void init(RngStream& rng) {
        init_glorot(*w1, rng);
        init_glorot(*w2, rng);
    }

    Var operator()(Tape<S>& t, Var x) const {
        Var h = t.elu(t.linear(x, Dense<S>::bind(t, *w1), Dense<S>::bind(t, *b1)));
        return t.linear(h, Dense<S>::bind(t, *w2), Dense<S>::bind(t, *b2));
    }

    /// Same map on the implicit concat (x1 || x2); w1 is split row-wise.
    Var forward2(Tape<S>& t, Var x1, Var x2) const {
        const int c1 = static_cast<int>(t.val(x1).cols());
        const int c2 = static_cast<int>(t.val(x2).cols());
        if (c1 + c2 != w1->value.rows())
            throw std::invalid_argument("Mlp2::forward2: input width mismatch");
        Var wv = Dense<S>::bind(t, *w1);
        Var wa = t.slice_rows(wv, 0, c1);
        Var wb = t.slice_rows(wv, c1, c2);
        Var h = t.elu(t.linear2(x1, wa, x2, wb, Dense<S>::bind(t, *b1)));
        return t.linear(h, Dense<S>::bind(t, *w2), Dense<S>::bind(t, *b2));
    }

    Var forward3(Tape<S>& t, Var x1, Var x2, Var x3) const {
        const int c1 = static_cast<int>(t.val(x1).cols());
        const int c2 = static_cast<int>(t.val(x2).cols());
        const int c3 = static_cast<int>(t.val(x3).cols());
        if (c1 + c2 + c3 != w1->value.rows())
            throw std::invalid_argument("Mlp2::forward3: input width mismatch");
        Var wv = Dense<S>::bind(t, *w1);
        Var wa = t.slice_rows(wv, 0, c1);
        Var wb = t.slice_rows(wv, c1, c2);
        Var wc = t.slice_rows(wv, c1 + c2, c3);
        Var h = t.elu(t.linear3(x1, wa, x2, wb, x3, wc, Dense<S>::bind(t, *b1)));
        return t.linear(h, Dense<S>::bind(t, *w2), Dense<S>::bind(t, *b2));
    }
};

template <typename S>
struct LstmState {
    Var h;
    Var c;
};

/// Single LSTM layer applied step by step; gate order (i, f, g, o).
template <typename S>
struct LstmCell {
    Param<S>* wx = nullptr;  // [in x 4h]
    Param<S>* wh = nullptr;  // [h x 4h]
    Param<S>* b = nullptr;   // [1 x 4h]
    int hidden = 0;

    static LstmCell create(ParamStore<S>& ps, const std::string& name, int in, int h) {
        LstmCell c;
        c.wx = &ps.create(name + ".wx", in, 4 * h);
        c.wh = &ps.create(name + ".wh", h, 4 * h);
        c.b = &ps.create(name + ".b", 1, 4 * h);
        c.hidden = h;
        return c;
    }

    void init(RngStream& rng) {
        const double a = 1.0 / std::sqrt(static_cast<double>(hidden));
        init_uniform(*wx, a, rng);
        init_uniform(*wh, a, rng);
        init_uniform(*b, a, rng);
    }

    LstmState<S> zero_state(Tape<S>& t, Eigen::Index rows) const {
        return {t.constant(Mat<S>::Zero(rows, hidden)),
                t.constant(Mat<S>::Zero(rows, hidden))};
    }

    LstmState<S> step(Tape<S>& t, Var x, const LstmState<S>& s) const {
        Var gates = t.linear2(x, Dense<S>::bind(t, *wx), s.h, Dense<S>::bind(t, *wh),
                              Dense<S>::bind(t, *b));
        Var i = t.sigmoid(t.slice_cols(gates, 0, hidden));
        Var f = t.sigmoid(t.slice_cols(gates, hidden, hidden));
        Var g = t.tanh_(t.slice_cols(gates, 2 * hidden, hidden));
        Var o = t.sigmoid(t.slice_cols(gates, 3 * hidden, hidden));
        Var c = t.add(t.cmul(f, s.c), t.cmul(i, g));
        Var h = t.cmul(o, t.tanh_(c));
        return {h, c};
    }
};

/// Single GRU layer applied step by step; gate order (r, u, n), separate
/// input/hidden biases so the reset gate acts inside the candidate term.
template <typename S>
struct GruCell {
    Param<S>* wx = nullptr;  // [in x 3h]
    Param<S>* wh = nullptr;  // [h x 3h]
    Param<S>* bx = nullptr;  // [1 x 3h]
    Param<S>* bh = nullptr;  // [1 x 3h]
    int hidden = 0;

    static GruCell create(ParamStore<S>& ps, const std::string& name, int in, int h) {
        GruCell c;
        c.wx = &ps.create(name + ".wx", in, 3 * h);
        c.wh = &ps.create(name + ".wh", h, 3 * h);
        c.bx = &ps.create(name + ".bx", 1, 3 * h);
        c.bh = &ps.create(name + ".bh", 1, 3 * h);
        c.hidden = h;
        return c;
    }

    void init(RngStream& rng) {
        const double a = 1.0 / std::sqrt(static_cast<double>(hidden));
        init_uniform(*wx, a, rng);
        init_uniform(*wh, a, rng);
        init_uniform(*bx, a, rng);
        init_uniform(*bh, a, rng);
    }

    Var zero_state(Tape<S>& t, Eigen::Index rows) const {
        return t.constant(Mat<S>::Zero(rows, hidden));
    }

    Var step(Tape<S>& t, Var x, Var h) const {
        Var gx = t.linear(x, Dense<S>::bind(t, *wx), Dense<S>::bind(t, *bx));
        Var gh = t.linear(h, Dense<S>::bind(t, *wh), Dense<S>::bind(t, *bh));
        Var r = t.sigmoid(t.add(t.slice_cols(gx, 0, hidden), t.slice_cols(gh, 0, hidden)));
        Var u = t.sigmoid(
            t.add(t.slice_cols(gx, hidden, hidden), t.slice_cols(gh, hidden, hidden)));
        Var n = t.tanh_(t.add(t.slice_cols(gx, 2 * hidden, hidden),
                              t.cmul(r, t.slice_cols(gh, 2 * hidden, hidden))));
        // h' = (1-u) .* n + u .* h
        Var one_minus_u = t.add_scalar(t.scale(u, S(-1)), S(1));
        return t.add(t.cmul(one_minus_u, n), t.cmul(u, h));
    }
};

// ---- optimizer --------------------------------------------------------------

template <typename S>
double global_grad_norm(const ParamStore<S>& ps) {
    double sq = 0;
    for (std::size_t i = 0; i < ps.size(); ++i)
        sq += static_cast<double>(ps.at(i).grad.template cast<double>().squaredNorm());
    return std::sqrt(sq);
}

template <typename S>
void clip_global_norm(ParamStore<S>& ps, double max_norm) {
    const double n = global_grad_norm(ps);
    if (n > max_norm && n > 0) {
        const S f = static_cast<S>(max_norm / n);
        for (std::size_t i = 0; i < ps.size(); ++i) ps.at(i).grad *= f;
    }
}

template <typename S>
struct Adam {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step_count = 0;

    void step(ParamStore<S>& ps) {
        ++step_count;
        const S bc1 = static_cast<S>(1.0 - std::pow(beta1, static_cast<double>(step_count)));
        const S bc2 = static_cast<S>(1.0 - std::pow(beta2, static_cast<double>(step_count)));
        for (std::size_t i = 0; i < ps.size(); ++i) {
            Param<S>& p = ps.at(i);
            p.adam_m = static_cast<S>(beta1) * p.adam_m + static_cast<S>(1.0 - beta1) * p.grad;
            p.adam_v.array() = static_cast<S>(beta2) * p.adam_v.array() +
                               static_cast<S>(1.0 - beta2) * p.grad.array().square();
            p.value.array() -= static_cast<S>(lr) * (p.adam_m.array() / bc1) /
                               ((p.adam_v.array() / bc2).sqrt() + static_cast<S>(eps));
        }
    }
};

}  // namespace dgvae::nn

#endif  // DGVAE_NN_HPP
