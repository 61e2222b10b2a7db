// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation over an explicit operation tape.
//
// Every primitive is recorded as (op kind, input ids, attributes) so the tape
// can be replayed forward after a leaf changes and differentiated in reverse.
// Ops without a gradient rule are allowed on the tape but make backward throw
// instead of silently detaching.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neglab/diffcore/tensor.hpp"
#include "neglab/errors.hpp"

namespace neglab {

enum class Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale,
    AddScalar,
    AddRowBias,
    MatMul,
    Transpose,
    LayerNorm,
    Gelu,
    SoftmaxRows,
    LogSoftmaxRows,
    Log,
    Abs,
    L2NormalizeRows,
    RowDot,
    GatherRows,
    ConcatRows,
    ConcatCols,
    SelectPerRow,
    Sum,
    Mean,
    MaskedAttention,
    Opaque,
};

inline const char* op_name(Op op) {
    switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::AddRowBias: return "add_row_bias";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::LayerNorm: return "layer_norm";
    case Op::Gelu: return "gelu";
    case Op::SoftmaxRows: return "softmax_rows";
    case Op::LogSoftmaxRows: return "log_softmax_rows";
    case Op::Log: return "log";
    case Op::Abs: return "abs";
    case Op::L2NormalizeRows: return "l2_normalize_rows";
    case Op::RowDot: return "row_dot";
    case Op::GatherRows: return "gather_rows";
    case Op::ConcatRows: return "concat_rows";
    case Op::ConcatCols: return "concat_cols";
    case Op::SelectPerRow: return "select_per_row";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::MaskedAttention: return "masked_attention";
    case Op::Opaque: return "opaque";
    }
    return "?";
}

struct OpAttrs {
    double scalar = 0.0;
    std::vector<std::size_t> indices;
    std::size_t heads = 0;
    bool causal = true;
    std::vector<std::uint8_t> head_mask;
};

template <class T>
using OpaqueFn = std::function<Tensor<T>(const std::vector<const Tensor<T>*>&)>;

template <class T>
struct Node {
    Op op = Op::Leaf;
    std::vector<std::size_t> inputs;
    Tensor<T> value;
    OpAttrs attrs;
    std::string name;
    bool requires_grad = false;
    std::vector<T> cache;
    OpaqueFn<T> opaque;
};

template <class T>
class Tape;

/// Handle to a node on a tape.
template <class T>
struct Var {
    Tape<T>* tape = nullptr;
    std::size_t id = 0;

    const Tensor<T>& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
};

namespace detail {

// C[m,n] (+)= A[m,k] * B[k,n]
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, T{0});
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        const T* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T{0}) continue;
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[k,n] += A[m,k]^T * B[m,n]
template <class T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        const T* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T{0}) continue;
            T* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <class T>
std::vector<T> transposed(const T* a, std::size_t m, std::size_t n) {
    std::vector<T> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
    return out;
}

template <class T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(0.70710678118654752440)));
}

template <class T>
T gelu_grad(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.70710678118654752440)));
    const T pdf = std::exp(T(-0.5) * x * x) * T(0.39894228040143267794);
    return cdf + x * pdf;
}

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kNormFloor = 1e-12;

} // namespace detail

template <class T>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    /// Named leaf; gradients are reported for it when requires_grad is set.
    Var<T> leaf(std::string name, Tensor<T> value, bool requires_grad) {
        Node<T> n;
        n.op = Op::Leaf;
        n.value = std::move(value);
        n.value.set_requires_grad(requires_grad);
        n.requires_grad = requires_grad;
        n.name = std::move(name);
        if (!n.name.empty()) {
            require(!leaf_index_.count(n.name), "duplicate leaf name '" + n.name + "'");
            leaf_index_[n.name] = nodes_.size();
        }
        nodes_.push_back(std::move(n));
        return {this, nodes_.size() - 1};
    }

    Var<T> constant(Tensor<T> value) { return leaf("", std::move(value), false); }

    Var<T> record(Op op, std::vector<std::size_t> inputs, OpAttrs attrs = {}, OpaqueFn<T> fn = {},
                  std::string label = {}) {
        Node<T> n;
        n.op = op;
        n.name = std::move(label);
        n.inputs = std::move(inputs);
        n.attrs = std::move(attrs);
        n.opaque = std::move(fn);
        for (auto i : n.inputs) {
            require(i < nodes_.size(), "op input refers to a node not on this tape");
            n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
        }
        nodes_.push_back(std::move(n));
        try {
            evaluate(nodes_.size() - 1);
        } catch (...) {
            nodes_.pop_back();
            throw;
        }
        return {this, nodes_.size() - 1};
    }

    const Node<T>& node(std::size_t id) const { return nodes_.at(id); }
    std::size_t size() const noexcept { return nodes_.size(); }

    std::optional<std::size_t> find_leaf(const std::string& name) const {
        auto it = leaf_index_.find(name);
        if (it == leaf_index_.end()) return std::nullopt;
        return it->second;
    }

    Var<T> var(std::size_t id) { return {this, id}; }

    /// Overwrite a leaf's payload (same shape) ahead of replay().
    void set_leaf(std::size_t id, const Tensor<T>& value) {
        auto& n = nodes_.at(id);
        require(n.op == Op::Leaf, "set_leaf on non-leaf node");
        require(n.value.same_shape(value), "set_leaf shape mismatch");
        n.value.values() = value.values();
    }

    Tensor<T>& leaf_value(std::size_t id) {
        auto& n = nodes_.at(id);
        require(n.op == Op::Leaf, "leaf_value on non-leaf node");
        return n.value;
    }

    /// Recompute every non-leaf node in recording order.
    void replay() {
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (nodes_[i].op != Op::Leaf) evaluate(i);
    }

    /// Reverse sweep from a scalar output. Returns one gradient slot per node;
    /// slots stay empty for nodes the output does not depend on.
    std::vector<std::optional<Tensor<T>>> backward(std::size_t output) {
        require(output < nodes_.size(), "backward output not on tape");
        require(nodes_[output].value.is_scalar(),
                "value_and_grad requires a scalar output, got shape " +
                    shape_string(nodes_[output].value.shape()));
        std::vector<std::optional<Tensor<T>>> grads(nodes_.size());
        grads[output] = Tensor<T>(nodes_[output].value.shape(), T{1});
        for (std::size_t id = output + 1; id-- > 0;) {
            if (!grads[id] || !nodes_[id].requires_grad || nodes_[id].op == Op::Leaf) continue;
            propagate(id, *grads[id], grads);
        }
        return grads;
    }

private:
    Tensor<T>& grad_slot(std::vector<std::optional<Tensor<T>>>& grads, std::size_t id) {
        if (!grads[id]) grads[id] = Tensor<T>(nodes_[id].value.shape(), T{0});
        return *grads[id];
    }

    const Tensor<T>& in(const Node<T>& n, std::size_t k) const { return nodes_[n.inputs[k]].value; }

    void evaluate(std::size_t id);
    void propagate(std::size_t id, const Tensor<T>& g, std::vector<std::optional<Tensor<T>>>& grads);

    std::vector<Node<T>> nodes_;
    std::map<std::string, std::size_t> leaf_index_;
};

template <class T>
const Tensor<T>& Var<T>::value() const {
    return tape->node(id).value;
}

template <class T>
void Tape<T>::evaluate(std::size_t id) {
    Node<T>& n = nodes_[id];
    auto& attrs = n.attrs;
    switch (n.op) {
    case Op::Leaf: return;

    case Op::Add:
    case Op::Sub:
    case Op::Mul: {
        const auto& a = in(n, 0);
        const auto& b = in(n, 1);
        require(a.same_shape(b), std::string(op_name(n.op)) + ": shape mismatch " +
                                     shape_string(a.shape()) + " vs " + shape_string(b.shape()));
        Tensor<T> out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) {
            out[i] = n.op == Op::Add ? a[i] + b[i] : n.op == Op::Sub ? a[i] - b[i] : a[i] * b[i];
        }
        n.value = std::move(out);
        return;
    }
    case Op::Scale:
    case Op::AddScalar: {
        const auto& a = in(n, 0);
        const T s = static_cast<T>(attrs.scalar);
        Tensor<T> out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = n.op == Op::Scale ? a[i] * s : a[i] + s;
        n.value = std::move(out);
        return;
    }
    case Op::AddRowBias: {
        const auto& x = in(n, 0);
        const auto& b = in(n, 1);
        require(b.size() == x.cols(), "add_row_bias: bias length must equal column count");
        Tensor<T> out(x.shape());
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(r, c) + b[c];
        n.value = std::move(out);
        return;
    }
    case Op::MatMul: {
        const auto& a = in(n, 0);
        const auto& b = in(n, 1);
        require(a.cols() == b.rows(), "matmul: inner dimensions differ " + shape_string(a.shape()) +
                                          " x " + shape_string(b.shape()));
        Tensor<T> out({a.rows(), b.cols()});
        detail::gemm_nn(a.data(), b.data(), out.data(), a.rows(), a.cols(), b.cols(), false);
        n.value = std::move(out);
        return;
    }
    case Op::Transpose: {
        const auto& a = in(n, 0);
        n.value = Tensor<T>({a.cols(), a.rows()}, detail::transposed(a.data(), a.rows(), a.cols()));
        return;
    }
    case Op::LayerNorm: {
        const auto& x = in(n, 0);
        const auto& gamma = in(n, 1);
        const auto& beta = in(n, 2);
        const std::size_t R = x.rows(), C = x.cols();
        require(gamma.size() == C && beta.size() == C, "layer_norm: scale/offset length mismatch");
        Tensor<T> out(x.shape());
        n.cache.assign(2 * R, T{0});
        for (std::size_t r = 0; r < R; ++r) {
            auto xr = x.row(r);
            T mean = 0;
            for (auto v : xr) mean += v;
            mean /= static_cast<T>(C);
            T var = 0;
            for (auto v : xr) var += (v - mean) * (v - mean);
            var /= static_cast<T>(C);
            const T rstd = T(1) / std::sqrt(var + static_cast<T>(detail::kLayerNormEps));
            n.cache[2 * r] = mean;
            n.cache[2 * r + 1] = rstd;
            for (std::size_t c = 0; c < C; ++c) out(r, c) = (xr[c] - mean) * rstd * gamma[c] + beta[c];
        }
        n.value = std::move(out);
        return;
    }
    case Op::Gelu: {
        const auto& a = in(n, 0);
        Tensor<T> out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = detail::gelu(a[i]);
        n.value = std::move(out);
        return;
    }
    case Op::SoftmaxRows:
    case Op::LogSoftmaxRows: {
        const auto& x = in(n, 0);
        Tensor<T> out(x.shape());
        for (std::size_t r = 0; r < x.rows(); ++r) {
            auto xr = x.row(r);
            auto orow = out.row(r);
            std::size_t arg = 0;
            for (std::size_t c = 1; c < xr.size(); ++c)
                if (xr[c] > xr[arg]) arg = c;
            const T mx = xr[arg];
            // log-sum-exp as max + log1p(sum of the non-max terms) keeps
            // near-certain rows accurate far below 1 ulp of 1.
            T rest = 0;
            for (std::size_t c = 0; c < xr.size(); ++c)
                if (c != arg) rest += std::exp(xr[c] - mx);
            const T lse = mx + std::log1p(rest);
            for (std::size_t c = 0; c < xr.size(); ++c) {
                const T lp = xr[c] - lse;
                orow[c] = n.op == Op::SoftmaxRows ? std::exp(lp) : lp;
            }
        }
        n.value = std::move(out);
        return;
    }
    case Op::Log: {
        const auto& a = in(n, 0);
        Tensor<T> out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i)
            out[i] = a[i] > T{0} ? std::log(a[i]) : (a[i] == T{0} ? -std::numeric_limits<T>::infinity()
                                                                   : std::numeric_limits<T>::quiet_NaN());
        n.value = std::move(out);
        return;
    }
    case Op::Abs: {
        const auto& a = in(n, 0);
        Tensor<T> out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::abs(a[i]);
        n.value = std::move(out);
        return;
    }
    case Op::L2NormalizeRows: {
        const auto& x = in(n, 0);
        Tensor<T> out(x.shape());
        n.cache.assign(x.rows(), T{0});
        for (std::size_t r = 0; r < x.rows(); ++r) {
            T ss = 0;
            for (auto v : x.row(r)) ss += v * v;
            const T norm = std::max(std::sqrt(ss), static_cast<T>(detail::kNormFloor));
            n.cache[r] = norm;
            auto orow = out.row(r);
            auto xr = x.row(r);
            for (std::size_t c = 0; c < xr.size(); ++c) orow[c] = xr[c] / norm;
        }
        n.value = std::move(out);
        return;
    }
    case Op::RowDot: {
        const auto& a = in(n, 0);
        const auto& b = in(n, 1);
        require(a.same_shape(b), "row_dot: shape mismatch");
        Tensor<T> out({a.rows(), 1});
        for (std::size_t r = 0; r < a.rows(); ++r) {
            T s = 0;
            auto ar = a.row(r);
            auto br = b.row(r);
            for (std::size_t c = 0; c < ar.size(); ++c) s += ar[c] * br[c];
            out[r] = s;
        }
        n.value = std::move(out);
        return;
    }
    case Op::GatherRows: {
        const auto& table = in(n, 0);
        require(!attrs.indices.empty(), "gather_rows: empty index list");
        Tensor<T> out({attrs.indices.size(), table.cols()});
        for (std::size_t r = 0; r < attrs.indices.size(); ++r) {
            require(attrs.indices[r] < table.rows(), "gather_rows: index out of range");
            auto src = table.row(attrs.indices[r]);
            std::copy(src.begin(), src.end(), out.row(r).begin());
        }
        n.value = std::move(out);
        return;
    }
    case Op::ConcatRows: {
        std::size_t rows = 0;
        const std::size_t C = in(n, 0).cols();
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            require(in(n, k).cols() == C, "concat_rows: column counts differ");
            rows += in(n, k).rows();
        }
        Tensor<T> out({rows, C});
        std::size_t off = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            const auto& t = in(n, k);
            std::copy(t.values().begin(), t.values().end(), out.values().begin() + off);
            off += t.size();
        }
        n.value = std::move(out);
        return;
    }
    case Op::ConcatCols: {
        std::size_t cols = 0;
        const std::size_t R = in(n, 0).rows();
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            require(in(n, k).rows() == R, "concat_cols: row counts differ");
            cols += in(n, k).cols();
        }
        Tensor<T> out({R, cols});
        std::size_t off = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            const auto& t = in(n, k);
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < t.cols(); ++c) out(r, off + c) = t(r, c);
            off += t.cols();
        }
        n.value = std::move(out);
        return;
    }
    case Op::SelectPerRow: {
        const auto& x = in(n, 0);
        require(attrs.indices.size() == x.rows(), "select_per_row: need one column index per row");
        Tensor<T> out({x.rows(), 1});
        for (std::size_t r = 0; r < x.rows(); ++r) {
            require(attrs.indices[r] < x.cols(), "select_per_row: column index out of range");
            out[r] = x(r, attrs.indices[r]);
        }
        n.value = std::move(out);
        return;
    }
    case Op::Sum:
    case Op::Mean: {
        const auto& a = in(n, 0);
        T s = 0;
        for (auto v : a.values()) s += v;
        if (n.op == Op::Mean) s /= static_cast<T>(a.size());
        n.value = Tensor<T>::scalar(s);
        return;
    }
    case Op::MaskedAttention: {
        const auto& q = in(n, 0);
        const auto& k = in(n, 1);
        const auto& v = in(n, 2);
        const std::size_t W = q.cols(), H = attrs.heads;
        require(H > 0 && W % H == 0, "masked_attention: width must divide into heads");
        require(k.same_shape(q) && v.same_shape(q), "masked_attention: q/k/v shapes differ");
        require(attrs.head_mask.empty() || attrs.head_mask.size() == H, "masked_attention: head mask size");
        std::size_t total = 0, cache_len = 0;
        for (auto L : attrs.indices) {
            total += L;
            cache_len += H * L * L;
        }
        require(total == q.rows(), "masked_attention: segment lengths must sum to row count");
        const std::size_t dh = W / H;
        const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
        Tensor<T> out(q.shape());
        n.cache.assign(cache_len, T{0});
        std::size_t off = 0, coff = 0;
        std::vector<T> scores;
        for (auto L : attrs.indices) {
            for (std::size_t h = 0; h < H; ++h, coff += L * L) {
                if (!attrs.head_mask.empty() && attrs.head_mask[h]) continue;
                const std::size_t c0 = h * dh;
                for (std::size_t i = 0; i < L; ++i) {
                    const std::size_t jmax = attrs.causal ? i + 1 : L;
                    scores.assign(jmax, T{0});
                    const T* qi = q.data() + (off + i) * W + c0;
                    T mx = -std::numeric_limits<T>::infinity();
                    for (std::size_t j = 0; j < jmax; ++j) {
                        const T* kj = k.data() + (off + j) * W + c0;
                        T s = 0;
                        for (std::size_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
                        scores[j] = s * inv_sqrt;
                        mx = std::max(mx, scores[j]);
                    }
                    T denom = 0;
                    for (std::size_t j = 0; j < jmax; ++j) {
                        scores[j] = std::exp(scores[j] - mx);
                        denom += scores[j];
                    }
                    T* oi = out.data() + (off + i) * W + c0;
                    T* pi = n.cache.data() + coff + i * L;
                    for (std::size_t j = 0; j < jmax; ++j) {
                        const T p = scores[j] / denom;
                        pi[j] = p;
                        const T* vj = v.data() + (off + j) * W + c0;
                        for (std::size_t d = 0; d < dh; ++d) oi[d] += p * vj[d];
                    }
                }
            }
            off += L;
        }
        n.value = std::move(out);
        return;
    }
    case Op::Opaque: {
        std::vector<const Tensor<T>*> args;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) args.push_back(&in(n, k));
        n.value = n.opaque(args);
        return;
    }
    }
    throw UnsupportedOpError("forward: unknown op");
}

template <class T>
void Tape<T>::propagate(std::size_t id, const Tensor<T>& g, std::vector<std::optional<Tensor<T>>>& grads) {
    const Node<T>& n = nodes_[id];
    auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].requires_grad; };
    auto slot = [&](std::size_t k) -> Tensor<T>& { return grad_slot(grads, n.inputs[k]); };

    switch (n.op) {
    case Op::Leaf: return;
    case Op::Add:
    case Op::Sub: {
        if (wants(0)) {
            auto& ga = slot(0);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (wants(1)) {
            auto& gb = slot(1);
            const T sign = n.op == Op::Add ? T(1) : T(-1);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign * g[i];
        }
        return;
    }
    case Op::Mul: {
        const auto& a = in(n, 0);
        const auto& b = in(n, 1);
        if (wants(0)) {
            auto& ga = slot(0);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
        }
        if (wants(1)) {
            auto& gb = slot(1);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
        }
        return;
    }
    case Op::Scale: {
        auto& ga = slot(0);
        const T s = static_cast<T>(n.attrs.scalar);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
        return;
    }
    case Op::AddScalar: {
        auto& ga = slot(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        return;
    }
    case Op::AddRowBias: {
        if (wants(0)) {
            auto& gx = slot(0);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (wants(1)) {
            auto& gb = slot(1);
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
        }
        return;
    }
    case Op::MatMul: {
        const auto& a = in(n, 0);
        const auto& b = in(n, 1);
        const std::size_t M = a.rows(), K = a.cols(), N = b.cols();
        if (wants(0)) {
            // dA = dC * B^T
            auto bt = detail::transposed(b.data(), K, N);
            detail::gemm_nn(g.data(), bt.data(), slot(0).data(), M, N, K, true);
        }
        if (wants(1)) {
            // dB = A^T * dC
            detail::gemm_tn_acc(a.data(), g.data(), slot(1).data(), M, K, N);
        }
        return;
    }
    case Op::Transpose: {
        auto& ga = slot(0);
        auto gt = detail::transposed(g.data(), g.rows(), g.cols());
        for (std::size_t i = 0; i < gt.size(); ++i) ga[i] += gt[i];
        return;
    }
    case Op::LayerNorm: {
        const auto& x = in(n, 0);
        const auto& gamma = in(n, 1);
        const std::size_t R = x.rows(), C = x.cols();
        Tensor<T>* gx = wants(0) ? &slot(0) : nullptr;
        Tensor<T>* gg = wants(1) ? &slot(1) : nullptr;
        Tensor<T>* gb = wants(2) ? &slot(2) : nullptr;
        std::vector<T> xhat(C), dxhat(C);
        for (std::size_t r = 0; r < R; ++r) {
            const T mean = n.cache[2 * r], rstd = n.cache[2 * r + 1];
            T sum_d = 0, sum_dx = 0;
            for (std::size_t c = 0; c < C; ++c) {
                xhat[c] = (x(r, c) - mean) * rstd;
                dxhat[c] = g(r, c) * gamma[c];
                sum_d += dxhat[c];
                sum_dx += dxhat[c] * xhat[c];
                if (gg) (*gg)[c] += g(r, c) * xhat[c];
                if (gb) (*gb)[c] += g(r, c);
            }
            if (gx) {
                const T invC = T(1) / static_cast<T>(C);
                for (std::size_t c = 0; c < C; ++c)
                    (*gx)(r, c) += rstd * (dxhat[c] - invC * sum_d - xhat[c] * invC * sum_dx);
            }
        }
        return;
    }
    case Op::Gelu: {
        const auto& a = in(n, 0);
        auto& ga = slot(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * detail::gelu_grad(a[i]);
        return;
    }
    case Op::SoftmaxRows: {
        const auto& y = n.value;
        auto& ga = slot(0);
        for (std::size_t r = 0; r < y.rows(); ++r) {
            T dot = 0;
            for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
            for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - dot);
        }
        return;
    }
    case Op::LogSoftmaxRows: {
        const auto& y = n.value;
        auto& ga = slot(0);
        for (std::size_t r = 0; r < y.rows(); ++r) {
            T gsum = 0;
            for (std::size_t c = 0; c < y.cols(); ++c) gsum += g(r, c);
            for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += g(r, c) - std::exp(y(r, c)) * gsum;
        }
        return;
    }
    case Op::Log: {
        const auto& a = in(n, 0);
        auto& ga = slot(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / a[i];
        return;
    }
    case Op::Abs: {
        // Subgradient +1 at the origin.
        const auto& a = in(n, 0);
        auto& ga = slot(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += a[i] >= T{0} ? g[i] : -g[i];
        return;
    }
    case Op::L2NormalizeRows: {
        const auto& y = n.value;
        auto& ga = slot(0);
        for (std::size_t r = 0; r < y.rows(); ++r) {
            T dot = 0;
            for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
            const T inv = T(1) / n.cache[r];
            for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += (g(r, c) - y(r, c) * dot) * inv;
        }
        return;
    }
    case Op::RowDot: {
        const auto& a = in(n, 0);
        const auto& b = in(n, 1);
        Tensor<T>* ga = wants(0) ? &slot(0) : nullptr;
        Tensor<T>* gb = wants(1) ? &slot(1) : nullptr;
        for (std::size_t r = 0; r < a.rows(); ++r)
            for (std::size_t c = 0; c < a.cols(); ++c) {
                if (ga) (*ga)(r, c) += g[r] * b(r, c);
                if (gb) (*gb)(r, c) += g[r] * a(r, c);
            }
        return;
    }
    case Op::GatherRows: {
        auto& gt = slot(0);
        for (std::size_t r = 0; r < n.attrs.indices.size(); ++r) {
            auto dst = gt.row(n.attrs.indices[r]);
            auto src = g.row(r);
            for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
        }
        return;
    }
    case Op::ConcatRows: {
        std::size_t off = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            const std::size_t len = in(n, k).size();
            if (wants(k)) {
                auto& gk = slot(k);
                for (std::size_t i = 0; i < len; ++i) gk[i] += g[off + i];
            }
            off += len;
        }
        return;
    }
    case Op::ConcatCols: {
        std::size_t off = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            const auto& t = in(n, k);
            if (wants(k)) {
                auto& gk = slot(k);
                for (std::size_t r = 0; r < t.rows(); ++r)
                    for (std::size_t c = 0; c < t.cols(); ++c) gk(r, c) += g(r, off + c);
            }
            off += t.cols();
        }
        return;
    }
    case Op::SelectPerRow: {
        auto& gx = slot(0);
        for (std::size_t r = 0; r < g.size(); ++r) gx(r, n.attrs.indices[r]) += g[r];
        return;
    }
    case Op::Sum:
    case Op::Mean: {
        auto& ga = slot(0);
        T s = g[0];
        if (n.op == Op::Mean) s /= static_cast<T>(ga.size());
        for (auto& v : ga.values()) v += s;
        return;
    }
    case Op::MaskedAttention: {
        const auto& q = in(n, 0);
        const auto& k = in(n, 1);
        const auto& v = in(n, 2);
        const std::size_t W = q.cols(), H = n.attrs.heads, dh = W / H;
        const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
        Tensor<T>* gq = wants(0) ? &slot(0) : nullptr;
        Tensor<T>* gk = wants(1) ? &slot(1) : nullptr;
        Tensor<T>* gv = wants(2) ? &slot(2) : nullptr;
        std::size_t off = 0, coff = 0;
        std::vector<T> dp;
        for (auto L : n.attrs.indices) {
            for (std::size_t h = 0; h < H; ++h, coff += L * L) {
                if (!n.attrs.head_mask.empty() && n.attrs.head_mask[h]) continue;
                const std::size_t c0 = h * dh;
                for (std::size_t i = 0; i < L; ++i) {
                    const std::size_t jmax = n.attrs.causal ? i + 1 : L;
                    const T* pi = n.cache.data() + coff + i * L;
                    const T* gi = g.data() + (off + i) * W + c0;
                    dp.assign(jmax, T{0});
                    T pdot = 0;
                    for (std::size_t j = 0; j < jmax; ++j) {
                        const T* vj = v.data() + (off + j) * W + c0;
                        T s = 0;
                        for (std::size_t d = 0; d < dh; ++d) s += gi[d] * vj[d];
                        dp[j] = s;
                        pdot += pi[j] * s;
                        if (gv) {
                            T* gvj = gv->data() + (off + j) * W + c0;
                            for (std::size_t d = 0; d < dh; ++d) gvj[d] += pi[j] * gi[d];
                        }
                    }
                    const T* qi = q.data() + (off + i) * W + c0;
                    for (std::size_t j = 0; j < jmax; ++j) {
                        const T ds = pi[j] * (dp[j] - pdot) * inv_sqrt;
                        if (ds == T{0}) continue;
                        const T* kj = k.data() + (off + j) * W + c0;
                        if (gq) {
                            T* gqi = gq->data() + (off + i) * W + c0;
                            for (std::size_t d = 0; d < dh; ++d) gqi[d] += ds * kj[d];
                        }
                        if (gk) {
                            T* gkj = gk->data() + (off + j) * W + c0;
                            for (std::size_t d = 0; d < dh; ++d) gkj[d] += ds * qi[d];
                        }
                    }
                }
            }
            off += L;
        }
        return;
    }
    case Op::Opaque:
        throw UnsupportedOpError(std::string("no gradient rule for op '") +
                                 (n.name.empty() ? op_name(n.op) : n.name) + "'");
    }
    throw UnsupportedOpError(std::string("no gradient rule for op '") + op_name(n.op) + "'");
}

/// Scalar output value plus d(output)/d(leaf) for every named leaf flagged
/// requires_grad. Leaves the output does not depend on get a zero gradient;
/// unflagged leaves are absent.
template <class T>
struct ValueAndGrad {
    T value{};
    std::map<std::string, Tensor<T>> grads;
};

template <class T>
ValueAndGrad<T> value_and_grad(Tape<T>& tape, Var<T> output) {
    require(output.tape == &tape, "value_and_grad: output belongs to another tape");
    auto slots = tape.backward(output.id);
    ValueAndGrad<T> result;
    result.value = output.value().item();
    for (std::size_t id = 0; id < tape.size(); ++id) {
        const auto& n = tape.node(id);
        if (n.op != Op::Leaf || !n.requires_grad || n.name.empty()) continue;
        result.grads.emplace(n.name, slots[id] ? std::move(*slots[id]) : Tensor<T>(n.value.shape(), T{0}));
    }
    return result;
}

} // namespace neglab
