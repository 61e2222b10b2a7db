// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Recording front-end for the tape primitives.

#pragma once

#include <string>
#include <vector>

#include "neglab/diffcore/tape.hpp"

namespace neglab::ad {

namespace detail {
template <class T>
Tape<T>& same_tape(Var<T> a, Var<T> b) {
    require(a.tape != nullptr && a.tape == b.tape, "operands live on different tapes");
    return *a.tape;
}
} // namespace detail

template <class T> Var<T> add(Var<T> a, Var<T> b) { return detail::same_tape(a, b).record(Op::Add, {a.id, b.id}); }
template <class T> Var<T> sub(Var<T> a, Var<T> b) { return detail::same_tape(a, b).record(Op::Sub, {a.id, b.id}); }
template <class T> Var<T> mul(Var<T> a, Var<T> b) { return detail::same_tape(a, b).record(Op::Mul, {a.id, b.id}); }

template <class T>
Var<T> scale(Var<T> a, double s) {
    OpAttrs at;
    at.scalar = s;
    return a.tape->record(Op::Scale, {a.id}, at);
}

template <class T>
Var<T> add_scalar(Var<T> a, double s) {
    OpAttrs at;
    at.scalar = s;
    return a.tape->record(Op::AddScalar, {a.id}, at);
}

/// x[r, :] + bias for every row r.
template <class T>
Var<T> add_row_bias(Var<T> x, Var<T> bias) {
    return detail::same_tape(x, bias).record(Op::AddRowBias, {x.id, bias.id});
}

template <class T> Var<T> matmul(Var<T> a, Var<T> b) { return detail::same_tape(a, b).record(Op::MatMul, {a.id, b.id}); }
template <class T> Var<T> transpose(Var<T> a) { return a.tape->record(Op::Transpose, {a.id}); }

/// x W + b
template <class T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
    return add_row_bias(matmul(x, w), b);
}

template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta) {
    detail::same_tape(x, gamma);
    detail::same_tape(x, beta);
    return x.tape->record(Op::LayerNorm, {x.id, gamma.id, beta.id});
}

template <class T> Var<T> gelu(Var<T> a) { return a.tape->record(Op::Gelu, {a.id}); }
template <class T> Var<T> softmax_rows(Var<T> a) { return a.tape->record(Op::SoftmaxRows, {a.id}); }
template <class T> Var<T> log_softmax_rows(Var<T> a) { return a.tape->record(Op::LogSoftmaxRows, {a.id}); }
template <class T> Var<T> log(Var<T> a) { return a.tape->record(Op::Log, {a.id}); }
template <class T> Var<T> abs(Var<T> a) { return a.tape->record(Op::Abs, {a.id}); }
template <class T> Var<T> l2_normalize_rows(Var<T> a) { return a.tape->record(Op::L2NormalizeRows, {a.id}); }
template <class T> Var<T> row_dot(Var<T> a, Var<T> b) { return detail::same_tape(a, b).record(Op::RowDot, {a.id, b.id}); }
template <class T> Var<T> sum(Var<T> a) { return a.tape->record(Op::Sum, {a.id}); }
template <class T> Var<T> mean(Var<T> a) { return a.tape->record(Op::Mean, {a.id}); }

template <class T>
Var<T> gather_rows(Var<T> table, std::vector<std::size_t> indices) {
    OpAttrs at;
    at.indices = std::move(indices);
    return table.tape->record(Op::GatherRows, {table.id}, at);
}

template <class T>
Var<T> select_per_row(Var<T> x, std::vector<std::size_t> cols) {
    OpAttrs at;
    at.indices = std::move(cols);
    return x.tape->record(Op::SelectPerRow, {x.id}, at);
}

template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
    require(!parts.empty(), "concat_rows: no inputs");
    std::vector<std::size_t> ids;
    for (auto p : parts) {
        detail::same_tape(parts.front(), p);
        ids.push_back(p.id);
    }
    return parts.front().tape->record(Op::ConcatRows, ids);
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    std::vector<std::size_t> ids;
    for (auto p : parts) {
        detail::same_tape(parts.front(), p);
        ids.push_back(p.id);
    }
    return parts.front().tape->record(Op::ConcatCols, ids);
}

/// Multi-head scaled dot-product attention over packed sequences.
///
/// q, k, v are (total_rows x width); `segments` lists each sequence's length
/// so attention never crosses a sequence boundary. A nonzero entry in
/// `head_mask` zeroes that head's slice of the concatenated output.
template <class T>
Var<T> masked_attention(Var<T> q, Var<T> k, Var<T> v, std::vector<std::size_t> segments, std::size_t heads,
                        bool causal, std::vector<std::uint8_t> head_mask = {}) {
    detail::same_tape(q, k);
    detail::same_tape(q, v);
    OpAttrs at;
    at.indices = std::move(segments);
    at.heads = heads;
    at.causal = causal;
    at.head_mask = std::move(head_mask);
    return q.tape->record(Op::MaskedAttention, {q.id, k.id, v.id}, at);
}

/// Forward-only op. Differentiating through it raises UnsupportedOpError.
template <class T>
Var<T> opaque(std::vector<Var<T>> inputs, OpaqueFn<T> fn, std::string label) {
    require(!inputs.empty(), "opaque: no inputs");
    std::vector<std::size_t> ids;
    for (auto p : inputs) {
        detail::same_tape(inputs.front(), p);
        ids.push_back(p.id);
    }
    return inputs.front().tape->record(Op::Opaque, ids, {}, std::move(fn), std::move(label));
}

} // namespace neglab::ad
