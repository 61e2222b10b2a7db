// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pre-norm transformer text tower with EOS readout into a unit-norm joint
// space, plus per-head zero-ablation hooks.

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "neglab/diffcore.hpp"
#include "neglab/textenc/vocab.hpp"

namespace neglab {

struct EncoderConfig {
    std::size_t num_layers = 4;
    std::size_t num_heads = 4;
    std::size_t model_width = 128;
    std::size_t context_length = 32;
    std::size_t joint_dim = 64;
    bool causal_mask = true;
    std::uint64_t init_seed = 1234;

    std::size_t head_width() const { return model_width / num_heads; }

    void validate() const {
        require(num_layers >= 1, "encoder.num_layers must be at least 1");
        require(num_heads >= 1, "encoder.num_heads must be at least 1");
        require(model_width % num_heads == 0, "encoder.model_width must be divisible by encoder.num_heads");
        require(context_length >= 3, "encoder.context_length must be at least 3");
        require(joint_dim >= 1, "encoder.joint_dim must be at least 1");
    }

    bool operator==(const EncoderConfig&) const = default;
};

/// (layer, head) pairs whose attention output is replaced by zeros.
struct HeadMask {
    std::set<std::pair<std::size_t, std::size_t>> heads;

    static HeadMask single(std::size_t layer, std::size_t head) { return HeadMask{{{layer, head}}}; }

    static HeadMask all(const EncoderConfig& cfg) {
        HeadMask m;
        for (std::size_t l = 0; l < cfg.num_layers; ++l)
            for (std::size_t h = 0; h < cfg.num_heads; ++h) m.heads.emplace(l, h);
        return m;
    }

    void validate(const EncoderConfig& cfg) const {
        for (auto [l, h] : heads)
            require(l < cfg.num_layers && h < cfg.num_heads,
                    "head mask entry (" + std::to_string(l) + "," + std::to_string(h) + ") outside " +
                        std::to_string(cfg.num_layers) + "x" + std::to_string(cfg.num_heads));
    }

    std::vector<std::uint8_t> layer_flags(std::size_t layer, std::size_t num_heads) const {
        std::vector<std::uint8_t> flags(num_heads, 0);
        bool any = false;
        for (auto [l, h] : heads) {
            if (l != layer) continue;
            flags[h] = 1;
            any = true;
        }
        return any ? flags : std::vector<std::uint8_t>{};
    }
};

inline std::string layer_prefix(std::size_t l) { return "layers." + std::to_string(l) + "."; }

/// Names and shapes of every tensor, in serialization order.
inline std::vector<std::pair<std::string, std::vector<std::size_t>>> encoder_layout(const EncoderConfig& cfg,
                                                                                      std::size_t vocab_size) {
    const std::size_t W = cfg.model_width, M = 4 * W;
    std::vector<std::pair<std::string, std::vector<std::size_t>>> out = {
        {"token_embedding", {vocab_size, W}},
        {"positional_embedding", {cfg.context_length, W}},
    };
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        const auto p = layer_prefix(l);
        out.push_back({p + "ln1.weight", {W}});
        out.push_back({p + "ln1.bias", {W}});
        for (const char* proj : {"q", "k", "v", "o"}) {
            out.push_back({p + "attn.w" + proj, {W, W}});
            out.push_back({p + "attn.b" + proj, {W}});
        }
        out.push_back({p + "ln2.weight", {W}});
        out.push_back({p + "ln2.bias", {W}});
        out.push_back({p + "mlp.fc1", {W, M}});
        out.push_back({p + "mlp.b1", {M}});
        out.push_back({p + "mlp.fc2", {M, W}});
        out.push_back({p + "mlp.b2", {W}});
    }
    out.push_back({"ln_final.weight", {W}});
    out.push_back({"ln_final.bias", {W}});
    out.push_back({"text_projection", {W, cfg.joint_dim}});
    return out;
}

/// normal(0, 0.02) for matrices, zeros for biases/offsets, ones for scales.
template <class T = float>
ParameterSet<T> init_encoder_weights(const EncoderConfig& cfg, std::size_t vocab_size) {
    cfg.validate();
    std::mt19937_64 rng(cfg.init_seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    ParameterSet<T> w;
    for (auto& [name, shape] : encoder_layout(cfg, vocab_size)) {
        Tensor<T> t(shape);
        const bool is_scale = name.ends_with("ln1.weight") || name.ends_with("ln2.weight") ||
                              name == "ln_final.weight";
        if (is_scale) {
            t.fill(T{1});
        } else if (shape.size() == 2) {
            for (auto& v : t.values()) v = static_cast<T>(normal(rng));
        }
        w.add(name, std::move(t), true);
    }
    return w;
}

/// Graph builder for one forward pass on a tape.
///
/// Sequences are packed row-wise and truncated at their EOS token; with
/// causal attention and EOS readout nothing after EOS can reach the output,
/// so padding never participates.
template <class T>
class TextEncoderGraph {
public:
    TextEncoderGraph(Tape<T>& tape, const EncoderConfig& cfg, const ParameterSet<T>& weights)
        : tape_(tape), cfg_(cfg), vars_(weights.bind(tape)) {
        cfg_.validate();
    }

    struct Packed {
        std::vector<std::size_t> token_rows;
        std::vector<std::size_t> position_rows;
        std::vector<std::size_t> segments;
    };

    Packed pack(const std::vector<TokenSequence>& seqs) const {
        require(!seqs.empty(), "encode_text: no sequences");
        const std::size_t vocab = w("token_embedding").rows();
        Packed p;
        for (const auto& s : seqs) {
            require(s.ids.size() == cfg_.context_length,
                    "encode_text: sequence length " + std::to_string(s.ids.size()) + " != context_length " +
                        std::to_string(cfg_.context_length));
            require(s.eos_position < s.ids.size() && s.ids[s.eos_position] == Vocab::kEos,
                    "encode_text: EOS position does not hold the EOS token");
            for (std::size_t t = 0; t <= s.eos_position; ++t) {
                require(s.ids[t] < vocab, "encode_text: token id outside vocabulary");
                p.token_rows.push_back(s.ids[t]);
                p.position_rows.push_back(t);
            }
            p.segments.push_back(s.eos_position + 1);
        }
        return p;
    }

    /// Token + positional embedding rows for the packed sequences.
    Var<T> embed(const Packed& p) {
        return ad::add(ad::gather_rows(var("token_embedding"), p.token_rows),
                       ad::gather_rows(var("positional_embedding"), p.position_rows));
    }

    /// Runs the transformer from packed input embeddings to (n x joint_dim)
    /// unit rows, one per segment.
    Var<T> encode_from_inputs(Var<T> x, const std::vector<std::size_t>& segments, const HeadMask* mask = nullptr) {
        if (mask) mask->validate(cfg_);
        Var<T> h = x;
        for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
            const auto p = layer_prefix(l);
            auto a = ad::layer_norm(h, var(p + "ln1.weight"), var(p + "ln1.bias"));
            auto q = ad::linear(a, var(p + "attn.wq"), var(p + "attn.bq"));
            auto k = ad::linear(a, var(p + "attn.wk"), var(p + "attn.bk"));
            auto v = ad::linear(a, var(p + "attn.wv"), var(p + "attn.bv"));
            auto flags = mask ? mask->layer_flags(l, cfg_.num_heads) : std::vector<std::uint8_t>{};
            auto att = ad::masked_attention(q, k, v, segments, cfg_.num_heads, cfg_.causal_mask, std::move(flags));
            h = ad::add(h, ad::linear(att, var(p + "attn.wo"), var(p + "attn.bo")));
            auto m = ad::layer_norm(h, var(p + "ln2.weight"), var(p + "ln2.bias"));
            auto f = ad::gelu(ad::linear(m, var(p + "mlp.fc1"), var(p + "mlp.b1")));
            h = ad::add(h, ad::linear(f, var(p + "mlp.fc2"), var(p + "mlp.b2")));
        }
        h = ad::layer_norm(h, var("ln_final.weight"), var("ln_final.bias"));
        std::vector<std::size_t> eos_rows;
        std::size_t off = 0;
        for (auto L : segments) {
            off += L;
            eos_rows.push_back(off - 1);
        }
        auto pooled = ad::gather_rows(h, eos_rows);
        return ad::l2_normalize_rows(ad::matmul(pooled, var("text_projection")));
    }

    Var<T> encode(const std::vector<TokenSequence>& seqs, const HeadMask* mask = nullptr) {
        auto p = pack(seqs);
        return encode_from_inputs(embed(p), p.segments, mask);
    }

    Var<T> var(const std::string& name) const {
        auto it = vars_.find(name);
        require(it != vars_.end(), "encoder weights missing '" + name + "'");
        return it->second;
    }

private:
    const Tensor<T>& w(const std::string& name) const { return var(name).value(); }

    Tape<T>& tape_;
    EncoderConfig cfg_;
    std::map<std::string, Var<T>> vars_;
};

/// Embeddings (n x joint_dim) for a batch of sequences, no gradients kept.
template <class T>
Tensor<T> encode_batch(const std::vector<TokenSequence>& seqs, const ParameterSet<T>& weights,
                       const EncoderConfig& cfg, const HeadMask* mask = nullptr) {
    Tape<T> tape;
    TextEncoderGraph<T> graph(tape, cfg, weights);
    return graph.encode(seqs, mask).value();
}

/// Unit-norm joint-space embedding of one token sequence.
template <class T>
std::vector<T> encode_text(const TokenSequence& ids, const ParameterSet<T>& weights, const EncoderConfig& cfg,
                           const HeadMask* mask = nullptr) {
    return encode_batch<T>({ids}, weights, cfg, mask).values();
}

} // namespace neglab
