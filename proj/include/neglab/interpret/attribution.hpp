// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Gradient x input token attribution of the image-text similarity.

#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neglab/corpus/types.hpp"
#include "neglab/diffcore/gradcheck.hpp"
#include "neglab/textenc/checkpoint.hpp"
#include "neglab/textenc/negation.hpp"
#include "neglab/util/parallel.hpp"

namespace neglab {

struct TokenAttribution {
    std::string token;
    std::size_t position = 0;
    bool special = false;  // BOS / EOS: reported, excluded from normalization
    double raw = 0.0;
    double relative = 0.0;
};

struct AttributionReport {
    std::string prompt_id;
    double similarity = 0.0;
    std::vector<TokenAttribution> tokens;      // BOS..EOS
    std::optional<std::size_t> negation_index;  // sequence position of the first lexicon token

    std::optional<double> negation_attribution() const {
        if (!negation_index) return std::nullopt;
        return tokens.at(*negation_index).relative;
    }

    nlohmann::ordered_json to_json() const {
        auto toks = nlohmann::ordered_json::array();
        for (const auto& t : tokens)
            toks.push_back({{"position", t.position}, {"token", t.token}, {"special", t.special}, {"raw", t.raw},
                            {"relative", t.relative}});
        nlohmann::ordered_json j = {{"prompt_id", prompt_id}, {"similarity", similarity}};
        j["negation_index"] = negation_index ? nlohmann::ordered_json(*negation_index) : nlohmann::ordered_json();
        j["tokens"] = toks;
        return j;
    }
};

/// Copy of the weights as double constants (no weight gradients).
inline ParameterSet<double> frozen_double_weights(const ParameterSet<float>& w) {
    ParameterSet<double> out;
    for (const auto& [name, t] : w) out.add(name, t.cast<double>(), false);
    return out;
}

namespace detail {

inline void require_unit(std::span<const float> v, const char* who) {
    double s = 0;
    for (float x : v) s += static_cast<double>(x) * x;
    require(std::abs(std::sqrt(s) - 1.0) <= 1e-3, std::string(who) + ": image embedding is not unit-norm");
}

} // namespace detail

/// Cosine similarity between the encoded sequence and `image` as a
/// function of the packed input embedding rows (token + position).
class InputSimilarity {
public:
    InputSimilarity(const ParameterSet<double>& weights, const EncoderConfig& cfg, const TokenSequence& seq,
                    std::span<const float> image)
        : weights_(weights), cfg_(cfg), image_({1, image.size()}) {
        for (std::size_t i = 0; i < image.size(); ++i) image_[i] = image[i];
        Tape<double> tape;
        TextEncoderGraph<double> graph(tape, cfg_, weights_);
        auto p = graph.pack({seq});
        segments_ = p.segments;
        inputs_ = graph.embed(p).value();
        token_rows_ = ad::gather_rows(graph.var("token_embedding"), p.token_rows).value();
    }

    /// Packed input rows, token plus positional embedding.
    const Tensor<double>& inputs() const { return inputs_; }
    /// Token-embedding part of inputs(); ds/d(token row) equals ds/d(input row).
    const Tensor<double>& token_embeddings() const { return token_rows_; }

    /// s(x) and, when `grad` is non-null, ds/dx (same shape as inputs()).
    double operator()(const Tensor<double>& x, Tensor<double>* grad) const {
        Tape<double> tape;
        TextEncoderGraph<double> graph(tape, cfg_, weights_);
        auto xv = tape.leaf("x", x, true);
        auto emb = graph.encode_from_inputs(xv, segments_);
        auto s = ad::sum(ad::row_dot(emb, tape.constant(image_)));
        if (!grad) return s.value().item();
        auto vg = value_and_grad(tape, s);
        *grad = vg.grads.at("x");
        return vg.value;
    }

    GradFunction as_grad_function() const {
        return [this](std::span<const double> flat, std::vector<double>* g) {
            Tensor<double> x(inputs_.shape(), std::vector<double>(flat.begin(), flat.end()));
            if (!g) return (*this)(x, nullptr);
            Tensor<double> gt;
            const double v = (*this)(x, &gt);
            *g = gt.values();
            return v;
        };
    }

private:
    const ParameterSet<double>& weights_;
    EncoderConfig cfg_;
    Tensor<double> image_;
    std::vector<std::size_t> segments_;
    Tensor<double> inputs_;
    Tensor<double> token_rows_;
};

inline AttributionReport token_attribution(const ParameterSet<double>& weights, const Checkpoint& model,
                                           const std::string& prompt_id, const std::string& text,
                                           std::span<const float> image_emb) {
    detail::require_unit(image_emb, "token_attribution");
    require(image_emb.size() == model.config.joint_dim, "token_attribution: image embedding dimension mismatch");
    const auto seq = model.tokenize(text);
    InputSimilarity f(weights, model.config, seq, image_emb);
    Tensor<double> grad;
    AttributionReport r;
    r.prompt_id = prompt_id;
    r.similarity = f(f.inputs(), &grad);

    double total = 0;
    for (std::size_t t = 0; t <= seq.eos_position; ++t) {
        TokenAttribution a;
        a.position = t;
        a.token = model.vocab.token(seq.ids[t]);
        a.special = t == 0 || t == seq.eos_position;
        double dot = 0;
        for (std::size_t d = 0; d < grad.cols(); ++d) dot += grad(t, d) * f.token_embeddings()(t, d);
        a.raw = std::abs(dot);
        if (!a.special) {
            total += a.raw;
            if (!r.negation_index && is_negation_word(a.token)) r.negation_index = t;
        }
        r.tokens.push_back(std::move(a));
    }
    if (!(total > 0.0))
        throw DegenerateAttributionError("token_attribution: prompt '" + prompt_id +
                                         "' has all-zero attribution scores");
    for (auto& a : r.tokens)
        if (!a.special) a.relative = a.raw / total;
    return r;
}

inline AttributionReport token_attribution(const Checkpoint& model, const Prompt& prompt,
                                           std::span<const float> image_emb) {
    return token_attribution(frozen_double_weights(model.weights), model, prompt.id, prompt.text, image_emb);
}

struct AttributionSummary {
    std::size_t prompts = 0;             // prompts scored
    std::size_t without_negation = 0;    // prompts lacking a lexicon token (excluded from the mean)
    double mean_negation_attribution = 0.0;
    std::vector<AttributionReport> reports;

    nlohmann::ordered_json to_json(bool with_reports = false) const {
        nlohmann::ordered_json j = {{"prompts", prompts},
                                    {"without_negation", without_negation},
                                    {"mean_negation_attribution", mean_negation_attribution}};
        if (with_reports) {
            auto arr = nlohmann::ordered_json::array();
            for (const auto& r : reports) arr.push_back(r.to_json());
            j["reports"] = arr;
        }
        return j;
    }
};

/// Per-prompt relative attribution of the negation token, averaged over
/// the prompts that contain one.
inline AttributionSummary attribution_summary(const Checkpoint& model, const std::vector<Prompt>& prompts,
                                              std::span<const float> image_emb) {
    const auto weights = frozen_double_weights(model.weights);
    AttributionSummary s;
    s.reports.resize(prompts.size());
    parallel_for(prompts.size(), [&](std::size_t i) {
        s.reports[i] = token_attribution(weights, model, prompts[i].id, prompts[i].text, image_emb);
    });
    double sum = 0;
    std::size_t with = 0;
    for (const auto& r : s.reports) {
        ++s.prompts;
        if (auto a = r.negation_attribution()) {
            sum += *a;
            ++with;
        } else {
            ++s.without_negation;
        }
    }
    s.mean_negation_attribution = with ? sum / static_cast<double>(with) : 0.0;
    return s;
}

} // namespace neglab
