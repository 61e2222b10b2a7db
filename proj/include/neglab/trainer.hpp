// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training loops. Only text-tower weights are ever updated; image embeddings
// enter every graph as constants.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "neglab/corpus/generate.hpp"
#include "neglab/objectives.hpp"
#include "neglab/textenc/checkpoint.hpp"
#include "neglab/textenc/negation.hpp"

namespace neglab {

struct TrainConfig {
    ObjectiveConfig objective;
    double learning_rate = 1e-5;
    std::size_t epochs = 5;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;
    bool shuffle = true;
    AdamWConfig adamw;

    void validate() const {
        objective.validate();
        require(std::isfinite(learning_rate) && learning_rate >= 0.0, "train.learning_rate must be non-negative");
        require(epochs >= 1, "train.epochs must be at least 1");
        require(batch_size >= 1, "train.batch_size must be at least 1");
        require(objective.kind != ObjectiveKind::infonce || batch_size >= 2,
                "train.batch_size must be at least 2 for infonce");
    }

    nlohmann::json to_json() const {
        return {{"objective", to_string(objective.kind)},
                {"temperature", objective.temperature},
                {"include_in_batch_negatives_in_conclip", objective.include_in_batch_negatives_in_conclip},
                {"symmetric", objective.symmetric},
                {"learning_rate", learning_rate},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"seed", seed},
                {"shuffle", shuffle},
                {"adamw",
                 {{"beta1", adamw.beta1}, {"beta2", adamw.beta2}, {"eps", adamw.eps},
                  {"weight_decay", adamw.weight_decay}}}};
    }

    std::string hash() const { return bin::fnv1a_hex(to_json().dump()); }
};

using TrainingData = std::variant<std::vector<PairExample>, std::vector<QuadrupletExample>>;

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<double> loss_trace;  // per-epoch mean batch loss
};

/// Deterministic per-epoch visiting order.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch, bool shuffle) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle) {
        std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + epoch + 1);
        std::shuffle(order.begin(), order.end(), rng);
    }
    return order;
}

/// Batches of `order`; infonce drops a trailing batch smaller than 2.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t batch_size,
                                                          ObjectiveKind kind) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t s = 0; s < order.size(); s += batch_size) {
        std::vector<std::size_t> b(order.begin() + s, order.begin() + std::min(order.size(), s + batch_size));
        if (kind == ObjectiveKind::infonce && b.size() < 2) continue;
        out.push_back(std::move(b));
    }
    return out;
}

namespace detail {

/// Deduplicates texts so every distinct prompt is encoded once per batch.
class TextBatch {
public:
    std::size_t add(const std::string& text) {
        auto [it, inserted] = index_.try_emplace(text, texts_.size());
        if (inserted) texts_.push_back(text);
        return it->second;
    }
    const std::vector<std::string>& texts() const { return texts_; }

private:
    std::map<std::string, std::size_t> index_;
    std::vector<std::string> texts_;
};

inline Tensor<float> stack_embeddings(const std::vector<const ImageRecord*>& images) {
    const std::size_t D = images.front()->embedding.size();
    Tensor<float> t({images.size(), D});
    for (std::size_t i = 0; i < images.size(); ++i) {
        require(images[i]->embedding.size() == D, "training batch mixes embedding dimensions");
        std::copy(images[i]->embedding.begin(), images[i]->embedding.end(), t.row(i).begin());
    }
    return t;
}

} // namespace detail

/// Loss of one batch on a fresh tape, plus gradients for every weight.
inline ValueAndGrad<float> batch_value_and_grad(const Checkpoint& model, const TrainingData& data,
                                                const std::vector<std::size_t>& batch, const ObjectiveConfig& obj) {
    Tape<float> tape;
    TextEncoderGraph<float> graph(tape, model.config, model.weights);
    detail::TextBatch texts;
    auto encode = [&](const std::vector<std::size_t>& rows) {
        std::vector<TokenSequence> seqs;
        for (const auto& t : texts.texts()) seqs.push_back(model.tokenize(t));
        return ad::gather_rows(graph.encode(seqs), rows);
    };

    Var<float> loss;
    if (obj.kind == ObjectiveKind::infonce) {
        const auto& pairs = std::get<std::vector<PairExample>>(data);
        std::vector<const ImageRecord*> images;
        std::vector<std::size_t> rows;
        for (auto i : batch) {
            images.push_back(&pairs[i].image);
            rows.push_back(texts.add(pairs[i].text));
        }
        auto img = tape.constant(detail::stack_embeddings(images));
        loss = infonce_loss(img, encode(rows), obj.temperature, obj.symmetric);
    } else {
        const auto& quads = std::get<std::vector<QuadrupletExample>>(data);
        std::vector<const ImageRecord*> ti, di;
        std::vector<std::size_t> tp, dp;
        for (auto i : batch) {
            ti.push_back(&quads[i].true_image);
            di.push_back(&quads[i].distractor_image);
            tp.push_back(texts.add(quads[i].true_prompt.text));
            dp.push_back(texts.add(quads[i].distractor_prompt.text));
        }
        std::vector<std::size_t> rows = tp;
        rows.insert(rows.end(), dp.begin(), dp.end());
        auto prompts = encode(rows);
        std::vector<std::size_t> first(batch.size()), second(batch.size());
        std::iota(first.begin(), first.end(), std::size_t{0});
        std::iota(second.begin(), second.end(), batch.size());
        ConclipBatch<float> b{tape.constant(detail::stack_embeddings(ti)), ad::gather_rows(prompts, first),
                              tape.constant(detail::stack_embeddings(di)), ad::gather_rows(prompts, second)};
        loss = conclip_loss(b, obj.temperature, obj.include_in_batch_negatives_in_conclip).total;
    }
    auto vg = value_and_grad(tape, loss);
    if (!std::isfinite(vg.value)) throw NumericalDomainError("training loss became non-finite");
    return vg;
}

/// AdamW fine-tuning of every text-tower weight from `start`.
inline TrainResult finetune(const Checkpoint& start, const TrainingData& data, const TrainConfig& cfg) {
    cfg.validate();
    const bool pairs = std::holds_alternative<std::vector<PairExample>>(data);
    if (cfg.objective.kind == ObjectiveKind::infonce)
        require(pairs, "finetune: objective infonce consumes (image, prompt) pairs, got quadruplets");
    else
        require(!pairs, "finetune: objective conclip consumes quadruplets, got (image, prompt) pairs");
    const std::size_t n = std::visit([](const auto& v) { return v.size(); }, data);
    require(n >= (pairs ? 2u : 1u), "finetune: not enough training examples");

    TrainResult result;
    result.checkpoint = start;
    Checkpoint& model = result.checkpoint;
    AdamWState<float> state;
    state.config = cfg.adamw;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto batches = make_batches(epoch_order(n, cfg.seed, epoch, cfg.shuffle), cfg.batch_size, cfg.objective.kind);
        double total = 0;
        for (const auto& batch : batches) {
            auto vg = batch_value_and_grad(model, data, batch, cfg.objective);
            adamw_step(model.weights, vg.grads, state, cfg.learning_rate);
            total += vg.value;
        }
        result.loss_trace.push_back(batches.empty() ? 0.0 : total / static_cast<double>(batches.size()));
    }

    model.provenance = Provenance{to_string(cfg.objective.kind), cfg.learning_rate, cfg.epochs,
                                  result.loss_trace.back(), cfg.hash(), weights_hash(start)};
    return result;
}

/// Negation-blind base model: a fresh encoder trained with infonce on
/// pairs whose text never contains a negation word.
inline TrainResult pretrain_base(const Corpus& corpus, const EncoderConfig& enc, const TrainConfig& cfg) {
    require(cfg.objective.kind == ObjectiveKind::infonce, "pretrain_base: objective must be infonce");
    const bool has_positive = std::any_of(corpus.base_pairs.begin(), corpus.base_pairs.end(),
                                          [](const auto& p) { return p.image.polarity == Polarity::effusion; });
    require(has_positive, "pretrain_base: corpus has no positive-polarity (effusion) pairs");
    for (const auto& p : corpus.base_pairs)
        for (const auto& w : split_words(p.text))
            require(!is_negation_word(w), "pretrain_base: pair text '" + p.text + "' contains a negation word");
    auto start = Checkpoint::fresh(enc, build_vocab(corpus.all_texts()));
    auto result = finetune(start, TrainingData{corpus.base_pairs}, cfg);
    result.checkpoint.provenance.objective = "base";
    return result;
}

inline std::string loss_trace_csv(const std::vector<double>& trace) {
    std::string out = "epoch,mean_loss\r\n";
    char buf[64];
    for (std::size_t e = 0; e < trace.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g\r\n", e + 1, trace[e]);
        out += buf;
    }
    return out;
}

} // namespace neglab
