// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Top-k image retrieval from text prompts and the per-category accuracy table.

#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neglab/corpus/types.hpp"
#include "neglab/textenc/checkpoint.hpp"
#include "neglab/util/csv.hpp"
#include "neglab/util/parallel.hpp"

namespace neglab {

/// How the top-k polarities of one prompt turn into a hit.
enum class HitCriterion { majority, all, any };

inline const char* to_string(HitCriterion c) {
    switch (c) {
    case HitCriterion::majority: return "majority";
    case HitCriterion::all: return "all";
    case HitCriterion::any: return "any";
    }
    return "?";
}

inline HitCriterion hit_criterion_from_string(const std::string& s) {
    for (auto c : {HitCriterion::majority, HitCriterion::all, HitCriterion::any})
        if (s == to_string(c)) return c;
    throw ContractViolation("unknown hit criterion '" + s + "' (expected majority, all or any)");
}

/// Number of matching images among the top k that counts as a hit.
inline std::size_t hits_required(std::size_t k, HitCriterion c) {
    switch (c) {
    case HitCriterion::majority: return (k + 2) / 2;  // ceil((k+1)/2)
    case HitCriterion::all: return k;
    case HitCriterion::any: return 1;
    }
    return k;
}

struct RetrievalResult {
    std::string prompt_id;
    std::vector<std::size_t> order;  // indices into the image list
    std::vector<std::string> image_ids;
    std::vector<double> scores;
};

/// Full ranking by descending dot product; equal scores fall back to
/// ascending image id.
inline RetrievalResult rank_images(std::span<const float> prompt_emb, const std::vector<ImageRecord>& images,
                                   std::string prompt_id = {}) {
    require(!images.empty(), "rank_images: empty image list");
    std::vector<double> score(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& e = images[i].embedding;
        require(e.size() == prompt_emb.size(), "rank_images: image '" + images[i].id + "' has dimension " +
                                                   std::to_string(e.size()) + ", prompt has " +
                                                   std::to_string(prompt_emb.size()));
        double d = 0;
        for (std::size_t k = 0; k < e.size(); ++k) d += static_cast<double>(e[k]) * prompt_emb[k];
        score[i] = d;
    }
    RetrievalResult r;
    r.prompt_id = std::move(prompt_id);
    r.order.resize(images.size());
    std::iota(r.order.begin(), r.order.end(), std::size_t{0});
    std::sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) {
        if (score[a] != score[b]) return score[a] > score[b];
        return images[a].id < images[b].id;
    });
    for (auto i : r.order) {
        r.image_ids.push_back(images[i].id);
        r.scores.push_back(score[i]);
    }
    return r;
}

inline bool is_hit(const RetrievalResult& r, const std::vector<ImageRecord>& images, Polarity want, std::size_t k,
                   HitCriterion c) {
    std::size_t match = 0;
    for (std::size_t i = 0; i < k; ++i) match += images[r.order[i]].polarity == want;
    return match >= hits_required(k, c);
}

struct CategoryStats {
    std::size_t prompts = 0;
    std::size_t hits = 0;
    double accuracy() const { return prompts ? static_cast<double>(hits) / static_cast<double>(prompts) : 0.0; }
};

struct AccuracyTable {
    std::size_t k = 10;
    HitCriterion criterion = HitCriterion::majority;
    std::map<Category, CategoryStats> categories;

    double accuracy(Category c) const {
        auto it = categories.find(c);
        return it == categories.end() ? 0.0 : it->second.accuracy();
    }

    /// Pooled accuracy over prompts of one polarity.
    double accuracy(Polarity p) const {
        std::size_t n = 0, h = 0;
        for (const auto& [c, s] : categories)
            if (polarity_of(c) == p) {
                n += s.prompts;
                h += s.hits;
            }
        return n ? static_cast<double>(h) / static_cast<double>(n) : 0.0;
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json cats = nlohmann::ordered_json::object();
        for (auto c : kAllCategories) {
            auto it = categories.find(c);
            const CategoryStats s = it == categories.end() ? CategoryStats{} : it->second;
            cats[to_string(c)] = {{"prompts", s.prompts}, {"hits", s.hits}, {"accuracy", s.accuracy()}};
        }
        return {{"k", k}, {"criterion", to_string(criterion)}, {"categories", cats}};
    }
};

struct Evaluation {
    AccuracyTable table;
    std::vector<RetrievalResult> rankings;  // one per prompt, input order
};

/// Scores prompts given their joint-space embeddings (one row per prompt).
inline Evaluation evaluate_embeddings(const Tensor<float>& prompt_embs, const std::vector<Prompt>& prompts,
                                      const std::vector<ImageRecord>& images, std::size_t k,
                                      HitCriterion criterion = HitCriterion::majority) {
    require(k >= 1, "topk_accuracy: k must be at least 1");
    require(k <= images.size(), "topk_accuracy: k = " + std::to_string(k) + " exceeds the " +
                                    std::to_string(images.size()) + " test images");
    require(prompt_embs.rows() == prompts.size(), "topk_accuracy: one embedding row per prompt required");
    Evaluation ev;
    ev.table.k = k;
    ev.table.criterion = criterion;
    ev.rankings.resize(prompts.size());
    parallel_for(prompts.size(), [&](std::size_t i) { ev.rankings[i] = rank_images(prompt_embs.row(i), images, prompts[i].id); });
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        auto& s = ev.table.categories[prompts[i].category];
        ++s.prompts;
        s.hits += is_hit(ev.rankings[i], images, prompts[i].polarity, k, criterion);
    }
    return ev;
}

/// Joint-space embeddings of prompt texts under a checkpoint, one row each.
inline Tensor<float> embed_prompts(const Checkpoint& model, const std::vector<Prompt>& prompts,
                                   const HeadMask* mask = nullptr) {
    require(!prompts.empty(), "embed_prompts: no prompts");
    Tensor<float> out({prompts.size(), model.config.joint_dim});
    parallel_for(prompts.size(), [&](std::size_t i) {
        auto e = encode_text<float>(model.tokenize(prompts[i].text), model.weights, model.config, mask);
        std::copy(e.begin(), e.end(), out.row(i).begin());
    });
    return out;
}

inline Evaluation evaluate_checkpoint(const Checkpoint& model, const std::vector<ImageRecord>& images,
                                      const std::vector<Prompt>& prompts, std::size_t k = 10,
                                      HitCriterion criterion = HitCriterion::majority) {
    require(k >= 1, "topk_accuracy: k must be at least 1");
    return evaluate_embeddings(embed_prompts(model, prompts), prompts, images, k, criterion);
}

inline AccuracyTable topk_accuracy(const Checkpoint& model, const std::vector<ImageRecord>& images,
                                   const std::vector<Prompt>& prompts, std::size_t k = 10,
                                   HitCriterion criterion = HitCriterion::majority) {
    return evaluate_checkpoint(model, images, prompts, k, criterion).table;
}

/// prompt_id,rank,image_id,score for the top k of every prompt.
inline std::string rankings_csv(const std::vector<RetrievalResult>& rankings, std::size_t k) {
    std::string out = csv::format_row({"prompt_id", "rank", "image_id", "score"});
    char buf[32];
    for (const auto& r : rankings)
        for (std::size_t i = 0; i < std::min(k, r.order.size()); ++i) {
            std::snprintf(buf, sizeof buf, "%.9g", r.scores[i]);
            out += csv::format_row({r.prompt_id, std::to_string(i + 1), r.image_ids[i], buf});
        }
    return out;
}

} // namespace neglab
