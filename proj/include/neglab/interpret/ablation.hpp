// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-head zero-ablation maps. Cell (l, h) holds baseline similarity minus
// the similarity with head h of layer l zeroed, so a positive value means
// the head supported the alignment.

#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neglab/textenc/checkpoint.hpp"
#include "neglab/util/csv.hpp"
#include "neglab/util/parallel.hpp"

namespace neglab {

struct AblationMap {
    std::size_t layers = 0;
    std::size_t heads = 0;
    std::vector<double> delta;  // row-major layers x heads
    double baseline = 0.0;
    std::string prompt_id;
    std::string image_id;
    std::size_t examples = 1;  // > 1 for averaged maps

    double at(std::size_t l, std::size_t h) const { return delta.at(l * heads + h); }

    nlohmann::ordered_json to_json() const {
        auto grid = nlohmann::ordered_json::array();
        for (std::size_t l = 0; l < layers; ++l) {
            auto row = nlohmann::ordered_json::array();
            for (std::size_t h = 0; h < heads; ++h) row.push_back(at(l, h));
            grid.push_back(row);
        }
        return {{"prompt_id", prompt_id}, {"image_id", image_id}, {"examples", examples},
                {"layers", layers},       {"heads", heads},       {"baseline", baseline},
                {"delta_sim", grid}};
    }

    /// layer,head_0,...,head_{H-1}
    std::string to_csv() const {
        csv::Row header{"layer"};
        for (std::size_t h = 0; h < heads; ++h) header.push_back("head_" + std::to_string(h));
        std::string out = csv::format_row(header);
        char buf[32];
        for (std::size_t l = 0; l < layers; ++l) {
            csv::Row row{std::to_string(l)};
            for (std::size_t h = 0; h < heads; ++h) {
                std::snprintf(buf, sizeof buf, "%.9g", at(l, h));
                row.push_back(buf);
            }
            out += csv::format_row(row);
        }
        return out;
    }
};

/// <encode(text) under mask, image>, accumulated in double.
inline double masked_similarity(const Checkpoint& model, const TokenSequence& seq, std::span<const float> image,
                                const HeadMask* mask) {
    auto e = encode_text<float>(seq, model.weights, model.config, mask);
    require(e.size() == image.size(), "head_ablation_map: image embedding dimension mismatch");
    double s = 0;
    for (std::size_t i = 0; i < e.size(); ++i) s += static_cast<double>(e[i]) * image[i];
    return s;
}

/// One baseline pass plus one pass per (layer, head).
inline AblationMap head_ablation_map(const Checkpoint& model, const std::string& prompt_text,
                                     std::span<const float> image_emb, std::string prompt_id = {},
                                     std::string image_id = {}) {
    double norm = 0;
    for (float v : image_emb) norm += static_cast<double>(v) * v;
    require(std::abs(std::sqrt(norm) - 1.0) <= 1e-3, "head_ablation_map: image embedding is not unit-norm");
    const auto seq = model.tokenize(prompt_text);
    AblationMap m;
    m.layers = model.config.num_layers;
    m.heads = model.config.num_heads;
    m.prompt_id = std::move(prompt_id);
    m.image_id = std::move(image_id);
    m.baseline = masked_similarity(model, seq, image_emb, nullptr);
    m.delta.assign(m.layers * m.heads, 0.0);
    parallel_for(m.delta.size(), [&](std::size_t cell) {
        const auto mask = HeadMask::single(cell / m.heads, cell % m.heads);
        m.delta[cell] = m.baseline - masked_similarity(model, seq, image_emb, &mask);
    });
    return m;
}

struct AblationExample {
    std::string prompt_id;
    std::string prompt_text;
    std::string image_id;
    std::vector<float> image_emb;
};

/// Cell-wise mean of single-example maps.
inline AblationMap averaged_ablation_map(const Checkpoint& model, const std::vector<AblationExample>& examples) {
    require(!examples.empty(), "averaged_ablation_map: no examples");
    AblationMap avg;
    avg.layers = model.config.num_layers;
    avg.heads = model.config.num_heads;
    avg.delta.assign(avg.layers * avg.heads, 0.0);
    avg.prompt_id = "mean";
    avg.image_id = "mean";
    avg.examples = examples.size();
    for (const auto& ex : examples) {
        auto m = head_ablation_map(model, ex.prompt_text, ex.image_emb, ex.prompt_id, ex.image_id);
        avg.baseline += m.baseline;
        for (std::size_t i = 0; i < m.delta.size(); ++i) avg.delta[i] += m.delta[i];
    }
    const double n = static_cast<double>(examples.size());
    avg.baseline /= n;
    for (auto& d : avg.delta) d /= n;
    return avg;
}

} // namespace neglab
