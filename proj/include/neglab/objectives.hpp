// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Contrastive objectives: row-wise InfoNCE over an in-batch similarity matrix
// and the three-term opposition loss over (image, prompt, distractor image,
// distractor prompt) quadruplets.

#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "neglab/diffcore.hpp"

namespace neglab {

enum class ObjectiveKind { infonce, conclip };

inline const char* to_string(ObjectiveKind k) { return k == ObjectiveKind::infonce ? "infonce" : "conclip"; }

inline ObjectiveKind objective_from_string(const std::string& s) {
    if (s == "infonce") return ObjectiveKind::infonce;
    if (s == "conclip") return ObjectiveKind::conclip;
    throw ContractViolation("unknown objective '" + s + "' (expected infonce or conclip)");
}

struct ObjectiveConfig {
    ObjectiveKind kind = ObjectiveKind::infonce;
    double temperature = 0.07;
    bool include_in_batch_negatives_in_conclip = false;
    bool symmetric = false;

    void validate() const { require(temperature > 0.0, "objective.temperature must be positive"); }
};

/// S[i][j] = <a_i, b_j> for unit rows, i.e. cosine similarity.
template <class T>
Tensor<T> similarity_matrix(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.cols() == b.cols(), "similarity_matrix: dimension mismatch");
    Tensor<T> s({a.rows(), b.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double d = 0;
            for (std::size_t k = 0; k < a.cols(); ++k) d += static_cast<double>(a(i, k)) * b(j, k);
            s(i, j) = static_cast<T>(d);
        }
    return s;
}

namespace detail {

/// -mean_i log softmax(logits[i])[target_i]
template <class T>
Var<T> cross_entropy_rows(Var<T> logits, std::vector<std::size_t> targets) {
    return ad::scale(ad::mean(ad::select_per_row(ad::log_softmax_rows(logits), std::move(targets))), -1.0);
}

template <class T>
std::vector<std::size_t> iota_targets(std::size_t n) {
    std::vector<std::size_t> t(n);
    std::iota(t.begin(), t.end(), std::size_t{0});
    return t;
}

template <class T>
void require_unit_rows(const Tensor<T>& m, const char* what) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double s = 0;
        for (auto v : m.row(r)) s += static_cast<double>(v) * v;
        require(std::abs(std::sqrt(s) - 1.0) <= 1e-3,
                std::string("conclip_loss: ") + what + " row " + std::to_string(r) + " is not unit-norm");
    }
}

} // namespace detail

/// loss = (1/N) sum_i -log( exp(S_ii/t) / sum_j exp(S_ij/t) ), rows = images.
///
/// With `symmetric` the text->image direction is averaged in.
template <class T>
Var<T> infonce_loss(Var<T> image_embs, Var<T> text_embs, double temperature, bool symmetric = false) {
    require(temperature > 0.0, "infonce_loss: temperature must be positive");
    const std::size_t N = image_embs.rows();
    require(N >= 2, "infonce_loss: batch of " + std::to_string(N) + " has no in-batch negatives (need N >= 2)");
    require(text_embs.rows() == N, "infonce_loss: image and text batch sizes differ");
    auto logits = ad::scale(ad::matmul(image_embs, ad::transpose(text_embs)), 1.0 / temperature);
    auto loss = detail::cross_entropy_rows(logits, detail::iota_targets<T>(N));
    if (!symmetric) return loss;
    auto back = detail::cross_entropy_rows(ad::transpose(logits), detail::iota_targets<T>(N));
    return ad::scale(ad::add(loss, back), 0.5);
}

template <class T>
struct ConclipBatch {
    Var<T> true_images;
    Var<T> true_prompts;
    Var<T> distractor_images;
    Var<T> distractor_prompts;
};

template <class T>
struct ConclipLoss {
    Var<T> total;
    Var<T> l1;
    Var<T> l2;
    Var<T> l3;
};

/// Three-way opposition loss, each term a softmax cross-entropy at
/// temperature t:
///   L1  anchor true image,       target true prompt,       alt distractor prompt
///   L2  anchor true prompt,      target true image,        alt distractor image
///   L3  anchor distractor image, target distractor prompt, alt true prompt
/// total = (L1 + L2 + L3) / 3. With in-batch negatives, the candidate set of
/// every anchor is widened to all prompts (L1, L3) or images (L2) of the batch.
template <class T>
ConclipLoss<T> conclip_loss(const ConclipBatch<T>& b, double temperature, bool in_batch_negatives = false) {
    require(temperature > 0.0, "conclip_loss: temperature must be positive");
    const std::size_t N = b.true_images.rows();
    require(N >= 1, "conclip_loss: empty batch");
    for (auto v : {b.true_prompts, b.distractor_images, b.distractor_prompts})
        require(v.rows() == N && v.cols() == b.true_images.cols(), "conclip_loss: quadruplet members differ in shape");
    detail::require_unit_rows(b.true_images.value(), "true image");
    detail::require_unit_rows(b.true_prompts.value(), "true prompt");
    detail::require_unit_rows(b.distractor_images.value(), "distractor image");
    detail::require_unit_rows(b.distractor_prompts.value(), "distractor prompt");

    const double inv_t = 1.0 / temperature;
    auto term = [&](Var<T> anchor, Var<T> target, Var<T> alt) {
        if (!in_batch_negatives) {
            auto logits = ad::scale(ad::concat_cols<T>({ad::row_dot(anchor, target), ad::row_dot(anchor, alt)}), inv_t);
            return detail::cross_entropy_rows(logits, std::vector<std::size_t>(N, 0));
        }
        auto candidates = ad::concat_rows<T>({target, alt});
        auto logits = ad::scale(ad::matmul(anchor, ad::transpose(candidates)), inv_t);
        return detail::cross_entropy_rows(logits, detail::iota_targets<T>(N));
    };

    ConclipLoss<T> out;
    out.l1 = term(b.true_images, b.true_prompts, b.distractor_prompts);
    out.l2 = term(b.true_prompts, b.true_images, b.distractor_images);
    out.l3 = term(b.distractor_images, b.distractor_prompts, b.true_prompts);
    out.total = ad::scale(ad::add(ad::add(out.l1, out.l2), out.l3), 1.0 / 3.0);
    return out;
}

} // namespace neglab
