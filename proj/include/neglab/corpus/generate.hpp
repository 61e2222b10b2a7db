// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic clinical-negation corpus.
//
// Images are frozen joint-space embeddings drawn around two unit prototypes
// (effusion / no effusion). Prompts are instantiated from per-category
// template banks crossed with a finding modifier; the four categories share
// the same (template, modifier) grid so the k-th prompt of each category
// forms a minimal pair with the k-th prompt of its opposite.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "neglab/corpus/types.hpp"

namespace neglab {

struct GenConfig {
    std::size_t joint_dim = 64;
    std::size_t n_train_images = 230;
    std::size_t n_test_images = 70;
    double class_balance = 0.5;
    double prototype_angle_deg = 60.0;
    double noise_sigma = 0.35;
    std::size_t prompts_per_category = 12;
    std::size_t eval_prompts = 99;
    std::uint64_t seed = 7;

    void validate() const;
};

namespace templates {

inline const std::array<std::vector<const char*>, 4>& banks() {
    static const std::array<std::vector<const char*>, 4> b = {{
        // natural_positive
        {"There is a {m} pleural effusion.", "A {m} pleural effusion is present.",
         "Findings consistent with {m} pleural effusion.", "The chest radiograph shows a {m} pleural effusion.",
         "Evidence of {m} pleural effusion.", "A {m} effusion is seen in the pleural space.",
         "Blunting of the costophrenic angle from {m} pleural effusion.", "Patient has a {m} pleural effusion.",
         "Fluid consistent with {m} pleural effusion is noted.", "Image demonstrates {m} pleural effusion.",
         "With {m} pleural effusion."},
        // natural_negative
        {"There is no {m} pleural effusion.", "A {m} pleural effusion is absent.",
         "Findings not consistent with {m} pleural effusion.", "The chest radiograph shows no {m} pleural effusion.",
         "No evidence of {m} pleural effusion.", "No {m} effusion is seen in the pleural space.",
         "Lungs are free of {m} pleural effusion.", "Patient does not have a {m} pleural effusion.",
         "Negative for {m} pleural effusion.", "Image demonstrates no {m} pleural effusion.",
         "Without {m} pleural effusion."},
        // structured_positive
        {"Findings: {m} pleural effusion.", "Impression: {m} pleural effusion present.",
         "Pleural effusion: present ({m}).", "Effusion status: present. Location: {m}.",
         "Finding: {m} pleural effusion. Status: present.", "Label: {m} pleural effusion.",
         "Diagnosis: {m} pleural effusion.", "Pleural space: {m} effusion.",
         "Report: {m} pleural effusion identified.", "Effusion: yes. Type: {m} pleural.",
         "Findings: presence of {m} pleural effusion."},
        // structured_negative
        {"Findings: no {m} pleural effusion.", "Impression: {m} pleural effusion absent.",
         "Pleural effusion: absent ({m}).", "Effusion status: negative. Location: {m}.",
         "Finding: {m} pleural effusion. Status: absent.", "Label: no {m} pleural effusion.",
         "Diagnosis: negative for {m} pleural effusion.", "Pleural space: no {m} effusion.",
         "Report: {m} pleural effusion not identified.", "Effusion: no. Type: {m} pleural.",
         "Findings: free of {m} pleural effusion."},
    }};
    return b;
}

inline const std::vector<const char*>& modifiers() {
    static const std::vector<const char*> m = {"left",     "right", "bilateral", "small",
                                               "moderate", "large", "layering",  "loculated"};
    return m;
}

/// Negation-free descriptions of normal findings, paired with no-effusion
/// images during base pretraining only.
inline const std::vector<const char*>& normal_captions() {
    static const std::vector<const char*> c = {
        "The {m} lung base is clear.", "Sharp {m} costophrenic angle.",   "Normal {m} hemithorax.",
        "Clear {m} lung field.",       "The {m} pleural space is normal.", "Findings: clear {m} lung.",
        "Impression: normal {m} chest.", "Healthy {m} lung.",             "Unremarkable {m} chest radiograph.",
        "Well expanded {m} lung."};
    return c;
}

inline const std::vector<const char*>& caption_modifiers() {
    static const std::vector<const char*> m = {"left", "right", "bilateral", "lower", "upper"};
    return m;
}

inline std::string instantiate(const char* tmpl, const char* modifier) {
    std::string s(tmpl);
    auto pos = s.find("{m}");
    if (pos != std::string::npos) s.replace(pos, 3, modifier);
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

inline std::size_t grid_size() {
    std::size_t n = SIZE_MAX;
    for (const auto& b : banks()) n = std::min(n, b.size());
    return n * modifiers().size();
}

} // namespace templates

inline void GenConfig::validate() const {
    require(joint_dim >= 2, "gen.joint_dim must be at least 2");
    require(class_balance > 0.0 && class_balance < 1.0, "gen.class_balance must lie in (0, 1)");
    require(prototype_angle_deg > 0.0 && prototype_angle_deg <= 180.0, "gen.prototype_angle_deg must lie in (0, 180]");
    require(noise_sigma >= 0.0, "gen.noise_sigma must be non-negative");
    require(prompts_per_category >= 1, "gen.prompts_per_category must be at least 1");
    require(eval_prompts >= 4, "gen.eval_prompts must be at least 4");
    require(prompts_per_category + (eval_prompts + 3) / 4 <= templates::grid_size(),
            "gen.prompts_per_category + eval prompts exceed the template grid");
    const auto pos_train = static_cast<std::size_t>(std::llround(n_train_images * class_balance));
    const auto pos_test = static_cast<std::size_t>(std::llround(n_test_images * class_balance));
    require(pos_train >= 1 && pos_train < n_train_images, "gen.n_train_images too small for both polarities");
    require(pos_test >= 1 && pos_test < n_test_images, "gen.n_test_images too small for both polarities");
}

struct Corpus {
    std::vector<ImageRecord> train_images;
    std::vector<ImageRecord> test_images;
    std::vector<Prompt> prompts;       // training bank
    std::vector<Prompt> eval_prompts;  // held-out retrieval suite
    std::vector<Prompt> captions;      // negation-free normal findings (category unused)
    std::vector<PairExample> pairs;
    std::vector<PairExample> base_pairs;
    std::vector<QuadrupletExample> quadruplets;
    std::array<std::vector<float>, 2> prototypes;  // [effusion, no_effusion]

    const std::vector<float>& prototype(Polarity p) const { return prototypes[p == Polarity::effusion ? 0 : 1]; }

    /// Every text the tokenizer must know about, in a fixed order.
    std::vector<std::string> all_texts() const {
        std::vector<std::string> t;
        for (const auto* list : {&prompts, &eval_prompts, &captions})
            for (const auto& p : *list) t.push_back(p.text);
        return t;
    }
};

namespace detail {

inline std::string numbered(const std::string& prefix, std::size_t i) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%03zu", i);
    return prefix + buf;
}

inline std::vector<float> unit_float(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    const double n = std::sqrt(s);
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / n);
    return out;
}

} // namespace detail

/// Builds a full corpus; every output is a function of cfg alone.
inline Corpus generate_corpus(const GenConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t D = cfg.joint_dim;

    // Prototypes: e_eff random unit, e_no = cos(a) e_eff + sin(a) u with u orthogonal.
    std::vector<double> e(D), u(D);
    for (auto& x : e) x = normal(rng);
    for (auto& x : u) x = normal(rng);
    auto normalize = [](std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x * x;
        const double n = std::sqrt(s);
        for (auto& x : v) x /= n;
    };
    normalize(e);
    double d = 0;
    for (std::size_t i = 0; i < D; ++i) d += e[i] * u[i];
    for (std::size_t i = 0; i < D; ++i) u[i] -= d * e[i];
    normalize(u);
    const double angle = cfg.prototype_angle_deg * std::numbers::pi / 180.0;
    std::vector<double> f(D);
    for (std::size_t i = 0; i < D; ++i) f[i] = std::cos(angle) * e[i] + std::sin(angle) * u[i];
    normalize(f);
    const std::array<std::vector<double>, 2> proto_d = {e, f};

    Corpus c;
    c.prototypes = {detail::unit_float(e), detail::unit_float(f)};

    auto draw_images = [&](std::size_t n, const std::string& split) {
        const auto n_pos = static_cast<std::size_t>(std::llround(n * cfg.class_balance));
        std::vector<ImageRecord> out;
        for (std::size_t i = 0; i < n; ++i) {
            const bool pos = i < n_pos;
            const auto& p = proto_d[pos ? 0 : 1];
            std::vector<double> v(D);
            for (std::size_t k = 0; k < D; ++k) v[k] = p[k] + cfg.noise_sigma * normal(rng);
            ImageRecord r;
            r.polarity = pos ? Polarity::effusion : Polarity::no_effusion;
            r.id = detail::numbered(split + (pos ? "_eff_" : "_noeff_"), pos ? i + 1 : i - n_pos + 1);
            r.embedding = cfg.noise_sigma == 0.0 ? c.prototypes[pos ? 0 : 1] : detail::unit_float(v);
            out.push_back(std::move(r));
        }
        return out;
    };
    c.train_images = draw_images(cfg.n_train_images, "img");
    c.test_images = draw_images(cfg.n_test_images, "test");

    // One shuffled (template, modifier) grid shared by all four categories:
    // the first prompts_per_category cells train, the next ones evaluate.
    const auto& banks = templates::banks();
    const auto& mods = templates::modifiers();
    const std::size_t n_templates = templates::grid_size() / mods.size();
    std::vector<std::pair<std::size_t, std::size_t>> grid;
    for (std::size_t t = 0; t < n_templates; ++t)
        for (std::size_t m = 0; m < mods.size(); ++m) grid.emplace_back(t, m);
    std::shuffle(grid.begin(), grid.end(), rng);

    auto make_prompt = [&](Category cat, std::size_t cell, std::string id) {
        const auto [t, m] = grid[cell];
        const auto& bank = banks[static_cast<std::size_t>(cat)];
        return Prompt{std::move(id), templates::instantiate(bank[t], mods[m]), cat, polarity_of(cat)};
    };

    const std::size_t P = cfg.prompts_per_category;
    std::vector<Prompt> pos_bank, neg_bank;
    for (auto cat : {Category::natural_positive, Category::structured_positive})
        for (std::size_t k = 0; k < P; ++k)
            pos_bank.push_back(make_prompt(cat, k, detail::numbered("p_pos_", pos_bank.size() + 1)));
    for (auto cat : {Category::natural_negative, Category::structured_negative})
        for (std::size_t k = 0; k < P; ++k)
            neg_bank.push_back(make_prompt(cat, k, detail::numbered("p_neg_", neg_bank.size() + 1)));
    c.prompts = pos_bank;
    c.prompts.insert(c.prompts.end(), neg_bank.begin(), neg_bank.end());

    static const std::array<const char*, 4> short_names = {"q_np_", "q_nn_", "q_sp_", "q_sn_"};
    for (std::size_t ci = 0; ci < 4; ++ci) {
        const std::size_t count = cfg.eval_prompts / 4 + (ci < cfg.eval_prompts % 4 ? 1 : 0);
        for (std::size_t k = 0; k < count; ++k)
            c.eval_prompts.push_back(make_prompt(kAllCategories[ci], P + k, detail::numbered(short_names[ci], k + 1)));
    }

    const auto& caps = templates::normal_captions();
    const auto& cmods = templates::caption_modifiers();
    for (std::size_t t = 0; t < caps.size(); ++t)
        for (std::size_t m = 0; m < cmods.size(); ++m)
            c.captions.push_back(Prompt{detail::numbered("c_norm_", c.captions.size() + 1),
                                        templates::instantiate(caps[t], cmods[m]), Category::structured_negative,
                                        Polarity::no_effusion});

    // Round-robin pairing by index within each polarity.
    std::vector<const ImageRecord*> eff, noeff;
    for (const auto& im : c.train_images) (im.polarity == Polarity::effusion ? eff : noeff).push_back(&im);
    for (const auto& im : c.train_images) {
        const bool pos = im.polarity == Polarity::effusion;
        const auto& same = pos ? eff : noeff;
        const auto& other = pos ? noeff : eff;
        const std::size_t k = static_cast<std::size_t>(std::find(same.begin(), same.end(), &im) - same.begin());
        const Prompt& true_prompt = (pos ? pos_bank : neg_bank)[k % (2 * P)];
        const Prompt& dis_prompt = (pos ? neg_bank : pos_bank)[k % (2 * P)];
        c.pairs.push_back(PairExample{im, true_prompt.id, true_prompt.text});
        c.quadruplets.push_back(QuadrupletExample{im, true_prompt, *other[k % other.size()], dis_prompt});
        if (pos) {
            c.base_pairs.push_back(PairExample{im, true_prompt.id, true_prompt.text});
        } else {
            const auto& cap = c.captions[k % c.captions.size()];
            c.base_pairs.push_back(PairExample{im, cap.id, cap.text});
        }
    }
    return c;
}

} // namespace neglab
