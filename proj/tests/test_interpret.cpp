// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "neglab/interpret.hpp"
#include "neglab/retrieval.hpp"
#include "support.hpp"

using namespace neglab;
using namespace neglab::testing;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

Checkpoint random_model(const EncoderConfig& cfg, std::uint64_t seed) {
    auto m = Checkpoint::fresh(cfg, small_vocab());
    m.weights = spread_weights(cfg, m.vocab.size(), seed).cast<float>();
    return m;
}

/// Two Gaussian clusters of n/2 points each around distant centres.
Tensor<double> two_clusters(std::size_t n, std::size_t d, std::uint64_t seed, std::vector<int>& group) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor<double> x({n, d});
    group.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        group[i] = i < n / 2 ? 0 : 1;
        for (std::size_t k = 0; k < d; ++k) x(i, k) = normal(rng) + (k == 0 ? (group[i] ? 10.0 : -10.0) : 0.0);
    }
    return x;
}

TsneConfig quick_tsne(std::uint64_t seed = 1) {
    TsneConfig c;
    c.perplexity = 10;
    c.iterations = 400;
    c.seed = seed;
    return c;
}

std::vector<std::string> labels_of(const std::vector<int>& group) {
    std::vector<std::string> out;
    for (int g : group) out.push_back(g ? "b" : "a");
    return out;
}

} // namespace

TEST_CASE("a single content token carries all attribution", "[attribution]") {
    auto model = random_model(tiny_encoder(2, 2, 16, 8), 3);
    auto image = random_unit(8, 1);
    auto r = token_attribution(model, Prompt{"p", "effusion", Category::natural_positive, Polarity::effusion}, image);
    REQUIRE(r.tokens.size() == 3);
    CHECK(r.tokens[0].special);
    CHECK(r.tokens[2].special);
    CHECK(r.tokens[1].token == "effusion");
    CHECK(r.tokens[1].relative == 1.0);
    CHECK_FALSE(r.negation_index.has_value());
}

TEST_CASE("relative attributions sum to one and locate the negation", "[attribution]") {
    auto model = random_model(tiny_encoder(2, 2, 16, 8), 4);
    for (std::uint64_t s = 1; s <= 5; ++s) {
        auto image = random_unit(8, s);
        for (const char* text : {"No evidence of pleural effusion.", "Lungs are free of effusion without change.",
                                 "There is a small left pleural effusion."}) {
            auto r = token_attribution(model, Prompt{"p", text, Category::natural_negative, Polarity::no_effusion}, image);
            double sum = 0;
            for (const auto& t : r.tokens) {
                CHECK(t.relative >= 0.0);
                CHECK(t.relative <= 1.0);
                sum += t.relative;
            }
            CHECK_THAT(sum, WithinAbs(1.0, 1e-6));
            const auto neg = first_negation_word(text);
            CHECK(r.negation_index.has_value() == neg.has_value());
            if (neg) CHECK(*r.negation_index == *neg + 1);
        }
    }
}

TEST_CASE("attribution gradient matches finite differences on the inputs", "[attribution][gradcheck]") {
    for (std::uint64_t s = 1; s <= 3; ++s) {
        auto model = random_model(tiny_encoder(2, 2, 16, 8), 10 + s);
        auto weights = frozen_double_weights(model.weights);
        auto image = random_unit(8, s);
        auto seq = model.tokenize("No evidence of pleural effusion.");
        InputSimilarity f(weights, model.config, seq, image);
        const auto& x = f.inputs().values();
        CHECK(finite_diff_check(f.as_grad_function(), x, 1e-3) < 1e-4);
    }
}

TEST_CASE("attribution rejects non-unit images and degenerate scores", "[attribution]") {
    auto model = random_model(tiny_encoder(1, 2, 16, 8), 5);
    std::vector<float> bad(8, 1.0f);
    Prompt p{"p", "no effusion", Category::natural_negative, Polarity::no_effusion};
    CHECK_THROWS_AS(token_attribution(model, p, bad), ContractViolation);
    // A zero projection makes the similarity constant in the inputs.
    auto dead = model;
    dead.weights.at("text_projection").fill(0.0f);
    dead.weights.at("text_projection")(0, 0) = 0.0f;
    CHECK_THROWS(token_attribution(dead, p, random_unit(8, 2)));
}

TEST_CASE("attribution summary averages per prompt", "[attribution]") {
    auto model = random_model(tiny_encoder(1, 2, 16, 8), 6);
    std::vector<Prompt> prompts = {{"a", "No evidence of pleural effusion.", Category::natural_negative, Polarity::no_effusion},
                                   {"b", "Findings: no pleural effusion.", Category::structured_negative, Polarity::no_effusion},
                                   {"c", "Small pleural effusion.", Category::natural_positive, Polarity::effusion}};
    auto image = random_unit(8, 3);
    auto s = attribution_summary(model, prompts, image);
    CHECK(s.prompts == 3);
    CHECK(s.without_negation == 1);
    const double expect = (token_attribution(model, prompts[0], image).negation_attribution().value() +
                           token_attribution(model, prompts[1], image).negation_attribution().value()) /
                          2.0;
    CHECK_THAT(s.mean_negation_attribution, WithinAbs(expect, 1e-15));
    CHECK(s.to_json(true)["reports"].size() == 3);
}

TEST_CASE("ablation map shape follows the encoder geometry", "[ablation]") {
    auto cfg = tiny_encoder(12, 8, 32, 8);
    auto model = random_model(cfg, 7);
    auto m = head_ablation_map(model, "No evidence of pleural effusion.", random_unit(8, 4), "p", "i");
    CHECK(m.layers == 12);
    CHECK(m.heads == 8);
    CHECK(m.delta.size() == 96);
    CHECK(m.to_json()["delta_sim"].size() == 12);
    CHECK(m.to_json()["delta_sim"][0].size() == 8);
    const auto csv = m.to_csv();
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
    CHECK_THAT(svg::ablation_heatmap(m, "map"), ContainsSubstring("<svg"));
}

TEST_CASE("ablating a head with zero value projection changes nothing", "[ablation]") {
    auto cfg = tiny_encoder(2, 2, 16, 8);
    auto model = random_model(cfg, 8);
    const std::size_t hw = cfg.head_width();
    auto& wv = model.weights.at("layers.0.attn.wv");
    auto& bv = model.weights.at("layers.0.attn.bv");
    for (std::size_t r = 0; r < wv.rows(); ++r)
        for (std::size_t c = 0; c < hw; ++c) wv(r, c) = 0.0f;
    for (std::size_t c = 0; c < hw; ++c) bv[c] = 0.0f;
    for (const char* text : {"No evidence of pleural effusion.", "Small left effusion.", "xyz"}) {
        auto m = head_ablation_map(model, text, random_unit(8, 5));
        CHECK(m.at(0, 0) == 0.0);
        CHECK(m.at(0, 1) != 0.0);
    }
}

TEST_CASE("single-head deltas do not add up to the all-heads delta", "[ablation]") {
    auto cfg = tiny_encoder(2, 2, 16, 8);
    auto model = random_model(cfg, 9);
    auto image = random_unit(8, 6);
    const std::string text = "No evidence of pleural effusion.";
    auto m = head_ablation_map(model, text, image);
    double sum = 0;
    for (double d : m.delta) sum += d;
    auto all = HeadMask::all(cfg);
    const double joint = m.baseline - masked_similarity(model, model.tokenize(text), image, &all);
    CHECK(std::abs(sum - joint) > 1e-4);
}

TEST_CASE("removing a supporting head gives a positive delta", "[ablation]") {
    auto model = sign_toy_model();
    const std::vector<float> image = {1.0f, 0.0f};
    auto m = head_ablation_map(model, "effusion", image);
    REQUIRE(m.delta.size() == 1);
    auto mask = HeadMask::single(0, 0);
    CHECK(masked_similarity(model, model.tokenize("effusion"), image, &mask) == 0.0);
    CHECK(m.baseline > 0.5);
    CHECK(m.at(0, 0) == m.baseline);
    // Flipping the head's contribution flips the sign.
    auto flipped = head_ablation_map(sign_toy_model(-2.0f), "effusion", image);
    CHECK(flipped.at(0, 0) < 0.0);
}

TEST_CASE("averaged ablation map is the cell-wise mean", "[ablation]") {
    auto model = random_model(tiny_encoder(2, 2, 16, 8), 10);
    std::vector<AblationExample> ex = {{"a", "No evidence of pleural effusion.", "i1", random_unit(8, 1)},
                                       {"b", "Lungs are free of effusion.", "i2", random_unit(8, 2)}};
    auto avg = averaged_ablation_map(model, ex);
    auto m1 = head_ablation_map(model, ex[0].prompt_text, ex[0].image_emb);
    auto m2 = head_ablation_map(model, ex[1].prompt_text, ex[1].image_emb);
    CHECK(avg.examples == 2);
    for (std::size_t i = 0; i < avg.delta.size(); ++i)
        CHECK_THAT(avg.delta[i], WithinAbs((m1.delta[i] + m2.delta[i]) / 2, 1e-15));
}

TEST_CASE("t-SNE separates two clusters and lowers KL after exaggeration", "[tsne]") {
    std::vector<int> group;
    auto x = two_clusters(40, 6, 3, group);
    auto r = tsne_project(x, labels_of(group), quick_tsne());
    REQUIRE(r.coords.rows() == 40);
    REQUIRE(r.kl_trace.size() == 400);
    CHECK(r.kl_after(400) <= r.kl_after(250));
    CHECK(separation_statistic(r.coords, group) > 1.0);
    // Mean centroid distance versus mean intra-cluster pairwise distance.
    double intra = 0, inter = 0;
    std::size_t ni = 0, nx = 0;
    for (std::size_t i = 0; i < 40; ++i)
        for (std::size_t j = i + 1; j < 40; ++j) {
            const double d = std::hypot(r.coords(i, 0) - r.coords(j, 0), r.coords(i, 1) - r.coords(j, 1));
            (group[i] == group[j] ? intra : inter) += d;
            (group[i] == group[j] ? ni : nx) += 1;
        }
    CHECK(inter / static_cast<double>(nx) > intra / static_cast<double>(ni));
    CHECK_THAT(svg::tsne_scatter(r, "t"), ContainsSubstring("<svg"));
    const auto csv = r.to_csv();
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 41);
}

TEST_CASE("t-SNE is bit-deterministic for a fixed seed", "[tsne]") {
    std::vector<int> group;
    auto x = two_clusters(24, 4, 5, group);
    auto a = tsne_project(x, labels_of(group), quick_tsne(7));
    auto b = tsne_project(x, labels_of(group), quick_tsne(7));
    CHECK(a.coords.values() == b.coords.values());
    CHECK(a.kl_trace == b.kl_trace);
    auto c = tsne_project(x, labels_of(group), quick_tsne(8));
    CHECK(c.coords.values() != a.coords.values());
    CHECK(separation_statistic(c.coords, group) > 1.0);
}

TEST_CASE("KL gradient matches finite differences at the initial layout", "[tsne][gradcheck]") {
    std::vector<int> group;
    auto x = two_clusters(16, 4, 9, group);
    const auto p = tsne_affinities(x, 5.0);
    for (std::uint64_t seed : {1, 2}) {
        auto y0 = tsne_initial_layout(16, seed);
        // Also probe a spread-out layout where the kernel is far from flat.
        auto y1 = y0;
        for (auto& v : y1.values()) v *= 1e4;
        for (auto [y, eps] : {std::pair{&y0, 1e-3}, std::pair{&y1, 1e-4}}) {
            GradFunction fn = [&](std::span<const double> flat, std::vector<double>* g) {
                Tensor<double> yy({16, 2}, std::vector<double>(flat.begin(), flat.end()));
                if (g) *g = tsne_kl_gradient(p, yy).values();
                return tsne_kl(p, yy);
            };
            INFO("seed " << seed << " eps " << eps);
            CHECK(finite_diff_check(fn, y->values(), eps) < 1e-4);
        }
    }
}

TEST_CASE("affinities are symmetric, normalized and match the perplexity", "[tsne]") {
    std::vector<int> group;
    auto x = two_clusters(20, 3, 11, group);
    auto p = tsne_affinities(x, 5.0);
    double total = 0;
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK(p(i, i) == 0.0);
        for (std::size_t j = 0; j < 20; ++j) {
            CHECK(p(i, j) == p(j, i));
            total += p(i, j);
        }
    }
    CHECK_THAT(total, WithinAbs(1.0, 1e-12));

    // Duplicates hit the distance floor instead of failing.
    auto dup = x;
    for (std::size_t k = 0; k < 3; ++k) dup(1, k) = dup(0, k);
    auto pd = tsne_affinities(dup, 5.0);
    for (double v : pd.values()) CHECK(std::isfinite(v));
}

TEST_CASE("t-SNE preconditions", "[tsne]") {
    std::vector<int> group;
    auto x = two_clusters(10, 3, 1, group);
    auto cfg = quick_tsne();
    cfg.perplexity = 10;
    CHECK_THROWS_AS(tsne_project(x, labels_of(group), cfg), ContractViolation);
    cfg.perplexity = 1;
    CHECK_THROWS_AS(cfg.validate(), ContractViolation);
    cfg = quick_tsne();
    cfg.iterations = 100;
    CHECK_THROWS_AS(cfg.validate(), ContractViolation);
    auto small = two_clusters(6, 3, 1, group);
    CHECK_THROWS_AS(tsne_project(small, labels_of(group), quick_tsne()), ContractViolation);
    CHECK(effective_perplexity(10, 30) == 3.0);
}

TEST_CASE("instruments leave the checkpoint untouched", "[interpret]") {
    auto model = random_model(tiny_encoder(2, 2, 16, 8), 12);
    const auto before = serialize_checkpoint(model);
    auto image = random_unit(8, 7);
    Prompt p{"p", "No evidence of pleural effusion.", Category::natural_negative, Polarity::no_effusion};
    token_attribution(model, p, image);
    attribution_summary(model, {p}, image);
    head_ablation_map(model, p.text, image);
    std::vector<Prompt> prompts;
    for (int i = 0; i < 12; ++i)
        prompts.push_back({"q" + std::to_string(i), i % 2 ? "no pleural effusion" : "small effusion",
                           Category::natural_negative, Polarity::no_effusion});
    auto embs = embed_prompts(model, prompts).template cast<double>();
    std::vector<std::string> labels(12, "x");
    tsne_project(embs, labels, quick_tsne());
    CHECK(serialize_checkpoint(model) == before);
}
