// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "neglab/retrieval.hpp"
#include "support.hpp"

using namespace neglab;
using namespace neglab::testing;
using Catch::Matchers::WithinAbs;

namespace {

Corpus eval_corpus(std::uint64_t seed, double noise = 0.35) {
    GenConfig g;
    g.joint_dim = 16;
    g.noise_sigma = noise;
    g.seed = seed;
    return generate_corpus(g);
}

Tensor<float> rows_of(const std::vector<std::vector<float>>& v) {
    Tensor<float> t({v.size(), v.front().size()});
    for (std::size_t r = 0; r < v.size(); ++r) std::copy(v[r].begin(), v[r].end(), t.row(r).begin());
    return t;
}

/// Position of every image from pairwise comparisons alone.
std::vector<std::size_t> brute_force_order(std::span<const float> q, const std::vector<ImageRecord>& images) {
    const std::size_t n = images.size();
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
        double d = 0;
        for (std::size_t k = 0; k < q.size(); ++k) d += static_cast<double>(q[k]) * images[i].embedding[k];
        s[i] = d;
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t pos = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (s[j] > s[i] || (s[j] == s[i] && images[j].id < images[i].id)) ++pos;
        order[pos] = i;
    }
    return order;
}

} // namespace

TEST_CASE("hit thresholds", "[retrieval]") {
    CHECK(hits_required(10, HitCriterion::majority) == 6);
    CHECK(hits_required(9, HitCriterion::majority) == 5);
    CHECK(hits_required(1, HitCriterion::majority) == 1);
    CHECK(hits_required(70, HitCriterion::majority) == 36);
    CHECK(hits_required(10, HitCriterion::all) == 10);
    CHECK(hits_required(10, HitCriterion::any) == 1);
    CHECK(hit_criterion_from_string("all") == HitCriterion::all);
    CHECK_THROWS(hit_criterion_from_string("most"));
}

TEST_CASE("a prompt equal to an image ranks it first with score 1", "[retrieval]") {
    auto c = eval_corpus(1);
    const auto& target = c.test_images[17];
    auto r = rank_images(target.embedding, c.test_images, "p");
    CHECK(r.image_ids.front() == target.id);
    CHECK_THAT(r.scores.front(), WithinAbs(1.0, 1e-6));
    for (std::size_t i = 1; i < r.scores.size(); ++i) CHECK(r.scores[i] <= r.scores[i - 1]);
}

TEST_CASE("equal scores fall back to ascending image id", "[retrieval]") {
    std::vector<ImageRecord> images = {{"img_c", {1.0f, 0.0f}, Polarity::effusion},
                                       {"img_a", {1.0f, 0.0f}, Polarity::no_effusion},
                                       {"img_b", {0.0f, 1.0f}, Polarity::effusion}};
    std::vector<float> q = {1.0f, 0.0f};
    auto r = rank_images(q, images);
    CHECK(r.image_ids == std::vector<std::string>{"img_a", "img_c", "img_b"});
    std::vector<float> bad = {1.0f, 0.0f, 0.0f};
    CHECK_THROWS_AS(rank_images(bad, images), ContractViolation);
    CHECK_THROWS_AS(rank_images(q, {}), ContractViolation);
}

TEST_CASE("ranking matches a brute-force oracle over 70 images", "[retrieval]") {
    auto c = eval_corpus(2);
    for (std::uint64_t s = 1; s <= 20; ++s) {
        auto q = random_unit(16, s);
        CHECK(rank_images(q, c.test_images).order == brute_force_order(q, c.test_images));
    }
    // Ties: duplicate images force the id rule.
    auto images = c.test_images;
    images.push_back(images[3]);
    images.back().id = "aaa_duplicate";
    auto q = images[3].embedding;
    CHECK(rank_images(q, images).order == brute_force_order(q, images));
    CHECK(rank_images(q, images).image_ids.front() == "aaa_duplicate");
}

TEST_CASE("prototype embeddings retrieve perfectly", "[retrieval]") {
    auto c = eval_corpus(3, 0.0);
    std::vector<std::vector<float>> rows;
    for (const auto& p : c.eval_prompts) rows.push_back(c.prototype(p.polarity));
    auto ev = evaluate_embeddings(rows_of(rows), c.eval_prompts, c.test_images, 10);
    for (auto cat : kAllCategories) CHECK(ev.table.accuracy(cat) == 1.0);
    std::size_t total = 0;
    for (const auto& [_, s] : ev.table.categories) total += s.prompts;
    CHECK(total == 99);
    for (auto crit : {HitCriterion::all, HitCriterion::any})
        for (auto cat : kAllCategories)
            CHECK(evaluate_embeddings(rows_of(rows), c.eval_prompts, c.test_images, 10, crit).table.accuracy(cat) == 1.0);
}

TEST_CASE("k equal to the full balanced test set yields no majority hits", "[retrieval]") {
    auto c = eval_corpus(4);
    std::vector<std::vector<float>> rows;
    for (const auto& p : c.eval_prompts) rows.push_back(c.prototype(p.polarity));
    auto ev = evaluate_embeddings(rows_of(rows), c.eval_prompts, c.test_images, c.test_images.size());
    for (auto cat : kAllCategories) CHECK(ev.table.accuracy(cat) == 0.0);
    CHECK_THROWS_AS(evaluate_embeddings(rows_of(rows), c.eval_prompts, c.test_images, 71), ContractViolation);
    CHECK_THROWS_AS(evaluate_embeddings(rows_of(rows), c.eval_prompts, c.test_images, 0), ContractViolation);
}

TEST_CASE("k = 1 reduces to top-1 polarity", "[retrieval]") {
    auto c = eval_corpus(5);
    std::vector<std::vector<float>> rows;
    for (std::size_t i = 0; i < c.eval_prompts.size(); ++i) rows.push_back(random_unit(16, 500 + i));
    auto ev = evaluate_embeddings(rows_of(rows), c.eval_prompts, c.test_images, 1);
    for (std::size_t i = 0; i < c.eval_prompts.size(); ++i) {
        const bool top1 = c.test_images[ev.rankings[i].order[0]].polarity == c.eval_prompts[i].polarity;
        CHECK(is_hit(ev.rankings[i], c.test_images, c.eval_prompts[i].polarity, 1, HitCriterion::majority) == top1);
    }
}

TEST_CASE("accuracy table is invariant to test-set order and exact", "[retrieval]") {
    auto c = eval_corpus(6);
    std::vector<std::vector<float>> rows;
    for (std::size_t i = 0; i < c.eval_prompts.size(); ++i) rows.push_back(random_unit(16, 900 + i));
    auto ref = evaluate_embeddings(rows_of(rows), c.eval_prompts, c.test_images, 10).table;
    auto shuffled = c.test_images;
    std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(1));
    auto t = evaluate_embeddings(rows_of(rows), c.eval_prompts, shuffled, 10).table;
    CHECK(t.to_json() == ref.to_json());
    for (const auto& [cat, s] : ref.categories)
        CHECK(s.accuracy() == static_cast<double>(s.hits) / static_cast<double>(s.prompts));
    auto j = ref.to_json();
    CHECK(j["k"] == 10);
    CHECK(j["categories"].size() == 4);
    CHECK(j["categories"]["natural_negative"].contains("hits"));
}

TEST_CASE("random-weight encoders sit in the chance band", "[retrieval]") {
    std::map<Category, double> mean;
    const int seeds = 5;
    for (int s = 1; s <= seeds; ++s) {
        auto c = eval_corpus(100 + s);
        auto cfg = tiny_encoder(1, 2, 16, 16, 40 + s);
        Checkpoint model = Checkpoint::fresh(cfg, build_vocab(c.all_texts()));
        model.weights = spread_weights(cfg, model.vocab.size(), 60 + s).cast<float>();
        auto table = topk_accuracy(model, c.test_images, c.eval_prompts, 10);
        for (auto cat : kAllCategories) mean[cat] += table.accuracy(cat) / seeds;
        CHECK(topk_accuracy(model, c.test_images, c.eval_prompts, 10).to_json() == table.to_json());
    }
    for (auto cat : kAllCategories) {
        INFO(to_string(cat) << " mean accuracy " << mean[cat]);
        CHECK(mean[cat] >= 0.2);
        CHECK(mean[cat] <= 0.8);
    }
}

TEST_CASE("rankings csv lists the top k", "[retrieval]") {
    std::vector<ImageRecord> images = {{"b", {1.0f, 0.0f}, Polarity::effusion}, {"a", {0.0f, 1.0f}, Polarity::no_effusion}};
    std::vector<float> q = {1.0f, 0.0f};
    auto r = rank_images(q, images, "q1");
    CHECK(rankings_csv({r}, 1) == "prompt_id,rank,image_id,score\r\nq1,1,b,1\r\n");
}
