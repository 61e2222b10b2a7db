// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks of the neglab executable on a miniature configuration.

#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "neglab/pipeline/pipeline.hpp"
#include "support.hpp"

using namespace neglab;
using namespace neglab::testing;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

Outcome run_cli(const std::string& args, const fs::path& scratch) {
    const auto out = scratch / "stdout.txt", err = scratch / "stderr.txt";
    const std::string cmd = std::string("NEGLAB_THREADS=2 '") + NEGLAB_CLI_PATH + "' " + args + " >'" + out.string() +
                            "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    Outcome o;
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.out = bin::read_file(out);
    o.err = bin::read_file(err);
    return o;
}

nlohmann::json tiny_config() {
    return nlohmann::json::parse(R"({
      "seed": 4,
      "output_dir": "run",
      "gen": {"joint_dim": 8, "n_train_images": 24, "n_test_images": 16, "prompts_per_category": 6,
              "eval_prompts": 12},
      "encoder": {"num_layers": 1, "num_heads": 2, "model_width": 16, "context_length": 16},
      "base_train": {"objective": "infonce", "learning_rate": 1e-3, "epochs": 2, "batch_size": 8},
      "con1_train": {"objective": "infonce", "learning_rate": 1e-4, "epochs": 1, "batch_size": 8},
      "con2_train": {"objective": "conclip", "learning_rate": 1e-3, "epochs": 1, "batch_size": 8,
                     "quadruplets": "data/quadruplets.csv"},
      "eval": {"k": 5, "criterion": "majority"},
      "interpret": {"tsne": {"perplexity": 3, "iterations": 250, "learning_rate": 100},
                    "ablation_prompt": "No evidence of pleural effusion.", "ablation_image": "test_noeff_001"}
    })");
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j, const std::string& name = "config.json") {
    std::ofstream(dir / name) << j.dump(2);
    return dir / name;
}

} // namespace

TEST_CASE("usage errors exit with code 2", "[cli]") {
    TempDir d("cli_usage");
    CHECK(run_cli("", d.path).code == 2);
    CHECK(run_cli("eval", d.path).code == 2);
    CHECK(run_cli("finetune --config x.json --objective sgd", d.path).code == 2);
    auto o = run_cli("eval --config missing.json", d.path);
    CHECK(o.code == 2);
    CHECK_THAT(o.err, ContainsSubstring("--config"));
}

TEST_CASE("unknown config keys are rejected by name", "[cli]") {
    TempDir d("cli_unknown");
    auto j = tiny_config();
    j["encoder"]["num_heeds"] = 3;
    auto o = run_cli("gen-data --config '" + write_config(d.path, j).string() + "'", d.path);
    CHECK(o.code == 2);
    CHECK_THAT(o.err, ContainsSubstring("encoder.num_heeds"));

    j = tiny_config();
    j["eval"]["k"] = "ten";
    o = run_cli("gen-data --config '" + write_config(d.path, j).string() + "'", d.path);
    CHECK(o.code == 2);
    CHECK_THAT(o.err, ContainsSubstring("eval.k"));

    j = tiny_config();
    j["con1_train"]["objective"] = "conclip";
    o = run_cli("gen-data --config '" + write_config(d.path, j).string() + "'", d.path);
    CHECK(o.code == 2);
    CHECK_THAT(o.err, ContainsSubstring("con1_train.objective"));
}

TEST_CASE("conclip fine-tuning without a quadruplet path names the key", "[cli]") {
    TempDir d("cli_quads");
    auto j = tiny_config();
    j["con2_train"].erase("quadruplets");
    const auto cfg = write_config(d.path, j).string();
    REQUIRE(run_cli("gen-data --config '" + cfg + "'", d.path).code == 0);
    REQUIRE(run_cli("pretrain --config '" + cfg + "'", d.path).code == 0);
    auto o = run_cli("finetune --objective conclip --config '" + cfg + "'", d.path);
    CHECK(o.code == 2);
    CHECK_THAT(o.err, ContainsSubstring("con2_train.quadruplets"));

    j["con2_train"]["quadruplets"] = "data/nowhere.csv";
    const auto cfg2 = write_config(d.path, j, "config2.json").string();
    o = run_cli("finetune --objective conclip --config '" + cfg2 + "'", d.path);
    CHECK(o.code == 2);
    CHECK_THAT(o.err, ContainsSubstring("con2_train.quadruplets"));
}

TEST_CASE("gen-data refuses to overwrite without --force", "[cli]") {
    TempDir d("cli_force");
    const auto cfg = write_config(d.path, tiny_config()).string();
    REQUIRE(run_cli("gen-data --config '" + cfg + "'", d.path).code == 0);
    const auto before = bin::file_hash(d.path / "run" / "data" / "train.emb");
    auto o = run_cli("gen-data --config '" + cfg + "'", d.path);
    CHECK(o.code == 2);
    CHECK_THAT(o.err, ContainsSubstring("--force"));
    CHECK(run_cli("gen-data --force --config '" + cfg + "'", d.path).code == 0);
    CHECK(bin::file_hash(d.path / "run" / "data" / "train.emb") == before);
    auto other = run_cli("gen-data --force --seed 5 --config '" + cfg + "'", d.path);
    CHECK(other.code == 0);
    CHECK(bin::file_hash(d.path / "run" / "data" / "train.emb") != before);
}

TEST_CASE("stages need their inputs", "[cli]") {
    TempDir d("cli_order");
    const auto cfg = write_config(d.path, tiny_config()).string();
    auto o = run_cli("pretrain --config '" + cfg + "'", d.path);
    CHECK(o.code == 1);
    CHECK_THAT(o.err, ContainsSubstring("gen-data"));
    REQUIRE(run_cli("gen-data --config '" + cfg + "'", d.path).code == 0);
    CHECK(run_cli("eval --model con1 --config '" + cfg + "'", d.path).code == 1);
    CHECK(run_cli("eval --model nope --config '" + cfg + "'", d.path).code == 2);
}

TEST_CASE("run-all writes a complete, valid and reproducible report", "[cli]") {
    TempDir d("cli_run");
    const auto cfg = write_config(d.path, tiny_config()).string();
    auto o = run_cli("run-all --config '" + cfg + "'", d.path);
    INFO(o.err);
    REQUIRE(o.code == 0);
    const auto root = d.path / "run";
    auto report = nlohmann::ordered_json::parse(bin::read_file(root / "run_report.json"));

    CHECK(report["checkpoints"].size() == 3);
    for (const char* m : {"base", "con1", "con2"}) {
        INFO(m);
        REQUIRE(report["checkpoints"].contains(m));
        const auto& e = report["checkpoints"][m];
        CHECK(e["eval"].contains("table"));
        CHECK(e["ablation"].is_object());
        CHECK(e["tsne"]["kl_final"].get<double>() <= e["tsne"]["kl_at_exaggeration_end"].get<double>());
        CHECK(fs::exists(root / "checkpoints" / (std::string(m) + ".ckpt")));
    }
    CHECK(report["summary"]["frozen_tower_unchanged"]["con1"] == true);
    CHECK(report["summary"]["frozen_tower_unchanged"]["con2"] == true);
    CHECK(report.contains("timing"));
    CHECK_NOTHROW(validate_report_paths(report, root));
    CHECK(nlohmann::json::parse(o.out).contains("negated_accuracy"));

    auto again = run_cli("run-all --config '" + cfg + "'", d.path);
    CHECK(again.code == 2);
    CHECK_THAT(again.err, ContainsSubstring("--force"));

    // A second run into another directory gives the same report outside timing.
    auto j = tiny_config();
    j["output_dir"] = "run2";
    const auto cfg2 = write_config(d.path, j, "config2.json").string();
    REQUIRE(run_cli("run-all --config '" + cfg2 + "'", d.path).code == 0);
    auto report2 = nlohmann::ordered_json::parse(bin::read_file(d.path / "run2" / "run_report.json"));
    CHECK(without_timing(report2).dump() == without_timing(report).dump());
    CHECK(report2["timing"].contains("total"));

    // Removing an artifact must make report validation fail.
    fs::remove(root / "reports" / "tsne_con2.svg");
    CHECK_THROWS_AS(validate_report_paths(report, root), FormatError);
}

TEST_CASE("per-model subcommands emit JSON for each trained model", "[cli]") {
    TempDir d("cli_models");
    const auto cfg = write_config(d.path, tiny_config()).string();
    REQUIRE(run_cli("gen-data --config '" + cfg + "'", d.path).code == 0);
    REQUIRE(run_cli("pretrain --config '" + cfg + "'", d.path).code == 0);
    auto o = run_cli("eval --config '" + cfg + "'", d.path);
    REQUIRE(o.code == 0);
    auto j = nlohmann::json::parse(o.out);
    CHECK(j.size() == 1);
    CHECK(j.contains("base"));
    REQUIRE(run_cli("finetune --objective infonce --config '" + cfg + "'", d.path).code == 0);
    for (const char* sub : {"eval", "attribute", "ablate-heads", "tsne"}) {
        INFO(sub);
        auto r = run_cli(std::string(sub) + " --model all --config '" + cfg + "'", d.path);
        REQUIRE(r.code == 0);
        CHECK(nlohmann::json::parse(r.out).size() == 2);
    }
    auto abl = nlohmann::json::parse(bin::read_file(d.path / "run" / "reports" / "ablation_con1.json"));
    CHECK(abl["delta_sim"].size() == 1);
    CHECK(abl["delta_sim"][0].size() == 2);
}

TEST_CASE("config hash ignores the output directory but not the seed", "[cli]") {
    auto a = ExperimentConfig::from_json(tiny_config());
    auto j = tiny_config();
    j["output_dir"] = "elsewhere";
    CHECK(ExperimentConfig::from_json(j).hash() == a.hash());
    CHECK(ExperimentConfig::from_json(tiny_config(), 9).hash() != a.hash());
    CHECK(ExperimentConfig::from_json(tiny_config(), 9).con2_train.seed == 11);
}
