// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// neglab: command-line front end for the negation fine-tuning pipeline.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "neglab/pipeline/pipeline.hpp"

namespace {

using namespace neglab;

std::vector<Model> select_models(const Pipeline& p, const std::string& which) {
    if (which == "all") {
        auto ms = p.available_models();
        if (ms.empty()) throw std::runtime_error("no checkpoints under " + (p.config().output_dir / "checkpoints").string());
        return ms;
    }
    for (auto m : kAllModels)
        if (which == to_string(m)) return {m};
    throw ConfigError("--model", "unknown model '" + which + "' (expected base, con1, con2 or all)");
}

void print(const nlohmann::ordered_json& j) { std::cout << j.dump(2) << "\n"; }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"neglab: negation-aware contrastive fine-tuning of a text tower"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(neglab::kToolVersion));

    std::string config_path;
    std::optional<std::uint64_t> seed;
    bool force = false;
    std::string objective;
    std::string model = "all";

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config (JSON)")->required();
        sub->add_option("--seed", seed, "override the global seed");
    };
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
    add_common(gen);
    gen->add_flag("--force", force, "overwrite existing corpus files");
    auto* pre = app.add_subcommand("pretrain", "train the negation-blind base model");
    add_common(pre);
    auto* fin = app.add_subcommand("finetune", "fine-tune the base model");
    add_common(fin);
    fin->add_option("--objective", objective, "infonce (CON1) or conclip (CON2)")
        ->required()
        ->check(CLI::IsMember({"infonce", "conclip"}));
    std::vector<CLI::App*> per_model;
    for (auto [name, help] : {std::pair{"eval", "top-k retrieval accuracy"},
                              std::pair{"attribute", "negation-token attribution"},
                              std::pair{"ablate-heads", "per-head zero-ablation maps"},
                              std::pair{"tsne", "t-SNE projection of eval prompt embeddings"}}) {
        auto* sub = app.add_subcommand(name, help);
        add_common(sub);
        sub->add_option("--model", model, "base, con1, con2 or all (default: every trained model)");
        per_model.push_back(sub);
    }
    auto* all = app.add_subcommand("run-all", "full pipeline and run report");
    add_common(all);
    all->add_flag("--force", force, "overwrite a previous run in the output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        auto cfg = ExperimentConfig::load(config_path, seed);
        Pipeline p(std::move(cfg));
        if (gen->parsed()) {
            print(p.gen_data(force));
        } else if (pre->parsed()) {
            print(p.pretrain());
        } else if (fin->parsed()) {
            print(p.finetune(objective_from_string(objective)));
        } else if (all->parsed()) {
            print(without_timing(p.run_all(force))["summary"]);
        } else {
            for (auto* sub : per_model) {
                if (!sub->parsed()) continue;
                const std::string name = sub->get_name();
                nlohmann::ordered_json out = nlohmann::ordered_json::object();
                for (auto m : select_models(p, model)) {
                    if (name == "eval") out[to_string(m)] = p.eval(m);
                    if (name == "attribute") out[to_string(m)] = p.attribute(m);
                    if (name == "ablate-heads") out[to_string(m)] = p.ablate_heads(m);
                    if (name == "tsne") out[to_string(m)] = p.tsne(m);
                }
                print(out);
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "neglab: config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "neglab: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
