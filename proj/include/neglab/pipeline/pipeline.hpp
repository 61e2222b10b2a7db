// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pipeline stages behind the command-line tool. Each stage reads its inputs
// from and writes its artifacts under the configured output directory:
//
//   data/                corpus files
//   checkpoints/         base.ckpt, con1.ckpt, con2.ckpt
//   reports/             loss traces, accuracy tables, attribution, ablation
//                        and t-SNE artifacts
//   run_report.json      written by run-all only
//
// Paths recorded in JSON summaries are relative to the output directory.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neglab/pipeline/config.hpp"

namespace neglab {

inline constexpr const char* kToolVersion = "0.1.0";

enum class Model { base, con1, con2 };

inline const char* to_string(Model m) {
    switch (m) {
    case Model::base: return "base";
    case Model::con1: return "con1";
    case Model::con2: return "con2";
    }
    return "?";
}

inline constexpr Model kAllModels[] = {Model::base, Model::con1, Model::con2};

class Pipeline {
public:
    explicit Pipeline(ExperimentConfig cfg);

    const ExperimentConfig& config() const { return cfg_; }
    std::filesystem::path data_dir() const { return cfg_.output_dir / "data"; }
    std::filesystem::path checkpoint_path(Model m) const;
    std::filesystem::path report_path() const { return cfg_.output_dir / "run_report.json"; }

    /// Refuses to replace existing corpus files unless `force`.
    nlohmann::ordered_json gen_data(bool force);
    nlohmann::ordered_json pretrain();
    nlohmann::ordered_json finetune(ObjectiveKind kind);
    nlohmann::ordered_json eval(Model m);
    nlohmann::ordered_json attribute(Model m);
    nlohmann::ordered_json ablate_heads(Model m);
    nlohmann::ordered_json tsne(Model m);

    /// Full pipeline; returns the RunReport that was written.
    nlohmann::ordered_json run_all(bool force);

    /// Checkpoints present on disk, in base/con1/con2 order.
    std::vector<Model> available_models() const;

    /// Checks that paths referenced by the config resolve; throws ConfigError.
    void check_references(bool data_will_be_generated) const;

private:
    std::string rel(const std::filesystem::path& p) const;
    void write(const std::filesystem::path& p, const std::string& bytes);
    const Corpus& corpus(bool with_quadruplets);
    Checkpoint load_model(Model m) const;

    ExperimentConfig cfg_;
    std::optional<Corpus> corpus_;
    bool corpus_has_quadruplets_ = false;
};

/// Fails with FormatError if any path recorded under a "path"-like key of
/// the report does not exist below `root`.
void validate_report_paths(const nlohmann::ordered_json& report, const std::filesystem::path& root);

/// Copy of a report with the wall-clock `timing` section removed.
nlohmann::ordered_json without_timing(nlohmann::ordered_json report);

} // namespace neglab
