// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Strict experiment configuration. Every key is optional and falls back to
// the documented default; unknown keys and ill-typed values are rejected
// with the dotted path of the offending key.

#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "neglab/corpus/generate.hpp"
#include "neglab/interpret/tsne.hpp"
#include "neglab/retrieval.hpp"
#include "neglab/trainer.hpp"

namespace neglab {

/// Configuration or usage problem; `key` names the offending setting.
struct ConfigError : std::runtime_error {
    ConfigError(std::string key, const std::string& what)
        : std::runtime_error(key.empty() ? what : key + ": " + what), key(std::move(key)) {}
    std::string key;
};

struct EvalConfig {
    std::size_t k = 10;
    HitCriterion criterion = HitCriterion::majority;
    bool rankings_csv = true;
};

struct InterpretConfig {
    TsneConfig tsne;
    std::string ablation_prompt = "No evidence of pleural effusion.";
    std::string ablation_image = "test_noeff_001";
    bool averaged_ablation = true;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::filesystem::path output_dir = "runs/default";
    GenConfig gen;
    EncoderConfig encoder;
    TrainConfig base_train;
    TrainConfig con1_train;
    TrainConfig con2_train;
    std::optional<std::filesystem::path> quadruplets;  // con2_train.quadruplets, relative to output_dir
    EvalConfig eval;
    InterpretConfig interpret;

    /// Defaults with all seeds derived from `seed`.
    static ExperimentConfig defaults();

    /// Parses a config document. `seed_override` replaces the global seed
    /// before derived seeds are assigned. Throws ConfigError.
    static ExperimentConfig from_json(const nlohmann::json& doc, std::optional<std::uint64_t> seed_override = {});
    static ExperimentConfig load(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = {});

    /// Effective configuration, every key present.
    nlohmann::json to_json() const;

    /// FNV-1a over the canonical (sorted-key, compact) effective config.
    std::string hash() const;

    /// Re-derives per-stage seeds from `seed`.
    void apply_seed(std::uint64_t s);

    std::filesystem::path resolve(const std::filesystem::path& p) const {
        return p.is_absolute() ? p : output_dir / p;
    }
};

} // namespace neglab
