// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures for the unit and acceptance suites.

#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "neglab/corpus/generate.hpp"
#include "neglab/textenc/checkpoint.hpp"

namespace neglab::testing {

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    std::vector<double> v(n);
    for (auto& x : v) x = normal(rng);
    return v;
}

template <class T = double>
Tensor<T> random_tensor(std::vector<std::size_t> shape, std::uint64_t seed, double scale = 1.0) {
    auto v = random_vector(Tensor<T>::element_count(shape), seed, scale);
    return Tensor<T>(std::move(shape), std::vector<T>(v.begin(), v.end()));
}

inline std::vector<float> random_unit(std::size_t n, std::uint64_t seed) {
    auto v = random_vector(n, seed);
    double s = 0;
    for (double x : v) s += x * x;
    std::vector<float> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(v[i] / std::sqrt(s));
    return out;
}

/// Small encoder for fast gradient and contract checks.
inline EncoderConfig tiny_encoder(std::size_t layers = 1, std::size_t heads = 2, std::size_t width = 16,
                                  std::size_t joint = 8, std::uint64_t seed = 11) {
    EncoderConfig c;
    c.num_layers = layers;
    c.num_heads = heads;
    c.model_width = width;
    c.context_length = 12;
    c.joint_dim = joint;
    c.init_seed = seed;
    return c;
}

/// Weights with larger random values so gradients are not all tiny.
inline ParameterSet<double> spread_weights(const EncoderConfig& cfg, std::size_t vocab, std::uint64_t seed) {
    auto w = init_encoder_weights<double>(cfg, vocab);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.3);
    ParameterSet<double> out;
    for (const auto& [name, t] : w) {
        Tensor<double> c = t;
        for (auto& v : c.values()) v += normal(rng);
        out.add(name, std::move(c), true);
    }
    return out;
}

inline Vocab small_vocab() {
    return build_vocab({"No evidence of pleural effusion.", "There is a small left pleural effusion.",
                        "Lungs are free of effusion without change."});
}

/// One layer, one head, width 4, joint_dim 2. Every matrix is zero except
/// an identity attention output projection and a projection mapping channel 2
/// to joint axis 0 and channel 0 to joint axis 1. The value bias writes +c
/// into channel 2, so the head alone tilts the embedding toward joint axis 0.
/// Against the image (1, 0) the unmasked similarity is positive and the
/// similarity with the head removed is exactly 0.
inline Checkpoint sign_toy_model(float c = 2.0f) {
    EncoderConfig cfg;
    cfg.num_layers = 1;
    cfg.num_heads = 1;
    cfg.model_width = 4;
    cfg.context_length = 8;
    cfg.joint_dim = 2;
    auto m = Checkpoint::fresh(cfg, build_vocab({"effusion"}));
    for (auto& [name, t] : m.weights)
        if (t.shape().size() == 2) t.fill(0.0f);
    auto& tok = m.weights.at("token_embedding");
    tok(Vocab::kEos, 0) = 1.0f;
    tok(Vocab::kEos, 1) = -1.0f;
    auto& wo = m.weights.at("layers.0.attn.wo");
    for (std::size_t i = 0; i < 4; ++i) wo(i, i) = 1.0f;
    m.weights.at("layers.0.attn.bv")[2] = c;
    auto& proj = m.weights.at("text_projection");
    proj(2, 0) = 1.0f;
    proj(0, 1) = 1.0f;
    return m;
}

/// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        static std::mt19937_64 rng(std::random_device{}());
        path = std::filesystem::temp_directory_path() / ("neglab_" + tag + "_" + std::to_string(rng()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

} // namespace neglab::testing
