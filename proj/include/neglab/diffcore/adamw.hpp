// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// AdamW with decoupled weight decay and bias correction.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "neglab/diffcore/params.hpp"

namespace neglab {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

template <class T>
struct AdamWState {
    AdamWConfig config;
    std::map<std::string, Tensor<T>> first_moment;
    std::map<std::string, Tensor<T>> second_moment;
    std::uint64_t step = 0;
};

/// One AdamW update of every trainable tensor in `params`.
///
/// A trainable tensor with no entry in `grads` is treated as having a zero
/// gradient (it still decays). Non-trainable tensors are never touched.
/// Moment buffers are created lazily, matching each parameter's shape.
template <class T>
void adamw_step(ParameterSet<T>& params, const std::map<std::string, Tensor<T>>& grads, AdamWState<T>& state,
                double lr) {
    require(lr >= 0.0 && std::isfinite(lr), "adamw_step: learning rate must be finite and non-negative");
    for (const auto& [name, g] : grads) {
        require(params.contains(name), "adamw_step: gradient for unknown parameter '" + name + "'");
        require(params.at(name).same_shape(g), "adamw_step: gradient shape mismatch for '" + name + "'");
    }
    state.step += 1;
    const auto& c = state.config;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    const double decay = 1.0 - lr * c.weight_decay;

    for (auto& [name, w] : params) {
        if (!w.requires_grad()) continue;
        auto [mit, m_new] = state.first_moment.try_emplace(name, w.shape(), T{0});
        auto [vit, v_new] = state.second_moment.try_emplace(name, w.shape(), T{0});
        auto& m = mit->second;
        auto& v = vit->second;
        require(m.same_shape(w) && v.same_shape(w), "adamw_step: moment shape mismatch for '" + name + "'");
        auto git = grads.find(name);
        const Tensor<T>* g = git == grads.end() ? nullptr : &git->second;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g ? static_cast<double>((*g)[i]) : 0.0;
            const double mi = c.beta1 * static_cast<double>(m[i]) + (1.0 - c.beta1) * gi;
            const double vi = c.beta2 * static_cast<double>(v[i]) + (1.0 - c.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double update = (mi / bc1) / (std::sqrt(vi / bc2) + c.eps);
            w[i] = static_cast<T>(static_cast<double>(w[i]) * decay - lr * update);
        }
    }
}

} // namespace neglab
