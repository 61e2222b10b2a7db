// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference oracle for analytic gradients.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "neglab/diffcore/ops.hpp"

namespace neglab {

/// f(x) with optional analytic gradient written into *grad when non-null.
using GradFunction = std::function<double(std::span<const double>, std::vector<double>*)>;

/// Max over coordinates of |g_analytic - g_fd| / max(1e-8, |g_fd|).
///
/// g_fd uses the fourth-order central stencil
///   (f(x-2h) - 8 f(x-h) + 8 f(x+h) - f(x+2h)) / 12h,  h = eps,
/// so truncation error is O(eps^4) and coordinates with small gradients are
/// not swamped by curvature. Throws NumericalDomainError if any probe is NaN.
inline double finite_diff_check(const GradFunction& fn, std::span<const double> point, double eps) {
    require(eps > 0.0, "finite_diff_check: eps must be positive");
    std::vector<double> analytic;
    const double f0 = fn(point, &analytic);
    if (!std::isfinite(f0)) throw NumericalDomainError("finite_diff_check: function is not finite at the point");
    require(analytic.size() == point.size(), "finite_diff_check: analytic gradient has wrong length");

    std::vector<double> x(point.begin(), point.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double x0 = x[i];
        auto probe = [&](double offset) {
            x[i] = x0 + offset;
            const double v = fn(x, nullptr);
            if (std::isnan(v))
                throw NumericalDomainError("finite_diff_check: NaN probing coordinate " + std::to_string(i));
            return v;
        };
        const double fm2 = probe(-2 * eps), fm1 = probe(-eps), fp1 = probe(eps), fp2 = probe(2 * eps);
        x[i] = x0;
        const double fd = (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * eps);
        const double rel = std::abs(analytic[i] - fd) / std::max(1e-8, std::abs(fd));
        worst = std::max(worst, rel);
    }
    return worst;
}

/// Wraps a graph builder as a GradFunction over a flat input vector.
///
/// `build(tape, x)` receives x as a (1 x n) leaf named "x" unless `shape`
/// says otherwise, and must return a scalar Var.
inline GradFunction tape_function(std::function<Var<double>(Tape<double>&, Var<double>)> build,
                                  std::vector<std::size_t> shape = {}) {
    return [build = std::move(build), shape = std::move(shape)](std::span<const double> x,
                                                                 std::vector<double>* grad) {
        Tape<double> tape;
        auto sh = shape.empty() ? std::vector<std::size_t>{1, x.size()} : shape;
        auto input = tape.leaf("x", Tensor<double>(sh, std::vector<double>(x.begin(), x.end())), true);
        auto out = build(tape, input);
        if (!grad) return out.value().item();
        auto vg = value_and_grad(tape, out);
        const auto& g = vg.grads.at("x");
        grad->assign(g.values().begin(), g.values().end());
        return vg.value;
    };
}

} // namespace neglab
