// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exact t-SNE (no tree approximation) with the usual early-exaggeration,
// momentum and per-coordinate gain schedule.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "neglab/diffcore/tensor.hpp"
#include "neglab/util/csv.hpp"

namespace neglab {

struct TsneConfig {
    double perplexity = 30.0;
    std::size_t iterations = 1000;
    double learning_rate = 200.0;
    double exaggeration = 12.0;
    std::size_t exaggeration_iterations = 250;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    std::size_t momentum_switch = 250;
    std::uint64_t seed = 1;

    void validate() const {
        require(perplexity >= 2.0, "tsne.perplexity must be at least 2");
        require(iterations >= 250, "tsne.iterations must be at least 250");
        require(learning_rate > 0.0, "tsne.learning_rate must be positive");
        require(exaggeration >= 1.0, "tsne.exaggeration must be at least 1");
        require(exaggeration_iterations <= iterations, "tsne.exaggeration_iterations exceeds tsne.iterations");
    }
};

struct TsneResult {
    Tensor<double> coords;        // n x 2
    std::vector<double> kl_trace;  // KL(P||Q) after each iteration
    std::vector<std::string> labels;
    double perplexity = 0.0;       // after clamping

    double kl_after(std::size_t iteration) const { return kl_trace.at(iteration - 1); }

    std::string to_csv() const {
        std::string out = csv::format_row({"x", "y", "category"});
        char bx[32], by[32];
        for (std::size_t i = 0; i < coords.rows(); ++i) {
            std::snprintf(bx, sizeof bx, "%.9g", coords(i, 0));
            std::snprintf(by, sizeof by, "%.9g", coords(i, 1));
            out += csv::format_row({bx, by, labels[i]});
        }
        return out;
    }
};

inline constexpr double kTsneDistanceFloor = 1e-12;

/// Squared euclidean distances, floored so duplicates stay well-defined.
inline Tensor<double> squared_distances(const Tensor<double>& x) {
    const std::size_t n = x.rows();
    Tensor<double> d({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < x.cols(); ++k) {
                const double t = x(i, k) - x(j, k);
                s += t * t;
            }
            d(i, j) = d(j, i) = std::max(s, kTsneDistanceFloor);
        }
    return d;
}

/// Symmetric joint affinities P (sums to 1, zero diagonal). Each row's
/// Gaussian precision is binary-searched so its entropy matches
/// log(perplexity): at most 50 steps, tolerance 1e-5.
inline Tensor<double> tsne_affinities(const Tensor<double>& x, double perplexity) {
    const std::size_t n = x.rows();
    const auto d = squared_distances(x);
    const double target = std::log(perplexity);
    Tensor<double> cond({n, n});
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
        double beta = 1.0, lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
        double dmin = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) dmin = std::min(dmin, d(i, j));
        for (int step = 0; step < 50; ++step) {
            double sum = 0, dot = 0;
            for (std::size_t j = 0; j < n; ++j) {
                // Shifted by the nearest distance; cancels after normalization.
                row[j] = j == i ? 0.0 : std::exp(-beta * (d(i, j) - dmin));
                sum += row[j];
                dot += row[j] * (d(i, j) - dmin);
            }
            const double entropy = std::log(sum) + beta * dot / sum;
            for (std::size_t j = 0; j < n; ++j) cond(i, j) = row[j] / sum;
            const double diff = entropy - target;
            if (std::abs(diff) < 1e-5) break;
            if (diff > 0) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2 : (beta + hi) / 2;
            } else {
                hi = beta;
                beta = std::isinf(lo) ? beta / 2 : (beta + lo) / 2;
            }
        }
    }
    Tensor<double> p({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) p(i, j) = (cond(i, j) + cond(j, i)) / (2.0 * static_cast<double>(n));
    return p;
}

/// Student-t kernel values num_ij = 1 / (1 + |y_i - y_j|^2), zero diagonal.
inline Tensor<double> tsne_kernel(const Tensor<double>& y, double* total) {
    const std::size_t n = y.rows();
    Tensor<double> num({n, n});
    double s = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double d = 0;
            for (std::size_t k = 0; k < y.cols(); ++k) {
                const double t = y(i, k) - y(j, k);
                d += t * t;
            }
            num(i, j) = num(j, i) = 1.0 / (1.0 + d);
            s += 2.0 * num(i, j);
        }
    *total = s;
    return num;
}

/// KL(P || Q) over off-diagonal pairs with p > 0.
///
/// Evaluated as sum p log p + sum p log1p(d^2) + (sum p) log Z with
/// log Z = log(n(n-1)) + log1p(sum (num - 1) / (n(n-1))), which keeps full
/// precision when all points sit close together (num ~ 1).
inline double tsne_kl(const Tensor<double>& p, const Tensor<double>& y) {
    const std::size_t n = y.rows();
    double entropy = 0, cross = 0, mass = 0, excess = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            double d = 0;
            for (std::size_t k = 0; k < y.cols(); ++k) {
                const double t = y(i, k) - y(j, k);
                d += t * t;
            }
            excess -= d / (1.0 + d);
            if (p(i, j) > 0) {
                entropy += p(i, j) * std::log(p(i, j));
                cross += p(i, j) * std::log1p(d);
                mass += p(i, j);
            }
        }
    const double pairs = static_cast<double>(n) * static_cast<double>(n - 1);
    // Constant and layout-dependent parts are summed separately so the small
    // layout-dependent part is rounded only once.
    return (entropy + mass * std::log(pairs)) + (cross + mass * std::log1p(excess / pairs));
}

/// dKL/dy_i = 4 sum_j (e * p_ij - q_ij) num_ij (y_i - y_j), e = exaggeration.
/// With e = 1 this is the exact gradient of tsne_kl.
inline Tensor<double> tsne_kl_gradient(const Tensor<double>& p, const Tensor<double>& y, double exaggeration = 1.0) {
    const std::size_t n = y.rows();
    double z = 0;
    const auto num = tsne_kernel(y, &z);
    Tensor<double> g({n, y.cols()});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double m = 4.0 * (exaggeration * p(i, j) - num(i, j) / z) * num(i, j);
            for (std::size_t k = 0; k < y.cols(); ++k) g(i, k) += m * (y(i, k) - y(j, k));
        }
    return g;
}

inline double effective_perplexity(std::size_t n, double requested) {
    return std::min(requested, static_cast<double>(n - 1) / 3.0);
}

/// Initial layout: N(0, 1e-4 I) from the seed.
inline Tensor<double> tsne_initial_layout(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1e-4);
    Tensor<double> y({n, 2});
    for (auto& v : y.values()) v = normal(rng);
    return y;
}

inline TsneResult tsne_project(const Tensor<double>& x, const std::vector<std::string>& labels, const TsneConfig& cfg) {
    cfg.validate();
    const std::size_t n = x.rows();
    require(n >= 8, "tsne_project: need at least 8 points, got " + std::to_string(n));
    require(labels.size() == n, "tsne_project: one label per point required");
    require(cfg.perplexity < static_cast<double>(n),
            "tsne_project: perplexity " + std::to_string(cfg.perplexity) + " must be below the point count " +
                std::to_string(n));

    TsneResult r;
    r.labels = labels;
    r.perplexity = effective_perplexity(n, cfg.perplexity);
    const auto p = tsne_affinities(x, r.perplexity);
    Tensor<double> y = tsne_initial_layout(n, cfg.seed);
    Tensor<double> update({n, 2}), gains({n, 2}, 1.0);

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const double ex = it < cfg.exaggeration_iterations ? cfg.exaggeration : 1.0;
        const double momentum = it < cfg.momentum_switch ? cfg.initial_momentum : cfg.final_momentum;
        const auto g = tsne_kl_gradient(p, y, ex);
        for (std::size_t k = 0; k < y.size(); ++k) {
            const bool same_sign = (g[k] > 0) == (update[k] > 0);
            gains[k] = std::max(same_sign ? gains[k] * 0.8 : gains[k] + 0.2, 0.01);
            update[k] = momentum * update[k] - cfg.learning_rate * gains[k] * g[k];
            y[k] += update[k];
        }
        for (std::size_t c = 0; c < 2; ++c) {
            double mean = 0;
            for (std::size_t i = 0; i < n; ++i) mean += y(i, c);
            mean /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) y(i, c) -= mean;
        }
        r.kl_trace.push_back(tsne_kl(p, y));
    }
    r.coords = std::move(y);
    return r;
}

/// Two-group separation: distance between the group centroids divided by
/// the mean distance of points to their own group centroid.
inline double separation_statistic(const Tensor<double>& points, const std::vector<int>& group) {
    require(points.rows() == group.size(), "separation_statistic: one group id per point required");
    const std::size_t D = points.cols();
    std::map<int, std::vector<double>> centroid;
    std::map<int, std::size_t> count;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        auto& c = centroid[group[i]];
        c.resize(D, 0.0);
        for (std::size_t k = 0; k < D; ++k) c[k] += points(i, k);
        ++count[group[i]];
    }
    require(centroid.size() == 2, "separation_statistic: exactly two groups required");
    for (auto& [gid, c] : centroid)
        for (auto& v : c) v /= static_cast<double>(count[gid]);
    auto dist = [&](auto&& a, auto&& b) {
        double s = 0;
        for (std::size_t k = 0; k < D; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
        return std::sqrt(s);
    };
    double intra = 0;
    for (std::size_t i = 0; i < points.rows(); ++i) intra += dist(points.row(i), centroid[group[i]]);
    intra /= static_cast<double>(points.rows());
    const double inter = dist(centroid.begin()->second, std::next(centroid.begin())->second);
    return inter / std::max(intra, 1e-12);
}

} // namespace neglab
