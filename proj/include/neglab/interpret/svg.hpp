// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal self-contained SVG renderings of t-SNE layouts and ablation maps.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>

#include "neglab/interpret/ablation.hpp"
#include "neglab/interpret/tsne.hpp"

namespace neglab::svg {

namespace detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

} // namespace detail

/// Scatter plot, one colour per distinct label, legend on the right.
inline std::string tsne_scatter(const TsneResult& r, const std::string& title) {
    const double W = 640, H = 480, plot = 420, margin = 30;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (std::size_t i = 0; i < r.coords.rows(); ++i) {
        xmin = std::min(xmin, r.coords(i, 0));
        xmax = std::max(xmax, r.coords(i, 0));
        ymin = std::min(ymin, r.coords(i, 1));
        ymax = std::max(ymax, r.coords(i, 1));
    }
    const double span = std::max({xmax - xmin, ymax - ymin, 1e-9});
    std::map<std::string, std::size_t> colour;
    for (const auto& l : r.labels) colour.emplace(l, 0);
    std::size_t k = 0;
    for (auto& [_, c] : colour) c = k++ % std::size(detail::kPalette);

    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::num(W) + "\" height=\"" +
                    detail::num(H) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + detail::num(margin) + "\" y=\"20\" font-size=\"14\">" + detail::escape(title) + "</text>\n";
    for (std::size_t i = 0; i < r.coords.rows(); ++i) {
        const double px = margin + (r.coords(i, 0) - xmin) / span * plot;
        const double py = margin + 10 + (r.coords(i, 1) - ymin) / span * plot;
        s += "<circle cx=\"" + detail::num(px) + "\" cy=\"" + detail::num(py) + "\" r=\"4\" fill=\"" +
             detail::kPalette[colour[r.labels[i]]] + "\"/>\n";
    }
    double ly = 50;
    for (const auto& [label, c] : colour) {
        s += "<rect x=\"470\" y=\"" + detail::num(ly - 9) + "\" width=\"10\" height=\"10\" fill=\"" +
             detail::kPalette[c] + "\"/>\n";
        s += "<text x=\"486\" y=\"" + detail::num(ly) + "\" font-size=\"12\">" + detail::escape(label) + "</text>\n";
        ly += 20;
    }
    return s + "</svg>\n";
}

/// Diverging heatmap of delta-sim (blue negative, red positive) with a
/// colour-scale legend.
inline std::string ablation_heatmap(const AblationMap& m, const std::string& title) {
    const double cell = 36, left = 70, top = 50;
    double vmax = 1e-12;
    for (double v : m.delta) vmax = std::max(vmax, std::abs(v));
    auto colour = [&](double v) {
        const double t = std::clamp(v / vmax, -1.0, 1.0);
        const int fade = static_cast<int>(std::lround(255 * (1 - std::abs(t))));
        char buf[16];
        if (t >= 0)
            std::snprintf(buf, sizeof buf, "#ff%02x%02x", fade, fade);
        else
            std::snprintf(buf, sizeof buf, "#%02x%02xff", fade, fade);
        return std::string(buf);
    };
    const double W = left + cell * static_cast<double>(m.heads) + 140;
    const double H = top + cell * static_cast<double>(m.layers) + 40;
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::num(W) + "\" height=\"" +
                    detail::num(H) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"10\" y=\"20\" font-size=\"14\">" + detail::escape(title) + "</text>\n";
    for (std::size_t h = 0; h < m.heads; ++h)
        s += "<text x=\"" + detail::num(left + cell * static_cast<double>(h) + 8) + "\" y=\"" +
             detail::num(top - 6) + "\" font-size=\"11\">H" + std::to_string(h) + "</text>\n";
    for (std::size_t l = 0; l < m.layers; ++l) {
        const double y = top + cell * static_cast<double>(l);
        s += "<text x=\"10\" y=\"" + detail::num(y + cell / 2 + 4) + "\" font-size=\"11\">L" + std::to_string(l) +
             "</text>\n";
        for (std::size_t h = 0; h < m.heads; ++h)
            s += "<rect x=\"" + detail::num(left + cell * static_cast<double>(h)) + "\" y=\"" + detail::num(y) +
                 "\" width=\"" + detail::num(cell) + "\" height=\"" + detail::num(cell) + "\" fill=\"" +
                 colour(m.at(l, h)) + "\" stroke=\"#888\"/>\n";
    }
    const double lx = left + cell * static_cast<double>(m.heads) + 20;
    const double steps[] = {vmax, vmax / 2, 0.0, -vmax / 2, -vmax};
    for (std::size_t i = 0; i < std::size(steps); ++i) {
        const double y = top + 22.0 * static_cast<double>(i);
        s += "<rect x=\"" + detail::num(lx) + "\" y=\"" + detail::num(y) + "\" width=\"16\" height=\"16\" fill=\"" +
             colour(steps[i]) + "\" stroke=\"#888\"/>\n";
        char buf[32];
        std::snprintf(buf, sizeof buf, "%+.2e", steps[i]);
        s += "<text x=\"" + detail::num(lx + 22) + "\" y=\"" + detail::num(y + 12) + "\" font-size=\"11\">" + buf +
             "</text>\n";
    }
    return s + "</svg>\n";
}

} // namespace neglab::svg
