// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "neglab/errors.hpp"

namespace neglab {

enum class Polarity { effusion, no_effusion };

enum class Category { natural_positive, natural_negative, structured_positive, structured_negative };

inline constexpr std::array<Category, 4> kAllCategories = {Category::natural_positive, Category::natural_negative,
                                                           Category::structured_positive,
                                                           Category::structured_negative};

inline const char* to_string(Polarity p) { return p == Polarity::effusion ? "effusion" : "no_effusion"; }

inline Polarity opposite(Polarity p) {
    return p == Polarity::effusion ? Polarity::no_effusion : Polarity::effusion;
}

inline Polarity polarity_from_string(std::string_view s) {
    if (s == "effusion") return Polarity::effusion;
    if (s == "no_effusion") return Polarity::no_effusion;
    throw FormatError("unknown polarity '" + std::string(s) + "'");
}

inline const char* to_string(Category c) {
    switch (c) {
    case Category::natural_positive: return "natural_positive";
    case Category::natural_negative: return "natural_negative";
    case Category::structured_positive: return "structured_positive";
    case Category::structured_negative: return "structured_negative";
    }
    return "?";
}

inline Category category_from_string(std::string_view s) {
    for (auto c : kAllCategories)
        if (s == to_string(c)) return c;
    throw FormatError("unknown prompt category '" + std::string(s) + "'");
}

inline Polarity polarity_of(Category c) {
    return (c == Category::natural_positive || c == Category::structured_positive) ? Polarity::effusion
                                                                                     : Polarity::no_effusion;
}

inline bool is_negated(Category c) { return polarity_of(c) == Polarity::no_effusion; }

struct Prompt {
    std::string id;
    std::string text;
    Category category = Category::natural_positive;
    Polarity polarity = Polarity::effusion;

    void validate() const {
        require(polarity_of(category) == polarity,
                "prompt '" + id + "': category " + to_string(category) + " contradicts polarity " + to_string(polarity));
    }
    bool operator==(const Prompt&) const = default;
};

struct ImageRecord {
    std::string id;
    std::vector<float> embedding;
    Polarity polarity = Polarity::effusion;

    bool operator==(const ImageRecord&) const = default;
};

struct QuadrupletExample {
    ImageRecord true_image;
    Prompt true_prompt;
    ImageRecord distractor_image;
    Prompt distractor_prompt;
};

/// One (image, text) training pair. `text_id` names a prompt or caption.
struct PairExample {
    ImageRecord image;
    std::string text_id;
    std::string text;
};

/// Empty string when the quadruplet is consistent, otherwise the violated rule.
inline std::string opposition_violation(const QuadrupletExample& q) {
    const auto p = q.true_image.polarity;
    if (q.true_prompt.polarity != p) return "true prompt polarity differs from true image polarity";
    if (q.distractor_image.polarity != opposite(p)) return "distractor image does not carry the opposite polarity";
    if (q.distractor_prompt.polarity != opposite(p)) return "distractor prompt does not carry the opposite polarity";
    return {};
}

inline double l2_norm(const std::vector<float>& v) {
    double s = 0;
    for (float x : v) s += static_cast<double>(x) * x;
    return std::sqrt(s);
}

} // namespace neglab
