// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "neglab/textenc/vocab.hpp"

namespace neglab {

inline constexpr std::array<std::string_view, 6> kNegationLexicon = {"no", "not", "without", "free", "negative",
                                                                     "absent"};

inline bool is_negation_word(std::string_view w) {
    return std::find(kNegationLexicon.begin(), kNegationLexicon.end(), w) != kNegationLexicon.end();
}

/// Index (in split_words order) of the first negation word, if any.
inline std::optional<std::size_t> first_negation_word(std::string_view text) {
    auto words = split_words(text);
    for (std::size_t i = 0; i < words.size(); ++i)
        if (is_negation_word(words[i])) return i;
    return std::nullopt;
}

} // namespace neglab
