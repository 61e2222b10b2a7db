// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Word-level vocabulary and fixed-length tokenization.

#pragma once

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "neglab/errors.hpp"

namespace neglab {

using TokenId = std::uint32_t;

class Vocab {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kBos = 1;
    static constexpr TokenId kEos = 2;
    static constexpr TokenId kUnk = 3;

    Vocab() {
        for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(t);
    }

    /// Rebuild from an ordered token list (checkpoint load path).
    static Vocab from_tokens(const std::vector<std::string>& tokens) {
        require(tokens.size() >= 4 && tokens[0] == "<pad>" && tokens[1] == "<bos>" && tokens[2] == "<eos>" &&
                    tokens[3] == "<unk>",
                "vocab must start with the reserved tokens <pad> <bos> <eos> <unk>");
        Vocab v;
        for (std::size_t i = 4; i < tokens.size(); ++i) {
            require(!v.contains(tokens[i]), "vocab token '" + tokens[i] + "' appears twice");
            v.add(tokens[i]);
        }
        return v;
    }

    TokenId add(const std::string& token) {
        auto it = index_.find(token);
        if (it != index_.end()) return it->second;
        const auto id = static_cast<TokenId>(tokens_.size());
        tokens_.push_back(token);
        index_.emplace(token, id);
        return id;
    }

    bool contains(const std::string& token) const { return index_.count(token) != 0; }

    TokenId id(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? kUnk : it->second;
    }

    const std::string& token(TokenId id) const {
        require(id < tokens_.size(), "token id out of range");
        return tokens_[id];
    }

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

/// Lowercase, drop ASCII punctuation, split on whitespace.
inline std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            if (!cur.empty()) words.push_back(std::move(cur));
            cur.clear();
        } else if (!std::ispunct(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

/// Ids assigned by first occurrence after the four reserved ids.
inline Vocab build_vocab(const std::vector<std::string>& corpus_texts) {
    require(!corpus_texts.empty(), "build_vocab: corpus is empty");
    Vocab v;
    for (const auto& text : corpus_texts)
        for (const auto& w : split_words(text)) v.add(w);
    return v;
}

struct TokenSequence {
    std::vector<TokenId> ids;
    std::size_t eos_position = 0;

    bool operator==(const TokenSequence&) const = default;
};

/// [BOS, tokens..., EOS, PAD...] of exactly context_length ids. Words past
/// context_length - 2 are dropped so EOS is always present.
inline TokenSequence tokenize(std::string_view text, const Vocab& vocab, std::size_t context_length) {
    require(!text.empty(), "tokenize: text is empty");
    require(context_length >= 3, "tokenize: context_length must be at least 3");
    auto words = split_words(text);
    if (words.size() > context_length - 2) words.resize(context_length - 2);
    TokenSequence seq;
    seq.ids.assign(context_length, Vocab::kPad);
    seq.ids[0] = Vocab::kBos;
    for (std::size_t i = 0; i < words.size(); ++i) seq.ids[i + 1] = vocab.id(words[i]);
    seq.eos_position = words.size() + 1;
    seq.ids[seq.eos_position] = Vocab::kEos;
    return seq;
}

} // namespace neglab
