// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "neglab/diffcore/tape.hpp"

namespace neglab {

/// Ordered collection of named tensors. Order is insertion order and is the
/// order used for serialization.
template <class T>
class ParameterSet {
public:
    void add(std::string name, Tensor<T> value, bool trainable = true) {
        require(!index_.count(name), "duplicate parameter '" + name + "'");
        value.set_requires_grad(trainable);
        index_[name] = entries_.size();
        entries_.emplace_back(std::move(name), std::move(value));
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Tensor<T>& at(const std::string& name) {
        auto it = index_.find(name);
        require(it != index_.end(), "unknown parameter '" + name + "'");
        return entries_[it->second].second;
    }
    const Tensor<T>& at(const std::string& name) const {
        auto it = index_.find(name);
        require(it != index_.end(), "unknown parameter '" + name + "'");
        return entries_[it->second].second;
    }

    std::size_t size() const noexcept { return entries_.size(); }
    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    std::size_t element_count() const {
        std::size_t n = 0;
        for (const auto& [_, t] : entries_) n += t.size();
        return n;
    }

    template <class U>
    ParameterSet<U> cast() const {
        ParameterSet<U> out;
        for (const auto& [name, t] : entries_) out.add(name, t.template cast<U>(), t.requires_grad());
        return out;
    }

    bool identical(const ParameterSet& other) const {
        if (size() != other.size()) return false;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].first != other.entries_[i].first) return false;
            if (!entries_[i].second.identical(other.entries_[i].second)) return false;
        }
        return true;
    }

    /// Register every tensor as a named leaf; returns name -> Var.
    std::map<std::string, Var<T>> bind(Tape<T>& tape) const {
        std::map<std::string, Var<T>> vars;
        for (const auto& [name, t] : entries_) vars.emplace(name, tape.leaf(name, t, t.requires_grad()));
        return vars;
    }

private:
    std::vector<std::pair<std::string, Tensor<T>>> entries_;
    std::map<std::string, std::size_t> index_;
};

} // namespace neglab
