// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Error taxonomy shared by every module.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace neglab {

/// A caller broke a documented precondition (shape, range, count).
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

/// Backward pass reached an op that has no gradient rule.
struct UnsupportedOpError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// NaN/Inf where a finite value is required.
struct NumericalDomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed file: bad magic, truncated payload, inconsistent directory.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A CSV row references an id that is not in the supplied manifest.
struct ResolutionError : FormatError {
    ResolutionError(std::size_t row, const std::string& what)
        : FormatError("row " + std::to_string(row) + ": " + what), row(row) {}
    std::size_t row;
};

/// A quadruplet row whose true/distractor polarities are not opposed.
struct SemanticOppositionError : FormatError {
    SemanticOppositionError(std::size_t row, const std::string& what)
        : FormatError("row " + std::to_string(row) + ": " + what), row(row) {}
    std::size_t row;
};

/// Attribution scores were all zero so no relative share exists.
struct DegenerateAttributionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractViolation(msg);
}

} // namespace neglab
