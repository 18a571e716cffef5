#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace geodot {

// Syntax error in a kernel expression; `position` is a 0-based byte offset
// into the source text.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, std::size_t pos)
        : std::runtime_error(msg + " (at position " + std::to_string(pos) + ")"),
          position(pos) {}
    std::size_t position;
};

// Evaluation left the domain of a primitive (log of a non-positive value,
// division by zero, fractional power of a non-positive base, ...).
class DomainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The kernel evaluated to a non-positive or non-finite value.
class PositivityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A geodesic boundary value problem could not be solved even at the finest
// homotopy schedule; `last_alpha` is the largest level that did converge.
class SolveError : public std::runtime_error {
public:
    SolveError(const std::string& msg, double alpha)
        : std::runtime_error(msg), last_alpha(alpha) {}
    double last_alpha;
};

// One or more cost-matrix entries failed to solve; carries the (i, j) pairs.
class UnsolvedEntriesError : public std::runtime_error {
public:
    UnsolvedEntriesError(const std::string& msg, std::vector<std::pair<int, int>> e)
        : std::runtime_error(msg), entries(std::move(e)) {}
    std::vector<std::pair<int, int>> entries;
};

// Invalid problem description (missing field, wrong type, bad value); the
// message names the offending field path.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace geodot
