#pragma once

#include <stdexcept>
#include <string>

namespace sdil {

// Caller broke a documented precondition (shape mismatch, bad mode, ...).
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// A forward/backward pass produced NaN/Inf, or training diverged.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file (corpus, config, checkpoint).
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// A generator could not produce a valid artifact (unreachable goal, ...).
class GenerationError : public std::runtime_error {
public:
    explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

#define SDIL_REQUIRE(cond, msg) \
    do { if (!(cond)) throw ::sdil::ContractError(msg); } while (0)

} // namespace sdil
