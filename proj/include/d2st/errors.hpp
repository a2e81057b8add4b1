#pragma once

#include <stdexcept>
#include <string>

namespace d2st {

// Precondition / shape violations on public entry points.
class contract_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Numerical failures: non-SPD factorization, diverged training,
// degenerate distributions.
class numeric_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File parsing / filesystem failures.
class io_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid experiment configuration (maps to CLI exit code 2).
class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace d2st
