#pragma once

#include <stdexcept>
#include <string>

namespace radgs {

enum class ErrorKind {
    InvalidParameter,
    NumericalDegeneracy,
    TooManyPoints,
    Inconsistency,
    TrainingDivergence,
    Io,
    SizeMismatch,
    Config,
};

const char* to_string(ErrorKind kind) noexcept;

// All library failures are reported through this type; `kind()` lets callers
// (and the CLI exit-code mapping) tell the failure classes apart.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
    if (!condition) fail(kind, what);
}

} // namespace radgs
