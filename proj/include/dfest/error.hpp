#pragma once

#include <stdexcept>
#include <string>

namespace dfest {

/// Base for all library errors. The stage tag names the pipeline step that
/// failed (e.g. "dare", "identify", "realize") and is echoed by the CLI.
class Error : public std::runtime_error {
public:
    Error(std::string stage, const std::string& what)
        : std::runtime_error(what), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// Bad input: dimensions, ranges, malformed files. CLI exit code 2.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A numerical procedure failed (divergence, rank loss). CLI exit code 3.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace dfest
