#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace cohort {

/// Malformed input. `line()` is 1-based, 0 when the input is not line oriented.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line = 0, std::string field_path = {})
        : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
          line_(line), field_path_(std::move(field_path)) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& field_path() const noexcept { return field_path_; }

private:
    std::size_t line_;
    std::string field_path_;
};

/// Well-formed input that breaks a data invariant.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class LookupError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace cohort
