#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hights {

/// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid hyperparameter or configuration combination.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Violated API contract (e.g. backward from a non-scalar).
class ContractError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// Malformed or unreadable input data.
class DataError : public std::runtime_error {
  public:
    DataError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line == 0 ? what : what + " (line " + std::to_string(line) + ")"),
          line_(line) {}

    /// 1-based offending line, 0 when not tied to a line.
    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

/// Non-finite values encountered during optimization.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace hights
