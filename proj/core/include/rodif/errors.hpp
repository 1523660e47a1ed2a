#pragma once

#include <stdexcept>
#include <string>

namespace rodif {

/// Invalid configuration or mismatched dimensions.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A function was called outside its documented domain.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Missing or malformed records (unknown trajectory id, unreadable file, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A NaN or Inf was produced. `tag()` names the operation that produced it.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(std::string tag, const std::string& detail)
      : std::runtime_error("non-finite value in '" + tag + "': " + detail), tag_(std::move(tag)) {}

  const std::string& tag() const noexcept { return tag_; }

 private:
  std::string tag_;
};

}  // namespace rodif
