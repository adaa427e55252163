#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spn {

/// Input that violates a documented contract (config values, labels,
/// augmentation bounds). Maps to CLI exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed file contents: images, manifests, model files, grid files.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Training produced a non-finite loss. Maps to CLI exit code 2.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t epoch, const std::string& what)
      : std::runtime_error(what), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace spn
