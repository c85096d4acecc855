#pragma once

#include <stdexcept>
#include <string>

namespace mumodig {

// Shape or domain violation inside the tensor layer.
class TensorError : public std::runtime_error {
 public:
  explicit TensorError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input bytes (IDX / CIFAR / checkpoint / archive).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid run configuration or missing inputs. CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Training loss became non-finite. CLI maps this to exit code 3.
class TrainingDivergence : public std::runtime_error {
 public:
  TrainingDivergence(const std::string& what, std::size_t epoch)
      : std::runtime_error(what), epoch(epoch) {}
  std::size_t epoch;
};

// An emitted adversarial example violated the perturbation budget. Never
// expected; CLI maps this to exit code 4.
class BudgetViolation : public std::runtime_error {
 public:
  explicit BudgetViolation(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mumodig
