#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dapair {

/// Operand shapes do not compose.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Rows of two batches that must be index-aligned pairs are not.
class PairingError : public DimensionError {
 public:
  using DimensionError::DimensionError;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class DegenerateFeatureError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Caller broke a documented precondition (non-scalar loss, oversized batch, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Configuration failed validation. Carries every problem found, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Training produced a non-finite loss or gradient.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t epoch, std::size_t step, const std::string& what);
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t epoch_;
  std::size_t step_;
};

}  // namespace dapair
