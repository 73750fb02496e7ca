// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace bbmf {

struct Violation {
  std::string field;
  std::string message;
};

/// Raised when an experiment configuration breaks one or more invariants.
/// Carries every violation found, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<Violation> violations);
  ConfigError(std::string field, std::string message);

  const std::vector<Violation>& violations() const noexcept { return violations_; }
  bool mentions(const std::string& needle) const;

 private:
  std::vector<Violation> violations_;
};

/// A numerical stage could not produce a trustworthy result.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace bbmf
