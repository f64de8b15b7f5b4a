// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace infodiff {

// Invalid runtime configuration (model/objective/CLI config files).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss or other fault raised inside a training loop.
class TrainingFault : public std::runtime_error {
 public:
  explicit TrainingFault(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite state encountered while running a sampling chain.
class SamplingFault : public std::runtime_error {
 public:
  explicit SamplingFault(const std::string& msg) : std::runtime_error(msg) {}
};

// Dataset ingestion problems (missing files, malformed CSV, ...).
class IngestError : public std::runtime_error {
 public:
  explicit IngestError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure in a metric or linear-algebra routine.
class NumericalFault : public std::runtime_error {
 public:
  explicit NumericalFault(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace infodiff
