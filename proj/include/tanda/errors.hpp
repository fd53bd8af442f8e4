#pragma once

#include <stdexcept>
#include <string>

namespace tanda {

// Bad config or flag values. CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input data (TSV, JSONL, checkpoint files). CLI exit code 2.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numeric failure: NaN scores, divergence, failed gradient check. CLI exit code 3.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tanda
