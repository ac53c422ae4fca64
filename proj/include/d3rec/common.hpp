#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace d3rec {

using Index = std::int64_t;
using Vector = Eigen::VectorXd;
using Tensor2 = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

// Error taxonomy. The CLI maps each family onto a distinct exit code.

/// Invalid configuration or parameter value.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or unusable input data.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Parse failure in a text input; carries the 1-based line number.
struct ParseError : DataError {
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what), line_number(line) {}
  std::size_t line_number;
};

/// NaN/Inf detected in a loss, gradient or parameter.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Caller broke a documented precondition (shape mismatch, out-of-range step, ...).
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

/// Smoothing constant used wherever a log of a possibly-zero probability is taken.
inline constexpr double kLogEps = 1e-8;

/// 64-bit FNV-1a, used for checkpoint fingerprints.
inline std::uint64_t fnv1a64(const void* data, std::size_t size,
                             std::uint64_t hash = 0xcbf29ce484222325ULL) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace d3rec
