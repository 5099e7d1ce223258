#pragma once

#include <stdexcept>
#include <string>

namespace optlab {

// Bad user input: malformed config files, unknown names, inconsistent shapes.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical breakdown at runtime: divergence, rank deficiency, overflow.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace optlab
