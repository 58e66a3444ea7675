#pragma once

#include <stdexcept>
#include <string>

namespace slt {

/// Shapes of networks, masks, traces or batches do not line up.
class StructuralError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A configuration value is outside its admissible range.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not produce a usable result.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw StructuralError(what);
}

inline void require_config(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace detail
}  // namespace slt
