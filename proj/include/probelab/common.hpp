#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace probelab {

// Error taxonomy used across the library. Callers that need to distinguish
// failure classes catch the subtype; the CLI catches Error and exits nonzero.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/matrix extents do not line up.
struct ShapeError : Error {
  using Error::Error;
};

// A documented precondition was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

// Invalid configuration (bad field value, unknown name).
struct ConfigError : Error {
  using Error::Error;
};

// Non-finite values or other numeric breakdown at runtime.
struct NumericError : Error {
  using Error::Error;
};

// Filesystem / serialization failure.
struct IoError : Error {
  using Error::Error;
};

// Hard-sample filtering produced an unusable dataset.
struct FilterError : Error {
  using Error::Error;
};

enum class Precision { f32, f64 };

inline const char* precision_name(Precision p) {
  return p == Precision::f32 ? "f32" : "f64";
}

}  // namespace probelab
