#pragma once
#include <stdexcept>
#include <string>

namespace harcl {

// Error taxonomy. The CLI maps the ones users can trigger to distinct
// exit codes (see tools/harcl_main.cpp).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StructuralError : Error { using Error::Error; };  // shape/label/support mismatch
struct ConfigError     : Error { using Error::Error; };  // bad hyperparameter or run option
struct NumericError    : Error { using Error::Error; };  // non-finite values, divergence
struct IngestError     : Error { using Error::Error; };  // dataset layout/parse failure
struct ExhaustionError : Error { using Error::Error; };  // sample pool ran dry
struct ProtocolError   : Error { using Error::Error; };  // scenario sequencing misuse
struct EmptyEvalError  : Error { using Error::Error; };  // accuracy over an empty example set
struct MetricError     : Error { using Error::Error; };  // metric undefined for the request

}  // namespace harcl
