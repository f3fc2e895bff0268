#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nfqmc {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition (dimension mismatch, bad count).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Requested dimension is not supported by a generator or map.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Problem instance too large for an exhaustive algorithm.
class SizeLimitError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// A non-finite value appeared while evaluating a flow.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::size_t layer)
      : Error(what + " (layer " + std::to_string(layer) + ")"), layer_(layer) {}
  explicit NumericError(const std::string& what)
      : Error(what), layer_(static_cast<std::size_t>(-1)) {}
  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t layer_;
};

/// Loss became non-finite, or too many samples were masked, during training.
class TrainingDivergence : public Error {
 public:
  using Error::Error;
};

/// Weights or chains that carry no information (all -inf, empty chain, zero sd).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Malformed flow file.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Unknown registry name.
class LookupError : public Error {
 public:
  using Error::Error;
};

}  // namespace nfqmc
