#pragma once

#include <stdexcept>
#include <string>

namespace secaps {

// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Incompatible tensor shapes for an operation.
struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(what) {}
};

// A computation produced a NaN or infinity.
struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(what) {}
};

// A precondition of an operation was violated by the caller.
struct ContractError : Error {
  explicit ContractError(const std::string& what) : Error(what) {}
};

// An operation was invoked in a state that does not support it.
struct StateError : Error {
  explicit StateError(const std::string& what) : Error(what) {}
};

// Two forward passes of a supposedly deterministic function disagreed.
struct DeterminismError : Error {
  explicit DeterminismError(const std::string& what) : Error(what) {}
};

// The finite-difference stencil straddles a point where the function is
// not differentiable (e.g. an argmax tie).
struct NonDifferentiablePointError : Error {
  explicit NonDifferentiablePointError(const std::string& what) : Error(what) {}
};

// Malformed input data (bad JSONL line, wrong embedding arity, ...).
struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error(what) {}
};

// Structurally valid input missing required fields or with wrong types.
struct SchemaError : Error {
  explicit SchemaError(const std::string& what) : Error(what) {}
};

// Checkpoint file does not start with the expected magic string.
struct BadMagicError : Error {
  explicit BadMagicError(const std::string& what) : Error(what) {}
};

// Checkpoint file ends before the bytes its own header promises.
struct TruncatedCheckpointError : Error {
  explicit TruncatedCheckpointError(const std::string& what) : Error(what) {}
};

// Checkpoint tensor shapes disagree with the configuration in its header.
struct CheckpointShapeError : Error {
  explicit CheckpointShapeError(const std::string& what) : Error(what) {}
};

}  // namespace secaps
