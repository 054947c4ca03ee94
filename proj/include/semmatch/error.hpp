#pragma once

#include <stdexcept>
#include <string>

namespace semmatch {

// Base class for all library errors. Subclasses sort errors into the two
// CLI exit classes: input problems (exit 1) and runtime faults (exit 2).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user input: malformed config, bundle schema violation, predicate
// syntax or context violation, dataset invariant failure.
struct InputError : Error {
    using Error::Error;
};

// Predicate text failed to parse. Carries the byte offset of the failure.
struct ParseError : InputError {
    ParseError(const std::string& message, std::size_t position)
        : InputError(message + " (at position " + std::to_string(position) + ")"),
          position(position) {}
    std::size_t position;
};

// Bundle or config JSON does not match the documented schema.
struct SchemaError : InputError {
    using InputError::InputError;
};

// Dataset invariant violations surfaced as an error.
struct ValidationError : InputError {
    using InputError::InputError;
};

// Experiment configuration is structurally valid JSON but inconsistent.
struct ConfigError : InputError {
    using InputError::InputError;
};

// Runtime evaluation fault: missing atom bindings, degenerate inputs,
// shape mismatches.
struct EvalError : Error {
    using Error::Error;
};

}  // namespace semmatch
