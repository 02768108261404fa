#pragma once

#include <stdexcept>
#include <string>

namespace mvtm {

/// Bad user input: unknown ids, dimension mismatches, malformed files.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A file or config whose structure does not match what the reader expects.
class SchemaError : public InputError {
public:
    using InputError::InputError;
};

/// Factorization failures, non-finite objective values or gradients.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A call made against an object in the wrong state (e.g. conditional
/// sampling on a map that was not fitted with a block-last ordering).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace mvtm
