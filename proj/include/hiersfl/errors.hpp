#pragma once

#include <stdexcept>
#include <string>

namespace hiersfl {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (shape mismatch, stale state, ...).
struct ContractViolation : Error {
    using Error::Error;
};

// Malformed argument values (out-of-range label, non-positive bound, ...).
struct InputError : Error {
    using Error::Error;
};

// A file did not match its expected on-disk format.
struct FormatError : Error {
    using Error::Error;
};

// A partition or schedule demand cannot be satisfied by the available data.
struct CapacityError : Error {
    using Error::Error;
};

// Non-finite values reached a numeric kernel.
struct NumericError : Error {
    using Error::Error;
};

// Invalid experiment configuration; message lists every violation found.
struct ConfigError : Error {
    using Error::Error;
};

// A module error that surfaced inside a protocol run, annotated with
// (round, client, phase) so the failing step can be located.
struct ProtocolError : Error {
    using Error::Error;
};

}  // namespace hiersfl
