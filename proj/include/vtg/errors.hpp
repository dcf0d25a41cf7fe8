#pragma once

#include <stdexcept>
#include <string>

namespace vtg {

// Error taxonomy. The CLI maps input-side failures (argument, config, parse,
// validation) to exit code 1 and everything else to exit code 2.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller passed a value outside an operation's contract.
class argument_error : public error {
public:
    using error::error;
};

// A file could not be decoded (always carries the offending location).
class parse_error : public error {
public:
    using error::error;
};

// Decoded data violates a corpus/schema invariant.
class validation_error : public error {
public:
    using error::error;
};

// Run configuration is inconsistent or contains unknown keys.
class config_error : public error {
public:
    using error::error;
};

// Operation called in a state where it has no defined result.
class state_error : public error {
public:
    using error::error;
};

// No eligible candidate exists for a stochastic selection.
class sampling_error : public error {
public:
    using error::error;
};

class io_error : public error {
public:
    using error::error;
};

} // namespace vtg
