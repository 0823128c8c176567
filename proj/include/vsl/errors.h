#pragma once

#include <stdexcept>
#include <string>

namespace vsl {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Missing, unreadable or truncated files. CLI exit code 3.
struct IoError : Error {
    using Error::Error;
};

// Malformed file content: bad magic, bad JSON, short payload. CLI exit code 3.
struct ParseError : Error {
    using Error::Error;
};

// Well-formed input that violates a data invariant. CLI exit code 4.
struct ValidationError : Error {
    using Error::Error;
};

// Precondition violation at an API boundary. CLI exit code 4.
struct ContractError : Error {
    using Error::Error;
};

// Inconsistent or unsupported configuration. CLI exit code 4.
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace vsl
