#pragma once

#include <stdexcept>
#include <string>

namespace change {

// Malformed or missing input data (bad graph line, corrupt checkpoint, ...).
// The CLI maps this to exit code 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad invocation (unknown flag combinations etc.). CLI exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace change
