#pragma once

#include <stdexcept>
#include <string>

namespace cmr {

// Error taxonomy mirrors the CLI exit codes: usage (1), data (2), numeric (3).

struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/dimension violations. A kind of data error but thrown from deep in
// the math layers, so it gets its own type for targeted catches in tests.
struct DimensionError : DataError {
    explicit DimensionError(const std::string& msg) : DataError(msg) {}
};

}  // namespace cmr
