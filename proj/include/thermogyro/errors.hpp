#pragma once

#include <stdexcept>
#include <string>

namespace tg {

// Malformed or inconsistent input data (files, records, schemas).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite arithmetic is required (diverged training).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace tg
