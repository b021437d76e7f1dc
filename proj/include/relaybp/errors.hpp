#pragma once

#include <stdexcept>
#include <string>

namespace relaybp {

// Error taxonomy. The CLI maps these onto process exit codes:
//   ConfigError -> 2, NumericError -> 3, IoError/FormatError -> 4.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/kernel shape contract violations.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid run configuration, architecture spec, or routing spec.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed data file (bad magic, truncation, wrong record size).
struct FormatError : Error {
    using Error::Error;
};

// Out-of-range label or index.
struct IndexError : Error {
    using Error::Error;
};

// Mismatched objects passed together (trace vs spec, images vs labels).
struct ConsistencyError : Error {
    using Error::Error;
};

// Filesystem failures.
struct IoError : Error {
    using Error::Error;
};

// NaN/Inf detected, or other numeric breakdown.
struct NumericError : Error {
    using Error::Error;
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int config = 2;
inline constexpr int numeric = 3;
inline constexpr int io = 4;
}  // namespace exit_code

}  // namespace relaybp
