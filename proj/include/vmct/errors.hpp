#pragma once

#include <stdexcept>
#include <string>

namespace vmct {

// Error taxonomy maps onto CLI exit codes: config 2, data/format 3, numeric 4.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dataset-level failures (impossible patch constraints, bad manifests).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace vmct
