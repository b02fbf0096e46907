#pragma once

#include <stdexcept>
#include <string>

namespace cclap {

// Exit-code contract: config -> 1, data -> 2, io -> 3.
// Contract violations (bad shapes, broken preconditions) map to 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : ContractError {
    using ContractError::ContractError;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace cclap
