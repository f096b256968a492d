#pragma once

#include <stdexcept>
#include <string>

namespace peftser {

// Error families map onto the CLI exit codes:
//   UsageError (and subclasses) -> 1, DataError -> 2, NumericError -> 3.

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or axis disagreement between tensors.
struct DimensionError : UsageError {
    using UsageError::UsageError;
};

// Sequence length exceeds what the model geometry can hold.
struct CapacityError : UsageError {
    using UsageError::UsageError;
};

// Malformed or out-of-contract input data (manifests, feature files, labels).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required (diverged training, bad checks).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace peftser
