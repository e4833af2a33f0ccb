#pragma once

#include <stdexcept>

namespace mgfi {

// CLI exit code 2: missing/malformed files, bad configs, dataset problems.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// CLI exit code 3: non-finite values produced during training/evaluation.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mgfi
