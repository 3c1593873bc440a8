#pragma once

#include <stdexcept>

namespace veingen {

// Invalid configuration or arguments; maps to process exit code 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A single identity or sample failed to generate; callers may retry with a
// fresh seed. Sustained failures map to process exit code 2.
struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dataset contents disagree with their manifest; maps to process exit code 3.
struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace veingen
