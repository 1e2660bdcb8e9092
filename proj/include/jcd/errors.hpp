#pragma once

#include <stdexcept>
#include <string>

namespace jcd {

struct DimensionMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ResampleExhausted : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SingularPilotGram : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalDivergence : std::runtime_error {
    NumericalDivergence(const std::string& what, int iteration)
        : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
          iteration(iteration) {}
    int iteration;
};

struct InvalidWindow : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct EmptyPlan : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct QuadratureUnstable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonPhysical : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ZeroReference : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace jcd
