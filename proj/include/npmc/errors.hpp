#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace npmc {

/// Invalid configuration or precondition violation (CLI exit code 1).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A computation left the representable range (CLI exit code 2).
class NumericalRangeError : public std::runtime_error {
public:
    NumericalRangeError(const std::string& what, std::size_t component)
        : std::runtime_error(what), component_(component) {}

    std::size_t component() const noexcept { return component_; }

private:
    std::size_t component_;
};

/// Every particle (or sample) received zero weight.
class DegenerateWeightsError : public std::runtime_error {
public:
    explicit DegenerateWeightsError(const std::string& what, std::size_t tick = 0)
        : std::runtime_error(what), tick_(tick) {}

    /// Observation tick (1-based) at which the filter collapsed; 0 when not applicable.
    std::size_t tick() const noexcept { return tick_; }

private:
    std::size_t tick_;
};

/// A simulation step failed; carries the step index and the failing component.
class SimulationError : public NumericalRangeError {
public:
    SimulationError(const std::string& what, std::size_t step, std::size_t component)
        : NumericalRangeError(what, component), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

} // namespace npmc
