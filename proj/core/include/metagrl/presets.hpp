#pragma once

#include "metagrl/grid.hpp"
#include "metagrl/scenario.hpp"

#include <cstdint>

namespace metagrl {

// Slack bus 0 feeding a load at bus 1 over one line; no storage or renewables.
GridSpec two_bus_grid(double conductance = 1.0, double susceptance = -10.0);

// Three-bus ring: slack bus 0 with an expensive wide-range unit, generator
// bus 1 with a cheap ramp-limited unit, load bus 2 with a renewable unit and
// a storage unit. One-hour stages.
GridSpec three_bus_grid();

struct TinyInstance {
    GridSpec spec;
    ScenarioSample sample;
};

// Random two-bus instance with one slack thermal unit, one storage unit at
// the load bus and no renewables; loads drawn per stage.
TinyInstance random_tiny_instance(std::uint64_t seed, int horizon = 4);

}  // namespace metagrl
