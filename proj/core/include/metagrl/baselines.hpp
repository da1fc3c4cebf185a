#pragma once

#include "metagrl/env.hpp"
#include "metagrl/scenario.hpp"

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace metagrl {

class OracleTooLargeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class OracleUnsupportedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DpDiscretization {
    double energy_step = 1.0;  // MWh
    double power_step = 1.0;   // MW, non-slack thermal units
    NetworkModel network = NetworkModel::copper_plate;
    // Bound on the number of joint device settings per stage.
    double guard = 1e6;
};

struct OracleResult {
    double cost = 0.0;     // forward replay of the schedule through the environment
    double dp_cost = 0.0;  // optimal value of the recursion
    std::vector<DispatchAction> schedule;
    long states_per_stage = 0;
    long evaluations = 0;
};

// Backward dynamic programming over (previous output cell of each non-slack
// thermal unit, energy cell of each storage unit). The slack unit and the
// renewable curtailment of each stage are solved exactly for every lattice
// transition. The slack unit's ramp limits must not bind, and in DC mode all
// renewable units must share a bus.
OracleResult ops_oracle(const GridSpec& spec, const ScenarioSample& sample, const DpDiscretization& disc);

// Lattices used by the oracle, exposed for tests.
std::vector<double> thermal_lattice(const ThermalGenerator& tg, double step);
std::vector<double> energy_lattice(const StorageUnit& es, double step);

// Slack output and curtailment that minimise the stage's slack plus
// curtailment cost. `net_demand` is the MW the slack must cover when every
// renewable unit runs at its ceiling; `shift` maps curtailment to line flows.
struct SlackDispatch {
    bool feasible = false;
    double cost = 0.0;
    double slack = 0.0;
    std::vector<double> re;
};

SlackDispatch dispatch_slack(const GridSpec& spec, const std::vector<double>& re_ceiling, double net_demand,
                             double curtail_lo = 0.0, double curtail_hi = std::numeric_limits<double>::infinity());

std::string schedule_csv(const GridSpec& spec, const std::vector<DispatchAction>& schedule);

struct MpcConfig {
    int horizon = 4;
    NetworkModel network = NetworkModel::dc;
    int max_iterations = 4000;     // projected-gradient iterations per penalty round
    int penalty_rounds = 25;
    double tolerance = 1e-7;       // relative change of the iterate
    double feasibility_tol = 1e-6; // MW
};

struct MpcResult {
    DispatchAction action;
    std::vector<DispatchAction> plan;  // one per stage of the window
    double planned_cost = 0.0;
    bool converged = false;  // false when the iteration cap was hit
    double max_violation = 0.0;
};

// Deterministic window problem from `state`: stage 0 uses the realized loads
// and ceilings in `state`, later stages use `forecast` rows 1..n-1 (row 0 of
// the forecast is ignored). Only the first stage is meant to be applied.
MpcResult mpc_plan(const DispatchState& state, const GridSpec& spec, const Forecast& forecast, const MpcConfig& config);
DispatchAction mpc_policy(const DispatchState& state, const GridSpec& spec, const ScenarioFamily& family,
                          const MpcConfig& config, bool* converged = nullptr);

// Rolls the MPC controller through a sample; returns the episode trace.
EpisodeTrace run_mpc(const GridSpec& spec, const ScenarioSample& sample, const ScenarioFamily& family,
                     const MpcConfig& config, const EnvConfig& env);

// Replays absolute setpoints through the environment (the slack entry is
// recomputed by the environment).
EpisodeTrace replay_schedule(const GridSpec& spec, const ScenarioSample& sample, const std::vector<DispatchAction>& schedule,
                             const EnvConfig& env);

// F_ops / F * 100.
double optimality(double f_ops, double f);

}  // namespace metagrl
