#pragma once

#include "metagrl/grid.hpp"
#include "metagrl/powerflow.hpp"
#include "metagrl/scenario.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

namespace metagrl {

enum class NetworkModel { ac, dc, copper_plate };

const char* to_string(NetworkModel model);
NetworkModel network_model_from_string(const std::string& text);

struct EnvConfig {
    NetworkModel network = NetworkModel::ac;
    // $/MWh applied to slack excess and to base_mva * violation severity.
    // Nonpositive means 10x the largest linear thermal cost.
    double penalty_weight = 0.0;
    double nonconvergence_penalty = 1e4;
    // Nonpositive means default_reward_scale(spec, horizon).
    double reward_scale = 0.0;
    bool hard_fail = false;
    double voltage_setpoint = 1.0;
    PowerFlowConfig powerflow;
};

double effective_penalty_weight(const GridSpec& spec, const EnvConfig& config);
// Cost of running every thermal unit at mid-range for a full horizon.
double default_reward_scale(const GridSpec& spec, int horizon);
double effective_reward_scale(const GridSpec& spec, int horizon, const EnvConfig& config);

struct DispatchState {
    int t = 0;
    int horizon = 0;
    std::vector<double> tg_prev;     // MW, P^TG(t-1)
    std::vector<double> es_energy;   // MWh
    Eigen::VectorXd load_p;          // MW per bus
    Eigen::VectorXd load_q;          // MVAr per bus
    std::vector<double> re_ceiling;  // MW per renewable unit
    std::set<int> out_lines;
    Eigen::VectorXd u;  // last solved voltages, carried forward on failure
    Eigen::VectorXd theta;

    double time_angle() const;
};

// Storage power is signed: positive discharges, negative charges, so charge
// and discharge can never both be nonzero.
struct DispatchAction {
    std::vector<double> tg;
    std::vector<double> re;
    std::vector<double> es;

    Eigen::VectorXd flatten() const;
    static DispatchAction unflatten(const Eigen::VectorXd& v, const GridSpec& spec);
    double charge(std::size_t k) const { return es[k] < 0.0 ? -es[k] : 0.0; }
    double discharge(std::size_t k) const { return es[k] > 0.0 ? es[k] : 0.0; }
};

int action_dim(const GridSpec& spec);

// Per-component [lo, hi] in the flattened action order (tg, re, es). When ramp
// and static limits do not overlap the component collapses to the nearest
// static bound and is listed in `collapsed`.
struct ActionBox {
    std::vector<double> lo;
    std::vector<double> hi;
    std::vector<int> collapsed;

    bool empty() const { return !collapsed.empty(); }
    bool contains(const Eigen::VectorXd& flat, double tol = 1e-9) const;
};

struct CostBreakdown {
    double c_tg = 0.0;
    double c_re = 0.0;
    double c_es = 0.0;
    double penalty = 0.0;
    double total = 0.0;
};

struct Transition {
    DispatchState state;
    Eigen::VectorXd raw_action;  // policy output in [-1, 1]
    DispatchAction action;       // realized setpoints, slack included
    double reward = 0.0;
    DispatchState next_state;
    CostBreakdown cost;
    double severity = 0.0;
    bool converged = true;
    bool done = false;
    GridGraph graph;
    GridGraph next_graph;
};

struct StepResult {
    DispatchState next;
    double reward = 0.0;
    CostBreakdown cost;
    ViolationReport violations;
    DispatchAction realized;
    double slack_excess = 0.0;  // MW the slack unit could not absorb
    bool converged = true;
    bool done = false;
};

struct EpisodeTrace {
    std::uint64_t id = 0;
    int family_id = 0;
    std::vector<Transition> transitions;
    double cumulative_cost = 0.0;
    double cumulative_penalty = 0.0;
    bool terminated_early = false;
};

DispatchState reset(const GridSpec& spec, const ScenarioSample& sample, const EnvConfig& config = {});

ActionBox feasible_action_box(const DispatchState& state, const GridSpec& spec);

// Affine map of raw in [-1, 1] onto the box.
DispatchAction project_action(const Eigen::VectorXd& raw, const ActionBox& box, const GridSpec& spec);
// Inverse of project_action; degenerate components map to 0.
Eigen::VectorXd normalize_action(const DispatchAction& action, const ActionBox& box);

// Operating cost of one stage, penalty excluded.
CostBreakdown stage_cost(const DispatchAction& action, const DispatchState& state, const GridSpec& spec);

StepResult step(const DispatchState& state, const DispatchAction& action, const GridSpec& spec,
                const ScenarioSample& sample, const EnvConfig& config = {});

// Node features, one row per bus, columns:
// [P^D, Q^D, P_max^RE, P^TG(t-1), E^ES/E_max, is_slack, sin(tod), cos(tod)];
// powers in per-unit of base_mva.
constexpr int kNodeFeatures = 8;
Eigen::MatrixXd node_features(const DispatchState& state, const GridSpec& spec);
GridSpec topology_at(const GridSpec& spec, const DispatchState& state);
GridGraph state_graph(const DispatchState& state, const GridSpec& spec);

// Maps (state, graph, z) to a raw action in [-1, 1]^dim.
using Policy = std::function<Eigen::VectorXd(const DispatchState&, const GridGraph&, const Eigen::VectorXd&)>;

EpisodeTrace rollout(const Policy& policy, const GridSpec& spec, const ScenarioSample& sample,
                     const Eigen::VectorXd& z, const EnvConfig& config = {});

// One JSON object per transition.
std::string trace_jsonl(const EpisodeTrace& trace);
// Rebuilds the learning-relevant part of each transition (graphs, raw action,
// reward, cost, done flag); other state fields are left empty.
std::vector<EpisodeTrace> traces_from_jsonl(const std::string& text);

}  // namespace metagrl
