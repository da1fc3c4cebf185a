#pragma once

#include "metagrl/grid.hpp"

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace metagrl {

class PowerFlowError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SingularJacobianError : public PowerFlowError {
public:
    using PowerFlowError::PowerFlowError;
};

// Net nodal injections in per-unit. Slack entries are ignored (solved).
struct InjectionSet {
    Eigen::VectorXd p;
    Eigen::VectorXd q;
    Eigen::VectorXd v_set;  // used at slack and generator buses

    static InjectionSet zeros(const GridSpec& spec);
};

struct PowerFlowConfig {
    double tolerance = 1e-8;  // max-norm of the power mismatch, pu
    int max_iterations = 30;
    bool flat_start = true;
    // Warm start, used when flat_start is false.
    std::optional<Eigen::VectorXd> initial_u;
    std::optional<Eigen::VectorXd> initial_theta;
};

struct LineFlow {
    int line_id = 0;
    double p_from = 0.0, q_from = 0.0;
    double p_to = 0.0, q_to = 0.0;
    double loss = 0.0;  // p_from + p_to

    double apparent_max() const;
};

struct PowerFlowSolution {
    Eigen::VectorXd u;
    Eigen::VectorXd theta;
    Eigen::VectorXd p_injection;  // computed net injection per bus
    Eigen::VectorXd q_injection;
    std::vector<LineFlow> flows;  // one per line; zero for lines out of service
    double slack_p = 0.0;
    double slack_q = 0.0;
    bool converged = false;
    int iterations = 0;
    double mismatch = 0.0;
};

struct DcSolution {
    Eigen::VectorXd theta;
    std::vector<double> flows;  // per line, from -> to
    double slack_injection = 0.0;
};

struct LimitEntry {
    std::string quantity;  // "voltage", "angle", "flow", "reactive"
    int element = -1;      // bus index, line id or thermal index
    double value = 0.0;
    double bound = 0.0;
    double excess = 0.0;      // distance beyond the violated bound
    double normalized = 0.0;  // excess / bound range
};

struct ViolationReport {
    std::vector<LimitEntry> voltage;
    std::vector<LimitEntry> angle;
    std::vector<LimitEntry> flow;
    std::vector<LimitEntry> reactive;
    double severity = 0.0;

    bool empty() const { return voltage.empty() && angle.empty() && flow.empty() && reactive.empty(); }
    std::size_t count() const { return voltage.size() + angle.size() + flow.size() + reactive.size(); }
};

struct Admittance {
    Eigen::MatrixXd g;
    Eigen::MatrixXd b;
};

Admittance build_admittance(const GridSpec& spec);

// Polar Newton-Raphson. Slack bus is the reference, generator buses are PV and
// load buses PQ. Non-convergence is reported in the solution, not thrown.
PowerFlowSolution solve_ac(const GridSpec& spec, const InjectionSet& inj, const PowerFlowConfig& config = {});

// Linearised lossless flow; the slack bus absorbs the imbalance.
DcSolution solve_dc(const GridSpec& spec, const Eigen::VectorXd& active_injection);

// Flow sensitivity: flows = ptdf * injections, with the slack absorbing the balance.
Eigen::MatrixXd dc_flow_sensitivity(const GridSpec& spec);

// q_tg holds per-unit reactive output, one entry per thermal unit.
ViolationReport check_limits(const PowerFlowSolution& sol, const GridSpec& spec, const Eigen::VectorXd& q_tg);
ViolationReport check_dc_limits(const DcSolution& sol, const GridSpec& spec);

std::string solution_csv(const PowerFlowSolution& sol);

}  // namespace metagrl
