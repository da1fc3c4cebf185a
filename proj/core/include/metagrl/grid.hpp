#pragma once

#include <Eigen/Dense>

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace metagrl {

class GridError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when an outage would split the network into several islands.
class IslandingError : public GridError {
public:
    using GridError::GridError;
};

enum class BusKind { slack, generator, load };

const char* to_string(BusKind kind);
BusKind bus_kind_from_string(const std::string& text);

struct BusSpec {
    int id = 0;
    BusKind kind = BusKind::load;
    double u_min = 0.95;  // pu
    double u_max = 1.05;  // pu
    double theta_min = -0.6;  // rad
    double theta_max = 0.6;   // rad
};

struct LineSpec {
    int id = 0;
    int from_bus = 0;
    int to_bus = 0;
    double conductance = 0.0;  // series G, pu
    double susceptance = 0.0;  // series B, pu (negative for inductive lines)
    double flow_limit = 1.0;   // pu MVA
    bool in_service = true;
};

// Down-ramp is a nonpositive bound so that ramp_down <= P(t) - P(t-1) <= ramp_up.
struct ThermalGenerator {
    int bus = 0;
    double p_min = 0.0, p_max = 0.0;  // MW
    double q_min = 0.0, q_max = 0.0;  // MVAr
    double ramp_down = 0.0, ramp_up = 0.0;  // MW per interval
    double cost_a = 0.0;  // $/MW^2h
    double cost_b = 0.0;  // $/MWh
    double cost_c = 0.0;  // $ per interval
};

struct RenewableUnit {
    int bus = 0;
    double capacity = 0.0;             // MW
    double curtailment_penalty = 0.0;  // $/MWh
};

struct StorageUnit {
    int bus = 0;
    double charge_max = 0.0, discharge_max = 0.0;  // MW
    double energy_min = 0.0, energy_max = 0.0;     // MWh
    double eta_charge = 1.0, eta_discharge = 1.0;
    double degradation_cost = 0.0;  // $/MWh
    double initial_soc_fraction = 0.5;

    double initial_energy() const { return initial_soc_fraction * energy_max; }
};

struct GridSpec {
    std::vector<BusSpec> buses;
    std::vector<LineSpec> lines;
    std::vector<ThermalGenerator> thermal_units;
    std::vector<RenewableUnit> renewable_units;
    std::vector<StorageUnit> storage_units;
    double base_mva = 100.0;
    double dt_hours = 0.25;

    int bus_count() const { return static_cast<int>(buses.size()); }
    // Index of the single slack bus; throws GridError when there is not exactly one.
    int slack_bus() const;
    // Index into thermal_units of the generator that balances the network.
    int slack_thermal() const;
    int line_index(int line_id) const;
    std::set<int> out_of_service_lines() const;
};

struct Violation {
    std::string element;  // "bus", "line", "thermal", ...
    int id = -1;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
    bool mentions(const std::string& message) const;
};

// Node features plus the in-service topology, rebuilt whenever the topology changes.
struct GridGraph {
    Eigen::MatrixXd adj;  // n x n, symmetric 0/1, zero diagonal
    Eigen::MatrixXd eig;  // n x m node features
};

ValidationReport validate_spec(const GridSpec& spec);
void require_valid(const GridSpec& spec);

Eigen::MatrixXd adjacency(const GridSpec& spec);
bool is_connected(const GridSpec& spec);

// Copy of `spec` with the listed lines taken out of service.
GridSpec apply_outage(const GridSpec& spec, const std::set<int>& line_ids);
// Inverse of apply_outage: puts the listed lines back in service.
GridSpec restore_lines(const GridSpec& spec, const std::set<int>& line_ids);

GridGraph build_graph(const GridSpec& spec, const Eigen::MatrixXd& node_features);

}  // namespace metagrl
