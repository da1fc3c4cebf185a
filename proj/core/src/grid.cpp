#include "metagrl/grid.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace metagrl {

const char* to_string(BusKind kind) {
    switch (kind) {
        case BusKind::slack: return "slack";
        case BusKind::generator: return "generator";
        case BusKind::load: return "load";
    }
    return "?";
}

BusKind bus_kind_from_string(const std::string& text) {
    if (text == "slack") return BusKind::slack;
    if (text == "generator") return BusKind::generator;
    if (text == "load") return BusKind::load;
    throw GridError("unknown bus kind '" + text + "'");
}

int GridSpec::slack_bus() const {
    int found = -1;
    for (int i = 0; i < bus_count(); ++i) {
        if (buses[i].kind != BusKind::slack) continue;
        if (found >= 0) throw GridError("multiple slack buses");
        found = i;
    }
    if (found < 0) throw GridError("no slack bus");
    return found;
}

int GridSpec::slack_thermal() const {
    const int bus = slack_bus();
    for (int k = 0; k < static_cast<int>(thermal_units.size()); ++k) {
        if (thermal_units[k].bus == bus) return k;
    }
    throw GridError("slack bus has no thermal generator");
}

int GridSpec::line_index(int line_id) const {
    for (int k = 0; k < static_cast<int>(lines.size()); ++k) {
        if (lines[k].id == line_id) return k;
    }
    return -1;
}

std::set<int> GridSpec::out_of_service_lines() const {
    std::set<int> out;
    for (const auto& line : lines) {
        if (!line.in_service) out.insert(line.id);
    }
    return out;
}

bool ValidationReport::mentions(const std::string& message) const {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const Violation& v) { return v.message == message; });
}

Eigen::MatrixXd adjacency(const GridSpec& spec) {
    const int n = spec.bus_count();
    Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(n, n);
    for (const auto& line : spec.lines) {
        if (!line.in_service) continue;
        if (line.from_bus == line.to_bus) continue;
        if (line.from_bus < 0 || line.from_bus >= n || line.to_bus < 0 || line.to_bus >= n) continue;
        adj(line.from_bus, line.to_bus) = 1.0;
        adj(line.to_bus, line.from_bus) = 1.0;
    }
    return adj;
}

bool is_connected(const GridSpec& spec) {
    const int n = spec.bus_count();
    if (n == 0) return true;
    const Eigen::MatrixXd adj = adjacency(spec);
    std::vector<bool> seen(n, false);
    std::vector<int> stack{0};
    seen[0] = true;
    int visited = 1;
    while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        for (int j = 0; j < n; ++j) {
            if (adj(i, j) != 0.0 && !seen[j]) {
                seen[j] = true;
                ++visited;
                stack.push_back(j);
            }
        }
    }
    return visited == n;
}

ValidationReport validate_spec(const GridSpec& spec) {
    ValidationReport report;
    auto add = [&](std::string element, int id, std::string message) {
        report.violations.push_back({std::move(element), id, std::move(message)});
    };
    const int n = spec.bus_count();
    auto bus_exists = [&](int b) { return b >= 0 && b < n; };

    if (n == 0) add("grid", -1, "no buses");
    if (!(spec.base_mva > 0.0)) add("grid", -1, "base_mva must be positive");
    if (!(spec.dt_hours > 0.0)) add("grid", -1, "interval must be positive");

    int slack_count = 0;
    for (int i = 0; i < n; ++i) {
        const auto& bus = spec.buses[i];
        if (bus.id != i) add("bus", bus.id, "bus ids must be 0..n-1 in order");
        if (bus.kind == BusKind::slack) ++slack_count;
        if (!(bus.u_min < bus.u_max)) add("bus", bus.id, "voltage bounds inverted");
        if (!(bus.theta_min < bus.theta_max)) add("bus", bus.id, "angle bounds inverted");
    }
    if (slack_count > 1) add("grid", -1, "multiple slack buses");
    if (slack_count == 0 && n > 0) add("grid", -1, "no slack bus");

    std::set<int> line_ids;
    for (const auto& line : spec.lines) {
        if (!line_ids.insert(line.id).second) add("line", line.id, "duplicate line id");
        if (line.from_bus == line.to_bus) add("line", line.id, "self-loop line");
        if (!bus_exists(line.from_bus) || !bus_exists(line.to_bus)) add("line", line.id, "unknown bus");
        if (!(line.flow_limit > 0.0)) add("line", line.id, "flow limit must be positive");
    }

    for (int k = 0; k < static_cast<int>(spec.thermal_units.size()); ++k) {
        const auto& tg = spec.thermal_units[k];
        if (!bus_exists(tg.bus)) add("thermal", k, "unknown bus");
        if (tg.p_min > tg.p_max) add("thermal", k, "active bounds inverted");
        if (tg.q_min > tg.q_max) add("thermal", k, "reactive bounds inverted");
        if (tg.ramp_down > 0.0 || tg.ramp_up < 0.0) add("thermal", k, "ramp bounds must satisfy ramp_down <= 0 <= ramp_up");
        if (tg.cost_a < 0.0) add("thermal", k, "quadratic cost must be nonnegative");
    }
    for (int k = 0; k < static_cast<int>(spec.renewable_units.size()); ++k) {
        const auto& re = spec.renewable_units[k];
        if (!bus_exists(re.bus)) add("renewable", k, "unknown bus");
        if (!(re.capacity > 0.0)) add("renewable", k, "capacity must be positive");
        if (re.curtailment_penalty < 0.0) add("renewable", k, "curtailment penalty must be nonnegative");
    }
    for (int k = 0; k < static_cast<int>(spec.storage_units.size()); ++k) {
        const auto& es = spec.storage_units[k];
        if (!bus_exists(es.bus)) add("storage", k, "unknown bus");
        if (!(0.0 <= es.energy_min && es.energy_min < es.energy_max)) add("storage", k, "energy bounds invalid");
        if (es.charge_max < 0.0 || es.discharge_max < 0.0) add("storage", k, "power bounds must be nonnegative");
        if (!(es.eta_charge > 0.0 && es.eta_charge <= 1.0) || !(es.eta_discharge > 0.0 && es.eta_discharge <= 1.0)) {
            add("storage", k, "efficiencies must lie in (0,1]");
        }
        const double e0 = es.initial_energy();
        if (e0 < es.energy_min || e0 > es.energy_max) add("storage", k, "initial energy outside bounds");
        if (es.degradation_cost < 0.0) add("storage", k, "degradation cost must be nonnegative");
    }

    if (slack_count == 1) {
        bool has_slack_tg = false;
        for (const auto& tg : spec.thermal_units) has_slack_tg = has_slack_tg || (bus_exists(tg.bus) && spec.buses[tg.bus].kind == BusKind::slack);
        if (!has_slack_tg) add("grid", -1, "slack bus has no thermal generator");
    }
    if (n > 0 && !is_connected(spec)) add("grid", -1, "network is not connected");
    return report;
}

void require_valid(const GridSpec& spec) {
    const auto report = validate_spec(spec);
    if (report.ok()) return;
    std::ostringstream os;
    os << "invalid grid spec:";
    for (const auto& v : report.violations) os << " [" << v.element << ' ' << v.id << ": " << v.message << ']';
    throw GridError(os.str());
}

GridSpec apply_outage(const GridSpec& spec, const std::set<int>& line_ids) {
    GridSpec out = spec;
    for (int id : line_ids) {
        const int k = out.line_index(id);
        if (k < 0) throw GridError("unknown line id " + std::to_string(id));
        out.lines[k].in_service = false;
    }
    if (!line_ids.empty() && !is_connected(out)) {
        std::ostringstream os;
        os << "islanding: removing lines {";
        bool first = true;
        for (int id : line_ids) {
            os << (first ? "" : ",") << id;
            first = false;
        }
        os << "} disconnects the network";
        throw IslandingError(os.str());
    }
    return out;
}

GridSpec restore_lines(const GridSpec& spec, const std::set<int>& line_ids) {
    GridSpec out = spec;
    for (int id : line_ids) {
        const int k = out.line_index(id);
        if (k < 0) throw GridError("unknown line id " + std::to_string(id));
        out.lines[k].in_service = true;
    }
    return out;
}

GridGraph build_graph(const GridSpec& spec, const Eigen::MatrixXd& node_features) {
    if (node_features.rows() != spec.bus_count()) {
        throw GridError("feature rows (" + std::to_string(node_features.rows()) + ") != bus count (" +
                        std::to_string(spec.bus_count()) + ")");
    }
    return GridGraph{adjacency(spec), node_features};
}

}  // namespace metagrl
