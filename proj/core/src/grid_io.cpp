#include "metagrl/grid_io.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace metagrl {

namespace {

const std::set<std::string> kSections = {"meta", "buses", "lines", "thermal", "renewable", "storage"};

}  // namespace

GridSpec grid_spec_from_document(const TextDocument& doc) {
    for (const auto& name : doc.section_order) {
        if (!kSections.count(name)) throw ParseError("unknown section [" + name + "]");
    }
    GridSpec spec;
    const auto& meta = doc.records("meta");
    if (meta.size() > 1) throw ParseError("[meta] must hold a single record");
    for (const auto& rec : meta) {
        RecordReader r(rec, "meta");
        spec.base_mva = r.number_or("base_mva", spec.base_mva);
        spec.dt_hours = r.number_or("dt_hours", spec.dt_hours);
        r.finish();
    }
    for (const auto& rec : doc.records("buses")) {
        RecordReader r(rec, "buses");
        BusSpec b;
        b.id = r.integer("id");
        try {
            b.kind = bus_kind_from_string(r.text("kind"));
        } catch (const GridError& e) {
            throw ParseError("line " + std::to_string(rec.line) + ": " + e.what());
        }
        b.u_min = r.number_or("u_min", b.u_min);
        b.u_max = r.number_or("u_max", b.u_max);
        b.theta_min = r.number_or("theta_min", b.theta_min);
        b.theta_max = r.number_or("theta_max", b.theta_max);
        r.finish();
        spec.buses.push_back(b);
    }
    for (const auto& rec : doc.records("lines")) {
        RecordReader r(rec, "lines");
        LineSpec l;
        l.id = r.integer("id");
        l.from_bus = r.integer("from_bus");
        l.to_bus = r.integer("to_bus");
        l.conductance = r.number_or("conductance", 0.0);
        l.susceptance = r.number("susceptance");
        l.flow_limit = r.number("flow_limit");
        l.in_service = r.boolean_or("in_service", true);
        r.finish();
        spec.lines.push_back(l);
    }
    for (const auto& rec : doc.records("thermal")) {
        RecordReader r(rec, "thermal");
        ThermalGenerator g;
        g.bus = r.integer("bus");
        g.p_min = r.number("p_min");
        g.p_max = r.number("p_max");
        g.q_min = r.number_or("q_min", 0.0);
        g.q_max = r.number_or("q_max", 0.0);
        g.ramp_down = r.number("ramp_down");
        g.ramp_up = r.number("ramp_up");
        g.cost_a = r.number("cost_a");
        g.cost_b = r.number("cost_b");
        g.cost_c = r.number("cost_c");
        r.finish();
        spec.thermal_units.push_back(g);
    }
    for (const auto& rec : doc.records("renewable")) {
        RecordReader r(rec, "renewable");
        RenewableUnit u;
        u.bus = r.integer("bus");
        u.capacity = r.number("capacity");
        u.curtailment_penalty = r.number("curtailment_penalty");
        r.finish();
        spec.renewable_units.push_back(u);
    }
    for (const auto& rec : doc.records("storage")) {
        RecordReader r(rec, "storage");
        StorageUnit s;
        s.bus = r.integer("bus");
        s.charge_max = r.number("charge_max");
        s.discharge_max = r.number("discharge_max");
        s.energy_min = r.number("energy_min");
        s.energy_max = r.number("energy_max");
        s.eta_charge = r.number("eta_charge");
        s.eta_discharge = r.number("eta_discharge");
        s.degradation_cost = r.number("degradation_cost");
        s.initial_soc_fraction = r.number_or("initial_soc_fraction", 0.5);
        r.finish();
        spec.storage_units.push_back(s);
    }
    return spec;
}

GridSpec parse_grid_spec(const std::string& text) { return grid_spec_from_document(parse_text_document(text)); }

GridSpec load_grid_spec(const std::string& path) {
    const auto doc = read_text_document(path);
    try {
        return grid_spec_from_document(doc);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

std::string format_grid_spec(const GridSpec& spec) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "# Grid spec. Units: active power MW, reactive MVAr, energy MWh, costs $;\n"
          "# voltages, conductance, susceptance and line limits in per-unit on base_mva;\n"
          "# angles in radians; dt_hours is the dispatch interval.\n";
    os << "[meta]\nbase_mva=" << spec.base_mva << " dt_hours=" << spec.dt_hours << "\n\n[buses]\n";
    for (const auto& b : spec.buses) {
        os << "id=" << b.id << " kind=" << to_string(b.kind) << " u_min=" << b.u_min << " u_max=" << b.u_max
           << " theta_min=" << b.theta_min << " theta_max=" << b.theta_max << '\n';
    }
    os << "\n[lines]\n";
    for (const auto& l : spec.lines) {
        os << "id=" << l.id << " from_bus=" << l.from_bus << " to_bus=" << l.to_bus << " conductance=" << l.conductance
           << " susceptance=" << l.susceptance << " flow_limit=" << l.flow_limit
           << " in_service=" << (l.in_service ? "true" : "false") << '\n';
    }
    os << "\n[thermal]\n";
    for (const auto& g : spec.thermal_units) {
        os << "bus=" << g.bus << " p_min=" << g.p_min << " p_max=" << g.p_max << " q_min=" << g.q_min
           << " q_max=" << g.q_max << " ramp_down=" << g.ramp_down << " ramp_up=" << g.ramp_up
           << " cost_a=" << g.cost_a << " cost_b=" << g.cost_b << " cost_c=" << g.cost_c << '\n';
    }
    os << "\n[renewable]\n";
    for (const auto& u : spec.renewable_units) {
        os << "bus=" << u.bus << " capacity=" << u.capacity << " curtailment_penalty=" << u.curtailment_penalty << '\n';
    }
    os << "\n[storage]\n";
    for (const auto& s : spec.storage_units) {
        os << "bus=" << s.bus << " charge_max=" << s.charge_max << " discharge_max=" << s.discharge_max
           << " energy_min=" << s.energy_min << " energy_max=" << s.energy_max << " eta_charge=" << s.eta_charge
           << " eta_discharge=" << s.eta_discharge << " degradation_cost=" << s.degradation_cost
           << " initial_soc_fraction=" << s.initial_soc_fraction << '\n';
    }
    return os.str();
}

void save_grid_spec(const GridSpec& spec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write '" + path + "'");
    out << format_grid_spec(spec);
}

}  // namespace metagrl
