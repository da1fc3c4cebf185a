#include "metagrl/env.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

namespace metagrl {

const char* to_string(NetworkModel model) {
    switch (model) {
        case NetworkModel::ac: return "ac";
        case NetworkModel::dc: return "dc";
        case NetworkModel::copper_plate: return "copper_plate";
    }
    return "?";
}

NetworkModel network_model_from_string(const std::string& text) {
    if (text == "ac") return NetworkModel::ac;
    if (text == "dc") return NetworkModel::dc;
    if (text == "copper_plate" || text == "copper-plate") return NetworkModel::copper_plate;
    throw std::invalid_argument("unknown network model '" + text + "'");
}

double effective_penalty_weight(const GridSpec& spec, const EnvConfig& config) {
    if (config.penalty_weight > 0.0) return config.penalty_weight;
    double b = 0.0;
    for (const auto& tg : spec.thermal_units) b = std::max(b, tg.cost_b);
    return 10.0 * (b > 0.0 ? b : 1.0);
}

double default_reward_scale(const GridSpec& spec, int horizon) {
    double stage = 0.0;
    for (const auto& tg : spec.thermal_units) {
        const double p = 0.5 * (tg.p_min + tg.p_max);
        stage += tg.cost_a * p * p * spec.dt_hours + tg.cost_b * p * spec.dt_hours + tg.cost_c;
    }
    const double scale = stage * std::max(horizon, 1);
    return scale > 0.0 ? scale : 1.0;
}

double effective_reward_scale(const GridSpec& spec, int horizon, const EnvConfig& config) {
    return config.reward_scale > 0.0 ? config.reward_scale : default_reward_scale(spec, horizon);
}

double DispatchState::time_angle() const {
    return horizon > 0 ? 2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(horizon) : 0.0;
}

Eigen::VectorXd DispatchAction::flatten() const {
    Eigen::VectorXd v(tg.size() + re.size() + es.size());
    Eigen::Index i = 0;
    for (double x : tg) v(i++) = x;
    for (double x : re) v(i++) = x;
    for (double x : es) v(i++) = x;
    return v;
}

DispatchAction DispatchAction::unflatten(const Eigen::VectorXd& v, const GridSpec& spec) {
    const auto ntg = spec.thermal_units.size(), nre = spec.renewable_units.size(), nes = spec.storage_units.size();
    if (static_cast<std::size_t>(v.size()) != ntg + nre + nes) throw std::invalid_argument("action size mismatch");
    DispatchAction a;
    Eigen::Index i = 0;
    for (std::size_t k = 0; k < ntg; ++k) a.tg.push_back(v(i++));
    for (std::size_t k = 0; k < nre; ++k) a.re.push_back(v(i++));
    for (std::size_t k = 0; k < nes; ++k) a.es.push_back(v(i++));
    return a;
}

int action_dim(const GridSpec& spec) {
    return static_cast<int>(spec.thermal_units.size() + spec.renewable_units.size() + spec.storage_units.size());
}

bool ActionBox::contains(const Eigen::VectorXd& flat, double tol) const {
    if (static_cast<std::size_t>(flat.size()) != lo.size()) return false;
    for (std::size_t i = 0; i < lo.size(); ++i) {
        if (flat(static_cast<Eigen::Index>(i)) < lo[i] - tol || flat(static_cast<Eigen::Index>(i)) > hi[i] + tol) return false;
    }
    return true;
}

namespace {

void load_stage(DispatchState& state, const ScenarioSample& sample, int row) {
    state.load_p = sample.load_p.row(row).transpose();
    state.load_q = sample.load_q.row(row).transpose();
    state.re_ceiling.assign(sample.re_ceiling.cols(), 0.0);
    for (Eigen::Index k = 0; k < sample.re_ceiling.cols(); ++k) state.re_ceiling[k] = sample.re_ceiling(row, k);
}

std::set<int> active_outages(const ScenarioSample& sample, int t) {
    std::set<int> out;
    for (std::size_t k = 0; k < sample.outage_lines.size(); ++k) {
        const int from = k < sample.outage_stage.size() ? sample.outage_stage[k] : 0;
        if (from <= t) out.insert(sample.outage_lines[k]);
    }
    return out;
}

}  // namespace

DispatchState reset(const GridSpec& spec, const ScenarioSample& sample, const EnvConfig& config) {
    (void)config;
    if (sample.horizon() <= 0) throw std::invalid_argument("sample has an empty horizon");
    if (sample.load_p.cols() != spec.bus_count() || sample.load_q.cols() != spec.bus_count()) {
        throw std::invalid_argument("sample load columns do not match the bus count");
    }
    if (sample.re_ceiling.cols() != static_cast<Eigen::Index>(spec.renewable_units.size())) {
        throw std::invalid_argument("sample renewable columns do not match the renewable unit count");
    }
    DispatchState s;
    s.t = 0;
    s.horizon = sample.horizon();
    s.tg_prev.assign(spec.thermal_units.size(), 0.0);
    for (const auto& es : spec.storage_units) s.es_energy.push_back(es.initial_energy());
    load_stage(s, sample, 0);
    s.out_lines = active_outages(sample, 0);
    apply_outage(spec, s.out_lines);  // throws on unknown lines or islanding
    s.u = Eigen::VectorXd::Ones(spec.bus_count());
    s.theta = Eigen::VectorXd::Zero(spec.bus_count());
    return s;
}

ActionBox feasible_action_box(const DispatchState& state, const GridSpec& spec) {
    ActionBox box;
    const double dt = spec.dt_hours;
    for (std::size_t k = 0; k < spec.thermal_units.size(); ++k) {
        const auto& tg = spec.thermal_units[k];
        const double prev = k < state.tg_prev.size() ? state.tg_prev[k] : 0.0;
        double lo = std::max(tg.p_min, prev + tg.ramp_down);
        double hi = std::min(tg.p_max, prev + tg.ramp_up);
        if (lo > hi) {
            box.collapsed.push_back(static_cast<int>(box.lo.size()));
            lo = hi = (prev + tg.ramp_up < tg.p_min) ? tg.p_min : tg.p_max;
        }
        box.lo.push_back(lo);
        box.hi.push_back(hi);
    }
    for (std::size_t k = 0; k < spec.renewable_units.size(); ++k) {
        box.lo.push_back(0.0);
        box.hi.push_back(std::max(0.0, k < state.re_ceiling.size() ? state.re_ceiling[k] : 0.0));
    }
    for (std::size_t k = 0; k < spec.storage_units.size(); ++k) {
        const auto& es = spec.storage_units[k];
        const double e = state.es_energy[k];
        const double discharge = std::min(es.discharge_max, (e - es.energy_min) * es.eta_discharge / dt);
        const double charge = std::min(es.charge_max, (es.energy_max - e) / (es.eta_charge * dt));
        box.lo.push_back(-std::max(0.0, charge));
        box.hi.push_back(std::max(0.0, discharge));
    }
    return box;
}

DispatchAction project_action(const Eigen::VectorXd& raw, const ActionBox& box, const GridSpec& spec) {
    if (static_cast<std::size_t>(raw.size()) != box.lo.size()) throw std::invalid_argument("raw action size mismatch");
    Eigen::VectorXd flat(raw.size());
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
        const double r = std::clamp(raw(i), -1.0, 1.0);
        const double lo = box.lo[i], hi = box.hi[i];
        flat(i) = std::clamp(lo + 0.5 * (r + 1.0) * (hi - lo), lo, hi);
    }
    return DispatchAction::unflatten(flat, spec);
}

Eigen::VectorXd normalize_action(const DispatchAction& action, const ActionBox& box) {
    const Eigen::VectorXd flat = action.flatten();
    Eigen::VectorXd raw(flat.size());
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
        const double lo = box.lo[i], hi = box.hi[i];
        raw(i) = hi > lo ? std::clamp(2.0 * (flat(i) - lo) / (hi - lo) - 1.0, -1.0, 1.0) : 0.0;
    }
    return raw;
}

CostBreakdown stage_cost(const DispatchAction& action, const DispatchState& state, const GridSpec& spec) {
    CostBreakdown c;
    const double dt = spec.dt_hours;
    for (std::size_t k = 0; k < spec.thermal_units.size(); ++k) {
        const auto& tg = spec.thermal_units[k];
        const double p = action.tg[k];
        c.c_tg += tg.cost_a * p * p * dt + tg.cost_b * p * dt + tg.cost_c;
    }
    for (std::size_t k = 0; k < spec.renewable_units.size(); ++k) {
        c.c_re += spec.renewable_units[k].curtailment_penalty * (state.re_ceiling[k] - action.re[k]) * dt;
    }
    for (std::size_t k = 0; k < spec.storage_units.size(); ++k) {
        c.c_es += spec.storage_units[k].degradation_cost * std::abs(action.es[k]) * dt;
    }
    c.total = c.c_tg + c.c_re + c.c_es;
    return c;
}

GridSpec topology_at(const GridSpec& spec, const DispatchState& state) {
    return state.out_lines.empty() ? spec : apply_outage(spec, state.out_lines);
}

Eigen::MatrixXd node_features(const DispatchState& state, const GridSpec& spec) {
    const int n = spec.bus_count();
    const double base = spec.base_mva;
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(n, kNodeFeatures);
    for (int i = 0; i < n; ++i) {
        f(i, 0) = state.load_p(i) / base;
        f(i, 1) = state.load_q(i) / base;
    }
    for (std::size_t k = 0; k < spec.renewable_units.size(); ++k) {
        f(spec.renewable_units[k].bus, 2) += state.re_ceiling[k] / base;
    }
    for (std::size_t k = 0; k < spec.thermal_units.size(); ++k) {
        f(spec.thermal_units[k].bus, 3) += state.tg_prev[k] / base;
    }
    Eigen::VectorXd cap = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < spec.storage_units.size(); ++k) {
        f(spec.storage_units[k].bus, 4) += state.es_energy[k];
        cap(spec.storage_units[k].bus) += spec.storage_units[k].energy_max;
    }
    const double angle = state.time_angle();
    for (int i = 0; i < n; ++i) {
        if (cap(i) > 0.0) f(i, 4) /= cap(i);
        f(i, 5) = spec.buses[i].kind == BusKind::slack ? 1.0 : 0.0;
        f(i, 6) = std::sin(angle);
        f(i, 7) = std::cos(angle);
    }
    return f;
}

GridGraph state_graph(const DispatchState& state, const GridSpec& spec) {
    GridSpec topo = spec;
    for (auto& line : topo.lines) {
        if (state.out_lines.count(line.id)) line.in_service = false;
    }
    return build_graph(topo, node_features(state, spec));
}

StepResult step(const DispatchState& state, const DispatchAction& action, const GridSpec& spec,
                const ScenarioSample& sample, const EnvConfig& config) {
    const double dt = spec.dt_hours;
    const double base = spec.base_mva;
    const int n = spec.bus_count();
    const int slack_tg = spec.slack_thermal();
    const int slack_bus = spec.slack_bus();
    const ActionBox box = feasible_action_box(state, spec);

    // Clamp into the box so recorded actions always honour the device limits.
    DispatchAction act = action;
    {
        Eigen::VectorXd flat = act.flatten();
        for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) = std::clamp(flat(i), box.lo[i], box.hi[i]);
        act = DispatchAction::unflatten(flat, spec);
    }

    StepResult res;
    res.next = state;
    for (std::size_t k = 0; k < spec.storage_units.size(); ++k) {
        const auto& es = spec.storage_units[k];
        res.next.es_energy[k] = state.es_energy[k] + (es.eta_charge * act.charge(k) - act.discharge(k) / es.eta_discharge) * dt;
    }

    // Net injection in MW from every device except the slack unit.
    Eigen::VectorXd p_mw = -state.load_p;
    for (std::size_t k = 0; k < spec.thermal_units.size(); ++k) {
        if (static_cast<int>(k) != slack_tg) p_mw(spec.thermal_units[k].bus) += act.tg[k];
    }
    for (std::size_t k = 0; k < spec.renewable_units.size(); ++k) p_mw(spec.renewable_units[k].bus) += act.re[k];
    for (std::size_t k = 0; k < spec.storage_units.size(); ++k) p_mw(spec.storage_units[k].bus) += act.es[k];
    const double lossless_slack = -p_mw.sum();

    double slack_required = lossless_slack;
    double severity = 0.0;
    bool converged = true;
    const GridSpec topo = topology_at(spec, state);
    if (config.network == NetworkModel::dc) {
        const DcSolution dc = solve_dc(topo, p_mw / base);
        slack_required = dc.slack_injection * base - p_mw(slack_bus);
        res.violations = check_dc_limits(dc, topo);
        severity = res.violations.severity;
    } else if (config.network == NetworkModel::ac) {
        InjectionSet inj = InjectionSet::zeros(spec);
        inj.p = p_mw / base;
        inj.q = -state.load_q / base;
        for (int i = 0; i < n; ++i) {
            if (spec.buses[i].kind != BusKind::load) inj.v_set(i) = config.voltage_setpoint;
        }
        PowerFlowConfig pf = config.powerflow;
        if (!pf.flat_start) {
            pf.initial_u = state.u;
            pf.initial_theta = state.theta;
        }
        PowerFlowSolution sol;
        try {
            sol = solve_ac(topo, inj, pf);
            converged = sol.converged;
        } catch (const SingularJacobianError&) {
            converged = false;
        }
        if (converged) {
            slack_required = sol.slack_p * base - p_mw(slack_bus);
            // Reactive output per unit: bus requirement shared by the units on that bus.
            Eigen::VectorXd q_bus = Eigen::VectorXd::Zero(n);
            std::vector<int> units_at(n, 0);
            for (const auto& tg : spec.thermal_units) ++units_at[tg.bus];
            for (int i = 0; i < n; ++i) q_bus(i) = sol.q_injection(i) + state.load_q(i) / base;
            Eigen::VectorXd q_tg(spec.thermal_units.size());
            for (std::size_t k = 0; k < spec.thermal_units.size(); ++k) {
                const int b = spec.thermal_units[k].bus;
                q_tg(static_cast<Eigen::Index>(k)) = spec.buses[b].kind == BusKind::load ? 0.0 : q_bus(b) / units_at[b];
            }
            res.violations = check_limits(sol, topo, q_tg);
            severity = res.violations.severity;
            res.next.u = sol.u;
            res.next.theta = sol.theta;
        }
    }

    const double slack_lo = box.lo[slack_tg], slack_hi = box.hi[slack_tg];
    const double slack_realized = std::clamp(slack_required, slack_lo, slack_hi);
    res.slack_excess = std::abs(slack_required - slack_realized);
    act.tg[slack_tg] = slack_realized;

    res.realized = act;
    res.cost = stage_cost(act, state, spec);
    res.cost.penalty = effective_penalty_weight(spec, config) * dt * (res.slack_excess + base * severity);
    if (!converged) res.cost.penalty += config.nonconvergence_penalty;
    res.cost.total = res.cost.c_tg + res.cost.c_re + res.cost.c_es + res.cost.penalty;
    res.converged = converged;
    res.reward = -res.cost.total / effective_reward_scale(spec, state.horizon, config);

    res.next.t = state.t + 1;
    res.next.tg_prev = act.tg;
    load_stage(res.next, sample, std::min(res.next.t, state.horizon - 1));
    res.next.out_lines = active_outages(sample, std::min(res.next.t, state.horizon - 1));
    res.done = res.next.t >= state.horizon || (config.hard_fail && !converged);
    return res;
}

EpisodeTrace rollout(const Policy& policy, const GridSpec& spec, const ScenarioSample& sample,
                     const Eigen::VectorXd& z, const EnvConfig& config) {
    EpisodeTrace trace;
    trace.id = sample.seed;
    trace.family_id = sample.family_id;
    DispatchState state = reset(spec, sample, config);
    GridGraph graph = state_graph(state, spec);
    for (int t = 0; t < state.horizon; ++t) {
        Eigen::VectorXd raw = policy(state, graph, z);
        raw = raw.cwiseMax(-1.0).cwiseMin(1.0);
        const ActionBox box = feasible_action_box(state, spec);
        const DispatchAction action = project_action(raw, box, spec);
        StepResult res = step(state, action, spec, sample, config);

        Transition tr;
        tr.state = state;
        tr.raw_action = std::move(raw);
        tr.action = res.realized;
        tr.reward = res.reward;
        tr.next_state = res.next;
        tr.cost = res.cost;
        tr.severity = res.violations.severity;
        tr.converged = res.converged;
        tr.done = res.done;
        tr.graph = std::move(graph);
        tr.next_graph = state_graph(res.next, spec);
        graph = tr.next_graph;

        trace.cumulative_cost += res.cost.total;
        trace.cumulative_penalty += res.cost.penalty;
        trace.transitions.push_back(std::move(tr));
        state = std::move(res.next);
        if (config.hard_fail && !res.converged) {
            trace.terminated_early = true;
            break;
        }
    }
    return trace;
}

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd json_matrix(const nlohmann::json& rows) {
    const auto r = static_cast<Eigen::Index>(rows.size());
    const auto c = r > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        if (static_cast<Eigen::Index>(rows[i].size()) != c) throw std::invalid_argument("ragged matrix in trace");
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows[i][j].get<double>();
    }
    return m;
}

}  // namespace

std::string trace_jsonl(const EpisodeTrace& trace) {
    std::ostringstream os;
    for (const auto& tr : trace.transitions) {
        nlohmann::json j;
        j["trace_id"] = trace.id;
        j["family"] = trace.family_id;
        j["t"] = tr.state.t;
        const Eigen::VectorXd flat = tr.action.flatten();
        j["action"] = std::vector<double>(flat.data(), flat.data() + flat.size());
        j["raw_action"] = std::vector<double>(tr.raw_action.data(), tr.raw_action.data() + tr.raw_action.size());
        j["reward"] = tr.reward;
        j["cost"] = {{"tg", tr.cost.c_tg}, {"re", tr.cost.c_re}, {"es", tr.cost.c_es},
                     {"penalty", tr.cost.penalty}, {"total", tr.cost.total}};
        j["severity"] = tr.severity;
        j["converged"] = tr.converged;
        j["done"] = tr.done;
        j["graph"] = {{"adj", matrix_json(tr.graph.adj)}, {"eig", matrix_json(tr.graph.eig)}};
        j["next_graph"] = {{"adj", matrix_json(tr.next_graph.adj)}, {"eig", matrix_json(tr.next_graph.eig)}};
        os << j.dump() << '\n';
    }
    return os.str();
}

std::vector<EpisodeTrace> traces_from_jsonl(const std::string& text) {
    std::vector<EpisodeTrace> out;
    std::map<std::uint64_t, std::size_t> index;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        const auto id = j.at("trace_id").get<std::uint64_t>();
        auto it = index.find(id);
        if (it == index.end()) {
            it = index.emplace(id, out.size()).first;
            EpisodeTrace trace;
            trace.id = id;
            trace.family_id = j.at("family").get<int>();
            out.push_back(std::move(trace));
        }
        EpisodeTrace& trace = out[it->second];
        Transition tr;
        tr.state.t = j.at("t").get<int>();
        const auto raw = j.at("raw_action").get<std::vector<double>>();
        tr.raw_action = Eigen::Map<const Eigen::VectorXd>(raw.data(), static_cast<Eigen::Index>(raw.size()));
        const auto act = j.at("action").get<std::vector<double>>();
        tr.reward = j.at("reward").get<double>();
        const auto& c = j.at("cost");
        tr.cost = {c.at("tg").get<double>(), c.at("re").get<double>(), c.at("es").get<double>(),
                   c.at("penalty").get<double>(), c.at("total").get<double>()};
        tr.severity = j.at("severity").get<double>();
        tr.converged = j.at("converged").get<bool>();
        tr.done = j.at("done").get<bool>();
        tr.graph = {json_matrix(j.at("graph").at("adj")), json_matrix(j.at("graph").at("eig"))};
        tr.next_graph = {json_matrix(j.at("next_graph").at("adj")), json_matrix(j.at("next_graph").at("eig"))};
        tr.action.tg = act;  // flattened; layout needs the grid spec to split
        trace.cumulative_cost += tr.cost.total;
        trace.cumulative_penalty += tr.cost.penalty;
        trace.transitions.push_back(std::move(tr));
    }
    return out;
}

}  // namespace metagrl
