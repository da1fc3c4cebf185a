#include "metagrl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace metagrl {

namespace {

constexpr double kTol = 1e-9;

std::set<int> outages_at(const ScenarioSample& sample, int t) {
    std::set<int> out;
    for (std::size_t k = 0; k < sample.outage_lines.size(); ++k) {
        const int from = k < sample.outage_stage.size() ? sample.outage_stage[k] : 0;
        if (from <= t) out.insert(sample.outage_lines[k]);
    }
    return out;
}

double thermal_cost(const ThermalGenerator& tg, double p, double dt) {
    return tg.cost_a * p * p * dt + tg.cost_b * p * dt + tg.cost_c;
}

}  // namespace

std::vector<double> thermal_lattice(const ThermalGenerator& tg, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("power step must be positive");
    std::vector<double> out;
    for (long k = 0;; ++k) {
        const double v = tg.p_min + static_cast<double>(k) * step;
        if (v >= tg.p_max - kTol) break;
        out.push_back(v);
    }
    out.push_back(tg.p_max);
    return out;
}

std::vector<double> energy_lattice(const StorageUnit& es, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("energy step must be positive");
    const double e0 = es.initial_energy();
    std::vector<double> out{e0};
    for (long k = 1;; ++k) {
        const double v = e0 - static_cast<double>(k) * step;
        if (v <= es.energy_min + kTol) break;
        out.push_back(v);
    }
    for (long k = 1;; ++k) {
        const double v = e0 + static_cast<double>(k) * step;
        if (v >= es.energy_max - kTol) break;
        out.push_back(v);
    }
    if (e0 > es.energy_min + kTol) out.push_back(es.energy_min);
    if (e0 < es.energy_max - kTol) out.push_back(es.energy_max);
    std::sort(out.begin(), out.end());
    return out;
}

SlackDispatch dispatch_slack(const GridSpec& spec, const std::vector<double>& re_ceiling, double net_demand,
                             double curtail_lo, double curtail_hi) {
    const double dt = spec.dt_hours;
    const auto& slack = spec.thermal_units[static_cast<std::size_t>(spec.slack_thermal())];
    std::vector<std::size_t> order(spec.renewable_units.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return spec.renewable_units[a].curtailment_penalty < spec.renewable_units[b].curtailment_penalty;
    });
    double total = 0.0;
    for (double c : re_ceiling) total += std::max(0.0, c);

    const double lo = std::max({0.0, slack.p_min - net_demand, curtail_lo});
    const double hi = std::min({total, slack.p_max - net_demand, curtail_hi});
    SlackDispatch out;
    if (lo > hi + kTol) return out;

    auto curtail_cost = [&](double x) {
        double cost = 0.0;
        for (std::size_t k : order) {
            const double take = std::min(x, std::max(0.0, re_ceiling[k]));
            cost += spec.renewable_units[k].curtailment_penalty * take * dt;
            x -= take;
        }
        return cost;
    };
    auto objective = [&](double x) { return curtail_cost(x) + thermal_cost(slack, net_demand + x, dt); };

    std::vector<double> candidates{lo, std::max(lo, hi)};
    double start = 0.0;
    for (std::size_t k : order) {
        const double len = std::max(0.0, re_ceiling[k]);
        const double end = start + len;
        candidates.push_back(start);
        candidates.push_back(end);
        if (slack.cost_a > 0.0) {
            // beta + 2 a p + b = 0 inside this segment
            const double p = -(spec.renewable_units[k].curtailment_penalty + slack.cost_b) / (2.0 * slack.cost_a);
            candidates.push_back(std::clamp(p - net_demand, start, end));
        }
        start = end;
    }
    if (slack.cost_a > 0.0 && order.empty()) candidates.push_back(-slack.cost_b / (2.0 * slack.cost_a) - net_demand);
    double best_x = lo;
    double best = std::numeric_limits<double>::infinity();
    for (double x : candidates) {
        x = std::clamp(x, lo, std::max(lo, hi));
        const double v = objective(x);
        if (v < best) {
            best = v;
            best_x = x;
        }
    }
    out.feasible = true;
    out.cost = best;
    out.slack = net_demand + best_x;
    out.re.assign(re_ceiling.size(), 0.0);
    double x = best_x;
    for (std::size_t k : order) {
        const double cap = std::max(0.0, re_ceiling[k]);
        const double take = std::min(x, cap);
        out.re[k] = cap - take;
        x -= take;
    }
    return out;
}

OracleResult ops_oracle(const GridSpec& spec, const ScenarioSample& sample, const DpDiscretization& disc) {
    require_valid(spec);
    if (disc.network == NetworkModel::ac) throw OracleUnsupportedError("the oracle supports the dc and copper_plate models only");
    const int T = sample.horizon();
    if (T < 1) throw std::invalid_argument("sample has an empty horizon");
    const double dt = spec.dt_hours;
    const double base = spec.base_mva;
    const int slack_tg = spec.slack_thermal();
    const auto& slack = spec.thermal_units[static_cast<std::size_t>(slack_tg)];
    if (slack.ramp_up < slack.p_max - kTol || slack.ramp_down > slack.p_min - slack.p_max + kTol) {
        throw OracleUnsupportedError("the slack unit's ramp limits could bind; the oracle requires them to be slack");
    }
    int re_bus = -1;
    if (disc.network == NetworkModel::dc) {
        for (const auto& re : spec.renewable_units) {
            if (re_bus >= 0 && re.bus != re_bus) {
                throw OracleUnsupportedError("in dc mode the oracle requires all renewable units on one bus");
            }
            re_bus = re.bus;
        }
    }

    // Devices with lattice state: non-slack thermal units, then storage units.
    std::vector<int> tg_idx;
    for (int k = 0; k < static_cast<int>(spec.thermal_units.size()); ++k) {
        if (k != slack_tg) tg_idx.push_back(k);
    }
    const std::size_t n_tg = tg_idx.size();
    const std::size_t n_es = spec.storage_units.size();
    const std::size_t n_dev = n_tg + n_es;
    std::vector<std::vector<double>> lattice;
    for (int k : tg_idx) lattice.push_back(thermal_lattice(spec.thermal_units[static_cast<std::size_t>(k)], disc.power_step));
    for (const auto& es : spec.storage_units) lattice.push_back(energy_lattice(es, disc.energy_step));
    double combos = 1.0;
    for (const auto& l : lattice) combos *= static_cast<double>(l.size());
    if (combos > disc.guard) {
        throw OracleTooLargeError("instance too large for oracle: " + std::to_string(static_cast<long long>(combos)) +
                                  " settings per stage exceed the guard of " +
                                  std::to_string(static_cast<long long>(disc.guard)));
    }
    const long S = static_cast<long>(combos);
    std::vector<long> radix(n_dev, 1);
    for (std::size_t d = 1; d < n_dev; ++d) radix[d] = radix[d - 1] * static_cast<long>(lattice[d - 1].size());

    // Per device: from a previous value, the reachable lattice indices and the
    // storage power (signed, MW) of each move.
    struct Move {
        int next;
        double es;
    };
    auto moves = [&](std::size_t d, double prev) {
        std::vector<Move> out;
        const auto& lat = lattice[d];
        if (d < n_tg) {
            const auto& tg = spec.thermal_units[static_cast<std::size_t>(tg_idx[d])];
            double lo = std::max(tg.p_min, prev + tg.ramp_down);
            double hi = std::min(tg.p_max, prev + tg.ramp_up);
            if (lo > hi) lo = hi = (prev + tg.ramp_up < tg.p_min) ? tg.p_min : tg.p_max;
            for (std::size_t i = 0; i < lat.size(); ++i) {
                if (lat[i] >= lo - kTol && lat[i] <= hi + kTol) out.push_back({static_cast<int>(i), 0.0});
            }
        } else {
            const auto& es = spec.storage_units[d - n_tg];
            for (std::size_t i = 0; i < lat.size(); ++i) {
                const double delta = lat[i] - prev;
                if (delta >= 0.0) {
                    const double c = delta / (es.eta_charge * dt);
                    if (c <= es.charge_max + kTol) out.push_back({static_cast<int>(i), -c});
                } else {
                    const double dis = -delta * es.eta_discharge / dt;
                    if (dis <= es.discharge_max + kTol) out.push_back({static_cast<int>(i), dis});
                }
            }
        }
        return out;
    };

    std::vector<Eigen::MatrixXd> ptdf(static_cast<std::size_t>(T));
    std::vector<GridSpec> topo(static_cast<std::size_t>(T));
    if (disc.network == NetworkModel::dc) {
        for (int t = 0; t < T; ++t) {
            topo[static_cast<std::size_t>(t)] = apply_outage(spec, outages_at(sample, t));
            ptdf[static_cast<std::size_t>(t)] = dc_flow_sensitivity(topo[static_cast<std::size_t>(t)]);
        }
    }

    OracleResult result;
    result.states_per_stage = S;

    // Cost of stage t from previous values `prev` to lattice setting `next`,
    // including the slack/curtailment solve. Returns +inf when infeasible.
    auto stage_value = [&](int t, const std::vector<int>& next, const std::vector<double>& es_power,
                           SlackDispatch* dispatch) {
        ++result.evaluations;
        double cost = 0.0;
        const Eigen::VectorXd load = sample.load_p.row(t).transpose();
        std::vector<double> ceiling(spec.renewable_units.size());
        double ceil_total = 0.0;
        for (std::size_t k = 0; k < ceiling.size(); ++k) {
            ceiling[k] = std::max(0.0, sample.re_ceiling(t, static_cast<Eigen::Index>(k)));
            ceil_total += ceiling[k];
        }
        double supplied = ceil_total;
        Eigen::VectorXd inj = -load;
        for (std::size_t d = 0; d < n_tg; ++d) {
            const auto& tg = spec.thermal_units[static_cast<std::size_t>(tg_idx[d])];
            const double p = lattice[d][static_cast<std::size_t>(next[d])];
            cost += thermal_cost(tg, p, dt);
            supplied += p;
            inj(tg.bus) += p;
        }
        for (std::size_t e = 0; e < n_es; ++e) {
            cost += spec.storage_units[e].degradation_cost * std::abs(es_power[e]) * dt;
            supplied += es_power[e];
            inj(spec.storage_units[e].bus) += es_power[e];
        }
        for (std::size_t k = 0; k < ceiling.size(); ++k) inj(spec.renewable_units[k].bus) += ceiling[k];
        double x_lo = 0.0, x_hi = std::numeric_limits<double>::infinity();
        if (disc.network == NetworkModel::dc) {
            const auto& P = ptdf[static_cast<std::size_t>(t)];
            const GridSpec& g = topo[static_cast<std::size_t>(t)];
            const Eigen::VectorXd f0 = P * inj / base;
            for (std::size_t l = 0; l < g.lines.size(); ++l) {
                if (!g.lines[l].in_service) continue;
                const double lim = g.lines[l].flow_limit;
                const double k = re_bus >= 0 ? P(static_cast<Eigen::Index>(l), re_bus) / base : 0.0;
                const double f = f0(static_cast<Eigen::Index>(l));
                // flow(x) = f - k x must stay within [-lim, lim]
                if (std::abs(k) < 1e-15) {
                    if (std::abs(f) > lim + kTol) return std::numeric_limits<double>::infinity();
                } else {
                    const double a = (f - lim) / k, b = (f + lim) / k;
                    x_lo = std::max(x_lo, std::min(a, b));
                    x_hi = std::min(x_hi, std::max(a, b));
                }
            }
        }
        const double net_demand = load.sum() - supplied;
        SlackDispatch sd = dispatch_slack(spec, ceiling, net_demand, x_lo, x_hi);
        if (!sd.feasible) return std::numeric_limits<double>::infinity();
        if (dispatch) *dispatch = sd;
        return cost + sd.cost;
    };

    // Enumerates every joint move from `prev_values` and reports each
    // (setting index, device indices, storage powers).
    auto for_each_move = [&](const std::vector<double>& prev_values, const auto& fn) {
        std::vector<std::vector<Move>> options(n_dev);
        for (std::size_t d = 0; d < n_dev; ++d) {
            options[d] = moves(d, prev_values[d]);
            if (options[d].empty()) return;
        }
        std::vector<std::size_t> pick(n_dev, 0);
        std::vector<int> next(n_dev);
        std::vector<double> es_power(n_es);
        while (true) {
            long idx = 0;
            for (std::size_t d = 0; d < n_dev; ++d) {
                next[d] = options[d][pick[d]].next;
                idx += radix[d] * next[d];
                if (d >= n_tg) es_power[d - n_tg] = options[d][pick[d]].es;
            }
            fn(idx, next, es_power);
            std::size_t d = 0;
            while (d < n_dev && ++pick[d] == options[d].size()) pick[d++] = 0;
            if (d == n_dev) break;
        }
    };

    auto values_of = [&](long s) {
        std::vector<double> v(n_dev);
        for (std::size_t d = 0; d < n_dev; ++d) v[d] = lattice[d][static_cast<std::size_t>((s / radix[d]) % static_cast<long>(lattice[d].size()))];
        return v;
    };

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> value(static_cast<std::size_t>(T) + 1, std::vector<double>(static_cast<std::size_t>(S), inf));
    std::vector<std::vector<long>> best(static_cast<std::size_t>(T), std::vector<long>(static_cast<std::size_t>(S), -1));
    std::fill(value[static_cast<std::size_t>(T)].begin(), value[static_cast<std::size_t>(T)].end(), 0.0);

    // The stage value depends on the previous state only through the storage
    // moves, so it is cached per (destination, previous storage cells).
    long es_states = 1;
    for (std::size_t d = n_tg; d < n_dev; ++d) es_states *= static_cast<long>(lattice[d].size());
    const bool use_memo = static_cast<double>(S) * static_cast<double>(es_states) <= 5e7;
    std::vector<double> memo;
    auto es_key = [&](long s) {
        long key = 0, r = 1;
        for (std::size_t d = n_tg; d < n_dev; ++d) {
            const long size = static_cast<long>(lattice[d].size());
            key += r * ((s / radix[d]) % size);
            r *= size;
        }
        return key;
    };

    auto relax = [&](int t, long s, const std::vector<double>& prev, long key) {
        double bv = inf;
        long ba = -1;
        for_each_move(prev, [&](long a, const std::vector<int>& next, const std::vector<double>& es_power) {
            const double future = value[static_cast<std::size_t>(t) + 1][static_cast<std::size_t>(a)];
            if (future == inf) return;
            double stage;
            if (key >= 0) {
                double& slot = memo[static_cast<std::size_t>(key * S + a)];
                if (std::isnan(slot)) slot = stage_value(t, next, es_power, nullptr);
                stage = slot;
            } else {
                stage = stage_value(t, next, es_power, nullptr);
            }
            const double v = stage + future;
            if (v < bv) {
                bv = v;
                ba = a;
            }
        });
        value[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)] = bv;
        best[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)] = ba;
    };

    for (int t = T - 1; t >= 1; --t) {
        if (use_memo) memo.assign(static_cast<std::size_t>(S * es_states), std::numeric_limits<double>::quiet_NaN());
        for (long s = 0; s < S; ++s) relax(t, s, values_of(s), use_memo ? es_key(s) : -1);
    }
    std::vector<double> init(n_dev);
    for (std::size_t d = 0; d < n_tg; ++d) init[d] = 0.0;
    for (std::size_t e = 0; e < n_es; ++e) init[n_tg + e] = spec.storage_units[e].initial_energy();
    relax(0, 0, init, -1);  // slot 0 of stage 0 holds the initial state
    result.dp_cost = value[0][0];
    if (result.dp_cost == inf) throw std::runtime_error("no feasible schedule on the oracle lattice");

    // Recover the schedule.
    std::vector<double> prev = init;
    long s = 0;
    for (int t = 0; t < T; ++t) {
        const long a = best[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)];
        std::vector<int> next(n_dev);
        std::vector<double> es_power(n_es);
        for_each_move(prev, [&](long idx, const std::vector<int>& nx, const std::vector<double>& ep) {
            if (idx == a) {
                next = nx;
                es_power = ep;
            }
        });
        SlackDispatch sd;
        stage_value(t, next, es_power, &sd);
        DispatchAction act;
        act.tg.assign(spec.thermal_units.size(), 0.0);
        for (std::size_t d = 0; d < n_tg; ++d) act.tg[static_cast<std::size_t>(tg_idx[d])] = lattice[d][static_cast<std::size_t>(next[d])];
        act.tg[static_cast<std::size_t>(slack_tg)] = sd.slack;
        act.re = sd.re;
        act.es = es_power;
        result.schedule.push_back(std::move(act));
        prev = values_of(a);
        s = a;
    }
    EnvConfig env;
    env.network = disc.network;
    result.cost = replay_schedule(spec, sample, result.schedule, env).cumulative_cost;
    return result;
}

std::string schedule_csv(const GridSpec& spec, const std::vector<DispatchAction>& schedule) {
    std::ostringstream os;
    os << std::setprecision(17) << "stage";
    for (std::size_t k = 0; k < spec.thermal_units.size(); ++k) os << ",tg_" << k;
    for (std::size_t k = 0; k < spec.renewable_units.size(); ++k) os << ",re_" << k;
    for (std::size_t k = 0; k < spec.storage_units.size(); ++k) os << ",es_" << k;
    os << '\n';
    for (std::size_t t = 0; t < schedule.size(); ++t) {
        os << t;
        for (double v : schedule[t].tg) os << ',' << v;
        for (double v : schedule[t].re) os << ',' << v;
        for (double v : schedule[t].es) os << ',' << v;
        os << '\n';
    }
    return os.str();
}

EpisodeTrace replay_schedule(const GridSpec& spec, const ScenarioSample& sample, const std::vector<DispatchAction>& schedule,
                             const EnvConfig& env) {
    if (static_cast<int>(schedule.size()) != sample.horizon()) throw std::invalid_argument("schedule length differs from the horizon");
    const Policy policy = [&](const DispatchState& state, const GridGraph&, const Eigen::VectorXd&) {
        return normalize_action(schedule[static_cast<std::size_t>(state.t)], feasible_action_box(state, spec));
    };
    return rollout(policy, spec, sample, Eigen::VectorXd(), env);
}

namespace {

// min 0.5 x'Hx + g'x  s.t.  lo <= x <= hi,  l <= Gx <= u
struct BoxQp {
    Eigen::MatrixXd H;
    Eigen::VectorXd g;
    Eigen::VectorXd lo, hi;
    Eigen::MatrixXd G;
    Eigen::VectorXd l, u;
};

struct QpSolution {
    Eigen::VectorXd x;
    bool converged = false;
    double violation = 0.0;
};

double spectral_norm_sq(const Eigen::MatrixXd& m) {
    if (m.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.transpose() * m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

QpSolution solve_box_qp(const BoxQp& qp, const MpcConfig& cfg) {
    const Eigen::Index n = qp.g.size();
    Eigen::VectorXd x = (0.5 * (qp.lo + qp.hi)).cwiseMax(qp.lo).cwiseMin(qp.hi);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(qp.G.rows());
    double h_norm = 0.0;
    if (n > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(qp.H, Eigen::EigenvaluesOnly);
        h_norm = std::max(es.eigenvalues().maxCoeff(), 0.0);
    }
    const double g_norm_sq = spectral_norm_sq(qp.G);
    double rho = std::max(h_norm, 1e-6) * 10.0;
    auto project_rows = [&](const Eigen::VectorXd& v) { return v.cwiseMax(qp.l).cwiseMin(qp.u); };
    auto violation = [&](const Eigen::VectorXd& xx) {
        if (qp.G.rows() == 0) return 0.0;
        const Eigen::VectorXd gx = qp.G * xx;
        return (gx - project_rows(gx)).cwiseAbs().maxCoeff();
    };

    QpSolution sol;
    if (n == 0) {
        // nothing to decide: only the constraint rows can fail
        sol.x = x;
        sol.violation = violation(x);
        sol.converged = sol.violation <= cfg.feasibility_tol;
        return sol;
    }
    double prev_violation = std::numeric_limits<double>::infinity();
    for (int round = 0; round < cfg.penalty_rounds; ++round) {
        const double L = h_norm + rho * g_norm_sq;
        const double step = L > 0.0 ? 1.0 / L : 1.0;
        auto grad = [&](const Eigen::VectorXd& xx) {
            Eigen::VectorXd gr = qp.H * xx + qp.g;
            if (qp.G.rows() > 0) {
                const Eigen::VectorXd v = qp.G * xx + y / rho;
                gr += rho * qp.G.transpose() * (v - project_rows(v));
            }
            return gr;
        };
        auto merit = [&](const Eigen::VectorXd& xx) {
            double f = 0.5 * xx.dot(qp.H * xx) + qp.g.dot(xx);
            if (qp.G.rows() > 0) {
                const Eigen::VectorXd v = qp.G * xx + y / rho;
                f += 0.5 * rho * (v - project_rows(v)).squaredNorm();
            }
            return f;
        };
        // FISTA with function-value restarts.
        Eigen::VectorXd z = x, x_prev = x;
        double tk = 1.0;
        double f_prev = merit(x);
        bool inner_converged = false;
        for (int it = 0; it < cfg.max_iterations; ++it) {
            Eigen::VectorXd x_new = (z - step * grad(z)).cwiseMax(qp.lo).cwiseMin(qp.hi);
            const double f_new = merit(x_new);
            if (f_new > f_prev) {
                // restart momentum from the last accepted iterate
                tk = 1.0;
                z = x;
                x_new = (x - step * grad(x)).cwiseMax(qp.lo).cwiseMin(qp.hi);
            }
            const double change = (x_new - x).cwiseAbs().maxCoeff();
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
            z = x_new + ((tk - 1.0) / t_next) * (x_new - x);
            x_prev = x;
            x = x_new;
            tk = t_next;
            f_prev = merit(x);
            if (change <= cfg.tolerance * (1.0 + x.cwiseAbs().maxCoeff())) {
                inner_converged = true;
                break;
            }
        }
        const double viol = violation(x);
        if (qp.G.rows() > 0) {
            const Eigen::VectorXd v = qp.G * x + y / rho;
            y = rho * (v - project_rows(v));
        }
        sol.converged = inner_converged && viol <= cfg.feasibility_tol;
        if (sol.converged) break;
        if (viol > 0.25 * prev_violation) rho *= 10.0;
        prev_violation = viol;
    }
    sol.x = x;
    sol.violation = violation(x);
    return sol;
}

}  // namespace

MpcResult mpc_plan(const DispatchState& state, const GridSpec& spec, const Forecast& forecast, const MpcConfig& config) {
    if (config.horizon < 1) throw std::invalid_argument("MPC horizon must be at least 1");
    if (config.network == NetworkModel::ac) throw std::invalid_argument("MPC supports the dc and copper_plate models");
    const int remaining = state.horizon - state.t;
    if (remaining < 1) throw std::invalid_argument("MPC called past the end of the horizon");
    const int n = std::min(config.horizon, remaining);
    if (forecast.load_p.rows() < n || forecast.re.rows() < n) throw std::invalid_argument("forecast shorter than the MPC window");

    const double dt = spec.dt_hours;
    const double base = spec.base_mva;
    const int slack_tg = spec.slack_thermal();
    const auto& slack = spec.thermal_units[static_cast<std::size_t>(slack_tg)];
    std::vector<int> tg_idx;
    for (int k = 0; k < static_cast<int>(spec.thermal_units.size()); ++k) {
        if (k != slack_tg) tg_idx.push_back(k);
    }
    const int ng = static_cast<int>(tg_idx.size());
    const int nr = static_cast<int>(spec.renewable_units.size());
    const int ne = static_cast<int>(spec.storage_units.size());
    const int per = ng + nr + 2 * ne;
    const int N = n * per;
    auto var_p = [&](int k, int i) { return k * per + i; };
    auto var_r = [&](int k, int j) { return k * per + ng + j; };
    auto var_c = [&](int k, int e) { return k * per + ng + nr + e; };
    auto var_d = [&](int k, int e) { return k * per + ng + nr + ne + e; };

    auto load_row = [&](int k) -> Eigen::VectorXd {
        return k == 0 ? state.load_p : Eigen::VectorXd(forecast.load_p.row(k).transpose());
    };
    auto ceiling = [&](int k, int j) {
        return std::max(0.0, k == 0 ? state.re_ceiling[static_cast<std::size_t>(j)] : forecast.re(k, j));
    };

    BoxQp qp;
    qp.H = Eigen::MatrixXd::Zero(N, N);
    qp.g = Eigen::VectorXd::Zero(N);
    qp.lo.resize(N);
    qp.hi.resize(N);
    double constant = 0.0;
    std::vector<double> load_total(static_cast<std::size_t>(n));
    const ActionBox box0 = feasible_action_box(state, spec);

    for (int k = 0; k < n; ++k) {
        const Eigen::VectorXd load = load_row(k);
        const double L = load.sum();
        load_total[static_cast<std::size_t>(k)] = L;
        Eigen::VectorXd w = Eigen::VectorXd::Zero(N);  // slack = L - w'x
        for (int i = 0; i < ng; ++i) {
            const auto& tg = spec.thermal_units[static_cast<std::size_t>(tg_idx[static_cast<std::size_t>(i)])];
            const int v = var_p(k, i);
            qp.H(v, v) += 2.0 * tg.cost_a * dt;
            qp.g(v) += tg.cost_b * dt;
            constant += tg.cost_c;
            qp.lo(v) = k == 0 ? box0.lo[static_cast<std::size_t>(tg_idx[static_cast<std::size_t>(i)])] : tg.p_min;
            qp.hi(v) = k == 0 ? box0.hi[static_cast<std::size_t>(tg_idx[static_cast<std::size_t>(i)])] : tg.p_max;
            w(v) = 1.0;
        }
        for (int j = 0; j < nr; ++j) {
            const int v = var_r(k, j);
            const double beta = spec.renewable_units[static_cast<std::size_t>(j)].curtailment_penalty;
            qp.g(v) -= beta * dt;
            constant += beta * ceiling(k, j) * dt;
            qp.lo(v) = 0.0;
            qp.hi(v) = ceiling(k, j);
            w(v) = 1.0;
        }
        for (int e = 0; e < ne; ++e) {
            const auto& es = spec.storage_units[static_cast<std::size_t>(e)];
            const int c = var_c(k, e), d = var_d(k, e);
            qp.g(c) += es.degradation_cost * dt;
            qp.g(d) += es.degradation_cost * dt;
            // flattened box order: every thermal unit, then renewables, then storage
            const std::size_t slot = static_cast<std::size_t>(ng + 1 + nr + e);
            qp.lo(c) = 0.0;
            qp.hi(c) = k == 0 ? -box0.lo[slot] : es.charge_max;
            qp.lo(d) = 0.0;
            qp.hi(d) = k == 0 ? box0.hi[slot] : es.discharge_max;
            w(c) = -1.0;
            w(d) = 1.0;
        }
        // slack cost a (L - w'x)^2 dt + b (L - w'x) dt + c
        qp.H += 2.0 * slack.cost_a * dt * w * w.transpose();
        qp.g += (-2.0 * slack.cost_a * dt * L - slack.cost_b * dt) * w;
        constant += slack.cost_a * dt * L * L + slack.cost_b * dt * L + slack.cost_c;
    }
    std::vector<Eigen::VectorXd> rows;
    std::vector<double> lows, highs;
    auto add_row = [&](Eigen::VectorXd r, double lo, double hi) {
        rows.push_back(std::move(r));
        lows.push_back(lo);
        highs.push_back(hi);
    };
    auto slack_row = [&](int k) {
        Eigen::VectorXd r = Eigen::VectorXd::Zero(N);
        for (int i = 0; i < ng; ++i) r(var_p(k, i)) = -1.0;
        for (int j = 0; j < nr; ++j) r(var_r(k, j)) = -1.0;
        for (int e = 0; e < ne; ++e) {
            r(var_c(k, e)) = 1.0;
            r(var_d(k, e)) = -1.0;
        }
        return r;  // slack_k = L_k + r'x
    };
    for (int k = 0; k < n; ++k) {
        const double L = load_total[static_cast<std::size_t>(k)];
        const double lo = k == 0 ? box0.lo[static_cast<std::size_t>(slack_tg)] : slack.p_min;
        const double hi = k == 0 ? box0.hi[static_cast<std::size_t>(slack_tg)] : slack.p_max;
        add_row(slack_row(k), lo - L, hi - L);
        if (k > 0) {
            const double dl = L - load_total[static_cast<std::size_t>(k) - 1];
            if (slack.ramp_up < slack.p_max - slack.p_min || slack.ramp_down > slack.p_min - slack.p_max) {
                add_row(slack_row(k) - slack_row(k - 1), slack.ramp_down - dl, slack.ramp_up - dl);
            }
            for (int i = 0; i < ng; ++i) {
                const auto& tg = spec.thermal_units[static_cast<std::size_t>(tg_idx[static_cast<std::size_t>(i)])];
                Eigen::VectorXd r = Eigen::VectorXd::Zero(N);
                r(var_p(k, i)) = 1.0;
                r(var_p(k - 1, i)) = -1.0;
                add_row(std::move(r), tg.ramp_down, tg.ramp_up);
            }
        }
    }
    for (int e = 0; e < ne; ++e) {
        const auto& es = spec.storage_units[static_cast<std::size_t>(e)];
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(N);
        const double e0 = state.es_energy[static_cast<std::size_t>(e)];
        for (int k = 0; k < n; ++k) {
            acc(var_c(k, e)) = es.eta_charge * dt;
            acc(var_d(k, e)) = -dt / es.eta_discharge;
            add_row(acc, es.energy_min - e0, es.energy_max - e0);
        }
    }
    if (config.network == NetworkModel::dc) {
        const GridSpec topo = topology_at(spec, state);
        const Eigen::MatrixXd P = dc_flow_sensitivity(topo) * (1.0 / base);
        for (int k = 0; k < n; ++k) {
            const Eigen::VectorXd load = load_row(k);
            for (std::size_t l = 0; l < topo.lines.size(); ++l) {
                if (!topo.lines[l].in_service) continue;
                const auto li = static_cast<Eigen::Index>(l);
                // scale rows to MW so every constraint row lives in the same units
                Eigen::VectorXd r = Eigen::VectorXd::Zero(N);
                for (int i = 0; i < ng; ++i) {
                    r(var_p(k, i)) = P(li, spec.thermal_units[static_cast<std::size_t>(tg_idx[static_cast<std::size_t>(i)])].bus) * base;
                }
                for (int j = 0; j < nr; ++j) r(var_r(k, j)) = P(li, spec.renewable_units[static_cast<std::size_t>(j)].bus) * base;
                for (int e = 0; e < ne; ++e) {
                    const int bus = spec.storage_units[static_cast<std::size_t>(e)].bus;
                    r(var_c(k, e)) = -P(li, bus) * base;
                    r(var_d(k, e)) = P(li, bus) * base;
                }
                const double f0 = -(P.row(li).dot(load)) * base;
                const double lim = topo.lines[l].flow_limit * base;
                add_row(std::move(r), -lim - f0, lim - f0);
            }
        }
    }
    qp.G.resize(static_cast<Eigen::Index>(rows.size()), N);
    qp.l.resize(static_cast<Eigen::Index>(rows.size()));
    qp.u.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        qp.G.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
        qp.l(static_cast<Eigen::Index>(r)) = lows[r];
        qp.u(static_cast<Eigen::Index>(r)) = highs[r];
    }

    const QpSolution sol = solve_box_qp(qp, config);
    MpcResult result;
    result.converged = sol.converged;
    result.max_violation = sol.violation;
    result.planned_cost = 0.5 * sol.x.dot(qp.H * sol.x) + qp.g.dot(sol.x) + constant;
    for (int k = 0; k < n; ++k) {
        DispatchAction a;
        a.tg.assign(spec.thermal_units.size(), 0.0);
        for (int i = 0; i < ng; ++i) a.tg[static_cast<std::size_t>(tg_idx[static_cast<std::size_t>(i)])] = sol.x(var_p(k, i));
        a.tg[static_cast<std::size_t>(slack_tg)] = load_total[static_cast<std::size_t>(k)] + slack_row(k).dot(sol.x);
        for (int j = 0; j < nr; ++j) a.re.push_back(sol.x(var_r(k, j)));
        for (int e = 0; e < ne; ++e) a.es.push_back(sol.x(var_d(k, e)) - sol.x(var_c(k, e)));
        result.plan.push_back(std::move(a));
    }
    result.action = result.plan.front();
    return result;
}

DispatchAction mpc_policy(const DispatchState& state, const GridSpec& spec, const ScenarioFamily& family,
                          const MpcConfig& config, bool* converged) {
    const int n = std::min(config.horizon, state.horizon - state.t);
    const Forecast fc = forecast_expectation(family, state.t, n);
    const MpcResult r = mpc_plan(state, spec, fc, config);
    if (converged) *converged = r.converged;
    return r.action;
}

EpisodeTrace run_mpc(const GridSpec& spec, const ScenarioSample& sample, const ScenarioFamily& family,
                     const MpcConfig& config, const EnvConfig& env) {
    const Policy policy = [&](const DispatchState& state, const GridGraph&, const Eigen::VectorXd&) {
        return normalize_action(mpc_policy(state, spec, family, config), feasible_action_box(state, spec));
    };
    return rollout(policy, spec, sample, Eigen::VectorXd(), env);
}

double optimality(double f_ops, double f) {
    if (!(f_ops > 0.0) || !(f > 0.0)) throw std::invalid_argument("optimality needs positive costs");
    return f_ops / f * 100.0;
}

}  // namespace metagrl
