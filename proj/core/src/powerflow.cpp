#include "metagrl/powerflow.hpp"

#include <cmath>
#include <sstream>

namespace metagrl {

InjectionSet InjectionSet::zeros(const GridSpec& spec) {
    const int n = spec.bus_count();
    return InjectionSet{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n)};
}

double LineFlow::apparent_max() const {
    return std::max(std::hypot(p_from, q_from), std::hypot(p_to, q_to));
}

Admittance build_admittance(const GridSpec& spec) {
    const int n = spec.bus_count();
    Admittance y{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
    for (const auto& line : spec.lines) {
        if (!line.in_service) continue;
        const int i = line.from_bus, j = line.to_bus;
        y.g(i, i) += line.conductance;
        y.g(j, j) += line.conductance;
        y.g(i, j) -= line.conductance;
        y.g(j, i) -= line.conductance;
        y.b(i, i) += line.susceptance;
        y.b(j, j) += line.susceptance;
        y.b(i, j) -= line.susceptance;
        y.b(j, i) -= line.susceptance;
    }
    return y;
}

namespace {

void injections(const Admittance& y, const Eigen::VectorXd& u, const Eigen::VectorXd& theta, Eigen::VectorXd& p,
                Eigen::VectorXd& q) {
    const int n = static_cast<int>(u.size());
    p.setZero(n);
    q.setZero(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double gij = y.g(i, j), bij = y.b(i, j);
            if (gij == 0.0 && bij == 0.0) continue;
            const double t = theta(i) - theta(j);
            const double c = std::cos(t), s = std::sin(t);
            p(i) += u(i) * u(j) * (gij * c + bij * s);
            q(i) += u(i) * u(j) * (gij * s - bij * c);
        }
    }
}

LineFlow line_flow(const LineSpec& line, const Eigen::VectorXd& u, const Eigen::VectorXd& theta) {
    LineFlow f;
    f.line_id = line.id;
    if (!line.in_service) return f;
    const double g = line.conductance, b = line.susceptance;
    auto one_end = [&](int i, int j, double& p, double& q) {
        const double t = theta(i) - theta(j);
        const double c = std::cos(t), s = std::sin(t);
        p = g * u(i) * u(i) - u(i) * u(j) * (g * c + b * s);
        q = -b * u(i) * u(i) - u(i) * u(j) * (g * s - b * c);
    };
    one_end(line.from_bus, line.to_bus, f.p_from, f.q_from);
    one_end(line.to_bus, line.from_bus, f.p_to, f.q_to);
    f.loss = f.p_from + f.p_to;
    return f;
}

}  // namespace

PowerFlowSolution solve_ac(const GridSpec& spec, const InjectionSet& inj, const PowerFlowConfig& config) {
    const int n = spec.bus_count();
    if (inj.p.size() != n || inj.q.size() != n || inj.v_set.size() != n) {
        throw PowerFlowError("injection vectors must have one entry per bus");
    }
    const int slack = spec.slack_bus();
    const Admittance y = build_admittance(spec);

    // Unknown ordering: angles of every non-slack bus, then magnitudes of PQ buses.
    std::vector<int> angle_buses, magnitude_buses;
    for (int i = 0; i < n; ++i) {
        if (i == slack) continue;
        angle_buses.push_back(i);
        if (spec.buses[i].kind == BusKind::load) magnitude_buses.push_back(i);
    }
    const int na = static_cast<int>(angle_buses.size());
    const int nm = static_cast<int>(magnitude_buses.size());
    const int dim = na + nm;

    PowerFlowSolution sol;
    sol.u = Eigen::VectorXd::Ones(n);
    sol.theta = Eigen::VectorXd::Zero(n);
    if (!config.flat_start && config.initial_u && config.initial_theta && config.initial_u->size() == n &&
        config.initial_theta->size() == n) {
        sol.u = *config.initial_u;
        sol.theta = *config.initial_theta;
    }
    for (int i = 0; i < n; ++i) {
        if (spec.buses[i].kind != BusKind::load) sol.u(i) = inj.v_set(i);
    }

    Eigen::VectorXd p, q, mismatch(dim);
    Eigen::MatrixXd jac(dim, dim);
    for (int iter = 0;; ++iter) {
        injections(y, sol.u, sol.theta, p, q);
        for (int k = 0; k < na; ++k) mismatch(k) = inj.p(angle_buses[k]) - p(angle_buses[k]);
        for (int k = 0; k < nm; ++k) mismatch(na + k) = inj.q(magnitude_buses[k]) - q(magnitude_buses[k]);
        sol.mismatch = dim > 0 ? mismatch.cwiseAbs().maxCoeff() : 0.0;
        sol.iterations = iter;
        if (!std::isfinite(sol.mismatch)) {
            sol.converged = false;
            break;
        }
        if (sol.mismatch <= config.tolerance) {
            sol.converged = true;
            break;
        }
        if (iter >= config.max_iterations) {
            sol.converged = false;
            break;
        }

        jac.setZero();
        auto fill = [&](int row, int i, bool active_row) {
            for (int c = 0; c < dim; ++c) {
                const bool angle_col = c < na;
                const int j = angle_col ? angle_buses[c] : magnitude_buses[c - na];
                const double gij = y.g(i, j), bij = y.b(i, j);
                double d = 0.0;
                if (i != j) {
                    const double t = sol.theta(i) - sol.theta(j);
                    const double cs = std::cos(t), sn = std::sin(t);
                    if (active_row) {
                        d = angle_col ? sol.u(i) * sol.u(j) * (gij * sn - bij * cs) : sol.u(i) * (gij * cs + bij * sn);
                    } else {
                        d = angle_col ? -sol.u(i) * sol.u(j) * (gij * cs + bij * sn) : sol.u(i) * (gij * sn - bij * cs);
                    }
                } else {
                    const double ui = sol.u(i);
                    if (active_row) {
                        d = angle_col ? -q(i) - bij * ui * ui : p(i) / ui + gij * ui;
                    } else {
                        d = angle_col ? p(i) - gij * ui * ui : q(i) / ui - bij * ui;
                    }
                }
                jac(row, c) = d;
            }
        };
        for (int k = 0; k < na; ++k) fill(k, angle_buses[k], true);
        for (int k = 0; k < nm; ++k) fill(na + k, magnitude_buses[k], false);

        Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
        if (!lu.isInvertible()) {
            throw SingularJacobianError("singular Jacobian at iteration " + std::to_string(iter));
        }
        const Eigen::VectorXd dx = lu.solve(mismatch);
        for (int k = 0; k < na; ++k) sol.theta(angle_buses[k]) += dx(k);
        for (int k = 0; k < nm; ++k) sol.u(magnitude_buses[k]) += dx(na + k);
    }

    injections(y, sol.u, sol.theta, p, q);
    sol.p_injection = p;
    sol.q_injection = q;
    sol.slack_p = p(slack);
    sol.slack_q = q(slack);
    sol.flows.reserve(spec.lines.size());
    for (const auto& line : spec.lines) sol.flows.push_back(line_flow(line, sol.u, sol.theta));
    return sol;
}

namespace {

// Reduced susceptance matrix with the slack row/column removed, plus the index map.
Eigen::MatrixXd reduced_susceptance(const GridSpec& spec, int slack, std::vector<int>& order) {
    const int n = spec.bus_count();
    Eigen::MatrixXd bp = Eigen::MatrixXd::Zero(n, n);
    for (const auto& line : spec.lines) {
        if (!line.in_service) continue;
        if (line.susceptance == 0.0) {
            throw PowerFlowError("line " + std::to_string(line.id) + " has zero susceptance");
        }
        const double b = -line.susceptance;
        bp(line.from_bus, line.from_bus) += b;
        bp(line.to_bus, line.to_bus) += b;
        bp(line.from_bus, line.to_bus) -= b;
        bp(line.to_bus, line.from_bus) -= b;
    }
    order.clear();
    for (int i = 0; i < n; ++i) {
        if (i != slack) order.push_back(i);
    }
    const int m = static_cast<int>(order.size());
    Eigen::MatrixXd red(m, m);
    for (int a = 0; a < m; ++a) {
        for (int c = 0; c < m; ++c) red(a, c) = bp(order[a], order[c]);
    }
    return red;
}

}  // namespace

DcSolution solve_dc(const GridSpec& spec, const Eigen::VectorXd& active_injection) {
    const int n = spec.bus_count();
    if (active_injection.size() != n) throw PowerFlowError("injection vector must have one entry per bus");
    const int slack = spec.slack_bus();
    std::vector<int> order;
    const Eigen::MatrixXd red = reduced_susceptance(spec, slack, order);
    const int m = static_cast<int>(order.size());

    DcSolution sol;
    sol.theta = Eigen::VectorXd::Zero(n);
    if (m > 0) {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(red);
        if (!lu.isInvertible()) throw PowerFlowError("singular reduced susceptance matrix");
        Eigen::VectorXd rhs(m);
        for (int a = 0; a < m; ++a) rhs(a) = active_injection(order[a]);
        const Eigen::VectorXd th = lu.solve(rhs);
        for (int a = 0; a < m; ++a) sol.theta(order[a]) = th(a);
    }
    double others = 0.0;
    for (int i = 0; i < n; ++i) {
        if (i != slack) others += active_injection(i);
    }
    sol.slack_injection = -others;
    sol.flows.reserve(spec.lines.size());
    for (const auto& line : spec.lines) {
        sol.flows.push_back(line.in_service ? -line.susceptance * (sol.theta(line.from_bus) - sol.theta(line.to_bus))
                                            : 0.0);
    }
    return sol;
}

Eigen::MatrixXd dc_flow_sensitivity(const GridSpec& spec) {
    const int n = spec.bus_count();
    Eigen::MatrixXd ptdf(spec.lines.size(), n);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd unit = Eigen::VectorXd::Zero(n);
        unit(i) = 1.0;
        const DcSolution s = solve_dc(spec, unit);
        for (std::size_t l = 0; l < spec.lines.size(); ++l) ptdf(static_cast<Eigen::Index>(l), i) = s.flows[l];
    }
    return ptdf;
}

namespace {

void check_range(std::vector<LimitEntry>& out, double& severity, const std::string& quantity, int element,
                 double value, double lo, double hi) {
    const double range = hi - lo > 0.0 ? hi - lo : 1.0;
    if (value > hi) {
        out.push_back({quantity, element, value, hi, value - hi, (value - hi) / range});
        severity += (value - hi) / range;
    } else if (value < lo) {
        out.push_back({quantity, element, value, lo, lo - value, (lo - value) / range});
        severity += (lo - value) / range;
    }
}

void check_flow(std::vector<LimitEntry>& out, double& severity, int line_id, double magnitude, double limit) {
    if (magnitude > limit) {
        const double excess = magnitude - limit;
        out.push_back({"flow", line_id, magnitude, limit, excess, excess / limit});
        severity += excess / limit;
    }
}

}  // namespace

ViolationReport check_limits(const PowerFlowSolution& sol, const GridSpec& spec, const Eigen::VectorXd& q_tg) {
    ViolationReport report;
    for (int i = 0; i < spec.bus_count(); ++i) {
        const auto& bus = spec.buses[i];
        check_range(report.voltage, report.severity, "voltage", i, sol.u(i), bus.u_min, bus.u_max);
        check_range(report.angle, report.severity, "angle", i, sol.theta(i), bus.theta_min, bus.theta_max);
    }
    for (std::size_t l = 0; l < spec.lines.size(); ++l) {
        const auto& line = spec.lines[l];
        if (!line.in_service || l >= sol.flows.size()) continue;
        check_flow(report.flow, report.severity, line.id, sol.flows[l].apparent_max(), line.flow_limit);
    }
    for (int k = 0; k < static_cast<int>(spec.thermal_units.size()) && k < q_tg.size(); ++k) {
        const auto& tg = spec.thermal_units[k];
        const double q_mvar = q_tg(k) * spec.base_mva;
        const double range = tg.q_max - tg.q_min > 0.0 ? tg.q_max - tg.q_min : spec.base_mva;
        if (q_mvar > tg.q_max) {
            report.reactive.push_back({"reactive", k, q_mvar, tg.q_max, q_mvar - tg.q_max, (q_mvar - tg.q_max) / range});
            report.severity += (q_mvar - tg.q_max) / range;
        } else if (q_mvar < tg.q_min) {
            report.reactive.push_back({"reactive", k, q_mvar, tg.q_min, tg.q_min - q_mvar, (tg.q_min - q_mvar) / range});
            report.severity += (tg.q_min - q_mvar) / range;
        }
    }
    return report;
}

ViolationReport check_dc_limits(const DcSolution& sol, const GridSpec& spec) {
    ViolationReport report;
    for (std::size_t l = 0; l < spec.lines.size(); ++l) {
        const auto& line = spec.lines[l];
        if (!line.in_service || l >= sol.flows.size()) continue;
        check_flow(report.flow, report.severity, line.id, std::abs(sol.flows[l]), line.flow_limit);
    }
    return report;
}

std::string solution_csv(const PowerFlowSolution& sol) {
    std::ostringstream os;
    os.precision(12);
    os << "bus,u,theta\n";
    for (Eigen::Index i = 0; i < sol.u.size(); ++i) os << i << ',' << sol.u(i) << ',' << sol.theta(i) << '\n';
    return os.str();
}

}  // namespace metagrl
