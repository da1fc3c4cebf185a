#include "metagrl/env.hpp"
#include "metagrl/presets.hpp"
#include "metagrl/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace metagrl;

namespace {

ScenarioSample make_sample(const GridSpec& spec, int horizon, double load2, double re) {
    ScenarioSample s;
    s.load_p = Eigen::MatrixXd::Zero(horizon, spec.bus_count());
    s.load_q = Eigen::MatrixXd::Zero(horizon, spec.bus_count());
    s.re_ceiling = Eigen::MatrixXd::Constant(horizon, static_cast<Eigen::Index>(spec.renewable_units.size()), re);
    for (int t = 0; t < horizon; ++t) {
        s.load_p(t, spec.bus_count() - 1) = load2 + 5.0 * t;
        s.load_q(t, spec.bus_count() - 1) = 0.2 * (load2 + 5.0 * t);
    }
    s.seed = 3;
    return s;
}

DispatchAction zero_action(const GridSpec& spec) {
    return DispatchAction::unflatten(Eigen::VectorXd::Zero(action_dim(spec)), spec);
}

Policy random_policy(std::uint64_t seed) {
    auto rng = std::make_shared<Rng>(seed);
    return [rng](const DispatchState& s, const GridGraph&, const Eigen::VectorXd&) {
        (void)s;
        std::uniform_real_distribution<double> u(-1.3, 1.3);
        Eigen::VectorXd raw(4);
        for (int i = 0; i < 4; ++i) raw(i) = u(*rng);
        return raw;
    };
}

EnvConfig copper() {
    EnvConfig c;
    c.network = NetworkModel::copper_plate;
    return c;
}

}  // namespace

TEST(Reset, StorageStartsAtHalfCapacity) {
    const GridSpec g = three_bus_grid();
    const DispatchState s = reset(g, make_sample(g, 4, 100.0, 20.0));
    EXPECT_EQ(s.t, 0);
    ASSERT_EQ(s.es_energy.size(), 1u);
    EXPECT_DOUBLE_EQ(s.es_energy[0], 0.5 * g.storage_units[0].energy_max);
    for (double p : s.tg_prev) EXPECT_EQ(p, 0.0);
}

TEST(Reset, ZeroLoadSample) {
    const GridSpec g = three_bus_grid();
    const DispatchState s = reset(g, make_sample(g, 3, 0.0, 0.0));
    // make_sample ramps by 5 MW per stage; stage 0 has zero load
    EXPECT_TRUE(s.load_p.isZero());
    EXPECT_TRUE(s.load_q.isZero());
}

TEST(Reset, OutageSnapshotMatchesApplyOutage) {
    const GridSpec g = three_bus_grid();
    ScenarioSample smp = make_sample(g, 3, 80.0, 10.0);
    smp.outage_lines = {2};
    smp.outage_stage = {0};
    const DispatchState s = reset(g, smp);
    EXPECT_EQ(s.out_lines, std::set<int>{2});
    const GridSpec topo = topology_at(g, s);
    const GridSpec expected = apply_outage(g, {2});
    for (std::size_t i = 0; i < g.lines.size(); ++i) EXPECT_EQ(topo.lines[i].in_service, expected.lines[i].in_service);
    EXPECT_FALSE(topo.lines[g.line_index(2)].in_service);
}

TEST(Reset, DeviceMismatchThrows) {
    const GridSpec g = three_bus_grid();
    ScenarioSample smp = make_sample(g, 3, 80.0, 10.0);
    smp.re_ceiling = Eigen::MatrixXd::Zero(3, 2);
    EXPECT_THROW(reset(g, smp), std::invalid_argument);
}

TEST(ActionBox, FullStorageCannotCharge) {
    const GridSpec g = three_bus_grid();
    DispatchState s = reset(g, make_sample(g, 3, 80.0, 10.0));
    s.es_energy[0] = g.storage_units[0].energy_max;
    const ActionBox box = feasible_action_box(s, g);
    EXPECT_EQ(box.lo[3], 0.0);
    EXPECT_GT(box.hi[3], 0.0);
}

TEST(ActionBox, RampWindowAtMinimum) {
    GridSpec g = three_bus_grid();
    g.thermal_units[1].ramp_down = -5.0;
    g.thermal_units[1].ramp_up = 5.0;
    DispatchState s = reset(g, make_sample(g, 3, 80.0, 10.0));
    s.tg_prev[1] = g.thermal_units[1].p_min;
    const ActionBox box = feasible_action_box(s, g);
    EXPECT_EQ(box.lo[1], g.thermal_units[1].p_min);
    EXPECT_EQ(box.hi[1], g.thermal_units[1].p_min + 5.0);
    EXPECT_FALSE(box.empty());
}

TEST(ActionBox, DischargeLimitedByEnergyHeadroom) {
    GridSpec g = three_bus_grid();
    auto& es = g.storage_units[0];
    es.eta_discharge = 0.9;
    es.energy_min = 5.0;
    g.dt_hours = 0.25;
    DispatchState s = reset(g, make_sample(g, 3, 80.0, 10.0));
    s.es_energy[0] = es.energy_min + 1.0;
    const ActionBox box = feasible_action_box(s, g);
    EXPECT_NEAR(box.hi[3], 3.6, 1e-12);
}

TEST(ActionBox, DisjointRampReportsCollapse) {
    GridSpec g = three_bus_grid();
    DispatchState s = reset(g, make_sample(g, 3, 80.0, 10.0));
    s.tg_prev[1] = -100.0;  // ramp window below p_min
    const ActionBox box = feasible_action_box(s, g);
    ASSERT_TRUE(box.empty());
    EXPECT_EQ(box.collapsed, std::vector<int>{1});
    EXPECT_EQ(box.lo[1], g.thermal_units[1].p_min);
    EXPECT_EQ(box.hi[1], g.thermal_units[1].p_min);
}

TEST(ProjectAction, AffineMap) {
    const GridSpec g = three_bus_grid();
    ActionBox box;
    box.lo = {0.0, 0.0, 0.0, -4.0};
    box.hi = {10.0, 20.0, 30.0, 6.0};
    const DispatchAction mid = project_action(Eigen::VectorXd::Zero(4), box, g);
    EXPECT_EQ(mid.tg[0], 5.0);
    EXPECT_EQ(mid.re[0], 15.0);
    EXPECT_EQ(mid.es[0], 1.0);
    const DispatchAction top = project_action(Eigen::VectorXd::Ones(4), box, g);
    EXPECT_EQ(top.tg[1], 20.0);
    EXPECT_EQ(top.es[0], 6.0);
    Eigen::VectorXd half = Eigen::VectorXd::Constant(4, 0.5);
    EXPECT_EQ(project_action(half, box, g).tg[0], 7.5);
}

TEST(ProjectAction, NormalizeRoundTrip) {
    const GridSpec g = three_bus_grid();
    const DispatchState s = reset(g, make_sample(g, 3, 80.0, 10.0));
    const ActionBox box = feasible_action_box(s, g);
    Eigen::VectorXd raw(4);
    raw << -0.3, 0.7, 0.1, -0.9;
    const DispatchAction a = project_action(raw, box, g);
    const DispatchAction b = project_action(normalize_action(a, box), box, g);
    EXPECT_NEAR((a.flatten() - b.flatten()).cwiseAbs().maxCoeff(), 0.0, 1e-12);
}

TEST(StageCost, FixedTermsOnly) {
    const GridSpec g = three_bus_grid();
    const DispatchState s = reset(g, make_sample(g, 3, 0.0, 0.0));
    const CostBreakdown c = stage_cost(zero_action(g), s, g);
    EXPECT_EQ(c.c_re, 0.0);
    EXPECT_EQ(c.c_es, 0.0);
    EXPECT_DOUBLE_EQ(c.total, g.thermal_units[0].cost_c + g.thermal_units[1].cost_c);
}

TEST(StageCost, QuadraticHandValue) {
    GridSpec g = two_bus_grid();
    g.dt_hours = 0.25;
    auto& tg = g.thermal_units[0];
    tg.cost_a = 0.01;
    tg.cost_b = 1.0;
    tg.cost_c = 5.0;
    const DispatchState s = reset(g, make_sample(g, 1, 0.0, 0.0));
    DispatchAction a = zero_action(g);
    a.tg[0] = 10.0;
    EXPECT_NEAR(stage_cost(a, s, g).c_tg, 7.75, 1e-12);
}

TEST(StageCost, NoCurtailmentAtCeiling) {
    const GridSpec g = three_bus_grid();
    const DispatchState s = reset(g, make_sample(g, 3, 80.0, 35.0));
    DispatchAction a = zero_action(g);
    a.re[0] = 35.0;
    EXPECT_EQ(stage_cost(a, s, g).c_re, 0.0);
    a.re[0] = 25.0;
    EXPECT_DOUBLE_EQ(stage_cost(a, s, g).c_re, g.renewable_units[0].curtailment_penalty * 10.0 * g.dt_hours);
}

TEST(Step, ZeroLoadZeroActionOnLosslessNetwork) {
    const GridSpec g = two_bus_grid(0.0, -10.0);
    ScenarioSample smp = make_sample(g, 2, 0.0, 0.0);
    smp.load_p.setZero();
    smp.load_q.setZero();
    const DispatchState s = reset(g, smp);
    EnvConfig cfg;
    cfg.reward_scale = 50.0;
    const StepResult r = step(s, zero_action(g), g, smp, cfg);
    EXPECT_TRUE(r.converged);
    EXPECT_TRUE(r.violations.empty());
    EXPECT_NEAR(r.realized.tg[0], 0.0, 1e-9);
    EXPECT_NEAR(r.reward, -g.thermal_units[0].cost_c / 50.0, 1e-9);
    EXPECT_EQ(r.next.t, 1);
    EXPECT_FALSE(r.done);
}

TEST(Step, DischargeUpdatesEnergy) {
    GridSpec g = three_bus_grid();
    g.dt_hours = 0.25;
    g.storage_units[0].eta_discharge = 0.8;
    const ScenarioSample smp = make_sample(g, 3, 80.0, 10.0);
    const DispatchState s = reset(g, smp);
    DispatchAction a = zero_action(g);
    a.tg[1] = 10.0;
    a.es[0] = 4.0;
    const StepResult r = step(s, a, g, smp, copper());
    EXPECT_NEAR(r.next.es_energy[0] - s.es_energy[0], -1.25, 1e-12);
}

TEST(Step, NonconvergencePenaltyAndCarriedVoltages) {
    const GridSpec g = two_bus_grid();
    ScenarioSample smp = make_sample(g, 2, 2000.0, 0.0);
    const DispatchState s = reset(g, smp);
    EnvConfig cfg;
    const StepResult r = step(s, zero_action(g), g, smp, cfg);
    EXPECT_FALSE(r.converged);
    EXPECT_GE(r.cost.penalty, cfg.nonconvergence_penalty);
    EXPECT_EQ(r.next.u, s.u);
    EXPECT_EQ(r.next.theta, s.theta);
    EXPECT_FALSE(r.done);
    EXPECT_EQ(r.next.t, 1);
}

TEST(Step, HardFailTerminatesRollout) {
    const GridSpec g = two_bus_grid();
    const ScenarioSample smp = make_sample(g, 4, 2000.0, 0.0);
    EnvConfig cfg;
    cfg.hard_fail = true;
    const Policy zero = [](const DispatchState&, const GridGraph&, const Eigen::VectorXd&) {
        return Eigen::VectorXd::Zero(1);
    };
    const EpisodeTrace tr = rollout(zero, g, smp, Eigen::VectorXd::Zero(2), cfg);
    EXPECT_TRUE(tr.terminated_early);
    EXPECT_EQ(tr.transitions.size(), 1u);
    EXPECT_TRUE(tr.transitions[0].done);
}

TEST(Step, TerminalFlagOnLastStage) {
    const GridSpec g = three_bus_grid();
    const ScenarioSample smp = make_sample(g, 2, 80.0, 10.0);
    DispatchState s = reset(g, smp);
    StepResult r = step(s, zero_action(g), g, smp, copper());
    EXPECT_FALSE(r.done);
    r = step(r.next, zero_action(g), g, smp, copper());
    EXPECT_TRUE(r.done);
}

TEST(Step, MonotonePenaltyInLoad) {
    const GridSpec g = three_bus_grid();
    EnvConfig cfg;
    cfg.network = NetworkModel::dc;
    double prev = -1.0;
    for (double load = 50.0; load <= 400.0; load += 25.0) {
        const ScenarioSample smp = make_sample(g, 1, load, 0.0);
        const DispatchState s = reset(g, smp);
        const StepResult r = step(s, zero_action(g), g, smp, cfg);
        EXPECT_GE(r.violations.severity, prev) << "load " << load;
        prev = r.violations.severity;
    }
    EXPECT_GT(prev, 0.0);
}

TEST(Rollout, ZeroPolicySumsStageCosts) {
    const GridSpec g = three_bus_grid();
    const ScenarioSample smp = make_sample(g, 5, 80.0, 10.0);
    const Policy zero = [](const DispatchState&, const GridGraph&, const Eigen::VectorXd&) {
        return Eigen::VectorXd::Zero(4);
    };
    const EpisodeTrace tr = rollout(zero, g, smp, Eigen::VectorXd::Zero(2), copper());
    ASSERT_EQ(tr.transitions.size(), 5u);
    double sum = 0.0, pen = 0.0;
    for (const auto& t : tr.transitions) {
        const CostBreakdown c = stage_cost(t.action, t.state, g);
        sum += c.total + t.cost.penalty;
        pen += t.cost.penalty;
    }
    EXPECT_NEAR(tr.cumulative_cost, sum, 1e-9 * std::abs(sum));
    EXPECT_NEAR(tr.cumulative_penalty, pen, 1e-9 * (1.0 + pen));
}

TEST(Rollout, SingleStage) {
    const GridSpec g = three_bus_grid();
    const ScenarioSample smp = make_sample(g, 1, 80.0, 10.0);
    const EpisodeTrace tr = rollout(random_policy(4), g, smp, Eigen::VectorXd::Zero(2), copper());
    ASSERT_EQ(tr.transitions.size(), 1u);
    EXPECT_TRUE(tr.transitions[0].done);
    EXPECT_EQ(tr.cumulative_cost, tr.transitions[0].cost.total);
}

TEST(Rollout, DeterministicForSameInputs) {
    const GridSpec g = three_bus_grid();
    const ScenarioSample smp = make_sample(g, 6, 80.0, 10.0);
    const EpisodeTrace a = rollout(random_policy(9), g, smp, Eigen::VectorXd::Zero(2));
    const EpisodeTrace b = rollout(random_policy(9), g, smp, Eigen::VectorXd::Zero(2));
    EXPECT_EQ(trace_jsonl(a), trace_jsonl(b));
    EXPECT_EQ(a.cumulative_cost, b.cumulative_cost);
}

TEST(Rollout, RandomPolicyProperties) {
    const GridSpec g = three_bus_grid();
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const ScenarioSample smp = make_sample(g, 8, 60.0 + seed % 90, 5.0 + seed % 40);
        const EnvConfig cfg = seed % 2 ? copper() : EnvConfig{};
        const EpisodeTrace tr = rollout(random_policy(seed), g, smp, Eigen::VectorXd::Zero(2), cfg);
        const double scale = effective_reward_scale(g, 8, cfg);
        const auto& es = g.storage_units[0];
        double telescoped = 0.0;
        for (const auto& t : tr.transitions) {
            const ActionBox box = feasible_action_box(t.state, g);
            EXPECT_TRUE(box.contains(t.action.flatten()));
            EXPECT_EQ(t.action.charge(0) * t.action.discharge(0), 0.0);
            const double delta = (es.eta_charge * t.action.charge(0) - t.action.discharge(0) / es.eta_discharge) * g.dt_hours;
            EXPECT_EQ(t.next_state.es_energy[0], t.state.es_energy[0] + delta);
            telescoped += delta;
            EXPECT_NEAR(-t.reward * scale, t.cost.total, 1e-9 * std::abs(t.cost.total));
        }
        const double moved = tr.transitions.back().next_state.es_energy[0] - tr.transitions.front().state.es_energy[0];
        EXPECT_NEAR(moved, telescoped, 1e-12 * es.energy_max);
    }
}

TEST(TraceJsonl, RoundTrip) {
    const GridSpec g = three_bus_grid();
    const ScenarioSample smp = make_sample(g, 4, 80.0, 10.0);
    EpisodeTrace tr = rollout(random_policy(2), g, smp, Eigen::VectorXd::Zero(2), copper());
    tr.family_id = 5;
    const auto back = traces_from_jsonl(trace_jsonl(tr));
    ASSERT_EQ(back.size(), 1u);
    ASSERT_EQ(back[0].transitions.size(), tr.transitions.size());
    EXPECT_EQ(back[0].family_id, 5);
    for (std::size_t i = 0; i < tr.transitions.size(); ++i) {
        const auto& a = tr.transitions[i];
        const auto& b = back[0].transitions[i];
        EXPECT_EQ(a.reward, b.reward);
        EXPECT_EQ(a.done, b.done);
        EXPECT_EQ(a.raw_action, b.raw_action);
        EXPECT_EQ(a.graph.eig, b.graph.eig);
        EXPECT_EQ(a.next_graph.adj, b.next_graph.adj);
    }
}
