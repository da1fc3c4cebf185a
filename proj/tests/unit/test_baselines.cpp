#include "metagrl/baselines.hpp"
#include "metagrl/presets.hpp"
#include "metagrl/rng.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace metagrl;

namespace {

ScenarioSample constant_sample(const GridSpec& spec, int horizon, double load, double re) {
    ScenarioSample s;
    s.load_p = Eigen::MatrixXd::Zero(horizon, spec.bus_count());
    s.load_q = Eigen::MatrixXd::Zero(horizon, spec.bus_count());
    s.load_p.col(spec.bus_count() - 1).setConstant(load);
    s.re_ceiling = Eigen::MatrixXd::Constant(horizon, static_cast<Eigen::Index>(spec.renewable_units.size()), re);
    return s;
}

EnvConfig copper() {
    EnvConfig env;
    env.network = NetworkModel::copper_plate;
    return env;
}

GridSpec three_bus_without_storage() {
    GridSpec g = three_bus_grid();
    g.storage_units.clear();
    return g;
}

// Deterministic three-bus family with a peak in the middle of the horizon.
ScenarioFamily peaked_family() {
    ScenarioFamily f;
    f.id = 1;
    const std::vector<double> load{70, 110, 180, 200, 150, 90};
    f.horizon = static_cast<int>(load.size());
    f.load_shape = {std::vector<double>(load.size(), 0.0), std::vector<double>(load.size(), 0.0), load};
    f.re_shape = {{60, 50, 20, 5, 30, 70}};
    f.sigma = 0.0;
    f.label = "peaked";
    return f;
}

// Lattice the DP is expected to use for an energy step of Emax / 6, built
// from its definition: cells at e0 + k step strictly inside the bounds, plus
// the two bounds.
std::vector<double> sixth_lattice(const StorageUnit& es) {
    const double e0 = es.initial_energy();
    const double step = es.energy_max / 6.0;
    std::vector<double> out{es.energy_min, es.energy_max};
    for (int k = -2; k <= 2; ++k) out.push_back(e0 + static_cast<double>(k) * step);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST(Optimality, ReportedFigures) {
    EXPECT_NEAR(optimality(4.534e6, 4.873e6), 93.04, 0.01);
    EXPECT_NEAR(optimality(6.716e6, 7.179e6), 93.55, 0.01);
    EXPECT_NEAR(optimality(5.072e6, 5.516e6), 91.95, 0.01);
    EXPECT_NEAR(optimality(6.054e6, 6.490e6), 93.28, 0.01);
    EXPECT_NEAR(optimality(6.364e6, 7.195e6), 88.45, 0.01);
    EXPECT_DOUBLE_EQ(optimality(3.0, 3.0), 100.0);
}

TEST(Optimality, RejectsNonpositiveInputs) {
    EXPECT_THROW(optimality(0.0, 1.0), std::invalid_argument);
    EXPECT_THROW(optimality(1.0, -1.0), std::invalid_argument);
    EXPECT_THROW(optimality(std::nan(""), 1.0), std::invalid_argument);
}

TEST(Optimality, AtMostHundredWhenCostDominates) {
    Rng rng(9);
    std::uniform_real_distribution<double> u(1.0, 1e7);
    for (int k = 0; k < 1000; ++k) {
        const double f_ops = u(rng);
        const double f = f_ops + u(rng) * (k % 2);
        EXPECT_LE(optimality(f_ops, f), 100.0);
    }
}

TEST(Lattice, EndpointsAndSpacing) {
    const GridSpec g = three_bus_grid();
    const auto tl = thermal_lattice(g.thermal_units[1], 25.0);
    EXPECT_EQ(tl, (std::vector<double>{10, 35, 60, 85, 110, 120}));
    const auto el = energy_lattice(g.storage_units[0], 12.0);
    EXPECT_EQ(el, (std::vector<double>{0, 6, 18, 30, 42, 54, 60}));
    EXPECT_THROW(thermal_lattice(g.thermal_units[1], 0.0), std::invalid_argument);
    EXPECT_THROW(energy_lattice(g.storage_units[0], -1.0), std::invalid_argument);
}

TEST(Oracle, ConstantLoadWithoutStorageFollowsLoad) {
    const GridSpec g = two_bus_grid();
    const ScenarioSample s = constant_sample(g, 5, 80.0, 0.0);
    const OracleResult r = ops_oracle(g, s, DpDiscretization{});
    ASSERT_EQ(r.schedule.size(), 5u);
    for (const auto& a : r.schedule) EXPECT_NEAR(a.tg[0], 80.0, 1e-9);
    const auto& tg = g.thermal_units[0];
    const double closed = 5.0 * (tg.cost_a * 80.0 * 80.0 + tg.cost_b * 80.0 + tg.cost_c) * g.dt_hours;
    EXPECT_NEAR(r.dp_cost, closed, 1e-9 * closed);
    EXPECT_NEAR(r.cost, closed, 1e-9 * closed);
}

TEST(Oracle, ZeroLoadCostsFixedTermsOnly) {
    const GridSpec g = two_bus_grid();
    const OracleResult r = ops_oracle(g, constant_sample(g, 4, 0.0, 0.0), DpDiscretization{});
    for (const auto& a : r.schedule) EXPECT_EQ(a.tg[0], 0.0);
    EXPECT_NEAR(r.cost, 4.0 * g.thermal_units[0].cost_c * g.dt_hours, 1e-12);
}

// DP optimum equals the exhaustive minimum over the same energy lattice.
TEST(Oracle, MatchesExhaustiveEnumeration) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const TinyInstance inst = random_tiny_instance(seed, 4);
        const auto& es = inst.spec.storage_units[0];
        DpDiscretization disc;
        disc.energy_step = es.energy_max / 6.0;
        const OracleResult r = ops_oracle(inst.spec, inst.sample, disc);
        long count = 0;
        const double best = oracle::enumerate_min_cost(inst, sixth_lattice(es), &count);
        ASSERT_GT(count, 0) << seed;
        ASSERT_LE(count, 10000) << seed;
        EXPECT_EQ(energy_lattice(es, disc.energy_step), sixth_lattice(es)) << seed;
        EXPECT_EQ(r.cost, best) << seed;
        EXPECT_NEAR(r.dp_cost, r.cost, 1e-9 * r.cost) << seed;
    }
}

TEST(Oracle, HalvingTheGridNeverRaisesCost) {
    for (std::uint64_t seed = 100; seed < 106; ++seed) {
        const TinyInstance inst = random_tiny_instance(seed, 4);
        DpDiscretization coarse;
        coarse.energy_step = inst.spec.storage_units[0].energy_max / 4.0;
        DpDiscretization fine = coarse;
        fine.energy_step /= 2.0;
        const double c = ops_oracle(inst.spec, inst.sample, coarse).cost;
        const double f = ops_oracle(inst.spec, inst.sample, fine).cost;
        EXPECT_LE(f, c * (1.0 + 1e-12)) << seed;
    }
}

TEST(Oracle, ScheduleReplaysToClaimedCost) {
    const GridSpec g = three_bus_grid();
    const ScenarioFamily f = peaked_family();
    const ScenarioSample s = sample_scenario(f, g, 3);
    DpDiscretization disc;
    disc.energy_step = 5.0;
    disc.power_step = 5.0;
    const OracleResult r = ops_oracle(g, s, disc);
    const EpisodeTrace tr = replay_schedule(g, s, r.schedule, copper());
    EXPECT_EQ(tr.cumulative_cost, r.cost);
    EXPECT_NEAR(r.cost, r.dp_cost, 1e-6 * r.cost);
    EXPECT_GT(r.states_per_stage, 0);
    EXPECT_GT(r.evaluations, 0);
}

TEST(Oracle, GuardAndUnsupportedModels) {
    const GridSpec g = three_bus_grid();
    const ScenarioSample s = constant_sample(g, 2, 100.0, 20.0);
    DpDiscretization disc;
    disc.energy_step = 0.01;
    disc.power_step = 0.01;
    EXPECT_THROW(ops_oracle(g, s, disc), OracleTooLargeError);
    DpDiscretization ac;
    ac.network = NetworkModel::ac;
    EXPECT_THROW(ops_oracle(g, s, ac), OracleUnsupportedError);
}

TEST(Oracle, ScheduleCsvLayout) {
    const GridSpec g = three_bus_grid();
    DpDiscretization disc;
    disc.energy_step = 10.0;
    disc.power_step = 10.0;
    const OracleResult r = ops_oracle(g, constant_sample(g, 3, 100.0, 20.0), disc);
    const std::string csv = schedule_csv(g, r.schedule);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "stage,tg_0,tg_1,re_0,es_0");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(DispatchSlack, CoversDemandAndUsesRenewables) {
    const GridSpec g = three_bus_grid();
    const SlackDispatch d = dispatch_slack(g, {30.0}, 50.0);
    ASSERT_TRUE(d.feasible);
    EXPECT_NEAR(d.slack, 50.0, 1e-9);
    ASSERT_EQ(d.re.size(), 1u);
    EXPECT_NEAR(d.re[0], 30.0, 1e-9);
    // Demand below the slack floor is met by curtailing.
    const SlackDispatch low = dispatch_slack(g, {30.0}, -10.0);
    ASSERT_TRUE(low.feasible);
    EXPECT_NEAR(low.slack, 0.0, 1e-9);
    EXPECT_NEAR(low.re[0], 20.0, 1e-9);
    EXPECT_FALSE(dispatch_slack(g, {30.0}, 1000.0).feasible);
}

TEST(Mpc, ZeroLoadGivesZeroAction) {
    const TinyInstance inst = random_tiny_instance(2, 3);
    const GridSpec& g = inst.spec;
    const DispatchState st = reset(g, constant_sample(g, 3, 0.0, 0.0));
    Forecast fc;
    fc.load_p = Eigen::MatrixXd::Zero(3, g.bus_count());
    fc.load_q = fc.load_p;
    fc.re = Eigen::MatrixXd::Zero(3, 0);
    MpcConfig cfg;
    cfg.horizon = 3;
    const MpcResult r = mpc_plan(st, g, fc, cfg);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.action.tg[0], 0.0, 1e-6);
    EXPECT_NEAR(r.action.es[0], 0.0, 1e-6);
}

TEST(Mpc, SlackOnlyGridHasNothingToDecide) {
    const GridSpec g = two_bus_grid();
    const DispatchState st = reset(g, constant_sample(g, 2, 60.0, 0.0));
    Forecast fc;
    fc.load_p = Eigen::MatrixXd::Constant(2, g.bus_count(), 30.0);
    fc.load_q = Eigen::MatrixXd::Zero(2, g.bus_count());
    fc.re = Eigen::MatrixXd::Zero(2, 0);
    const MpcResult r = mpc_plan(st, g, fc, MpcConfig{});
    EXPECT_TRUE(r.converged);
    EXPECT_DOUBLE_EQ(r.action.tg[0], 60.0);
    ASSERT_EQ(r.plan.size(), 2u);
    EXPECT_DOUBLE_EQ(r.plan[1].tg[0], 60.0);
}

TEST(Mpc, OneStageMatchesOneStageOracle) {
    const GridSpec g = three_bus_without_storage();
    MpcConfig cfg;
    cfg.horizon = 1;
    cfg.network = NetworkModel::copper_plate;
    DpDiscretization disc;
    disc.power_step = 0.01;
    for (double load : {40.0, 120.0, 210.0}) {
        const ScenarioSample s = constant_sample(g, 1, load, 25.0);
        ScenarioFamily f;
        f.id = 1;
        f.horizon = 1;
        f.load_shape = {{0.0}, {0.0}, {load}};
        f.re_shape = {{25.0}};
        const double mpc = run_mpc(g, s, f, cfg, copper()).cumulative_cost;
        const double dp = ops_oracle(g, s, disc).cost;
        EXPECT_NEAR(mpc, dp, 1e-4 * dp) << load;
    }
}

TEST(Mpc, LongerWindowsDoNotCostMoreAndFullWindowNearsOracle) {
    const GridSpec g = three_bus_grid();
    const ScenarioFamily f = peaked_family();
    const ScenarioSample s = sample_scenario(f, g, 1);
    MpcConfig cfg;
    cfg.network = NetworkModel::copper_plate;
    std::vector<double> costs;
    for (int n = 1; n <= f.horizon; ++n) {
        cfg.horizon = n;
        costs.push_back(run_mpc(g, s, f, cfg, copper()).cumulative_cost);
    }
    for (std::size_t k = 1; k < costs.size(); ++k) EXPECT_LE(costs[k], costs[k - 1] * 1.01) << k + 1;
    DpDiscretization disc;
    disc.energy_step = 2.0;
    disc.power_step = 2.0;
    const double ops = ops_oracle(g, s, disc).cost;
    EXPECT_NEAR(costs.back(), ops, 0.02 * ops);
}
