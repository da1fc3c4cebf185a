#include "metagrl/baselines.hpp"
#include "metagrl/grid_io.hpp"
#include "metagrl/nn.hpp"
#include "metagrl/powerflow.hpp"
#include "metagrl/presets.hpp"
#include "metagrl/sac.hpp"

#include <benchmark/benchmark.h>

#include <filesystem>

using namespace metagrl;

namespace {

const std::filesystem::path kData = METAGRL_DATA_DIR;

std::vector<Transition> random_transitions(int episodes) {
    const GridSpec g = three_bus_grid();
    const int dim = action_dim(g);
    std::vector<Transition> out;
    Rng rng(1);
    std::uniform_real_distribution<double> load(40.0, 160.0), raw(-0.9, 0.9);
    for (int e = 0; e < episodes; ++e) {
        ScenarioSample s;
        s.load_p = Eigen::MatrixXd::Zero(8, 3);
        s.load_q = Eigen::MatrixXd::Zero(8, 3);
        s.re_ceiling = Eigen::MatrixXd::Zero(8, 1);
        for (int t = 0; t < 8; ++t) {
            s.load_p(t, 2) = load(rng);
            s.load_q(t, 2) = 0.2 * s.load_p(t, 2);
            s.re_ceiling(t, 0) = 0.3 * load(rng);
        }
        const Policy p = [&](const DispatchState&, const GridGraph&, const Eigen::VectorXd&) {
            Eigen::VectorXd a(dim);
            for (int i = 0; i < dim; ++i) a(i) = raw(rng);
            return a;
        };
        EnvConfig cfg;
        cfg.network = NetworkModel::copper_plate;
        auto tr = rollout(p, g, s, Eigen::VectorXd::Zero(5), cfg);
        for (auto& t : tr.transitions) out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

static void BM_SolveAcThreeBus(benchmark::State& state) {
    const GridSpec g = three_bus_grid();
    InjectionSet inj = InjectionSet::zeros(g);
    inj.p << 0.0, 0.6, -1.4;
    inj.q << 0.0, 0.0, -0.3;
    for (auto _ : state) benchmark::DoNotOptimize(solve_ac(g, inj));
}
BENCHMARK(BM_SolveAcThreeBus);

static void BM_EnvStep(benchmark::State& state) {
    const GridSpec g = three_bus_grid();
    EnvConfig cfg;
    cfg.network = state.range(0) ? NetworkModel::ac : NetworkModel::copper_plate;
    ScenarioSample s;
    s.load_p = Eigen::MatrixXd::Zero(2, 3);
    s.load_q = Eigen::MatrixXd::Zero(2, 3);
    s.load_p(0, 2) = 120.0;
    s.load_q(0, 2) = 24.0;
    s.re_ceiling = Eigen::MatrixXd::Constant(2, 1, 30.0);
    const DispatchState s0 = reset(g, s);
    const DispatchAction a =
        project_action(Eigen::VectorXd::Constant(action_dim(g), 0.2), feasible_action_box(s0, g), g);
    for (auto _ : state) benchmark::DoNotOptimize(step(s0, a, g, s, cfg));
}
BENCHMARK(BM_EnvStep)->Arg(0)->Arg(1);

static void BM_GcnForwardBackward(benchmark::State& state) {
    const auto ts = random_transitions(8);
    std::vector<const Matrix*> adjs;
    Matrix features(0, 0);
    std::vector<Matrix> rows;
    for (const auto& t : ts) {
        adjs.push_back(&t.graph.adj);
        rows.push_back(t.graph.eig);
    }
    features.resize(static_cast<Eigen::Index>(rows.size()) * rows[0].rows(), rows[0].cols());
    for (std::size_t k = 0; k < rows.size(); ++k) features.middleRows(static_cast<Eigen::Index>(k) * rows[0].rows(), rows[0].rows()) = rows[k];
    const GraphBatch batch = make_graph_batch(adjs);
    Rng rng(2);
    ParameterStore store;
    const GcnEncoder enc = GcnEncoder::create(store, "enc", static_cast<int>(features.cols()), {16, 16}, rng);
    for (auto _ : state) {
        store.zero_grad();
        backward(sum(square(enc.pooled(constant(features), batch))));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(ts.size()));
}
BENCHMARK(BM_GcnForwardBackward);

static void BM_SacTrainStep(benchmark::State& state) {
    const auto ts = random_transitions(8);
    std::vector<const Transition*> batch;
    for (const auto& t : ts) batch.push_back(&t);
    const NetConfig net{{16, 16}, {64, 64}, 0.1};
    SacAgent agent(action_dim(three_bus_grid()), 5, net, SacConfig{}, 3);
    Rng rng(4);
    const Tensor z = constant(standard_normal(static_cast<Eigen::Index>(batch.size()), 5, rng));
    for (auto _ : state) benchmark::DoNotOptimize(agent.train_step(batch, z, rng));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(batch.size()));
}
BENCHMARK(BM_SacTrainStep)->Unit(benchmark::kMillisecond);

static void BM_OpsOracleToy3(benchmark::State& state) {
    const GridSpec g = load_grid_spec((kData / "toy3.grid").string());
    const ScenarioFamily f = load_family((kData / "evening_wind.family").string(), g);
    const ScenarioSample s = sample_scenario(f, g, 0);
    DpDiscretization disc;
    disc.energy_step = static_cast<double>(state.range(0));
    disc.power_step = static_cast<double>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(ops_oracle(g, s, disc));
}
BENCHMARK(BM_OpsOracleToy3)->Arg(4)->Arg(2)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_MpcPlanToy3(benchmark::State& state) {
    const GridSpec g = load_grid_spec((kData / "toy3.grid").string());
    const ScenarioFamily f = load_family((kData / "evening_wind.family").string(), g);
    const ScenarioSample s = sample_scenario(f, g, 0);
    const DispatchState s0 = reset(g, s);
    MpcConfig cfg;
    cfg.network = NetworkModel::copper_plate;
    cfg.horizon = static_cast<int>(state.range(0));
    const Forecast fc = forecast_expectation(f, 0, cfg.horizon);
    for (auto _ : state) benchmark::DoNotOptimize(mpc_plan(s0, g, fc, cfg));
}
BENCHMARK(BM_MpcPlanToy3)->Arg(1)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
