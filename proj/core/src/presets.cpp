#include "metagrl/presets.hpp"

#include "metagrl/rng.hpp"

#include <random>

namespace metagrl {

GridSpec two_bus_grid(double conductance, double susceptance) {
    GridSpec spec;
    spec.base_mva = 100.0;
    spec.dt_hours = 1.0;
    spec.buses = {{0, BusKind::slack, 0.9, 1.1, -0.8, 0.8}, {1, BusKind::load, 0.9, 1.1, -0.8, 0.8}};
    spec.lines = {{0, 0, 1, conductance, susceptance, 2.0, true}};
    ThermalGenerator tg;
    tg.bus = 0;
    tg.p_min = 0.0;
    tg.p_max = 200.0;
    tg.q_min = -100.0;
    tg.q_max = 100.0;
    tg.ramp_down = -200.0;
    tg.ramp_up = 200.0;
    tg.cost_a = 0.02;
    tg.cost_b = 20.0;
    tg.cost_c = 10.0;
    spec.thermal_units = {tg};
    return spec;
}

GridSpec three_bus_grid() {
    GridSpec spec;
    spec.base_mva = 100.0;
    spec.dt_hours = 1.0;
    spec.buses = {{0, BusKind::slack, 0.94, 1.06, -0.6, 0.6},
                  {1, BusKind::generator, 0.94, 1.06, -0.6, 0.6},
                  {2, BusKind::load, 0.94, 1.06, -0.6, 0.6}};
    // r = 0.005, x = 0.05 pu: y = 1 / (r + jx)
    const double g = 0.005 / (0.005 * 0.005 + 0.05 * 0.05);
    const double b = -0.05 / (0.005 * 0.005 + 0.05 * 0.05);
    spec.lines = {{0, 0, 1, g, b, 1.5, true}, {1, 1, 2, g, b, 1.5, true}, {2, 0, 2, g, b, 1.5, true}};

    ThermalGenerator slack;
    slack.bus = 0;
    slack.p_min = 0.0;
    slack.p_max = 250.0;
    slack.q_min = -150.0;
    slack.q_max = 150.0;
    slack.ramp_down = -250.0;
    slack.ramp_up = 250.0;
    slack.cost_a = 0.04;
    slack.cost_b = 30.0;
    slack.cost_c = 60.0;

    ThermalGenerator cheap;
    cheap.bus = 1;
    cheap.p_min = 10.0;
    cheap.p_max = 120.0;
    cheap.q_min = -80.0;
    cheap.q_max = 80.0;
    cheap.ramp_down = -40.0;
    cheap.ramp_up = 40.0;
    cheap.cost_a = 0.08;
    cheap.cost_b = 12.0;
    cheap.cost_c = 40.0;
    spec.thermal_units = {slack, cheap};

    spec.renewable_units = {{2, 80.0, 40.0}};

    StorageUnit es;
    es.bus = 2;
    es.charge_max = 30.0;
    es.discharge_max = 30.0;
    es.energy_min = 0.0;
    es.energy_max = 60.0;
    es.eta_charge = 0.95;
    es.eta_discharge = 0.95;
    es.degradation_cost = 2.0;
    es.initial_soc_fraction = 0.5;
    spec.storage_units = {es};
    return spec;
}

TinyInstance random_tiny_instance(std::uint64_t seed, int horizon) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    TinyInstance inst;
    GridSpec& spec = inst.spec;
    spec = two_bus_grid();
    auto& tg = spec.thermal_units[0];
    tg.cost_a = 0.01 + 0.09 * u01(rng);
    tg.cost_b = 5.0 + 25.0 * u01(rng);
    tg.cost_c = 10.0 * u01(rng);
    StorageUnit es;
    es.bus = 1;
    es.energy_min = 0.0;
    es.energy_max = 20.0 + 20.0 * u01(rng);
    es.charge_max = 0.5 * es.energy_max;
    es.discharge_max = 0.5 * es.energy_max;
    es.eta_charge = 0.85 + 0.15 * u01(rng);
    es.eta_discharge = 0.85 + 0.15 * u01(rng);
    es.degradation_cost = 3.0 * u01(rng);
    es.initial_soc_fraction = 0.5;
    spec.storage_units = {es};

    ScenarioSample& s = inst.sample;
    s.family_id = 0;
    s.seed = seed;
    s.load_p = Eigen::MatrixXd::Zero(horizon, spec.bus_count());
    s.load_q = Eigen::MatrixXd::Zero(horizon, spec.bus_count());
    s.re_ceiling = Eigen::MatrixXd::Zero(horizon, 0);
    for (int t = 0; t < horizon; ++t) s.load_p(t, 1) = 40.0 + 120.0 * u01(rng);
    return inst;
}

}  // namespace metagrl
