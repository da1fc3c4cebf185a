#pragma once

#include "metagrl/grid.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace metagrl {

class ScenarioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct OutageCandidate {
    int line_id = 0;
    double probability = 0.0;
};

// A latent context: mean load / renewable trajectories plus a noise level and
// an outage distribution. Shapes are indexed [bus][t] and [unit][t], in MW.
struct ScenarioFamily {
    int id = 0;
    int horizon = 0;
    std::vector<std::vector<double>> load_shape;
    std::vector<std::vector<double>> re_shape;
    double sigma = 0.0;    // multiplicative noise, fraction of the mean
    double q_ratio = 0.0;  // Q^D = q_ratio * P^D
    std::vector<OutageCandidate> outages;
    std::string label;
    // Off: every drawn outage is in place before stage 0.
    bool mid_episode_outages = false;
};

struct ScenarioSample {
    int family_id = 0;
    Eigen::MatrixXd load_p;      // T x buses, MW
    Eigen::MatrixXd load_q;      // T x buses, MVAr
    Eigen::MatrixXd re_ceiling;  // T x renewable units, MW
    std::vector<int> outage_lines;
    std::vector<int> outage_stage;  // stage from which each outage is active
    std::uint64_t seed = 0;

    int horizon() const { return static_cast<int>(load_p.rows()); }
};

struct Forecast {
    Eigen::MatrixXd load_p;  // n x buses
    Eigen::MatrixXd load_q;
    Eigen::MatrixXd re;  // n x units
};

void validate_family(const ScenarioFamily& family, const GridSpec& spec);

// value(t) = shape(t) * (1 + sigma * g_t), g_t standard normal, redrawn until
// the value lies in [0, capacity]; outages are independent Bernoulli draws.
ScenarioSample sample_scenario(const ScenarioFamily& family, const GridSpec& spec, std::uint64_t seed);

// Five mutually distinct illustrative families scaled to the grid's
// thermal capacity. At least two carry outage candidates when the network has
// a line whose removal keeps it connected.
std::vector<ScenarioFamily> make_demo_families(int horizon, const GridSpec& spec);

// Rows t0..t0+n-1 of the mean trajectories, no noise.
Forecast forecast_expectation(const ScenarioFamily& family, int t0, int n);

ScenarioFamily load_family(const std::string& path, const GridSpec& spec);
ScenarioFamily parse_family(const std::string& text, const GridSpec& spec);
std::string format_family(const ScenarioFamily& family);

std::string sample_csv(const ScenarioSample& sample);

}  // namespace metagrl
