#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace metagrl {

struct PropertyResult {
    std::string module;
    std::string property;
    bool passed = false;
    std::string detail;
};

using KlFunction = std::function<double(const Eigen::VectorXd& mu_q, const Eigen::VectorXd& sigma_q,
                                        const Eigen::VectorXd& mu_p, const Eigen::VectorXd& sigma_p)>;

struct VerifyOptions {
    std::uint64_t seed = 1;
    // Swappable so a deliberately broken formula can be shown to fail the suite.
    KlFunction kl;
};

std::vector<PropertyResult> run_property_suite(const VerifyOptions& options = {});
std::string format_report(const std::vector<PropertyResult>& results);
bool all_passed(const std::vector<PropertyResult>& results);

// Two-bus voltage by scalar bisection: slack at 1 pu angle 0, load bus
// drawing (p, q) pu through series admittance g + jb. Returns {u, theta}.
std::pair<double, double> two_bus_bisection(double g, double b, double p_load, double q_load);

}  // namespace metagrl
