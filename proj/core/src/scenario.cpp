#include "metagrl/scenario.hpp"

#include "metagrl/rng.hpp"
#include "metagrl/text_document.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace metagrl {

void validate_family(const ScenarioFamily& family, const GridSpec& spec) {
    auto fail = [&](const std::string& msg) {
        throw ScenarioError("family " + std::to_string(family.id) + ": " + msg);
    };
    if (family.horizon <= 0) fail("horizon must be positive");
    if (static_cast<int>(family.load_shape.size()) != spec.bus_count()) fail("load shape count != bus count");
    if (family.re_shape.size() != spec.renewable_units.size()) fail("renewable shape count != renewable unit count");
    for (const auto& row : family.load_shape) {
        if (static_cast<int>(row.size()) != family.horizon) fail("load shape length != horizon");
        for (double v : row) {
            if (!(v >= 0.0)) fail("load shape must be nonnegative");
        }
    }
    for (const auto& row : family.re_shape) {
        if (static_cast<int>(row.size()) != family.horizon) fail("renewable shape length != horizon");
        for (double v : row) {
            if (!(v >= 0.0)) fail("renewable shape must be nonnegative");
        }
    }
    if (!(family.sigma >= 0.0)) fail("sigma must be nonnegative");
    for (const auto& o : family.outages) {
        if (!(o.probability >= 0.0 && o.probability <= 1.0)) fail("outage probability outside [0,1]");
        if (spec.line_index(o.line_id) < 0) fail("unknown outage line " + std::to_string(o.line_id));
    }
}

namespace {

double perturb(double mean, double sigma, double cap, std::normal_distribution<double>& normal, Rng& rng) {
    if (mean <= 0.0 || sigma == 0.0) return std::min(mean, cap);
    for (int attempt = 0; attempt < 64; ++attempt) {
        const double v = mean * (1.0 + sigma * normal(rng));
        if (v >= 0.0 && v <= cap) return v;
    }
    return std::clamp(mean, 0.0, cap);
}

}  // namespace

ScenarioSample sample_scenario(const ScenarioFamily& family, const GridSpec& spec, std::uint64_t seed) {
    validate_family(family, spec);
    const int horizon = family.horizon;
    const int n = spec.bus_count();
    const int nre = static_cast<int>(spec.renewable_units.size());
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    constexpr double kUnbounded = std::numeric_limits<double>::infinity();

    ScenarioSample s;
    s.family_id = family.id;
    s.seed = seed;
    s.load_p.resize(horizon, n);
    s.load_q.resize(horizon, n);
    s.re_ceiling.resize(horizon, nre);
    for (int t = 0; t < horizon; ++t) {
        for (int b = 0; b < n; ++b) {
            s.load_p(t, b) = perturb(family.load_shape[b][t], family.sigma, kUnbounded, normal, rng);
            s.load_q(t, b) = family.q_ratio * s.load_p(t, b);
        }
        for (int k = 0; k < nre; ++k) {
            s.re_ceiling(t, k) = perturb(family.re_shape[k][t], family.sigma, spec.renewable_units[k].capacity, normal, rng);
        }
    }
    for (const auto& o : family.outages) {
        if (uniform(rng) < o.probability) {
            s.outage_lines.push_back(o.line_id);
            s.outage_stage.push_back(family.mid_episode_outages ? std::uniform_int_distribution<int>(0, horizon - 1)(rng) : 0);
        }
    }
    return s;
}

Forecast forecast_expectation(const ScenarioFamily& family, int t0, int n) {
    if (t0 < 0 || n < 0 || t0 + n > family.horizon) {
        throw ScenarioError("forecast window [" + std::to_string(t0) + ", " + std::to_string(t0 + n) +
                            ") exceeds horizon " + std::to_string(family.horizon));
    }
    const int buses = static_cast<int>(family.load_shape.size());
    const int units = static_cast<int>(family.re_shape.size());
    Forecast f{Eigen::MatrixXd(n, buses), Eigen::MatrixXd(n, buses), Eigen::MatrixXd(n, units)};
    for (int r = 0; r < n; ++r) {
        for (int b = 0; b < buses; ++b) {
            f.load_p(r, b) = family.load_shape[b][t0 + r];
            f.load_q(r, b) = family.q_ratio * f.load_p(r, b);
        }
        for (int k = 0; k < units; ++k) f.re(r, k) = family.re_shape[k][t0 + r];
    }
    return f;
}

std::vector<ScenarioFamily> make_demo_families(int horizon, const GridSpec& spec) {
    if (horizon < 4) throw ScenarioError("demo families need a horizon of at least 4 stages");
    const int n = spec.bus_count();
    std::vector<int> load_buses;
    for (int i = 0; i < n; ++i) {
        if (spec.buses[i].kind == BusKind::load) load_buses.push_back(i);
    }
    if (load_buses.empty()) {
        for (int i = 0; i < n; ++i) {
            if (spec.buses[i].kind != BusKind::slack) load_buses.push_back(i);
        }
    }
    if (load_buses.empty()) load_buses.push_back(0);
    double thermal = 0.0;
    for (const auto& tg : spec.thermal_units) thermal += tg.p_max;
    double renewable = 0.0;
    for (const auto& re : spec.renewable_units) renewable += re.capacity;
    const double nominal = 0.5 * thermal + 0.4 * renewable;
    const double per_bus = nominal / static_cast<double>(load_buses.size());

    // First line whose outage keeps the network connected.
    int outage_line = -1;
    for (const auto& line : spec.lines) {
        if (!line.in_service) continue;
        try {
            apply_outage(spec, {line.id});
            outage_line = line.id;
            break;
        } catch (const IslandingError&) {
        }
    }

    struct Pattern {
        const char* label;
        double sigma;
        double q_ratio;
        double outage_probability;
        double (*load)(double);
        double (*re)(double);
    };
    static const Pattern patterns[5] = {
        {"evening peak", 0.05, 0.20, 0.0,
         [](double x) { return 0.75 + 0.45 * std::exp(-std::pow((x - 0.8) / 0.18, 2)); },
         [](double x) { return 0.55 * std::exp(-std::pow((x - 0.5) / 0.25, 2)); }},
        {"morning peak", 0.05, 0.20, 0.3,
         [](double x) { return 0.75 + 0.45 * std::exp(-std::pow((x - 0.25) / 0.18, 2)); },
         [](double x) { return 0.35 + 0.25 * x; }},
        {"renewable heavy", 0.05, 0.15, 0.0,
         [](double x) { return 0.85 + 0.10 * std::sin(3.14159265358979 * x); },
         [](double x) { return 0.95 * std::exp(-std::pow((x - 0.5) / 0.3, 2)); }},
        {"renewable light", 0.05, 0.25, 0.5,
         [](double x) { return 1.05 + 0.15 * std::sin(3.14159265358979 * x); },
         [](double) { return 0.15; }},
        {"volatile flat", 0.15, 0.20, 0.0,
         [](double) { return 0.9; },
         [](double x) { return 0.5 + 0.2 * std::cos(6.28318530717959 * x); }},
    };

    std::vector<ScenarioFamily> out;
    for (int f = 0; f < 5; ++f) {
        const auto& p = patterns[f];
        ScenarioFamily fam;
        fam.id = f;
        fam.horizon = horizon;
        fam.label = p.label;
        fam.sigma = p.sigma;
        fam.q_ratio = p.q_ratio;
        fam.load_shape.assign(n, std::vector<double>(horizon, 0.0));
        fam.re_shape.assign(spec.renewable_units.size(), std::vector<double>(horizon, 0.0));
        for (int t = 0; t < horizon; ++t) {
            const double x = static_cast<double>(t) / static_cast<double>(horizon - 1);
            for (std::size_t k = 0; k < load_buses.size(); ++k) {
                // Small per-bus skew keeps the spatial distribution non-uniform.
                const double skew = 1.0 + 0.1 * (static_cast<double>(k % 3) - 1.0);
                fam.load_shape[load_buses[k]][t] = per_bus * skew * p.load(x);
            }
            for (std::size_t k = 0; k < spec.renewable_units.size(); ++k) {
                fam.re_shape[k][t] = std::clamp(p.re(x), 0.0, 1.0) * spec.renewable_units[k].capacity;
            }
        }
        if (outage_line >= 0 && p.outage_probability > 0.0) {
            fam.outages.push_back({outage_line, p.outage_probability});
        }
        out.push_back(std::move(fam));
    }
    return out;
}

ScenarioFamily parse_family(const std::string& text, const GridSpec& spec) {
    const TextDocument doc = parse_text_document(text);
    static const std::set<std::string> allowed = {"family", "load", "renewable", "outages"};
    for (const auto& name : doc.section_order) {
        if (!allowed.count(name)) throw ParseError("unknown section [" + name + "]");
    }
    const auto& head = doc.records("family");
    if (head.size() != 1) throw ParseError("[family] must hold exactly one record");
    ScenarioFamily fam;
    {
        RecordReader r(head.front(), "family");
        fam.id = r.integer("id");
        fam.horizon = r.integer("horizon");
        fam.sigma = r.number_or("sigma", 0.0);
        fam.q_ratio = r.number_or("q_ratio", 0.0);
        fam.label = r.text_or("label", "");
        fam.mid_episode_outages = r.boolean_or("mid_episode_outages", false);
        r.finish();
    }
    if (fam.horizon <= 0) throw ParseError("horizon must be positive");
    fam.load_shape.assign(spec.bus_count(), std::vector<double>(fam.horizon, 0.0));
    fam.re_shape.assign(spec.renewable_units.size(), std::vector<double>(fam.horizon, 0.0));
    for (const auto& rec : doc.records("load")) {
        RecordReader r(rec, "load");
        const int bus = r.integer("bus");
        auto values = r.numbers("values");
        r.finish();
        if (bus < 0 || bus >= spec.bus_count()) throw ParseError("line " + std::to_string(rec.line) + ": unknown bus");
        if (static_cast<int>(values.size()) != fam.horizon) {
            throw ParseError("line " + std::to_string(rec.line) + ": expected " + std::to_string(fam.horizon) + " values");
        }
        fam.load_shape[bus] = std::move(values);
    }
    for (const auto& rec : doc.records("renewable")) {
        RecordReader r(rec, "renewable");
        const int unit = r.integer("unit");
        auto values = r.numbers("values");
        r.finish();
        if (unit < 0 || unit >= static_cast<int>(spec.renewable_units.size())) {
            throw ParseError("line " + std::to_string(rec.line) + ": unknown renewable unit");
        }
        if (static_cast<int>(values.size()) != fam.horizon) {
            throw ParseError("line " + std::to_string(rec.line) + ": expected " + std::to_string(fam.horizon) + " values");
        }
        fam.re_shape[unit] = std::move(values);
    }
    for (const auto& rec : doc.records("outages")) {
        RecordReader r(rec, "outages");
        OutageCandidate o;
        o.line_id = r.integer("line");
        o.probability = r.number("probability");
        r.finish();
        fam.outages.push_back(o);
    }
    try {
        validate_family(fam, spec);
    } catch (const ScenarioError& e) {
        throw ParseError(e.what());
    }
    return fam;
}

ScenarioFamily load_family(const std::string& path, const GridSpec& spec) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_family(buffer.str(), spec);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

std::string format_family(const ScenarioFamily& family) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "# Scenario family. Shapes are mean trajectories in MW, one value per stage.\n";
    os << "[family]\nid=" << family.id << " horizon=" << family.horizon << " sigma=" << family.sigma
       << " q_ratio=" << family.q_ratio << " label=\"" << family.label << "\" mid_episode_outages="
       << (family.mid_episode_outages ? "true" : "false") << "\n\n[load]\n";
    auto list = [&](const std::vector<double>& v) {
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    };
    for (std::size_t b = 0; b < family.load_shape.size(); ++b) {
        const auto& row = family.load_shape[b];
        if (std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; })) continue;
        os << "bus=" << b << " values=";
        list(row);
        os << '\n';
    }
    os << "\n[renewable]\n";
    for (std::size_t k = 0; k < family.re_shape.size(); ++k) {
        os << "unit=" << k << " values=";
        list(family.re_shape[k]);
        os << '\n';
    }
    os << "\n[outages]\n";
    for (const auto& o : family.outages) os << "line=" << o.line_id << " probability=" << o.probability << '\n';
    return os.str();
}

std::string sample_csv(const ScenarioSample& sample) {
    std::ostringstream os;
    os << std::setprecision(12);
    os << "stage";
    for (Eigen::Index b = 0; b < sample.load_p.cols(); ++b) os << ",load_p_" << b;
    for (Eigen::Index b = 0; b < sample.load_q.cols(); ++b) os << ",load_q_" << b;
    for (Eigen::Index k = 0; k < sample.re_ceiling.cols(); ++k) os << ",re_max_" << k;
    os << '\n';
    for (Eigen::Index t = 0; t < sample.load_p.rows(); ++t) {
        os << t;
        for (Eigen::Index b = 0; b < sample.load_p.cols(); ++b) os << ',' << sample.load_p(t, b);
        for (Eigen::Index b = 0; b < sample.load_q.cols(); ++b) os << ',' << sample.load_q(t, b);
        for (Eigen::Index k = 0; k < sample.re_ceiling.cols(); ++k) os << ',' << sample.re_ceiling(t, k);
        os << '\n';
    }
    return os.str();
}

}  // namespace metagrl
