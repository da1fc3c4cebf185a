#include "metagrl/harness.hpp"

#include "metagrl/checkpoint.hpp"
#include "metagrl/grid_io.hpp"
#include "metagrl/rng.hpp"
#include "metagrl/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

namespace metagrl {

namespace fs = std::filesystem;
using nlohmann::json;

#ifndef METAGRL_VERSION
#define METAGRL_VERSION "unknown"
#endif

const char* version() { return METAGRL_VERSION; }

namespace {

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError("'" + where + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <class T>
void read(const json& obj, const std::string& key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad value for '" + key + "' in " + where);
    }
}

json section(const json& doc, const std::string& key) {
    return doc.contains(key) ? doc.at(key) : json::object();
}

std::string resolve(const std::string& base, const std::string& path) {
    const fs::path p(path);
    return p.is_absolute() ? p.lexically_normal().string() : (fs::path(base) / p).lexically_normal().string();
}

std::string existing(const std::string& base, const std::string& path, const std::string& what) {
    const std::string full = resolve(base, path);
    if (!fs::exists(full)) throw ConfigError(what + " not found: " + full);
    return full;
}

void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string family_tag(int id) { return "family." + std::to_string(id); }

ScenarioSample eval_sample(const ExperimentConfig& config, const GridSpec& spec, const ScenarioFamily& family,
                           int episode) {
    return sample_scenario(family, spec,
                           derive_seed(config.seed, "eval.sample." + family_tag(family.id),
                                       static_cast<std::uint64_t>(episode)));
}

std::vector<ScenarioFamily> select_families(const std::vector<ScenarioFamily>& pool, const std::vector<int>& ids) {
    if (ids.empty()) return pool;
    std::vector<ScenarioFamily> out;
    for (int id : ids) {
        bool found = false;
        for (const auto& f : pool) {
            if (f.id == id) {
                out.push_back(f);
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError("unknown family id " + std::to_string(id));
    }
    return out;
}

std::vector<ScenarioFamily> all_families(const ExperimentConfig& config, const GridSpec& spec) {
    auto pool = load_families(config.family_paths, spec);
    auto test = load_families(config.test_family_paths, spec);
    pool.insert(pool.end(), test.begin(), test.end());
    std::set<int> ids;
    for (const auto& f : pool) {
        if (!ids.insert(f.id).second) throw ConfigError("duplicate family id " + std::to_string(f.id));
    }
    return pool;
}

std::unique_ptr<MetaLearner> make_learner(const ExperimentConfig& config, const GridSpec& spec) {
    return std::make_unique<MetaLearner>(spec, config.env, config.net, config.sac, config.meta,
                                         derive_seed(config.seed, "learner"));
}

std::string checkpoint_path(const ExperimentConfig& config, const Overrides& overrides) {
    const std::string path = overrides.checkpoint ? *overrides.checkpoint
                                                  : (fs::path(config.run_dir()) / "checkpoints" / "final.json").string();
    if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path);
    return path;
}

}  // namespace

std::string format_number(double value) {
    if (std::isnan(value)) return "NA";
    std::ostringstream os;
    os << std::setprecision(17) << value;
    return os.str();
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a64(document.dump()); }

std::string ExperimentConfig::run_dir() const { return (fs::path(output_dir) / run_id).string(); }

ExperimentConfig parse_experiment_config(const json& doc, const std::string& base_dir) {
    check_keys(doc, "config",
               {"run_id", "seed", "grid", "families", "test_families", "output_dir", "env", "net", "sac", "meta",
                "train", "discriminator", "oracle", "mpc", "eval", "adapt"});
    ExperimentConfig c;
    c.document = doc;
    read(doc, "run_id", c.run_id, "config");
    read(doc, "seed", c.seed, "config");
    require(doc.contains("grid"), "config needs a 'grid' path");
    c.grid_path = existing(base_dir, doc.at("grid").get<std::string>(), "grid file");
    std::vector<std::string> paths;
    read(doc, "families", paths, "config");
    require(!paths.empty(), "config needs at least one training family");
    for (const auto& p : paths) c.family_paths.push_back(existing(base_dir, p, "family file"));
    paths.clear();
    read(doc, "test_families", paths, "config");
    for (const auto& p : paths) c.test_family_paths.push_back(existing(base_dir, p, "family file"));
    std::string out = "runs";
    read(doc, "output_dir", out, "config");
    c.output_dir = resolve(base_dir, out);
    require(!c.run_id.empty() && c.run_id.find('/') == std::string::npos, "run_id must be a plain name");

    const json env = section(doc, "env");
    check_keys(env, "env", {"network", "penalty_weight", "nonconvergence_penalty", "reward_scale", "hard_fail",
                            "voltage_setpoint"});
    if (env.contains("network")) c.env.network = network_model_from_string(env.at("network").get<std::string>());
    read(env, "penalty_weight", c.env.penalty_weight, "env");
    read(env, "nonconvergence_penalty", c.env.nonconvergence_penalty, "env");
    read(env, "reward_scale", c.env.reward_scale, "env");
    read(env, "hard_fail", c.env.hard_fail, "env");
    read(env, "voltage_setpoint", c.env.voltage_setpoint, "env");

    const json net = section(doc, "net");
    check_keys(net, "net", {"gcn_widths", "hidden", "output_gain"});
    read(net, "gcn_widths", c.net.gcn_widths, "net");
    read(net, "hidden", c.net.hidden, "net");
    read(net, "output_gain", c.net.output_gain, "net");
    require(!c.net.gcn_widths.empty() && !c.net.hidden.empty(), "net layer lists must be nonempty");

    const json sac = section(doc, "sac");
    check_keys(sac, "sac", {"gamma", "alpha", "tau", "target_period", "batch_size", "actor_lr", "critic_lr",
                            "clip_norm"});
    read(sac, "gamma", c.sac.gamma, "sac");
    read(sac, "alpha", c.sac.alpha, "sac");
    read(sac, "tau", c.sac.tau, "sac");
    read(sac, "target_period", c.sac.target_period, "sac");
    read(sac, "batch_size", c.sac.batch_size, "sac");
    read(sac, "actor_lr", c.sac.actor_lr, "sac");
    read(sac, "critic_lr", c.sac.critic_lr, "sac");
    read(sac, "clip_norm", c.sac.clip_norm, "sac");

    const json meta = section(doc, "meta");
    check_keys(meta, "meta", {"latent_dim", "beta", "encoder_lr", "context_size", "recency_capacity"});
    read(meta, "latent_dim", c.meta.latent_dim, "meta");
    read(meta, "beta", c.meta.beta, "meta");
    read(meta, "encoder_lr", c.meta.encoder_lr, "meta");
    read(meta, "context_size", c.meta.context_size, "meta");
    read(meta, "recency_capacity", c.meta.recency_capacity, "meta");

    const json train = section(doc, "train");
    check_keys(train, "train", {"iterations", "episodes_per_task", "prior_episodes_per_task", "warmup_episodes", "gradient_steps",
                                "batch_per_task", "replay_capacity", "log_every", "checkpoint_every",
                                "embedding_samples"});
    read(train, "iterations", c.train.iterations, "train");
    read(train, "episodes_per_task", c.train.episodes_per_task, "train");
    read(train, "prior_episodes_per_task", c.train.prior_episodes_per_task, "train");
    read(train, "warmup_episodes", c.train.warmup_episodes, "train");
    read(train, "gradient_steps", c.train.gradient_steps, "train");
    read(train, "batch_per_task", c.train.batch_per_task, "train");
    read(train, "replay_capacity", c.train.replay_capacity, "train");
    read(train, "log_every", c.train.log_every, "train");
    read(train, "checkpoint_every", c.checkpoint_every, "train");
    read(train, "embedding_samples", c.embedding_samples, "train");
    require(c.train.iterations >= 0 && c.train.episodes_per_task >= 0 && c.train.prior_episodes_per_task >= 0 && c.train.warmup_episodes >= 0 &&
                c.train.gradient_steps >= 0 && c.train.batch_per_task > 0 && c.train.replay_capacity > 0,
            "train counts must be nonnegative and batch/replay sizes positive");
    require(c.checkpoint_every >= 0 && c.embedding_samples >= 0, "train checkpoint/embedding counts must be >= 0");

    const json disc = section(doc, "discriminator");
    check_keys(disc, "discriminator", {"lr", "epochs", "batch_size", "held_out_fraction", "online_update",
                                       "traces_per_family"});
    read(disc, "lr", c.discriminator.lr, "discriminator");
    read(disc, "epochs", c.discriminator.epochs, "discriminator");
    read(disc, "batch_size", c.discriminator.batch_size, "discriminator");
    read(disc, "held_out_fraction", c.discriminator.held_out_fraction, "discriminator");
    read(disc, "online_update", c.discriminator.online_update, "discriminator");
    read(disc, "traces_per_family", c.discriminator_traces, "discriminator");
    require(c.discriminator_traces > 0, "discriminator.traces_per_family must be positive");

    const json oracle = section(doc, "oracle");
    check_keys(oracle, "oracle", {"energy_step", "power_step", "network", "guard"});
    read(oracle, "energy_step", c.oracle.energy_step, "oracle");
    read(oracle, "power_step", c.oracle.power_step, "oracle");
    read(oracle, "guard", c.oracle.guard, "oracle");
    if (oracle.contains("network")) {
        c.oracle.network = network_model_from_string(oracle.at("network").get<std::string>());
    }

    const json mpc = section(doc, "mpc");
    check_keys(mpc, "mpc", {"horizons", "network", "max_iterations", "penalty_rounds", "tolerance",
                            "feasibility_tol"});
    read(mpc, "horizons", c.mpc_horizons, "mpc");
    if (mpc.contains("network")) c.mpc.network = network_model_from_string(mpc.at("network").get<std::string>());
    read(mpc, "max_iterations", c.mpc.max_iterations, "mpc");
    read(mpc, "penalty_rounds", c.mpc.penalty_rounds, "mpc");
    read(mpc, "tolerance", c.mpc.tolerance, "mpc");
    read(mpc, "feasibility_tol", c.mpc.feasibility_tol, "mpc");
    for (int h : c.mpc_horizons) require(h > 0, "mpc horizons must be positive");

    const json eval = section(doc, "eval");
    check_keys(eval, "eval", {"episodes", "rounds"});
    read(eval, "episodes", c.eval_episodes, "eval");
    read(eval, "rounds", c.eval_rounds, "eval");
    require(c.eval_episodes > 0 && c.eval_rounds >= 0, "eval.episodes must be positive and eval.rounds >= 0");

    const json adapt = section(doc, "adapt");
    check_keys(adapt, "adapt", {"rounds", "trials", "fixed_sample", "posterior_mean"});
    read(adapt, "rounds", c.adapt_rounds, "adapt");
    read(adapt, "trials", c.adapt_trials, "adapt");
    read(adapt, "fixed_sample", c.adapt_fixed_sample, "adapt");
    read(adapt, "posterior_mean", c.adapt_posterior_mean, "adapt");
    require(c.adapt_rounds >= 0 && c.adapt_trials > 0, "adapt.rounds must be >= 0 and adapt.trials positive");

    try {
        c.sac.validate();
        c.meta.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("malformed config '" + path + "': " + e.what());
    }
    const fs::path parent = fs::path(path).parent_path();
    return parse_experiment_config(doc, parent.empty() ? "." : parent.string());
}

ExperimentConfig apply_overrides(ExperimentConfig config, const Overrides& overrides) {
    if (overrides.seed) {
        config.seed = *overrides.seed;
        config.document["seed"] = *overrides.seed;
    }
    if (overrides.horizon) {
        if (*overrides.horizon <= 0) throw ConfigError("--horizon must be positive");
        config.mpc_horizons = {*overrides.horizon};
    }
    if (overrides.rounds) {
        if (*overrides.rounds < 0) throw ConfigError("--rounds must be nonnegative");
        config.adapt_rounds = *overrides.rounds;
    }
    if (overrides.out) {
        const fs::path out = fs::absolute(*overrides.out).lexically_normal();
        config.output_dir = out.parent_path().string();
        config.run_id = out.filename().string();
        if (config.run_id.empty()) throw ConfigError("--out must name a directory");
    }
    return config;
}

RunManifest::RunManifest(const std::string& run_dir, const ExperimentConfig& config, const std::string& phase)
    : dir_(run_dir), phase_(phase) {
    const std::string hash = std::to_string(config.hash());
    const fs::path file = fs::path(dir_) / "manifest.json";
    if (fs::exists(file)) {
        try {
            doc_ = json::parse(read_file(file.string()));
        } catch (const json::exception&) {
            doc_ = json::object();
        }
        if (doc_.value("config_hash", "") != hash) doc_ = json::object();
    }
    doc_["config_hash"] = hash;
    doc_["version"] = version();
    doc_["run_id"] = config.run_id;
    doc_["seed"] = config.seed;
    doc_["phases"][phase_] = {{"files", json::array()}, {"checkpoints", json::array()},
                              {"timings", json::object()}, {"results", json::object()}, {"completed", false}};
}

json& RunManifest::phase() { return doc_["phases"][phase_]; }

std::string RunManifest::path(const std::string& relative) const { return (fs::path(dir_) / relative).string(); }

void RunManifest::write(const std::string& relative, const std::string& text) {
    write_file_atomic(path(relative), text);
    auto& files = phase()["files"];
    if (std::find(files.begin(), files.end(), relative) == files.end()) files.push_back(relative);
}

void RunManifest::add_checkpoint(const std::string& relative) {
    auto& list = phase()["checkpoints"];
    if (std::find(list.begin(), list.end(), relative) == list.end()) list.push_back(relative);
    auto& files = phase()["files"];
    if (std::find(files.begin(), files.end(), relative) == files.end()) files.push_back(relative);
}

void RunManifest::set_timing(const std::string& name, double seconds) { phase()["timings"][name] = seconds; }

void RunManifest::set_result(const std::string& key, const json& value) { phase()["results"][key] = value; }

void RunManifest::flush(bool done) {
    if (done) phase()["completed"] = true;
    write_file_atomic(path("manifest.json"), doc_.dump(2) + "\n");
}

std::vector<ScenarioFamily> load_families(const std::vector<std::string>& paths, const GridSpec& spec) {
    std::vector<ScenarioFamily> out;
    for (const auto& p : paths) out.push_back(load_family(p, spec));
    return out;
}

std::vector<PosteriorZ> family_embeddings(const MetaLearner& learner, const ScenarioFamily& family, int samples,
                                          std::uint64_t seed) {
    std::vector<PosteriorZ> out;
    Rng rng(derive_seed(seed, "embedding.z." + family_tag(family.id)));
    const PosteriorZ prior = PosteriorZ::prior(learner.meta().latent_dim);
    for (int s = 0; s < samples; ++s) {
        const ScenarioSample sample = sample_scenario(
            family, learner.spec(), derive_seed(seed, "embedding.sample." + family_tag(family.id), s));
        const EpisodeTrace trace = learner.run_episode(sample, prior.sample(rng), ActMode::deterministic, rng);
        std::vector<const Transition*> ctx;
        for (const auto& t : trace.transitions) ctx.push_back(&t);
        out.push_back(learner.infer(ctx));
    }
    return out;
}

json learner_architecture(const MetaLearner& learner, const NetConfig& net) {
    return {{"action_dim", learner.agent().action_dim()}, {"latent_dim", learner.meta().latent_dim},
            {"buses", learner.spec().bus_count()},        {"gcn_widths", net.gcn_widths},
            {"hidden", net.hidden}};
}

void save_learner(const MetaLearner& learner, const NetConfig& net, const std::string& path, const json& metadata) {
    json meta = metadata;
    meta["architecture"] = learner_architecture(learner, net);
    save_checkpoint(path, learner.parameter_groups(), meta);
}

void load_learner(MetaLearner& learner, const NetConfig& net, const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw CheckpointError("malformed checkpoint '" + path + "': " + e.what());
    }
    const json expected = learner_architecture(learner, net);
    const json found = doc.value("metadata", json::object()).value("architecture", json::object());
    if (found != expected) {
        throw CheckpointError("checkpoint/config mismatch in '" + path + "': checkpoint has " + found.dump() +
                              ", config needs " + expected.dump());
    }
    restore_checkpoint(doc, learner.parameter_groups());
}

FamilyEvaluation evaluate_family(const MetaLearner& learner, const ExperimentConfig& config,
                                 const ScenarioFamily& family) {
    const GridSpec& spec = learner.spec();
    FamilyEvaluation row;
    row.family = family.id;
    row.label = family.label;
    for (int h : config.mpc_horizons) row.mpc.emplace_back(h, 0.0);
    double ops_sum = 0.0;
    bool ops_ok = true;
    const double n = config.eval_episodes;
    for (int ep = 0; ep < config.eval_episodes; ++ep) {
        const ScenarioSample sample = eval_sample(config, spec, family, ep);
        MetaTestConfig mt;
        mt.rounds = config.eval_rounds;
        mt.posterior_mean = true;
        const auto result = meta_test(
            learner, [&](int) { return sample; }, mt,
            derive_seed(config.seed, "eval.z." + family_tag(family.id), static_cast<std::uint64_t>(ep)));
        row.metagrl += result.rounds.back().cost / n;
        for (auto& [h, cost] : row.mpc) {
            MpcConfig mc = config.mpc;
            mc.horizon = h;
            cost += run_mpc(spec, sample, family, mc, learner.env()).cumulative_cost / n;
        }
        if (ops_ok) {
            try {
                ops_sum += ops_oracle(spec, sample, config.oracle).cost;
            } catch (const OracleTooLargeError& e) {
                ops_ok = false;
                row.ops_note = e.what();
            } catch (const OracleUnsupportedError& e) {
                ops_ok = false;
                row.ops_note = e.what();
            }
        }
    }
    if (ops_ok) row.ops = ops_sum / n;
    return row;
}

std::string evaluation_csv(const std::vector<FamilyEvaluation>& rows, const std::vector<int>& horizons) {
    std::ostringstream os;
    os << "family,label,metagrl";
    for (int h : horizons) os << ",mpc_" << h;
    os << ",ops,optimality_pct\n";
    for (const auto& r : rows) {
        os << r.family << ',' << r.label << ',' << format_number(r.metagrl);
        for (const auto& [h, cost] : r.mpc) os << ',' << format_number(cost);
        if (r.ops) {
            os << ',' << format_number(*r.ops) << ',' << format_number(optimality(*r.ops, r.metagrl));
        } else {
            os << ",NA,NA";
        }
        os << '\n';
    }
    return os.str();
}

AdaptationCurve adaptation_curve(const MetaLearner& learner, const ExperimentConfig& config,
                                 const ScenarioFamily& family, int rounds) {
    AdaptationCurve curve;
    curve.family = family.id;
    curve.costs.assign(static_cast<std::size_t>(rounds) + 1, {});
    MetaTestConfig mt;
    mt.rounds = rounds;
    mt.posterior_mean = config.adapt_posterior_mean;
    mt.resample = !config.adapt_fixed_sample;
    for (int trial = 0; trial < config.adapt_trials; ++trial) {
        const auto result = meta_test(learner, family, mt,
                                      derive_seed(config.seed, "adapt." + family_tag(family.id),
                                                  static_cast<std::uint64_t>(trial)));
        for (const auto& r : result.rounds) curve.costs[static_cast<std::size_t>(r.round)].push_back(r.cost);
    }
    return curve;
}

std::string adaptation_csv(const std::vector<AdaptationCurve>& curves) {
    std::ostringstream os;
    os << "family,round,trials,mean_cost,min_cost,max_cost\n";
    for (const auto& c : curves) {
        for (std::size_t r = 0; r < c.costs.size(); ++r) {
            const auto& v = c.costs[r];
            double sum = 0.0, lo = v.empty() ? 0.0 : v.front(), hi = lo;
            for (double x : v) {
                sum += x;
                lo = std::min(lo, x);
                hi = std::max(hi, x);
            }
            os << c.family << ',' << r << ',' << v.size() << ',' << format_number(v.empty() ? 0.0 : sum / v.size())
               << ',' << format_number(lo) << ',' << format_number(hi) << '\n';
        }
    }
    return os.str();
}

std::vector<EpisodeTrace> discriminator_traces(const MetaLearner& learner, const ExperimentConfig& config,
                                               const std::vector<ScenarioFamily>& families) {
    std::vector<EpisodeTrace> traces;
    Rng rng(derive_seed(config.seed, "discriminator.act"));
    const PosteriorZ prior = PosteriorZ::prior(learner.meta().latent_dim);
    for (const auto& f : families) {
        for (int k = 0; k < config.discriminator_traces; ++k) {
            const std::uint64_t seed =
                derive_seed(config.seed, "discriminator.sample." + family_tag(f.id), static_cast<std::uint64_t>(k));
            const ScenarioSample sample = sample_scenario(f, learner.spec(), seed);
            EpisodeTrace trace = learner.run_episode(sample, prior.sample(rng), ActMode::deterministic, rng);
            trace.id = seed;
            trace.family_id = f.id;
            traces.push_back(std::move(trace));
        }
    }
    return traces;
}

json cmd_train(const ExperimentConfig& config, std::ostream& log) {
    const auto start = std::chrono::steady_clock::now();
    const GridSpec spec = load_grid_spec(config.grid_path);
    const auto families = load_families(config.family_paths, spec);
    RunManifest manifest(config.run_dir(), config, "train");
    manifest.flush();

    auto learner = make_learner(config, spec);
    std::string log_text;
    const auto hook = [&](const MetaLogEntry& e) {
        log_text += to_json(e).dump() + "\n";
        const int done = e.iteration + 1;
        if (config.train.log_every > 0 && done % config.train.log_every == 0) {
            log << "iteration " << done << "/" << config.train.iterations << " collect_cost "
                << format_number(e.collect_cost) << " critic " << format_number(e.critic_loss) << "\n";
        }
        if (config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < config.train.iterations) {
            std::ostringstream name;
            name << "checkpoints/iter_" << std::setw(6) << std::setfill('0') << done << ".json";
            save_learner(*learner, config.net, manifest.path(name.str()),
                         {{"iteration", done}, {"config_hash", std::to_string(config.hash())}});
            manifest.add_checkpoint(name.str());
            manifest.write("train_log.jsonl", log_text);
            manifest.set_timing("elapsed_s", seconds_since(start));
            manifest.flush();
        }
    };
    learner->train(families, config.train, hook);
    manifest.set_timing("train_s", seconds_since(start));
    manifest.write("train_log.jsonl", log_text);

    save_learner(*learner, config.net, manifest.path("checkpoints/final.json"),
                 {{"iteration", config.train.iterations}, {"config_hash", std::to_string(config.hash())}});
    manifest.add_checkpoint("checkpoints/final.json");

    std::vector<std::pair<int, std::uint64_t>> keys;
    std::vector<PosteriorZ> posts;
    for (const auto& f : families) {
        const auto emb = family_embeddings(*learner, f, config.embedding_samples, config.seed);
        for (std::size_t s = 0; s < emb.size(); ++s) {
            keys.emplace_back(f.id, s);
            posts.push_back(emb[s]);
        }
    }
    manifest.write("embeddings.csv", embedding_csv(keys, posts));
    manifest.set_timing("total_s", seconds_since(start));
    manifest.flush(true);
    log << "trained " << config.train.iterations << " iterations, checkpoint " << manifest.path("checkpoints/final.json")
        << "\n";
    return manifest.document();
}

json cmd_eval(const ExperimentConfig& config, const Overrides& overrides, std::ostream& log) {
    const auto start = std::chrono::steady_clock::now();
    const GridSpec spec = load_grid_spec(config.grid_path);
    const auto families = select_families(all_families(config, spec), overrides.families);
    const std::string ckpt = checkpoint_path(config, overrides);
    auto learner = make_learner(config, spec);
    load_learner(*learner, config.net, ckpt);

    RunManifest manifest(config.run_dir(), config, "eval");
    manifest.set_result("checkpoint", ckpt);
    std::vector<FamilyEvaluation> rows;
    for (const auto& f : families) {
        rows.push_back(evaluate_family(*learner, config, f));
        if (!rows.back().ops) log << "family " << f.id << ": oracle unavailable (" << rows.back().ops_note << ")\n";
    }
    manifest.write("eval.csv", evaluation_csv(rows, config.mpc_horizons));
    manifest.set_timing("total_s", seconds_since(start));
    manifest.flush(true);
    log << evaluation_csv(rows, config.mpc_horizons);
    return manifest.document();
}

json cmd_adapt(const ExperimentConfig& config, const Overrides& overrides, std::ostream& log) {
    const auto start = std::chrono::steady_clock::now();
    const GridSpec spec = load_grid_spec(config.grid_path);
    const auto pool = all_families(config, spec);
    std::vector<ScenarioFamily> targets;
    if (!overrides.families.empty()) {
        targets = select_families(pool, overrides.families);
    } else {
        targets = load_families(config.test_family_paths, spec);
        if (targets.empty()) throw ConfigError("adapt needs test_families in the config or --families");
    }
    const std::string ckpt = checkpoint_path(config, overrides);
    auto learner = make_learner(config, spec);
    load_learner(*learner, config.net, ckpt);

    RunManifest manifest(config.run_dir(), config, "adapt");
    manifest.set_result("checkpoint", ckpt);
    std::vector<AdaptationCurve> curves;
    for (const auto& f : targets) curves.push_back(adaptation_curve(*learner, config, f, config.adapt_rounds));
    manifest.write("adapt.csv", adaptation_csv(curves));
    manifest.set_timing("adapt_s", seconds_since(start));
    manifest.flush();
    log << adaptation_csv(curves);

    if (overrides.with_discriminator) {
        const auto train_families = load_families(config.family_paths, spec);
        PrefixDataset data = build_dataset(discriminator_traces(*learner, config, train_families), learner->encoder(),
                                           config.discriminator.held_out_fraction);
        manifest.write("discriminator_targets.csv", targets_csv(data));
        Rng init(derive_seed(config.seed, "discriminator.init"));
        Discriminator disc(learner->agent().action_dim(), learner->meta().latent_dim, config.net, init);
        const auto fit = train_discriminator(data, disc, config.discriminator,
                                             derive_seed(config.seed, "discriminator.train"));
        std::ostringstream curve;
        curve << "epoch,loss\n";
        for (std::size_t e = 0; e < fit.loss_curve.size(); ++e) {
            curve << e << ',' << format_number(fit.loss_curve[e]) << '\n';
        }
        manifest.write("discriminator_loss.csv", curve.str());
        manifest.set_result("discriminator_held_out_loss", fit.held_out_loss);

        AdamConfig ac;
        ac.lr = config.discriminator.lr;
        Adam opt(disc.params(), ac);
        std::ostringstream os;
        os << "family,trial,cost\n";
        for (const auto& f : targets) {
            for (int trial = 0; trial < config.adapt_trials; ++trial) {
                const ScenarioSample sample = sample_scenario(
                    f, spec, derive_seed(derive_seed(config.seed, "adapt." + family_tag(f.id), trial),
                                         "meta_test.sample", 0));
                const auto run = within_episode_rollout(*learner, disc, sample);
                os << f.id << ',' << trial << ',' << format_number(run.trace.cumulative_cost) << '\n';
                if (config.discriminator.online_update) {
                    std::vector<const Transition*> ctx;
                    for (const auto& t : run.trace.transitions) ctx.push_back(&t);
                    online_update(disc, opt, run.trace, learner->infer(ctx).mean);
                }
            }
        }
        manifest.write("adapt_within_episode.csv", os.str());
        save_checkpoint(manifest.path("checkpoints/discriminator.json"), {{"discriminator", &disc.params()}},
                        {{"config_hash", std::to_string(config.hash())}});
        manifest.add_checkpoint("checkpoints/discriminator.json");
    }
    manifest.set_timing("total_s", seconds_since(start));
    manifest.flush(true);
    return manifest.document();
}

json cmd_oracle(const ExperimentConfig& config, const Overrides& overrides, std::ostream& log) {
    const auto start = std::chrono::steady_clock::now();
    const GridSpec spec = load_grid_spec(config.grid_path);
    const auto families = select_families(all_families(config, spec), overrides.families);
    RunManifest manifest(config.run_dir(), config, "oracle");
    std::ostringstream os;
    os << "family,episode,cost,dp_cost,states_per_stage\n";
    for (const auto& f : families) {
        for (int ep = 0; ep < config.eval_episodes; ++ep) {
            const ScenarioSample sample = eval_sample(config, spec, f, ep);
            try {
                const OracleResult r = ops_oracle(spec, sample, config.oracle);
                os << f.id << ',' << ep << ',' << format_number(r.cost) << ',' << format_number(r.dp_cost) << ','
                   << r.states_per_stage << '\n';
                manifest.write("oracle/schedule_" + std::to_string(f.id) + "_" + std::to_string(ep) + ".csv",
                               schedule_csv(spec, r.schedule));
            } catch (const OracleTooLargeError& e) {
                os << f.id << ',' << ep << ",NA,NA,NA\n";
                log << "family " << f.id << " episode " << ep << ": " << e.what() << "\n";
            } catch (const OracleUnsupportedError& e) {
                os << f.id << ',' << ep << ",NA,NA,NA\n";
                log << "family " << f.id << " episode " << ep << ": " << e.what() << "\n";
            }
        }
    }
    manifest.write("oracle.csv", os.str());
    manifest.set_timing("total_s", seconds_since(start));
    manifest.flush(true);
    log << os.str();
    return manifest.document();
}

bool cmd_verify(std::uint64_t seed, std::ostream& out) {
    VerifyOptions options;
    options.seed = seed;
    const auto results = run_property_suite(options);
    out << format_report(results);
    return all_passed(results);
}

}  // namespace metagrl
