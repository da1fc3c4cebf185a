#pragma once

#include "metagrl/baselines.hpp"
#include "metagrl/discriminator.hpp"
#include "metagrl/meta.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace metagrl {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

const char* version();

// Experiment description loaded from JSON. Paths are resolved against the
// directory of the config file and must exist at load time.
struct ExperimentConfig {
    std::string run_id = "run";
    std::uint64_t seed = 0;
    std::string grid_path;
    std::vector<std::string> family_paths;
    std::vector<std::string> test_family_paths;
    std::string output_dir;  // resolved; the run writes into output_dir/run_id

    EnvConfig env;
    NetConfig net;
    SacConfig sac;
    MetaConfig meta;
    MetaTrainConfig train;
    int checkpoint_every = 0;  // iterations; 0 keeps only the final checkpoint
    int embedding_samples = 5;

    DiscriminatorConfig discriminator;
    int discriminator_traces = 20;  // per training family

    DpDiscretization oracle;
    MpcConfig mpc;
    std::vector<int> mpc_horizons{1, 2, 4};

    int eval_episodes = 3;
    int eval_rounds = 2;
    int adapt_rounds = 5;
    int adapt_trials = 10;
    // Keep one scenario sample across the rounds of an adaptation trial.
    bool adapt_fixed_sample = true;
    // Act with the posterior mean after round 0 instead of a posterior sample.
    bool adapt_posterior_mean = false;

    nlohmann::json document;  // effective config, overrides applied

    // FNV-1a of the canonical effective config.
    std::uint64_t hash() const;
    std::string run_dir() const;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& doc, const std::string& base_dir);
ExperimentConfig load_experiment_config(const std::string& path);

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;  // replaces output_dir/run_id
    std::optional<std::string> checkpoint;
    std::vector<int> families;
    std::optional<int> horizon;  // single MPC look-ahead replacing the list
    std::optional<int> rounds;
    bool with_discriminator = false;
};

ExperimentConfig apply_overrides(ExperimentConfig config, const Overrides& overrides);

// Files, checkpoints and timings per command, kept in run_dir/manifest.json.
// Files go through write(), which stores them atomically and records them.
class RunManifest {
public:
    RunManifest(const std::string& run_dir, const ExperimentConfig& config, const std::string& phase);

    void write(const std::string& relative, const std::string& text);
    void add_checkpoint(const std::string& relative);
    void set_timing(const std::string& name, double seconds);
    void set_result(const std::string& key, const nlohmann::json& value);
    // Rewrites manifest.json; `done` marks the phase as completed.
    void flush(bool done = false);

    const std::string& run_dir() const { return dir_; }
    const nlohmann::json& document() const { return doc_; }
    std::string path(const std::string& relative) const;

private:
    nlohmann::json& phase();

    std::string dir_;
    std::string phase_;
    nlohmann::json doc_;
};

std::vector<ScenarioFamily> load_families(const std::vector<std::string>& paths, const GridSpec& spec);

// Posterior after one episode per draw of the family, acting
// deterministically with z drawn from the prior (round 0 of adaptation).
std::vector<PosteriorZ> family_embeddings(const MetaLearner& learner, const ScenarioFamily& family, int samples,
                                          std::uint64_t seed);

nlohmann::json learner_architecture(const MetaLearner& learner, const NetConfig& net);
void save_learner(const MetaLearner& learner, const NetConfig& net, const std::string& path,
                  const nlohmann::json& metadata = nlohmann::json::object());
// Throws CheckpointError when the file's architecture differs from the learner's.
void load_learner(MetaLearner& learner, const NetConfig& net, const std::string& path);

struct FamilyEvaluation {
    int family = 0;
    std::string label;
    double metagrl = 0.0;
    std::vector<std::pair<int, double>> mpc;  // (horizon, mean cost)
    std::optional<double> ops;
    std::string ops_note;  // why the oracle is unavailable
};

FamilyEvaluation evaluate_family(const MetaLearner& learner, const ExperimentConfig& config,
                                 const ScenarioFamily& family);
std::string evaluation_csv(const std::vector<FamilyEvaluation>& rows, const std::vector<int>& horizons);

struct AdaptationCurve {
    int family = 0;
    std::vector<std::vector<double>> costs;  // [round][trial]
};

AdaptationCurve adaptation_curve(const MetaLearner& learner, const ExperimentConfig& config,
                                 const ScenarioFamily& family, int rounds);
std::string adaptation_csv(const std::vector<AdaptationCurve>& curves);

// Learner rollouts on the training families used to fit the discriminator.
std::vector<EpisodeTrace> discriminator_traces(const MetaLearner& learner, const ExperimentConfig& config,
                                               const std::vector<ScenarioFamily>& families);

// Each command writes into the run directory and returns the manifest document.
nlohmann::json cmd_train(const ExperimentConfig& config, std::ostream& log);
nlohmann::json cmd_eval(const ExperimentConfig& config, const Overrides& overrides, std::ostream& log);
nlohmann::json cmd_adapt(const ExperimentConfig& config, const Overrides& overrides, std::ostream& log);
nlohmann::json cmd_oracle(const ExperimentConfig& config, const Overrides& overrides, std::ostream& log);
// Prints the property report; true when every property holds.
bool cmd_verify(std::uint64_t seed, std::ostream& out);

// 17 significant digits, used for every metric file.
std::string format_number(double value);

}  // namespace metagrl
