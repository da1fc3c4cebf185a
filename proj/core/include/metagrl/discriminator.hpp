#pragma once

#include "metagrl/meta.hpp"

#include <map>
#include <string>
#include <vector>

namespace metagrl {

struct DiscriminatorConfig {
    double lr = 1e-3;
    int epochs = 100;
    int batch_size = 64;
    // Fraction of traces (by hashed id) kept out of training.
    double held_out_fraction = 0.3;
    // Refit on each finished episode during within-episode adaptation, with
    // the learner's posterior mean over that episode as the target.
    bool online_update = false;
};

struct PrefixExample {
    std::size_t trace = 0;  // index into PrefixDataset::traces
    int length = 0;         // transitions 0..length-1
    int family = 0;
    Eigen::VectorXd target;
    bool held_out = false;
};

struct PrefixDataset {
    std::vector<EpisodeTrace> traces;
    std::vector<Eigen::VectorXd> targets;  // per trace: posterior mean over the full trace
    std::vector<PrefixExample> examples;

    std::vector<const Transition*> prefix(const PrefixExample& e) const;
    std::size_t count(bool held_out) const;
};

bool held_out_trace(std::uint64_t trace_id, double fraction);

// One example per prefix length 1..T of every trace; all share the trace's
// full-context posterior mean as target.
PrefixDataset build_dataset(std::vector<EpisodeTrace> traces, const ContextEncoder& encoder, double held_out_fraction);
// Targets CSV keyed by trace id: trace,family,z_0..
std::string targets_csv(const PrefixDataset& dataset);

class Discriminator {
public:
    Discriminator() = default;
    Discriminator(int action_dim, int latent_dim, const NetConfig& net, Rng& rng);
    Discriminator(const Discriminator&) = delete;
    Discriminator& operator=(const Discriminator&) = delete;
    Discriminator(Discriminator&&) = default;
    Discriminator& operator=(Discriminator&&) = default;

    // One output row per prefix; each prefix must be nonempty.
    Tensor forward(const std::vector<std::vector<const Transition*>>& prefixes) const;
    Eigen::VectorXd infer(const std::vector<const Transition*>& prefix) const;
    // Mean squared error over examples and latent components.
    Tensor loss(const std::vector<std::vector<const Transition*>>& prefixes, const Matrix& targets) const;

    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }
    int latent_dim() const { return latent_dim_; }

private:
    ParameterStore params_;
    GcnEncoder gcn_;
    Mlp features_;
    Mlp head_;
    int latent_dim_ = 0;
};

struct DiscriminatorTrainResult {
    std::vector<double> loss_curve;  // mean training loss per epoch
    double held_out_loss = 0.0;      // NaN-free; 0 when nothing is held out
};

DiscriminatorTrainResult train_discriminator(const PrefixDataset& dataset, Discriminator& net,
                                             const DiscriminatorConfig& config, std::uint64_t seed);

struct NearestFamily {
    int family = 0;
    double distance = 0.0;
    std::map<int, double> distances;
};

// Lowest family id wins ties.
NearestFamily nearest_family(const Eigen::VectorXd& z, const std::map<int, Eigen::VectorXd>& centroids);

struct WithinEpisodeResult {
    EpisodeTrace trace;
    std::vector<Eigen::VectorXd> z_used;  // one per stage
};

// Stage 0 acts with the prior mean; every later stage re-infers z from the
// transitions seen so far in this episode. Actions are deterministic.
WithinEpisodeResult within_episode_rollout(const MetaLearner& learner, const Discriminator& net,
                                           const ScenarioSample& sample);

// One Adam pass over every prefix of `trace` toward `target`.
double online_update(Discriminator& net, Adam& optimizer, const EpisodeTrace& trace, const Eigen::VectorXd& target);

}  // namespace metagrl
