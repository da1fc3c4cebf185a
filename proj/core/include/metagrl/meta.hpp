#pragma once

#include "metagrl/env.hpp"
#include "metagrl/sac.hpp"
#include "metagrl/scenario.hpp"

#include <nlohmann/json.hpp>

#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace metagrl {

struct MetaConfig {
    int latent_dim = 5;
    double beta = 0.1;
    double encoder_lr = 3e-4;
    // Transitions drawn from a task's recent context per inference; 0 uses all.
    int context_size = 0;
    // Episodes kept per task in the recency buffer.
    int recency_capacity = 1;

    void validate() const;
};

// Posterior over z as plain values.
struct PosteriorZ {
    Eigen::VectorXd mean;
    Eigen::VectorXd sigma;
    int transitions = 0;

    static PosteriorZ prior(int latent_dim);
    Eigen::VectorXd sample(Rng& rng) const;
};

// Batched posterior tensors, one row per context group.
struct PosteriorTensors {
    Tensor mean;
    Tensor log_std;
};

// Maps each transition (graph, action, reward, next graph) to a Gaussian
// factor over z. Rewards enter as the environment's normalized reward.
class ContextEncoder {
public:
    ContextEncoder() = default;
    ContextEncoder(int action_dim, int latent_dim, const NetConfig& net, Rng& rng);
    ContextEncoder(const ContextEncoder&) = delete;
    ContextEncoder& operator=(const ContextEncoder&) = delete;
    ContextEncoder(ContextEncoder&&) = default;
    ContextEncoder& operator=(ContextEncoder&&) = default;

    // Per-transition factor means and clamped log-stds, N x latent_dim.
    GaussianParams factors(const std::vector<const Transition*>& transitions) const;
    // Precision-weighted product of the prior N(0, I) with every factor of
    // each group. Empty groups yield the prior.
    PosteriorTensors posterior(const std::vector<std::vector<const Transition*>>& groups) const;

    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }
    int latent_dim() const { return latent_dim_; }

private:
    ParameterStore params_;
    GcnEncoder gcn_;
    Mlp trunk_;
    int latent_dim_ = 0;
};

PosteriorZ encode_context(const ContextEncoder& encoder, const std::vector<const Transition*>& transitions);
// Closed-form fusion from factor values, used as an independent check.
PosteriorZ fuse_factors(const Matrix& means, const Matrix& sigmas);
// beta * KL(q || N(0, I)), averaged over the posterior rows.
Tensor kl_loss(const PosteriorTensors& posterior, double beta);

// Latest episodes per task, oldest evicted first.
class RecencyBuffer {
public:
    explicit RecencyBuffer(int capacity = 1);

    void add(int task, EpisodeTrace trace);
    bool has(int task) const;
    std::size_t episodes(int task) const;
    std::vector<const Transition*> context(int task) const;
    int capacity() const { return capacity_; }

private:
    int capacity_;
    std::map<int, std::deque<EpisodeTrace>> store_;
};

struct MetaTrainConfig {
    int iterations = 200;
    int episodes_per_task = 1;
    // Extra episodes per task and iteration collected with z drawn from the
    // prior, so the encoder also sees the contexts that start adaptation.
    int prior_episodes_per_task = 0;
    // Episodes per task collected with prior z before any gradient step.
    int warmup_episodes = 4;
    int gradient_steps = 40;
    // Transitions per task in each RL batch.
    int batch_per_task = 32;
    std::size_t replay_capacity = 20000;
    int log_every = 10;
};

struct MetaLogEntry {
    int iteration = 0;
    long env_steps = 0;
    long gradient_steps = 0;
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double kl = 0.0;
    double entropy = 0.0;
    // Mean episode cost of the episodes collected in this iteration.
    double collect_cost = 0.0;
};


class MetaLearner {
public:
    MetaLearner(const GridSpec& spec, const EnvConfig& env, const NetConfig& net, const SacConfig& sac,
                const MetaConfig& meta, std::uint64_t seed);
    MetaLearner(const MetaLearner&) = delete;
    MetaLearner& operator=(const MetaLearner&) = delete;

    // Runs collection and gradient phases over the families. The optional
    // hook is called after every iteration with the latest log entry.
    std::vector<MetaLogEntry> train(const std::vector<ScenarioFamily>& families, const MetaTrainConfig& config,
                                    const std::function<void(const MetaLogEntry&)>& hook = {});

    // One episode on `sample` with a fixed z.
    EpisodeTrace run_episode(const ScenarioSample& sample, const Eigen::VectorXd& z, ActMode mode, Rng& rng) const;
    PosteriorZ infer(const std::vector<const Transition*>& context) const;

    SacAgent& agent() { return agent_; }
    const SacAgent& agent() const { return agent_; }
    ContextEncoder& encoder() { return encoder_; }
    const ContextEncoder& encoder() const { return encoder_; }
    const RecencyBuffer& recent() const { return recent_; }
    const GridSpec& spec() const { return spec_; }
    const EnvConfig& env() const { return env_; }
    const MetaConfig& meta() const { return meta_; }
    // Checksum over actor, critics, targets and encoder.
    std::uint64_t checksum() const;

    std::map<std::string, const ParameterStore*> parameter_groups() const;
    std::map<std::string, ParameterStore*> parameter_groups();

private:
    std::vector<const Transition*> context_sample(int task, Rng& rng) const;

    GridSpec spec_;
    EnvConfig env_;
    MetaConfig meta_;
    SacAgent agent_;
    ContextEncoder encoder_;
    Adam encoder_opt_;
    RecencyBuffer recent_;
    std::map<int, ReplayBuffer> replay_;
    Rng rng_;
    long env_steps_ = 0;
};

struct AdaptationRound {
    int round = 0;
    double cost = 0.0;
    PosteriorZ posterior;  // the distribution z was drawn from
    Eigen::VectorXd z;
    EpisodeTrace trace;
};

struct MetaTestResult {
    std::vector<AdaptationRound> rounds;
    PosteriorZ adapted;
    std::uint64_t checksum_before = 0;
    std::uint64_t checksum_after = 0;
};

struct MetaTestConfig {
    int rounds = 5;
    // Use the posterior mean instead of a posterior sample after round 0.
    bool posterior_mean = false;
    // Draw a new scenario sample each round; otherwise reuse the first.
    bool resample = true;
};

// Round 0 uses z drawn from the prior; each later round re-encodes all
// trajectories collected so far and draws z from that posterior. Actions are
// deterministic and learner parameters are never modified.
MetaTestResult meta_test(const MetaLearner& learner, const ScenarioFamily& family, const MetaTestConfig& config,
                         std::uint64_t seed);
// Same protocol with an explicit sample per round (`resample` is ignored).
MetaTestResult meta_test(const MetaLearner& learner, const std::function<ScenarioSample(int round)>& sampler,
                         const MetaTestConfig& config, std::uint64_t seed);

// One row per (family, sample): family,sample,mu_0..,sigma_0..
std::string embedding_csv(const std::vector<std::pair<int, std::uint64_t>>& keys, const std::vector<PosteriorZ>& posteriors);

nlohmann::json to_json(const MetaLogEntry& entry);

}  // namespace metagrl
