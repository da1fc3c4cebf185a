#pragma once

#include "metagrl/env.hpp"
#include "metagrl/nn.hpp"
#include "metagrl/rng.hpp"

#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <vector>

namespace metagrl {

struct NetConfig {
    std::vector<int> gcn_widths{32, 32};
    std::vector<int> hidden{64, 64};
    // Scale of the initial weights of output layers.
    double output_gain = 0.1;
};

struct SacConfig {
    double gamma = 0.99;
    double alpha = 0.2;
    // Per-step mixing rate; with a period p the applied rate is 1 - (1 - tau)^p.
    double tau = 0.005;
    // Gradient steps between target updates; nonpositive means never.
    int target_period = 1000;
    int batch_size = 64;
    double actor_lr = 3e-4;
    double critic_lr = 3e-4;
    double clip_norm = 10.0;

    double target_mix() const;
    void validate() const;
};

// Node features and block adjacency for a batch of graphs.
struct GraphInput {
    Tensor features;
    GraphBatch batch;

    int size() const { return batch.graph_count(); }
};

GraphInput make_graph_input(const std::vector<const GridGraph*>& graphs);

enum class ActMode { stochastic, deterministic };

// Squashed Gaussian policy: 2 GCN layers, mean pool, concat z, dense trunk,
// mean / log-std heads, tanh.
class Actor {
public:
    struct Output {
        Tensor action;    // B x dim, in (-1, 1)
        Tensor log_prob;  // B x 1, density of the squashed action
        Tensor mean;
        Tensor log_std;
    };

    Actor() = default;
    Actor(int action_dim, int latent_dim, const NetConfig& net, Rng& rng);
    // Layers hold handles onto the store's tensors, so copies would alias.
    Actor(const Actor&) = delete;
    Actor& operator=(const Actor&) = delete;
    Actor(Actor&&) = default;
    Actor& operator=(Actor&&) = default;

    // eps is required in stochastic mode (B x dim standard normals).
    Output forward(const GraphInput& in, const Tensor& z, ActMode mode, const Matrix* eps = nullptr) const;

    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }
    int action_dim() const { return action_dim_; }
    int latent_dim() const { return latent_dim_; }

private:
    ParameterStore params_;
    GcnEncoder gcn_;
    Mlp trunk_;
    int action_dim_ = 0;
    int latent_dim_ = 0;
};

// Twin soft Q networks, each with its own GCN encoder.
class Critic {
public:
    Critic() = default;
    Critic(int action_dim, int latent_dim, const NetConfig& net, Rng& rng);
    Critic(const Critic&) = delete;
    Critic& operator=(const Critic&) = delete;
    Critic(Critic&&) = default;
    Critic& operator=(Critic&&) = default;

    // Returns {Q1, Q2}, each B x 1.
    std::pair<Tensor, Tensor> forward(const GraphInput& in, const Tensor& action, const Tensor& z) const;
    // Swaps the parameter values of the two twins.
    void swap_twins();

    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }

private:
    ParameterStore params_;
    GcnEncoder gcn1_, gcn2_;
    Mlp q1_, q2_;
};

// Squashed-Gaussian log density with the tanh change of variables, B x 1.
Tensor squashed_log_prob(const Tensor& pre_tanh, const GaussianParams& g);

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 100000);

    void add(Transition t);
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t i) const { return items_[i]; }
    // Uniform sample without replacement; n is capped at size().
    std::vector<const Transition*> sample(std::size_t n, Rng& rng) const;
    void clear() { items_.clear(); }

private:
    std::size_t capacity_;
    std::deque<Transition> items_;
};

struct SacMetrics {
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double entropy = 0.0;
    double critic_grad_norm = 0.0;
    double actor_grad_norm = 0.0;
    double aux_loss = 0.0;
    bool target_updated = false;
};

// Extra term added to the critic objective (for instance a weighted KL from
// a context encoder) together with the parameters it should update.
struct AuxiliaryLoss {
    Tensor loss;
    ParameterStore* params = nullptr;
    Adam* optimizer = nullptr;
};

class SacAgent {
public:
    SacAgent() = default;
    SacAgent(int action_dim, int latent_dim, const NetConfig& net, const SacConfig& config, std::uint64_t seed);

    // Single graph; returns raw action and its log density.
    std::pair<Eigen::VectorXd, double> act(const GridGraph& graph, const Eigen::VectorXd& z, ActMode mode, Rng& rng) const;

    // Soft-Q residual 0.5 (Q - y)^2 averaged over batch and twins' sum; z
    // carries a gradient path if the caller wants one. Targets use detached z.
    Tensor critic_loss(const std::vector<const Transition*>& batch, const Tensor& z, Rng& rng) const;
    // mean(alpha log pi - min Q) with reparameterized actions; z is detached.
    Tensor actor_loss(const std::vector<const Transition*>& batch, const Tensor& z, Rng& rng,
                      double* entropy = nullptr) const;

    // One critic update, one actor update, then the target update if the
    // period has elapsed.
    SacMetrics train_step(const std::vector<const Transition*>& batch, const Tensor& z, Rng& rng,
                          AuxiliaryLoss* aux = nullptr);
    void update_target();

    Actor& actor() { return actor_; }
    const Actor& actor() const { return actor_; }
    Critic& critic() { return critic_; }
    const Critic& critic() const { return critic_; }
    Critic& target() { return target_; }
    const Critic& target() const { return target_; }
    SacConfig& config() { return config_; }
    const SacConfig& config() const { return config_; }
    long gradient_steps() const { return steps_; }
    int action_dim() const { return actor_.action_dim(); }
    int latent_dim() const { return actor_.latent_dim(); }

private:
    SacConfig config_;
    Actor actor_;
    Critic critic_;
    Critic target_;
    Adam actor_opt_;
    Adam critic_opt_;
    long steps_ = 0;
};

// Moves each target parameter toward the online one: t <- mix * o + (1 - mix) * t.
void soft_update(ParameterStore& target, const ParameterStore& online, double mix);

GraphInput batch_states(const std::vector<const Transition*>& batch, bool next);
Tensor batch_actions(const std::vector<const Transition*>& batch);

}  // namespace metagrl
