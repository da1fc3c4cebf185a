#include "metagrl/sac.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace metagrl {

double SacConfig::target_mix() const {
    if (target_period <= 0) return 0.0;
    return 1.0 - std::pow(1.0 - tau, static_cast<double>(target_period));
}

void SacConfig::validate() const {
    if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("gamma must lie in [0, 1)");
    if (alpha < 0.0) throw std::invalid_argument("alpha must be nonnegative");
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in (0, 1]");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
    if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) throw std::invalid_argument("learning rates must be positive");
}

GraphInput make_graph_input(const std::vector<const GridGraph*>& graphs) {
    std::vector<const Matrix*> feats, adjs;
    for (const GridGraph* g : graphs) {
        feats.push_back(&g->eig);
        adjs.push_back(&g->adj);
    }
    return {stack_features(feats), make_graph_batch(adjs)};
}

Tensor squashed_log_prob(const Tensor& pre_tanh, const GaussianParams& g) {
    // log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
    const Tensor log_det = scale(add_scalar(neg(add(pre_tanh, softplus(scale(pre_tanh, -2.0)))), std::log(2.0)), 2.0);
    return sub(gaussian_log_prob(g, pre_tanh), sum_cols(log_det));
}

Actor::Actor(int action_dim, int latent_dim, const NetConfig& net, Rng& rng)
    : action_dim_(action_dim), latent_dim_(latent_dim) {
    if (action_dim < 1) throw std::invalid_argument("actor needs a positive action dimension");
    gcn_ = GcnEncoder::create(params_, "actor", kNodeFeatures, net.gcn_widths, rng);
    std::vector<int> sizes{gcn_.out() + latent_dim};
    sizes.insert(sizes.end(), net.hidden.begin(), net.hidden.end());
    sizes.push_back(2 * action_dim);
    trunk_ = Mlp::create(params_, "actor.trunk", sizes, rng, Activation::relu, net.output_gain);
}

Actor::Output Actor::forward(const GraphInput& in, const Tensor& z, ActMode mode, const Matrix* eps) const {
    if (z.rows() != in.size() || z.cols() != latent_dim_) throw std::invalid_argument("actor: latent batch shape mismatch");
    const Tensor pooled = gcn_.pooled(in.features, in.batch);
    require_finite(pooled, "actor graph encoder");
    const Tensor h = latent_dim_ > 0 ? concat_cols({pooled, z}) : pooled;
    const Tensor out = trunk_.forward(h);
    require_finite(out, "actor trunk output");
    const GaussianParams g = gaussian_head(slice_cols(out, 0, action_dim_), slice_cols(out, action_dim_, action_dim_));
    Tensor pre;
    if (mode == ActMode::stochastic) {
        if (!eps) throw std::invalid_argument("stochastic action needs noise");
        pre = reparam_sample(g, *eps);
    } else {
        pre = g.mean;
    }
    return {tanh(pre), squashed_log_prob(pre, g), g.mean, g.log_std};
}

Critic::Critic(int action_dim, int latent_dim, const NetConfig& net, Rng& rng) {
    gcn1_ = GcnEncoder::create(params_, "q1", kNodeFeatures, net.gcn_widths, rng);
    std::vector<int> sizes{gcn1_.out() + action_dim + latent_dim};
    sizes.insert(sizes.end(), net.hidden.begin(), net.hidden.end());
    sizes.push_back(1);
    q1_ = Mlp::create(params_, "q1.trunk", sizes, rng, Activation::relu, net.output_gain);
    gcn2_ = GcnEncoder::create(params_, "q2", kNodeFeatures, net.gcn_widths, rng);
    q2_ = Mlp::create(params_, "q2.trunk", sizes, rng, Activation::relu, net.output_gain);
}

std::pair<Tensor, Tensor> Critic::forward(const GraphInput& in, const Tensor& action, const Tensor& z) const {
    auto one = [&](const GcnEncoder& gcn, const Mlp& mlp) {
        const Tensor pooled = gcn.pooled(in.features, in.batch);
        std::vector<Tensor> parts{pooled, action};
        if (z.cols() > 0) parts.push_back(z);
        return mlp.forward(concat_cols(parts));
    };
    return {one(gcn1_, q1_), one(gcn2_, q2_)};
}

void Critic::swap_twins() {
    for (const auto& name : params_.names()) {
        if (name.rfind("q1.", 0) != 0) continue;
        Tensor& a = params_.get(name);
        Tensor& b = params_.get("q2." + name.substr(3));
        std::swap(a.mutable_value(), b.mutable_value());
    }
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayBuffer::add(Transition t) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(t));
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
    n = std::min(n, items_.size());
    std::vector<std::size_t> idx(items_.size());
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: the first n slots become the sample.
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    std::vector<const Transition*> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(&items_[idx[i]]);
    return out;
}

void soft_update(ParameterStore& target, const ParameterStore& online, double mix) {
    target.blend_from(online, mix);
}

GraphInput batch_states(const std::vector<const Transition*>& batch, bool next) {
    std::vector<const GridGraph*> graphs;
    graphs.reserve(batch.size());
    for (const Transition* t : batch) graphs.push_back(next ? &t->next_graph : &t->graph);
    return make_graph_input(graphs);
}

Tensor batch_actions(const std::vector<const Transition*>& batch) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    const Eigen::Index dim = batch[0]->raw_action.size();
    Matrix a(static_cast<Eigen::Index>(batch.size()), dim);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i]->raw_action.size() != dim) throw std::invalid_argument("mixed action sizes in batch");
        a.row(static_cast<Eigen::Index>(i)) = batch[i]->raw_action.transpose();
    }
    return constant(std::move(a));
}

SacAgent::SacAgent(int action_dim, int latent_dim, const NetConfig& net, const SacConfig& config, std::uint64_t seed)
    : config_(config) {
    config_.validate();
    Rng rng(seed);
    actor_ = Actor(action_dim, latent_dim, net, rng);
    critic_ = Critic(action_dim, latent_dim, net, rng);
    target_ = Critic(action_dim, latent_dim, net, rng);
    target_.params().copy_from(critic_.params());
    actor_opt_ = Adam(actor_.params(), {config_.actor_lr, 0.9, 0.999, 1e-8, config_.clip_norm});
    critic_opt_ = Adam(critic_.params(), {config_.critic_lr, 0.9, 0.999, 1e-8, config_.clip_norm});
}

std::pair<Eigen::VectorXd, double> SacAgent::act(const GridGraph& graph, const Eigen::VectorXd& z, ActMode mode,
                                                 Rng& rng) const {
    if (z.size() != latent_dim()) throw std::invalid_argument("latent vector has the wrong size");
    const GraphInput in = make_graph_input({&graph});
    const Tensor zt = constant(Matrix(z.transpose()));
    Matrix eps;
    if (mode == ActMode::stochastic) eps = standard_normal(1, action_dim(), rng);
    const auto out = actor_.forward(in, zt, mode, mode == ActMode::stochastic ? &eps : nullptr);
    Eigen::VectorXd a = out.action.value().row(0).transpose();
    // Keep strictly inside (-1, 1) even when tanh saturates in floating point.
    const double edge = std::nextafter(1.0, 0.0);
    a = a.cwiseMax(-edge).cwiseMin(edge);
    return {a, out.log_prob.item()};
}

Tensor SacAgent::critic_loss(const std::vector<const Transition*>& batch, const Tensor& z, Rng& rng) const {
    if (batch.empty()) throw std::invalid_argument("critic loss on an empty batch");
    if (!z.defined() || z.rows() != static_cast<Eigen::Index>(batch.size())) {
        throw std::invalid_argument("critic loss needs one latent row per transition");
    }
    const auto n = static_cast<Eigen::Index>(batch.size());
    const GraphInput s = batch_states(batch, false);
    const GraphInput s_next = batch_states(batch, true);
    const Tensor z_const = detach(z);

    Matrix eps = standard_normal(n, action_dim(), rng);
    const auto next = actor_.forward(s_next, z_const, ActMode::stochastic, &eps);
    const auto [tq1, tq2] = target_.forward(s_next, detach(next.action), z_const);
    Matrix y(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Transition& t = *batch[static_cast<std::size_t>(i)];
        const double soft_v = std::min(tq1.value()(i, 0), tq2.value()(i, 0)) - config_.alpha * next.log_prob.value()(i, 0);
        y(i, 0) = t.reward + (t.done ? 0.0 : config_.gamma * soft_v);
    }
    const Tensor target = constant(std::move(y));
    const auto [q1, q2] = critic_.forward(s, batch_actions(batch), z);
    const Tensor l1 = mean(scale(square(sub(q1, target)), 0.5));
    const Tensor l2 = mean(scale(square(sub(q2, target)), 0.5));
    return scale(add(l1, l2), 0.5);
}

Tensor SacAgent::actor_loss(const std::vector<const Transition*>& batch, const Tensor& z, Rng& rng,
                            double* entropy) const {
    if (batch.empty()) throw std::invalid_argument("actor loss on an empty batch");
    if (!z.defined() || z.rows() != static_cast<Eigen::Index>(batch.size())) {
        throw std::invalid_argument("actor loss needs one latent row per transition");
    }
    const auto n = static_cast<Eigen::Index>(batch.size());
    const GraphInput s = batch_states(batch, false);
    const Tensor z_const = detach(z);
    Matrix eps = standard_normal(n, action_dim(), rng);
    const auto out = actor_.forward(s, z_const, ActMode::stochastic, &eps);
    const auto [q1, q2] = critic_.forward(s, out.action, z_const);
    if (entropy) *entropy = -out.log_prob.value().mean();
    return mean(sub(scale(out.log_prob, config_.alpha), minimum(q1, q2)));
}

SacMetrics SacAgent::train_step(const std::vector<const Transition*>& batch, const Tensor& z, Rng& rng,
                                AuxiliaryLoss* aux) {
    SacMetrics m;
    critic_.params().zero_grad();
    if (aux && aux->params) aux->params->zero_grad();
    Tensor jq = critic_loss(batch, z, rng);
    m.critic_loss = jq.item();
    if (aux && aux->loss.defined()) {
        m.aux_loss = aux->loss.item();
        jq = add(jq, aux->loss);
    }
    backward(jq);
    m.critic_grad_norm = critic_.params().grad_norm();
    critic_opt_.step(critic_.params());
    if (aux && aux->params && aux->optimizer) aux->optimizer->step(*aux->params);

    actor_.params().zero_grad();
    const Tensor jpi = actor_loss(batch, z, rng, &m.entropy);
    m.actor_loss = jpi.item();
    backward(jpi);
    m.actor_grad_norm = actor_.params().grad_norm();
    actor_opt_.step(actor_.params());
    critic_.params().zero_grad();

    ++steps_;
    if (config_.target_period > 0 && steps_ % config_.target_period == 0) {
        update_target();
        m.target_updated = true;
    }
    return m;
}

void SacAgent::update_target() { soft_update(target_.params(), critic_.params(), config_.target_mix()); }

}  // namespace metagrl
