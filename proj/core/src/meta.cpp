#include "metagrl/meta.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace metagrl {

void MetaConfig::validate() const {
    if (latent_dim < 1) throw std::invalid_argument("latent_dim must be positive");
    if (beta < 0.0) throw std::invalid_argument("beta must be nonnegative");
    if (!(encoder_lr > 0.0)) throw std::invalid_argument("encoder_lr must be positive");
    if (context_size < 0) throw std::invalid_argument("context_size must be nonnegative");
    if (recency_capacity < 1) throw std::invalid_argument("recency_capacity must be positive");
}

PosteriorZ PosteriorZ::prior(int latent_dim) {
    return {Eigen::VectorXd::Zero(latent_dim), Eigen::VectorXd::Ones(latent_dim), 0};
}

Eigen::VectorXd PosteriorZ::sample(Rng& rng) const {
    std::normal_distribution<double> dist(0.0, 1.0);
    Eigen::VectorXd z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = mean(i) + sigma(i) * dist(rng);
    return z;
}

ContextEncoder::ContextEncoder(int action_dim, int latent_dim, const NetConfig& net, Rng& rng) : latent_dim_(latent_dim) {
    gcn_ = GcnEncoder::create(params_, "encoder", kNodeFeatures, net.gcn_widths, rng);
    std::vector<int> sizes{2 * gcn_.out() + action_dim + 1};
    sizes.insert(sizes.end(), net.hidden.begin(), net.hidden.end());
    sizes.push_back(2 * latent_dim);
    trunk_ = Mlp::create(params_, "encoder.trunk", sizes, rng, Activation::relu, net.output_gain);
}

GaussianParams ContextEncoder::factors(const std::vector<const Transition*>& transitions) const {
    if (transitions.empty()) throw std::invalid_argument("no transitions to encode");
    const GraphInput s = batch_states(transitions, false);
    const GraphInput s_next = batch_states(transitions, true);
    Matrix reward(static_cast<Eigen::Index>(transitions.size()), 1);
    for (std::size_t i = 0; i < transitions.size(); ++i) reward(static_cast<Eigen::Index>(i), 0) = transitions[i]->reward;
    const Tensor h = concat_cols({gcn_.pooled(s.features, s.batch), batch_actions(transitions), constant(std::move(reward)),
                                  gcn_.pooled(s_next.features, s_next.batch)});
    const Tensor out = trunk_.forward(h);
    require_finite(out, "context encoder output");
    return gaussian_head(slice_cols(out, 0, latent_dim_), slice_cols(out, latent_dim_, latent_dim_));
}

PosteriorTensors ContextEncoder::posterior(const std::vector<std::vector<const Transition*>>& groups) const {
    std::vector<const Transition*> flat;
    std::vector<int> offsets{0};
    for (const auto& g : groups) {
        flat.insert(flat.end(), g.begin(), g.end());
        offsets.push_back(static_cast<int>(flat.size()));
    }
    const auto n_groups = static_cast<Eigen::Index>(groups.size());
    if (flat.empty()) {
        return {constant(Matrix::Zero(n_groups, latent_dim_)), constant(Matrix::Zero(n_groups, latent_dim_))};
    }
    const GaussianParams f = factors(flat);
    const Tensor precision = exp(scale(f.log_std, -2.0));
    const Tensor total = add_scalar(segment_sum(precision, offsets), 1.0);
    const Tensor weighted = segment_sum(mul(f.mean, precision), offsets);
    return {div(weighted, total), scale(log(total), -0.5)};
}

PosteriorZ encode_context(const ContextEncoder& encoder, const std::vector<const Transition*>& transitions) {
    if (transitions.empty()) return PosteriorZ::prior(encoder.latent_dim());
    const PosteriorTensors p = encoder.posterior({transitions});
    PosteriorZ out;
    out.mean = p.mean.value().row(0).transpose();
    out.sigma = p.log_std.value().row(0).transpose().array().exp();
    out.transitions = static_cast<int>(transitions.size());
    if (!out.mean.allFinite() || !out.sigma.allFinite()) throw NonFiniteError("non-finite posterior");
    return out;
}

PosteriorZ fuse_factors(const Matrix& means, const Matrix& sigmas) {
    if (means.rows() != sigmas.rows() || means.cols() != sigmas.cols()) throw std::invalid_argument("factor shape mismatch");
    PosteriorZ out;
    Eigen::VectorXd precision = Eigen::VectorXd::Ones(means.cols());
    Eigen::VectorXd weighted = Eigen::VectorXd::Zero(means.cols());
    for (Eigen::Index r = 0; r < means.rows(); ++r) {
        for (Eigen::Index c = 0; c < means.cols(); ++c) {
            const double p = 1.0 / (sigmas(r, c) * sigmas(r, c));
            precision(c) += p;
            weighted(c) += p * means(r, c);
        }
    }
    out.mean = weighted.cwiseQuotient(precision);
    out.sigma = precision.cwiseSqrt().cwiseInverse();
    out.transitions = static_cast<int>(means.rows());
    return out;
}

Tensor kl_loss(const PosteriorTensors& posterior, double beta) {
    const double rows = static_cast<double>(std::max<Eigen::Index>(posterior.mean.rows(), 1));
    return scale(kl_standard_normal(posterior.mean, posterior.log_std), beta / rows);
}

RecencyBuffer::RecencyBuffer(int capacity) : capacity_(capacity) {
    if (capacity < 1) throw std::invalid_argument("recency buffer capacity must be positive");
}

void RecencyBuffer::add(int task, EpisodeTrace trace) {
    auto& q = store_[task];
    q.push_back(std::move(trace));
    while (static_cast<int>(q.size()) > capacity_) q.pop_front();
}

bool RecencyBuffer::has(int task) const {
    auto it = store_.find(task);
    return it != store_.end() && !it->second.empty();
}

std::size_t RecencyBuffer::episodes(int task) const {
    auto it = store_.find(task);
    return it == store_.end() ? 0 : it->second.size();
}

std::vector<const Transition*> RecencyBuffer::context(int task) const {
    std::vector<const Transition*> out;
    auto it = store_.find(task);
    if (it == store_.end()) return out;
    for (const auto& trace : it->second) {
        for (const auto& t : trace.transitions) out.push_back(&t);
    }
    return out;
}

MetaLearner::MetaLearner(const GridSpec& spec, const EnvConfig& env, const NetConfig& net, const SacConfig& sac,
                         const MetaConfig& meta, std::uint64_t seed)
    : spec_(spec), env_(env), meta_(meta), recent_(meta.recency_capacity), rng_(derive_seed(seed, "meta.rng")) {
    meta_.validate();
    require_valid(spec_);
    const int adim = action_dim(spec_);
    agent_ = SacAgent(adim, meta_.latent_dim, net, sac, derive_seed(seed, "meta.agent"));
    Rng enc_rng(derive_seed(seed, "meta.encoder"));
    encoder_ = ContextEncoder(adim, meta_.latent_dim, net, enc_rng);
    encoder_opt_ = Adam(encoder_.params(), {meta_.encoder_lr, 0.9, 0.999, 1e-8, sac.clip_norm});
}

EpisodeTrace MetaLearner::run_episode(const ScenarioSample& sample, const Eigen::VectorXd& z, ActMode mode, Rng& rng) const {
    const Policy policy = [&](const DispatchState&, const GridGraph& graph, const Eigen::VectorXd& zz) {
        return agent_.act(graph, zz, mode, rng).first;
    };
    return rollout(policy, spec_, sample, z, env_);
}

PosteriorZ MetaLearner::infer(const std::vector<const Transition*>& context) const {
    return encode_context(encoder_, context);
}

std::vector<const Transition*> MetaLearner::context_sample(int task, Rng& rng) const {
    std::vector<const Transition*> ctx = recent_.context(task);
    if (meta_.context_size > 0 && static_cast<int>(ctx.size()) > meta_.context_size) {
        std::shuffle(ctx.begin(), ctx.end(), rng);
        ctx.resize(static_cast<std::size_t>(meta_.context_size));
    }
    return ctx;
}

std::uint64_t MetaLearner::checksum() const {
    std::uint64_t h = 0;
    for (const auto& [name, store] : parameter_groups()) h = splitmix64(h ^ fnv1a64(name) ^ store->checksum());
    return h;
}

std::map<std::string, const ParameterStore*> MetaLearner::parameter_groups() const {
    return {{"actor", &agent_.actor().params()},
            {"critic", &agent_.critic().params()},
            {"target", &agent_.target().params()},
            {"encoder", &encoder_.params()}};
}

std::map<std::string, ParameterStore*> MetaLearner::parameter_groups() {
    return {{"actor", &agent_.actor().params()},
            {"critic", &agent_.critic().params()},
            {"target", &agent_.target().params()},
            {"encoder", &encoder_.params()}};
}

std::vector<MetaLogEntry> MetaLearner::train(const std::vector<ScenarioFamily>& families, const MetaTrainConfig& config,
                                             const std::function<void(const MetaLogEntry&)>& hook) {
    if (families.empty()) throw std::invalid_argument("meta training needs at least one family");
    for (const auto& f : families) {
        validate_family(f, spec_);
        replay_.try_emplace(f.id, config.replay_capacity);
    }
    std::uniform_int_distribution<std::uint64_t> seed_dist;
    auto collect = [&](const ScenarioFamily& family, bool use_prior) {
        const ScenarioSample sample = sample_scenario(family, spec_, seed_dist(rng_));
        const PosteriorZ post = (use_prior || !recent_.has(family.id)) ? PosteriorZ::prior(meta_.latent_dim)
                                                                       : infer(recent_.context(family.id));
        EpisodeTrace trace = run_episode(sample, post.sample(rng_), ActMode::stochastic, rng_);
        env_steps_ += static_cast<long>(trace.transitions.size());
        for (const auto& t : trace.transitions) replay_.at(family.id).add(t);
        const double cost = trace.cumulative_cost;
        recent_.add(family.id, std::move(trace));
        return cost;
    };

    for (const auto& f : families) {
        for (int e = 0; e < config.warmup_episodes; ++e) collect(f, true);
    }

    std::vector<MetaLogEntry> log;
    for (int it = 0; it < config.iterations; ++it) {
        MetaLogEntry entry;
        entry.iteration = it;
        int collected = 0;
        for (const auto& f : families) {
            for (int e = 0; e < config.prior_episodes_per_task; ++e) {
                entry.collect_cost += collect(f, true);
                ++collected;
            }
            for (int e = 0; e < config.episodes_per_task; ++e) {
                entry.collect_cost += collect(f, false);
                ++collected;
            }
        }
        if (collected > 0) entry.collect_cost /= collected;

        for (int g = 0; g < config.gradient_steps; ++g) {
            std::vector<std::vector<const Transition*>> groups;
            std::vector<const Transition*> batch;
            std::vector<int> row_of;
            for (std::size_t k = 0; k < families.size(); ++k) {
                groups.push_back(context_sample(families[k].id, rng_));
                const auto part = replay_.at(families[k].id).sample(static_cast<std::size_t>(config.batch_per_task), rng_);
                batch.insert(batch.end(), part.begin(), part.end());
                row_of.insert(row_of.end(), part.size(), static_cast<int>(k));
            }
            const PosteriorTensors post = encoder_.posterior(groups);
            const Matrix eps = standard_normal(post.mean.rows(), post.mean.cols(), rng_);
            const Tensor z_task = reparam_sample({post.mean, post.log_std}, eps);
            AuxiliaryLoss aux{kl_loss(post, meta_.beta), &encoder_.params(), &encoder_opt_};
            const SacMetrics m = agent_.train_step(batch, gather_rows(z_task, row_of), rng_, &aux);
            entry.critic_loss += m.critic_loss / config.gradient_steps;
            entry.actor_loss += m.actor_loss / config.gradient_steps;
            entry.kl += m.aux_loss / config.gradient_steps;
            entry.entropy += m.entropy / config.gradient_steps;
        }
        entry.env_steps = env_steps_;
        entry.gradient_steps = agent_.gradient_steps();
        log.push_back(entry);
        if (hook) hook(entry);
    }
    return log;
}

MetaTestResult meta_test(const MetaLearner& learner, const std::function<ScenarioSample(int round)>& sampler,
                         const MetaTestConfig& config, std::uint64_t seed) {
    if (config.rounds < 0) throw std::invalid_argument("adaptation rounds must be nonnegative");
    MetaTestResult result;
    result.checksum_before = learner.checksum();
    Rng rng(derive_seed(seed, "meta_test"));
    std::vector<EpisodeTrace> context;
    PosteriorZ post = PosteriorZ::prior(learner.meta().latent_dim);
    for (int r = 0; r <= config.rounds; ++r) {
        const ScenarioSample sample = sampler(r);
        AdaptationRound round;
        round.round = r;
        round.posterior = post;
        round.z = (r > 0 && config.posterior_mean) ? post.mean : post.sample(rng);
        round.trace = learner.run_episode(sample, round.z, ActMode::deterministic, rng);
        round.cost = round.trace.cumulative_cost;
        context.push_back(round.trace);
        std::vector<const Transition*> ctx;
        for (const auto& trace : context) {
            for (const auto& t : trace.transitions) ctx.push_back(&t);
        }
        post = learner.infer(ctx);
        result.rounds.push_back(std::move(round));
    }
    result.adapted = post;
    result.checksum_after = learner.checksum();
    if (result.checksum_after != result.checksum_before) throw std::logic_error("meta_test modified learner parameters");
    return result;
}

MetaTestResult meta_test(const MetaLearner& learner, const ScenarioFamily& family, const MetaTestConfig& config,
                         std::uint64_t seed) {
    validate_family(family, learner.spec());
    const auto sampler = [&](int r) {
        const auto index = static_cast<std::uint64_t>(config.resample ? r : 0);
        return sample_scenario(family, learner.spec(), derive_seed(seed, "meta_test.sample", index));
    };
    return meta_test(learner, sampler, config, seed);
}

std::string embedding_csv(const std::vector<std::pair<int, std::uint64_t>>& keys, const std::vector<PosteriorZ>& posteriors) {
    if (keys.size() != posteriors.size()) throw std::invalid_argument("one key per posterior required");
    std::ostringstream os;
    os << std::setprecision(17);
    const Eigen::Index d = posteriors.empty() ? 0 : posteriors[0].mean.size();
    os << "family,sample";
    for (Eigen::Index i = 0; i < d; ++i) os << ",mu_" << i;
    for (Eigen::Index i = 0; i < d; ++i) os << ",sigma_" << i;
    os << '\n';
    for (std::size_t k = 0; k < keys.size(); ++k) {
        os << keys[k].first << ',' << keys[k].second;
        for (Eigen::Index i = 0; i < d; ++i) os << ',' << posteriors[k].mean(i);
        for (Eigen::Index i = 0; i < d; ++i) os << ',' << posteriors[k].sigma(i);
        os << '\n';
    }
    return os.str();
}

nlohmann::json to_json(const MetaLogEntry& e) {
    return {{"iteration", e.iteration},     {"env_steps", e.env_steps}, {"gradient_steps", e.gradient_steps},
            {"critic_loss", e.critic_loss}, {"actor_loss", e.actor_loss}, {"kl", e.kl},
            {"entropy", e.entropy},         {"collect_cost", e.collect_cost}};
}

}  // namespace metagrl
