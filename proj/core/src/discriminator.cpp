#include "metagrl/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace metagrl {

std::vector<const Transition*> PrefixDataset::prefix(const PrefixExample& e) const {
    const auto& tr = traces.at(e.trace).transitions;
    std::vector<const Transition*> out;
    for (int i = 0; i < e.length; ++i) out.push_back(&tr[static_cast<std::size_t>(i)]);
    return out;
}

std::size_t PrefixDataset::count(bool held_out) const {
    return static_cast<std::size_t>(
        std::count_if(examples.begin(), examples.end(), [&](const PrefixExample& e) { return e.held_out == held_out; }));
}

bool held_out_trace(std::uint64_t trace_id, double fraction) {
    return static_cast<double>(splitmix64(trace_id) % 1000000ULL) < fraction * 1e6;
}

PrefixDataset build_dataset(std::vector<EpisodeTrace> traces, const ContextEncoder& encoder, double held_out_fraction) {
    PrefixDataset ds;
    ds.traces = std::move(traces);
    for (std::size_t k = 0; k < ds.traces.size(); ++k) {
        const auto& tr = ds.traces[k];
        if (tr.transitions.empty()) throw std::invalid_argument("trace " + std::to_string(tr.id) + " is empty");
        std::vector<const Transition*> all;
        for (const auto& t : tr.transitions) all.push_back(&t);
        ds.targets.push_back(encode_context(encoder, all).mean);
        const bool held = held_out_trace(tr.id, held_out_fraction);
        for (int len = 1; len <= static_cast<int>(tr.transitions.size()); ++len) {
            ds.examples.push_back({k, len, tr.family_id, ds.targets.back(), held});
        }
    }
    return ds;
}

std::string targets_csv(const PrefixDataset& dataset) {
    std::ostringstream os;
    os << std::setprecision(17) << "trace,family";
    const Eigen::Index d = dataset.targets.empty() ? 0 : dataset.targets[0].size();
    for (Eigen::Index i = 0; i < d; ++i) os << ",z_" << i;
    os << '\n';
    for (std::size_t k = 0; k < dataset.traces.size(); ++k) {
        os << dataset.traces[k].id << ',' << dataset.traces[k].family_id;
        for (Eigen::Index i = 0; i < d; ++i) os << ',' << dataset.targets[k](i);
        os << '\n';
    }
    return os.str();
}

Discriminator::Discriminator(int action_dim, int latent_dim, const NetConfig& net, Rng& rng) : latent_dim_(latent_dim) {
    gcn_ = GcnEncoder::create(params_, "disc", kNodeFeatures, net.gcn_widths, rng);
    const int width = net.hidden.empty() ? 64 : net.hidden.front();
    features_ = Mlp::create(params_, "disc.features", {2 * gcn_.out() + action_dim + 1, width, width}, rng);
    std::vector<int> sizes{width};
    sizes.insert(sizes.end(), net.hidden.begin(), net.hidden.end());
    sizes.push_back(latent_dim);
    head_ = Mlp::create(params_, "disc.head", sizes, rng);
}

Tensor Discriminator::forward(const std::vector<std::vector<const Transition*>>& prefixes) const {
    std::vector<const Transition*> flat;
    std::vector<int> offsets{0};
    for (const auto& p : prefixes) {
        if (p.empty()) throw std::invalid_argument("discriminator needs a nonempty prefix");
        flat.insert(flat.end(), p.begin(), p.end());
        offsets.push_back(static_cast<int>(flat.size()));
    }
    if (flat.empty()) throw std::invalid_argument("no prefixes given");
    const GraphInput s = batch_states(flat, false);
    const GraphInput s_next = batch_states(flat, true);
    Matrix reward(static_cast<Eigen::Index>(flat.size()), 1);
    for (std::size_t i = 0; i < flat.size(); ++i) reward(static_cast<Eigen::Index>(i), 0) = flat[i]->reward;
    const Tensor h = concat_cols({gcn_.pooled(s.features, s.batch), batch_actions(flat), constant(std::move(reward)),
                                  gcn_.pooled(s_next.features, s_next.batch)});
    const Tensor per = relu(features_.forward(h));
    const Tensor out = head_.forward(segment_mean(per, offsets));
    require_finite(out, "discriminator output");
    return out;
}

Eigen::VectorXd Discriminator::infer(const std::vector<const Transition*>& prefix) const {
    if (prefix.empty()) throw std::invalid_argument("discriminator needs a nonempty prefix");
    return forward({prefix}).value().row(0).transpose();
}

Tensor Discriminator::loss(const std::vector<std::vector<const Transition*>>& prefixes, const Matrix& targets) const {
    const Tensor out = forward(prefixes);
    if (targets.rows() != out.rows() || targets.cols() != out.cols()) throw std::invalid_argument("target shape mismatch");
    return mean(square(sub(out, constant(targets))));
}

namespace {

double evaluate(const PrefixDataset& ds, const Discriminator& net, const std::vector<std::size_t>& idx, int batch) {
    if (idx.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(batch)) {
        const std::size_t end = std::min(idx.size(), start + static_cast<std::size_t>(batch));
        std::vector<std::vector<const Transition*>> prefixes;
        Matrix targets(static_cast<Eigen::Index>(end - start), net.latent_dim());
        for (std::size_t i = start; i < end; ++i) {
            prefixes.push_back(ds.prefix(ds.examples[idx[i]]));
            targets.row(static_cast<Eigen::Index>(i - start)) = ds.examples[idx[i]].target.transpose();
        }
        total += net.loss(prefixes, targets).item() * static_cast<double>(end - start);
    }
    return total / static_cast<double>(idx.size());
}

}  // namespace

DiscriminatorTrainResult train_discriminator(const PrefixDataset& dataset, Discriminator& net,
                                             const DiscriminatorConfig& config, std::uint64_t seed) {
    std::vector<std::size_t> train, held;
    for (std::size_t i = 0; i < dataset.examples.size(); ++i) (dataset.examples[i].held_out ? held : train).push_back(i);
    if (train.empty()) throw std::invalid_argument("discriminator training split is empty");
    if (config.batch_size < 1) throw std::invalid_argument("batch_size must be positive");
    Rng rng(derive_seed(seed, "discriminator"));
    Adam opt(net.params(), {config.lr, 0.9, 0.999, 1e-8, 10.0});
    DiscriminatorTrainResult result;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(train.begin(), train.end(), rng);
        double total = 0.0;
        for (std::size_t start = 0; start < train.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(train.size(), start + static_cast<std::size_t>(config.batch_size));
            std::vector<std::vector<const Transition*>> prefixes;
            Matrix targets(static_cast<Eigen::Index>(end - start), net.latent_dim());
            for (std::size_t i = start; i < end; ++i) {
                prefixes.push_back(dataset.prefix(dataset.examples[train[i]]));
                targets.row(static_cast<Eigen::Index>(i - start)) = dataset.examples[train[i]].target.transpose();
            }
            net.params().zero_grad();
            const Tensor l = net.loss(prefixes, targets);
            if (!std::isfinite(l.item())) {
                throw NonFiniteError("discriminator loss diverged at epoch " + std::to_string(epoch));
            }
            backward(l);
            opt.step(net.params());
            total += l.item() * static_cast<double>(end - start);
        }
        result.loss_curve.push_back(total / static_cast<double>(train.size()));
    }
    result.held_out_loss = evaluate(dataset, net, held, config.batch_size);
    return result;
}

NearestFamily nearest_family(const Eigen::VectorXd& z, const std::map<int, Eigen::VectorXd>& centroids) {
    if (centroids.empty()) throw std::invalid_argument("no centroids given");
    NearestFamily out;
    out.distance = std::numeric_limits<double>::infinity();
    // std::map iterates in ascending id order, so strict < keeps the lowest id on ties.
    for (const auto& [id, c] : centroids) {
        if (c.size() != z.size()) throw std::invalid_argument("centroid dimension mismatch");
        const double d = (z - c).norm();
        out.distances[id] = d;
        if (d < out.distance) {
            out.distance = d;
            out.family = id;
        }
    }
    return out;
}

WithinEpisodeResult within_episode_rollout(const MetaLearner& learner, const Discriminator& net,
                                           const ScenarioSample& sample) {
    WithinEpisodeResult result;
    const GridSpec& spec = learner.spec();
    const EnvConfig& env = learner.env();
    EpisodeTrace& trace = result.trace;
    trace.id = sample.seed;
    trace.family_id = sample.family_id;
    DispatchState state = reset(spec, sample, env);
    GridGraph graph = state_graph(state, spec);
    Rng unused(0);
    for (int t = 0; t < state.horizon; ++t) {
        Eigen::VectorXd z = Eigen::VectorXd::Zero(net.latent_dim());
        if (!trace.transitions.empty()) {
            std::vector<const Transition*> prefix;
            for (const auto& tr : trace.transitions) prefix.push_back(&tr);
            z = net.infer(prefix);
        }
        result.z_used.push_back(z);
        Eigen::VectorXd raw = learner.agent().act(graph, z, ActMode::deterministic, unused).first;
        const ActionBox box = feasible_action_box(state, spec);
        const DispatchAction action = project_action(raw, box, spec);
        StepResult res = step(state, action, spec, sample, env);
        Transition tr;
        tr.state = state;
        tr.raw_action = raw;
        tr.action = res.realized;
        tr.reward = res.reward;
        tr.next_state = res.next;
        tr.cost = res.cost;
        tr.severity = res.violations.severity;
        tr.converged = res.converged;
        tr.done = res.done;
        tr.graph = graph;
        tr.next_graph = state_graph(res.next, spec);
        graph = tr.next_graph;
        trace.cumulative_cost += res.cost.total;
        trace.cumulative_penalty += res.cost.penalty;
        trace.transitions.push_back(std::move(tr));
        state = std::move(res.next);
        if (env.hard_fail && !res.converged) {
            trace.terminated_early = true;
            break;
        }
    }
    return result;
}

double online_update(Discriminator& net, Adam& optimizer, const EpisodeTrace& trace, const Eigen::VectorXd& target) {
    if (trace.transitions.empty()) throw std::invalid_argument("cannot update on an empty trace");
    std::vector<std::vector<const Transition*>> prefixes;
    std::vector<const Transition*> acc;
    for (const auto& t : trace.transitions) {
        acc.push_back(&t);
        prefixes.push_back(acc);
    }
    Matrix targets = target.transpose().replicate(static_cast<Eigen::Index>(prefixes.size()), 1);
    net.params().zero_grad();
    const Tensor l = net.loss(prefixes, targets);
    backward(l);
    optimizer.step(net.params());
    return l.item();
}

}  // namespace metagrl
