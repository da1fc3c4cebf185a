#include "metagrl/discriminator.hpp"
#include "metagrl/presets.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace metagrl;

namespace {

const NetConfig kNet{{6, 6}, {16, 16}, 0.1};

MetaLearner make_learner(std::uint64_t seed) {
    EnvConfig env;
    env.network = NetworkModel::copper_plate;
    env.reward_scale = 1000.0;
    MetaConfig meta;
    meta.latent_dim = 3;
    return MetaLearner(three_bus_grid(), env, kNet, SacConfig{}, meta, seed);
}

ScenarioFamily family(int id, std::vector<double> load) {
    ScenarioFamily f;
    f.id = id;
    f.horizon = static_cast<int>(load.size());
    f.load_shape = {std::vector<double>(load.size(), 0.0), std::vector<double>(load.size(), 0.0), std::move(load)};
    f.re_shape = {std::vector<double>(static_cast<std::size_t>(f.horizon), 20.0)};
    f.sigma = 0.05;
    f.label = "f";
    return f;
}

std::vector<EpisodeTrace> traces(const MetaLearner& learner, int per_family) {
    std::vector<EpisodeTrace> out;
    const std::vector<ScenarioFamily> fams{family(1, {90, 150, 190, 110}), family(2, {190, 110, 60, 170})};
    Rng rng(4);
    for (const auto& f : fams) {
        for (int k = 0; k < per_family; ++k) {
            const auto sample = sample_scenario(f, learner.spec(), 100 * f.id + k);
            EpisodeTrace t = learner.run_episode(sample, Eigen::VectorXd::Zero(3), ActMode::stochastic, rng);
            t.id = 1000 * f.id + k;
            out.push_back(std::move(t));
        }
    }
    return out;
}

}  // namespace

TEST(Dataset, OneExamplePerPrefixSharingTarget) {
    const MetaLearner learner = make_learner(1);
    auto ts = traces(learner, 1);
    const PrefixDataset one = build_dataset({ts[0]}, learner.encoder(), 0.0);
    ASSERT_EQ(one.examples.size(), 4u);
    for (int l = 0; l < 4; ++l) {
        EXPECT_EQ(one.examples[l].length, l + 1);
        EXPECT_EQ(one.examples[l].target, one.examples[0].target);
        EXPECT_EQ(one.prefix(one.examples[l]).size(), static_cast<std::size_t>(l + 1));
        EXPECT_EQ(one.prefix(one.examples[l]).front(), &one.traces[0].transitions[0]);
    }
    const PrefixDataset two = build_dataset(ts, learner.encoder(), 0.0);
    EXPECT_EQ(two.examples.size(), 8u);
}

TEST(Dataset, TargetIsFullTracePosteriorMean) {
    const MetaLearner learner = make_learner(2);
    const auto ts = traces(learner, 2);
    const PrefixDataset ds = build_dataset(ts, learner.encoder(), 0.3);
    for (std::size_t k = 0; k < ds.traces.size(); ++k) {
        std::vector<const Transition*> full;
        for (const auto& t : ds.traces[k].transitions) full.push_back(&t);
        EXPECT_EQ(ds.targets[k], encode_context(learner.encoder(), full).mean);
    }
    EXPECT_THROW(build_dataset({EpisodeTrace{}}, learner.encoder(), 0.0), std::invalid_argument);
}

TEST(Dataset, SplitIsDeterministicByTraceId) {
    int held = 0;
    for (std::uint64_t id = 0; id < 2000; ++id) {
        EXPECT_EQ(held_out_trace(id, 0.3), held_out_trace(id, 0.3));
        held += held_out_trace(id, 0.3);
        EXPECT_FALSE(held_out_trace(id, 0.0));
    }
    EXPECT_NEAR(held / 2000.0, 0.3, 0.05);
}

TEST(Dataset, TargetsCsvKeyedByTrace) {
    const MetaLearner learner = make_learner(2);
    const PrefixDataset ds = build_dataset(traces(learner, 1), learner.encoder(), 0.0);
    const std::string csv = targets_csv(ds);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "trace,family,z_0,z_1,z_2");
    EXPECT_NE(csv.find("\n1000,1,"), std::string::npos);
    EXPECT_NE(csv.find("\n2000,2,"), std::string::npos);
}

TEST(DiscriminatorNet, ConstantTargetFit) {
    const MetaLearner learner = make_learner(3);
    PrefixDataset ds = build_dataset(traces(learner, 3), learner.encoder(), 0.0);
    const Eigen::VectorXd c = (Eigen::VectorXd(3) << 0.4, -0.2, 0.7).finished();
    for (auto& t : ds.targets) t = c;
    for (auto& e : ds.examples) e.target = c;
    Rng rng(1);
    Discriminator net(4, 3, kNet, rng);
    DiscriminatorConfig cfg;
    cfg.epochs = 1500;
    cfg.lr = 1e-3;
    const auto res = train_discriminator(ds, net, cfg, 5);
    EXPECT_LT(res.loss_curve.back(), 1e-4);
    for (const auto& e : ds.examples) EXPECT_LT((net.infer(ds.prefix(e)) - c).squaredNorm() / 3.0, 1e-4);
}

TEST(DiscriminatorNet, ZeroEpochsLeavesParameters) {
    const MetaLearner learner = make_learner(3);
    const PrefixDataset ds = build_dataset(traces(learner, 2), learner.encoder(), 0.0);
    Rng rng(1);
    Discriminator net(4, 3, kNet, rng);
    const auto before = net.params().checksum();
    DiscriminatorConfig cfg;
    cfg.epochs = 0;
    const auto res = train_discriminator(ds, net, cfg, 5);
    EXPECT_TRUE(res.loss_curve.empty());
    EXPECT_EQ(net.params().checksum(), before);
}

TEST(DiscriminatorNet, LossGradientMatchesFiniteDifferences) {
    const MetaLearner learner = make_learner(4);
    const PrefixDataset ds = build_dataset(traces(learner, 2), learner.encoder(), 0.0);
    Rng rng(2);
    Discriminator net(4, 3, kNet, rng);
    std::vector<std::vector<const Transition*>> prefixes;
    Matrix targets(static_cast<Eigen::Index>(ds.examples.size()), 3);
    for (std::size_t k = 0; k < ds.examples.size(); ++k) {
        prefixes.push_back(ds.prefix(ds.examples[k]));
        targets.row(static_cast<Eigen::Index>(k)) = ds.examples[k].target.transpose();
    }
    const auto loss = [&] { return net.loss(prefixes, targets); };
    EXPECT_LT(oracle::max_rel_grad_error(loss, net.params().tensors()), 1e-4);
}

TEST(DiscriminatorNet, InferIsPureAndLengthAgnostic) {
    const MetaLearner learner = make_learner(4);
    const PrefixDataset ds = build_dataset(traces(learner, 1), learner.encoder(), 0.0);
    Rng rng(2);
    Discriminator net(4, 3, kNet, rng);
    const auto p1 = ds.prefix(ds.examples[0]);
    const auto p4 = ds.prefix(ds.examples[3]);
    EXPECT_EQ(net.infer(p1), net.infer(p1));
    EXPECT_EQ(net.infer(p1).size(), 3);
    EXPECT_EQ(net.infer(p4).size(), 3);
    EXPECT_TRUE(net.infer(p4).allFinite());
    EXPECT_THROW(net.infer({}), std::invalid_argument);
}

TEST(NearestFamily, ExactMatchTiesAndArithmetic) {
    const std::map<int, Eigen::VectorXd> c{{0, Eigen::Vector2d(0, 0)}, {1, Eigen::Vector2d(4, 0)}};
    const NearestFamily exact = nearest_family(Eigen::Vector2d(4, 0), c);
    EXPECT_EQ(exact.family, 1);
    EXPECT_EQ(exact.distance, 0.0);
    EXPECT_EQ(nearest_family(Eigen::Vector2d(2, 0), c).family, 0);
    const NearestFamily r = nearest_family(Eigen::Vector2d(1, 0), c);
    EXPECT_EQ(r.family, 0);
    EXPECT_EQ(r.distance, 1.0);
    EXPECT_EQ(r.distances.at(1), 3.0);
    EXPECT_THROW(nearest_family(Eigen::Vector2d(1, 0), {}), std::invalid_argument);
}

TEST(WithinEpisode, ReinfersEveryStage) {
    const MetaLearner learner = make_learner(5);
    Rng rng(3);
    Discriminator net(4, 3, kNet, rng);
    const auto sample = sample_scenario(family(1, {90, 150, 190, 110}), learner.spec(), 1);
    const auto before = learner.checksum();
    const WithinEpisodeResult r = within_episode_rollout(learner, net, sample);
    ASSERT_EQ(r.z_used.size(), 4u);
    EXPECT_EQ(r.z_used[0], Eigen::VectorXd::Zero(3));
    for (std::size_t t = 1; t < 4; ++t) {
        std::vector<const Transition*> prefix;
        for (std::size_t k = 0; k < t; ++k) prefix.push_back(&r.trace.transitions[k]);
        EXPECT_EQ(r.z_used[t], net.infer(prefix));
    }
    EXPECT_EQ(learner.checksum(), before);
}

TEST(WithinEpisode, OnlineUpdateMovesTowardTarget) {
    const MetaLearner learner = make_learner(5);
    Rng rng(3);
    Discriminator net(4, 3, kNet, rng);
    Adam opt(net.params(), {1e-2});
    const auto ts = traces(learner, 1);
    const Eigen::VectorXd target = Eigen::VectorXd::Constant(3, 0.5);
    const double first = online_update(net, opt, ts[0], target);
    double last = first;
    for (int k = 0; k < 30; ++k) last = online_update(net, opt, ts[0], target);
    EXPECT_LT(last, first);
}
