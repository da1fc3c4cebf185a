#include "metagrl/meta.hpp"
#include "metagrl/presets.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace metagrl;

namespace {

const NetConfig kNet{{6, 6}, {16, 16}, 0.1};

EnvConfig env_config() {
    EnvConfig c;
    c.network = NetworkModel::copper_plate;
    c.reward_scale = 1000.0;
    return c;
}

SacConfig sac_config() {
    SacConfig c;
    c.alpha = 0.05;
    c.target_period = 1;
    c.actor_lr = 1e-3;
    c.critic_lr = 1e-3;
    return c;
}

MetaConfig meta_config(double beta) {
    MetaConfig m;
    m.latent_dim = 3;
    m.beta = beta;
    m.encoder_lr = 1e-3;
    return m;
}

ScenarioFamily family(int id, std::vector<double> load, std::vector<double> re) {
    ScenarioFamily f;
    f.id = id;
    f.horizon = static_cast<int>(load.size());
    f.load_shape = {std::vector<double>(load.size(), 0.0), std::vector<double>(load.size(), 0.0), std::move(load)};
    f.re_shape = {std::move(re)};
    f.sigma = 0.0;
    f.q_ratio = 0.2;
    f.label = "f" + std::to_string(id);
    return f;
}

std::vector<ScenarioFamily> two_families() {
    return {family(1, {90, 150, 190, 110}, {0, 40, 70, 10}), family(2, {80, 110, 200, 170}, {60, 30, 10, 50})};
}

MetaTrainConfig short_run(int iterations) {
    MetaTrainConfig c;
    c.iterations = iterations;
    c.warmup_episodes = 2;
    c.gradient_steps = 5;
    c.batch_per_task = 8;
    return c;
}

std::vector<Transition> episode(const MetaLearner& learner, const ScenarioFamily& f, std::uint64_t seed) {
    Rng rng(seed);
    const auto sample = sample_scenario(f, learner.spec(), seed);
    return learner.run_episode(sample, PosteriorZ::prior(learner.meta().latent_dim).sample(rng), ActMode::stochastic, rng)
        .transitions;
}

std::vector<const Transition*> pointers(const std::vector<Transition>& ts) {
    std::vector<const Transition*> out;
    for (const auto& t : ts) out.push_back(&t);
    return out;
}

}  // namespace

TEST(Posterior, EmptyContextIsPrior) {
    MetaLearner learner(three_bus_grid(), env_config(), kNet, sac_config(), meta_config(0.1), 1);
    const PosteriorZ p = encode_context(learner.encoder(), {});
    EXPECT_EQ(p.mean, Eigen::VectorXd::Zero(3));
    EXPECT_EQ(p.sigma, Eigen::VectorXd::Ones(3));
    EXPECT_EQ(p.transitions, 0);
}

TEST(Posterior, StandardFactorHalvesVariance) {
    const PosteriorZ p = fuse_factors(Matrix::Zero(1, 2), Matrix::Ones(1, 2));
    EXPECT_NEAR(p.sigma(0) * p.sigma(0), 0.5, 1e-15);
    EXPECT_NEAR(p.sigma(1) * p.sigma(1), 0.5, 1e-15);
    EXPECT_EQ(p.mean, Eigen::VectorXd::Zero(2));
}

TEST(Posterior, FusionMatchesGaussianProduct) {
    const Matrix mu = (Matrix(2, 1) << 1.0, -3.0).finished();
    const Matrix sd = (Matrix(2, 1) << 0.5, 2.0).finished();
    const PosteriorZ p = fuse_factors(mu, sd);
    // prior precision 1, factor precisions 4 and 0.25
    const double prec = 1.0 + 4.0 + 0.25;
    EXPECT_NEAR(p.sigma(0), std::sqrt(1.0 / prec), 1e-15);
    EXPECT_NEAR(p.mean(0), (4.0 * 1.0 + 0.25 * -3.0) / prec, 1e-15);
}

TEST(Posterior, EncoderAgreesWithClosedFormFusion) {
    MetaLearner learner(three_bus_grid(), env_config(), kNet, sac_config(), meta_config(0.1), 2);
    const auto ts = episode(learner, two_families()[0], 3);
    const auto ctx = pointers(ts);
    const GaussianParams f = learner.encoder().factors(ctx);
    const PosteriorZ ref = fuse_factors(f.mean.value(), f.log_std.value().array().exp().matrix());
    const PosteriorZ got = encode_context(learner.encoder(), ctx);
    EXPECT_LT((got.mean - ref.mean).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((got.sigma - ref.sigma).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(got.transitions, static_cast<int>(ctx.size()));
}

TEST(Posterior, PermutationInvariant) {
    MetaLearner learner(three_bus_grid(), env_config(), kNet, sac_config(), meta_config(0.1), 2);
    auto ts = episode(learner, two_families()[1], 4);
    const auto more = episode(learner, two_families()[0], 5);
    ts.insert(ts.end(), more.begin(), more.end());
    auto ctx = pointers(ts);
    const PosteriorZ a = encode_context(learner.encoder(), ctx);
    Rng rng(1);
    for (int k = 0; k < 10; ++k) {
        std::shuffle(ctx.begin(), ctx.end(), rng);
        const PosteriorZ b = encode_context(learner.encoder(), ctx);
        EXPECT_LT((a.mean - b.mean).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((a.sigma - b.sigma).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Posterior, MoreContextNeverWidens) {
    MetaLearner learner(three_bus_grid(), env_config(), kNet, sac_config(), meta_config(0.1), 2);
    const auto ts = episode(learner, two_families()[0], 6);
    std::vector<const Transition*> ctx;
    Eigen::VectorXd prev = Eigen::VectorXd::Ones(3);
    for (const auto& t : ts) {
        ctx.push_back(&t);
        const PosteriorZ p = encode_context(learner.encoder(), ctx);
        EXPECT_TRUE((p.sigma.array() <= prev.array()).all());
        prev = p.sigma;
    }
    // duplicating one transition strictly concentrates
    std::vector<const Transition*> dup;
    double last = 2.0;
    for (int k = 1; k <= 5; ++k) {
        dup.push_back(&ts[0]);
        const double var = encode_context(learner.encoder(), dup).sigma.squaredNorm();
        EXPECT_LT(var, last);
        last = var;
    }
}

TEST(KlLoss, ZeroAtPriorAndLinearInBeta) {
    const PosteriorTensors prior{constant(Matrix::Zero(2, 3)), constant(Matrix::Zero(2, 3))};
    EXPECT_EQ(kl_loss(prior, 0.7).item(), 0.0);
    const PosteriorTensors q{constant(Matrix::Constant(2, 3, 0.4)), constant(Matrix::Constant(2, 3, -0.3))};
    EXPECT_EQ(kl_loss(q, 0.0).item(), 0.0);
    EXPECT_NEAR(kl_loss(q, 0.2).item(), 2.0 * kl_loss(q, 0.1).item(), 1e-15);
    const Eigen::VectorXd m = Eigen::VectorXd::Constant(3, 0.4), s = Eigen::VectorXd::Constant(3, std::exp(-0.3));
    EXPECT_NEAR(kl_loss(q, 1.0).item(), oracle::kl_diag(m, s, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3)), 1e-14);
}

TEST(KlLoss, GradientThroughEncoder) {
    MetaLearner learner(three_bus_grid(), env_config(), kNet, sac_config(), meta_config(0.5), 2);
    const auto a = episode(learner, two_families()[0], 7);
    const auto b = episode(learner, two_families()[1], 8);
    const std::vector<std::vector<const Transition*>> groups{pointers(a), pointers(b)};
    const auto loss = [&] { return kl_loss(learner.encoder().posterior(groups), 0.5); };
    EXPECT_LT(oracle::max_rel_grad_error(loss, learner.encoder().params().tensors()), 1e-4);
}

TEST(Recency, EvictsOldestEpisode) {
    RecencyBuffer buf(2);
    for (std::uint64_t id = 1; id <= 3; ++id) {
        EpisodeTrace t;
        t.id = id;
        t.transitions.resize(static_cast<std::size_t>(id));
        buf.add(5, std::move(t));
    }
    EXPECT_EQ(buf.episodes(5), 2u);
    EXPECT_EQ(buf.context(5).size(), 5u);
    EXPECT_FALSE(buf.has(6));
    EXPECT_TRUE(buf.context(6).empty());
    EXPECT_THROW(RecencyBuffer(0), std::invalid_argument);
}

TEST(MetaConfigTest, Validation) {
    MetaConfig m;
    m.beta = -1.0;
    EXPECT_THROW(m.validate(), std::invalid_argument);
    m = MetaConfig{};
    m.latent_dim = 0;
    EXPECT_THROW(m.validate(), std::invalid_argument);
}

TEST(MetaTrain, SeededRunsRepeat) {
    const auto run = [] {
        MetaLearner learner(three_bus_grid(), env_config(), kNet, sac_config(), meta_config(0.1), 9);
        const auto log = learner.train(two_families(), short_run(3));
        std::string text;
        for (const auto& e : log) text += to_json(e).dump() + "\n";
        return std::make_pair(text, learner.checksum());
    };
    EXPECT_EQ(run(), run());
}

TEST(MetaTrain, KlTermNonnegativeAndHookCalled) {
    MetaLearner learner(three_bus_grid(), env_config(), kNet, sac_config(), meta_config(0.1), 3);
    int calls = 0;
    const auto log = learner.train(two_families(), short_run(4), [&](const MetaLogEntry&) { ++calls; });
    EXPECT_EQ(calls, 4);
    for (const auto& e : log) EXPECT_GE(e.kl, 0.0);
    EXPECT_EQ(log.back().gradient_steps, 20);
}

TEST(MetaTrain, HeavyKlWeightCollapsesToPrior) {
    MetaLearner learner(three_bus_grid(), env_config(), kNet, sac_config(), meta_config(1e3), 4);
    const auto fams = two_families();
    learner.train(fams, short_run(30));
    double kl = 0.0;
    for (const auto& f : fams) {
        const auto ts = episode(learner, f, 11);
        const PosteriorZ p = learner.infer(pointers(ts));
        kl += kl_gaussian_value(p.mean, p.sigma, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3));
    }
    EXPECT_LT(kl / fams.size(), 0.1);
}

TEST(MetaTest, ZeroRoundsUsesPriorOnly) {
    MetaLearner learner(three_bus_grid(), env_config(), kNet, sac_config(), meta_config(0.1), 5);
    MetaTestConfig cfg;
    cfg.rounds = 0;
    const MetaTestResult r = meta_test(learner, two_families()[0], cfg, 3);
    ASSERT_EQ(r.rounds.size(), 1u);
    EXPECT_EQ(r.rounds[0].posterior.mean, Eigen::VectorXd::Zero(3));
    EXPECT_EQ(r.rounds[0].posterior.sigma, Eigen::VectorXd::Ones(3));
    EXPECT_EQ(r.adapted.transitions, 4);
}

TEST(MetaTest, FrozenParametersAndGrowingContext) {
    MetaLearner learner(three_bus_grid(), env_config(), kNet, sac_config(), meta_config(0.1), 5);
    learner.train(two_families(), short_run(2));
    const auto before = learner.checksum();
    MetaTestConfig cfg;
    cfg.rounds = 3;
    const MetaTestResult r = meta_test(learner, two_families()[1], cfg, 8);
    EXPECT_EQ(r.checksum_before, before);
    EXPECT_EQ(r.checksum_after, before);
    EXPECT_EQ(learner.checksum(), before);
    ASSERT_EQ(r.rounds.size(), 4u);
    for (std::size_t k = 1; k < r.rounds.size(); ++k) EXPECT_EQ(r.rounds[k].posterior.transitions, 4 * static_cast<int>(k));
    EXPECT_EQ(r.adapted.transitions, 16);
}

TEST(MetaTest, PosteriorMeanMode) {
    MetaLearner learner(three_bus_grid(), env_config(), kNet, sac_config(), meta_config(0.1), 5);
    MetaTestConfig cfg;
    cfg.rounds = 2;
    cfg.posterior_mean = true;
    const MetaTestResult r = meta_test(learner, two_families()[1], cfg, 8);
    EXPECT_EQ(r.rounds[1].z, r.rounds[1].posterior.mean);
    EXPECT_EQ(r.rounds[2].z, r.rounds[2].posterior.mean);
}

TEST(Embedding, CsvLayout) {
    const std::string csv = embedding_csv({{1, 7}}, {PosteriorZ::prior(2)});
    EXPECT_EQ(csv, "family,sample,mu_0,mu_1,sigma_0,sigma_1\n1,7,0,0,1,1\n");
}
