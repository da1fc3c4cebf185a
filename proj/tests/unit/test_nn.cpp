#include "metagrl/nn.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

using namespace metagrl;

namespace {

Matrix random_adjacency(int n, double p, Rng& rng) {
    std::bernoulli_distribution edge(p);
    Matrix a = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (edge(rng)) a(i, j) = a(j, i) = 1.0;
    return a;
}

Matrix uniform(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

GcnLayer identity_layer(int width) {
    GcnLayer layer;
    layer.theta = variable(Matrix::Identity(width, width), "theta");
    layer.act = Activation::identity;
    return layer;
}

}  // namespace

TEST(Gcn, SingleNodeIsIdentity) {
    const Matrix adj = Matrix::Zero(1, 1);
    const GraphBatch batch = make_graph_batch({&adj});
    const Matrix x = (Matrix(1, 3) << 0.5, -2.0, 7.0).finished();
    EXPECT_EQ(identity_layer(3).forward(constant(x), batch).value(), x);
}

TEST(Gcn, TwoNodesAverage) {
    const Matrix adj = (Matrix(2, 2) << 0, 1, 1, 0).finished();
    const GraphBatch batch = make_graph_batch({&adj});
    const Matrix x = (Matrix(2, 1) << 3.0, 5.0).finished();
    const Matrix y = identity_layer(1).forward(constant(x), batch).value();
    EXPECT_NEAR(y(0, 0), 4.0, 1e-15);
    EXPECT_NEAR(y(1, 0), 4.0, 1e-15);
}

TEST(Gcn, MatchesLoopReference) {
    Rng rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + trial % 9;
        const Matrix adj = random_adjacency(n, 0.4, rng);
        const Matrix x = uniform(n, 4, rng);
        GcnLayer layer;
        layer.theta = variable(uniform(4, 3, rng), "theta");
        layer.act = Activation::identity;
        const Matrix ours = layer.forward(constant(x), make_graph_batch({&adj})).value();
        const Matrix ref = oracle::gcn_reference(adj, x, layer.theta.value());
        EXPECT_LT((ours - ref).cwiseAbs().maxCoeff(), 1e-12) << "trial " << trial;
    }
}

TEST(Gcn, NormalizedAdjacencyHandValues) {
    const Matrix adj = (Matrix(3, 3) << 0, 1, 0, 1, 0, 1, 0, 1, 0).finished();
    const Matrix na = normalized_adjacency(adj);
    EXPECT_NEAR(na(0, 0), 0.5, 1e-15);
    EXPECT_NEAR(na(1, 1), 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(na(0, 1), 1.0 / std::sqrt(6.0), 1e-15);
    EXPECT_EQ(na(0, 2), 0.0);
    EXPECT_TRUE(na.isApprox(na.transpose()));
}

TEST(Gcn, EdgeWeightsScaleNeighbours) {
    const Matrix adj = (Matrix(2, 2) << 0, 1, 1, 0).finished();
    const Matrix w = (Matrix(2, 2) << 0, 3, 3, 0).finished();
    const Matrix na = normalized_adjacency(adj, &w);
    // degrees count neighbours; the weight only multiplies the edge term
    EXPECT_NEAR(na(0, 1), 3.0 / 2.0, 1e-15);
    EXPECT_NEAR(na(0, 0), 1.0 / 2.0, 1e-15);
}

TEST(Gcn, PermutationEquivariant) {
    Rng rng(8);
    Rng init(2);
    ParameterStore store;
    const GcnEncoder enc = GcnEncoder::create(store, "enc", 5, {6, 4}, init);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + trial % 10;
        const Matrix adj = random_adjacency(n, 0.35, rng);
        const Matrix x = uniform(n, 5, rng);
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Matrix padj(n, n), px(n, 5);
        for (int i = 0; i < n; ++i) {
            px.row(i) = x.row(perm[i]);
            for (int j = 0; j < n; ++j) padj(i, j) = adj(perm[i], perm[j]);
        }
        const Matrix y = enc.node_embeddings(constant(x), make_graph_batch({&adj})).value();
        const Matrix py = enc.node_embeddings(constant(px), make_graph_batch({&padj})).value();
        for (int i = 0; i < n; ++i) EXPECT_EQ(py.row(i), y.row(perm[i])) << "trial " << trial;
        EXPECT_EQ(enc.pooled(constant(x), make_graph_batch({&adj})).value(),
                  enc.pooled(constant(px), make_graph_batch({&padj})).value());
    }
}

TEST(Gcn, BatchedEqualsSeparate) {
    Rng rng(4);
    ParameterStore store;
    const GcnEncoder enc = GcnEncoder::create(store, "enc", 3, {5}, rng);
    const Matrix a1 = random_adjacency(4, 0.6, rng), a2 = random_adjacency(3, 0.6, rng);
    const Matrix x1 = uniform(4, 3, rng), x2 = uniform(3, 3, rng);
    const Matrix both = enc.pooled(stack_features({&x1, &x2}), make_graph_batch({&a1, &a2})).value();
    EXPECT_EQ(both.rows(), 2);
    EXPECT_EQ(both.row(0), enc.pooled(constant(x1), make_graph_batch({&a1})).value().row(0));
    EXPECT_EQ(both.row(1), enc.pooled(constant(x2), make_graph_batch({&a2})).value().row(0));
}

TEST(Gcn, ThetaGradientMatchesFiniteDifferences) {
    Rng rng(13);
    const Matrix adj = random_adjacency(6, 0.5, rng);
    const Matrix x = uniform(6, 4, rng);
    const Matrix w = uniform(6, 3, rng);
    ParameterStore store;
    const GcnLayer layer = GcnLayer::create(store, "g", 4, 3, rng);
    const GraphBatch batch = make_graph_batch({&adj});
    const auto loss = [&] { return sum(mul(layer.forward(constant(x), batch), constant(w))); };
    EXPECT_LT(oracle::max_rel_grad_error(loss, store.tensors()), 1e-5);
}

TEST(GradCheck, DenseTanhNetwork) {
    Rng rng(1);
    ParameterStore store;
    const Mlp mlp = Mlp::create(store, "mlp", {4, 8, 8, 2}, rng, Activation::tanh);
    const Matrix x = uniform(5, 4, rng);
    const auto loss = [&] { return sum(square(mlp.forward(constant(x)))); };
    EXPECT_LT(grad_check(loss, store).max_rel_error, 1e-5);
    EXPECT_LT(oracle::max_rel_grad_error(loss, store.tensors()), 1e-5);
}

TEST(GradCheck, GcnGaussianKlComposite) {
    Rng rng(6);
    ParameterStore store;
    const GcnEncoder enc = GcnEncoder::create(store, "enc", 3, {4}, rng);
    const Dense mu = Dense::create(store, "mu", 4, 2, rng);
    const Dense ls = Dense::create(store, "ls", 4, 2, rng);
    const Matrix adj = random_adjacency(5, 0.5, rng);
    const Matrix x = uniform(5, 3, rng);
    const Matrix eps = uniform(1, 2, rng);
    const GraphBatch batch = make_graph_batch({&adj});
    const auto loss = [&] {
        const Tensor h = enc.pooled(constant(x), batch);
        const GaussianParams g = gaussian_head(mu.forward(h), ls.forward(h));
        const Tensor z = reparam_sample(g, eps);
        return add(sum(square(z)), kl_standard_normal(g.mean, g.log_std));
    };
    EXPECT_LT(grad_check(loss, store).max_rel_error, 1e-4);
    EXPECT_LT(oracle::max_rel_grad_error(loss, store.tensors()), 1e-4);
}

TEST(Kl, ClosedFormValues) {
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(3), one = Eigen::VectorXd::Ones(3);
    EXPECT_EQ(kl_gaussian_value(zero, one, zero, one), 0.0);
    Eigen::VectorXd m(1), s(1), m0(1), s0(1);
    m << 1.0;
    s << 1.0;
    m0 << 0.0;
    s0 << 1.0;
    EXPECT_NEAR(kl_gaussian_value(m, s, m0, s0), 0.5, 1e-15);
    Eigen::VectorXd s2(1);
    s2 << 2.0;
    EXPECT_NEAR(kl_gaussian_value(m0, s2, m0, s0), (4.0 - 1.0 - std::log(4.0)) / 2.0, 1e-15);
    EXPECT_NEAR(kl_gaussian_value(m0, s2, m0, s0), 0.8069, 5e-5);
    EXPECT_THROW(kl_gaussian_value(m0, -s2, m0, s0), std::invalid_argument);
}

TEST(Kl, TensorMatchesOracleAndIsNonnegative) {
    Rng rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        const Matrix mq = uniform(1, 4, rng, -2, 2), lq = uniform(1, 4, rng, -1.5, 1.0);
        const Matrix mp = uniform(1, 4, rng, -2, 2), lp = uniform(1, 4, rng, -1.5, 1.0);
        const double kl = kl_gaussian(constant(mq), constant(lq), constant(mp), constant(lp)).item();
        const Eigen::VectorXd sq = lq.row(0).transpose().array().exp(), sp = lp.row(0).transpose().array().exp();
        const double ref = oracle::kl_diag(mq.row(0).transpose(), sq, mp.row(0).transpose(), sp);
        EXPECT_NEAR(kl, ref, 1e-12 * (1.0 + ref));
        EXPECT_GE(kl, 0.0);
    }
}

TEST(Reparam, ZeroNoiseGivesMean) {
    const Matrix mu = (Matrix(1, 2) << 0.3, -1.2).finished();
    const GaussianParams g = gaussian_head(constant(mu), constant(Matrix::Constant(1, 2, 0.4)));
    EXPECT_EQ(reparam_sample(g, Matrix::Zero(1, 2)).value(), mu);
}

TEST(Reparam, MinimumStdKeepsSampleNearMean) {
    const Matrix mu = Matrix::Constant(1, 3, 0.5);
    const GaussianParams g = gaussian_head(constant(mu), constant(Matrix::Constant(1, 3, -50.0)));
    EXPECT_EQ(g.log_std.value()(0, 0), kLogStdMin);
    const Matrix z = reparam_sample(g, Matrix::Constant(1, 3, 3.0)).value();
    EXPECT_LT((z - mu).cwiseAbs().maxCoeff(), 3.0 * std::exp(kLogStdMin) + 1e-15);
}

TEST(Reparam, MonteCarloMean) {
    Rng rng(17);
    const int n = 100000;
    const double mu = 0.7, sigma = 1.3;
    const GaussianParams g = gaussian_head(constant(Matrix::Constant(n, 1, mu)),
                                           constant(Matrix::Constant(n, 1, std::log(sigma))));
    const Matrix z = reparam_sample(g, standard_normal(n, 1, rng)).value();
    EXPECT_NEAR(z.mean(), mu, 3.0 * sigma / std::sqrt(static_cast<double>(n)));
}

TEST(Reparam, GradientReachesMeanAndStd) {
    Tensor mu = variable(Matrix::Constant(1, 1, 0.2), "mu");
    Tensor ls = variable(Matrix::Constant(1, 1, 0.1), "ls");
    backward(sum(reparam_sample(gaussian_head(mu, ls), Matrix::Constant(1, 1, 2.0))));
    EXPECT_DOUBLE_EQ(mu.grad()(0, 0), 1.0);
    EXPECT_NEAR(ls.grad()(0, 0), 2.0 * std::exp(0.1), 1e-15);
}

TEST(GaussianLogProb, MatchesClosedForm) {
    const Matrix mu = (Matrix(2, 2) << 0.0, 1.0, -1.0, 0.5).finished();
    const Matrix ls = (Matrix(2, 2) << 0.0, -0.5, 0.3, 0.0).finished();
    const Matrix x = (Matrix(2, 2) << 0.4, 1.2, -2.0, 0.0).finished();
    const Matrix lp = gaussian_log_prob(gaussian_head(constant(mu), constant(ls)), constant(x)).value();
    for (int r = 0; r < 2; ++r) {
        double ref = 0.0;
        for (int c = 0; c < 2; ++c) {
            const double s = std::exp(ls(r, c));
            ref += -0.5 * std::pow((x(r, c) - mu(r, c)) / s, 2) - std::log(s * std::sqrt(2.0 * std::numbers::pi));
        }
        EXPECT_NEAR(lp(r, 0), ref, 1e-13);
    }
}

TEST(AdamTest, ZeroGradientLeavesParameters) {
    ParameterStore store;
    store.add("w", Matrix::Constant(2, 2, 1.5));
    Adam opt(store, {});
    store.zero_grad();
    opt.step(store);
    EXPECT_EQ(store.get("w").value(), Matrix::Constant(2, 2, 1.5));
}

TEST(AdamTest, ConstantGradientStepApproachesLearningRate) {
    ParameterStore store;
    store.add("w", Matrix::Zero(1, 2));
    AdamConfig cfg;
    cfg.lr = 1e-3;
    Adam opt(store, cfg);
    Matrix before;
    for (int k = 0; k < 2000; ++k) {
        store.zero_grad();
        store.get("w").node()->grad = (Matrix(1, 2) << 3.0, -0.5).finished();
        before = store.get("w").value();
        opt.step(store);
    }
    const Matrix delta = store.get("w").value() - before;
    EXPECT_NEAR(delta(0, 0), -1e-3, 1e-8);
    EXPECT_NEAR(delta(0, 1), 1e-3, 1e-8);
}

TEST(AdamTest, DeterministicRuns) {
    const auto run = [] {
        Rng rng(5);
        ParameterStore store;
        const Mlp mlp = Mlp::create(store, "m", {3, 4, 1}, rng);
        const Matrix x = uniform(6, 3, rng);
        Adam opt(store, {});
        for (int k = 0; k < 20; ++k) {
            store.zero_grad();
            backward(mean(square(mlp.forward(constant(x)))));
            opt.step(store);
        }
        return store.checksum();
    };
    EXPECT_EQ(run(), run());
}

TEST(AdamTest, NonFiniteGradientNamesParameter) {
    ParameterStore store;
    store.add("actor.w0", Matrix::Zero(1, 1));
    Adam opt(store, {});
    store.zero_grad();
    store.get("actor.w0").node()->grad(0, 0) = std::nan("");
    try {
        opt.step(store);
        FAIL() << "expected NonFiniteError";
    } catch (const NonFiniteError& e) {
        EXPECT_NE(std::string(e.what()).find("actor.w0"), std::string::npos);
    }
}

TEST(AdamTest, ClipBoundsUpdateDirection) {
    ParameterStore store;
    store.add("w", Matrix::Zero(1, 1));
    AdamConfig cfg;
    cfg.clip_norm = 1.0;
    Adam opt(store, cfg);
    store.zero_grad();
    store.get("w").node()->grad(0, 0) = 1e6;
    opt.step(store);
    EXPECT_NEAR(store.get("w").value()(0, 0), -cfg.lr, 1e-10);
}

TEST(Parameters, FlatRoundTripAndChecksum) {
    Rng rng(2);
    ParameterStore a;
    Mlp::create(a, "m", {3, 5, 2}, rng);
    ParameterStore b;
    Rng other(3);
    Mlp::create(b, "m", {3, 5, 2}, other);
    EXPECT_NE(a.checksum(), b.checksum());
    b.set_flat(a.flat());
    EXPECT_EQ(a.checksum(), b.checksum());
    EXPECT_EQ(a.scalar_count(), static_cast<std::size_t>(3 * 5 + 5 + 5 * 2 + 2));
    EXPECT_THROW(a.add("m.0.w", Matrix::Zero(1, 1)), std::invalid_argument);
}

TEST(Parameters, BlendIsPolyak) {
    ParameterStore a, b;
    a.add("w", Matrix::Constant(1, 1, 10.0));
    b.add("w", Matrix::Constant(1, 1, 0.0));
    b.blend_from(a, 0.25);
    EXPECT_DOUBLE_EQ(b.get("w").value()(0, 0), 2.5);
    ParameterStore c;
    c.add("v", Matrix::Zero(1, 1));
    EXPECT_ANY_THROW(c.blend_from(a, 0.5));
}
