#include "metagrl/autodiff.hpp"
#include "metagrl/nn.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace metagrl;

namespace {

// Entries in [lo, hi] kept at least `gap` away from zero, so kinks at 0 stay
// outside the finite-difference stencil.
Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -1.5, double hi = 1.5, double gap = 0.05) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        double v = u(rng);
        while (std::abs(v) < gap) v = u(rng);
        m.data()[i] = v;
    }
    return m;
}

Matrix positive_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
    std::uniform_real_distribution<double> u(0.3, 2.0);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

}  // namespace

TEST(Autodiff, QuadraticGradientIsExact) {
    Tensor x = variable(Matrix::Constant(3, 2, 0.7), "x");
    const auto loss = [&] { return sum(square(x)); };
    const GradCheckResult r = grad_check(loss, {&x});
    EXPECT_LT(r.max_rel_error, 1e-8);
    x.zero_grad();
    backward(loss());
    EXPECT_TRUE(x.grad().isApprox(2.0 * x.value()));
}

TEST(Autodiff, DiamondAccumulatesBothPaths) {
    Tensor x = variable(Matrix::Constant(1, 1, 3.0), "x");
    const Tensor a = scale(x, 2.0);
    const Tensor b = square(x);
    const Tensor y = add(mul(a, b), a);  // 2x^3 + 2x
    backward(sum(y));
    EXPECT_DOUBLE_EQ(x.grad()(0, 0), 6.0 * 9.0 + 2.0);
}

TEST(Autodiff, ReusedLeafAccumulatesAcrossCalls) {
    Tensor x = variable(Matrix::Constant(1, 1, 2.0), "x");
    x.zero_grad();
    backward(sum(scale(x, 3.0)));
    backward(sum(scale(x, 3.0)));
    EXPECT_DOUBLE_EQ(x.grad()(0, 0), 6.0);
}

TEST(Autodiff, DetachBlocksGradient) {
    Tensor x = variable(Matrix::Constant(1, 1, 2.0), "x");
    x.zero_grad();
    backward(sum(add(x, square(detach(x)))));
    EXPECT_DOUBLE_EQ(x.grad()(0, 0), 1.0);
}

TEST(Autodiff, ClampAndMinimumRouting) {
    Tensor a = variable((Matrix(1, 3) << -2.0, 0.5, 2.0).finished(), "a");
    Tensor b = variable((Matrix(1, 3) << 1.0, 1.0, 1.0).finished(), "b");
    a.zero_grad();
    b.zero_grad();
    backward(sum(add(clamp(a, -1.0, 1.0), minimum(a, b))));
    EXPECT_EQ(a.grad(), (Matrix(1, 3) << 1.0, 2.0, 0.0).finished());
    EXPECT_EQ(b.grad(), (Matrix(1, 3) << 0.0, 0.0, 1.0).finished());
}

// Every differentiable operation against an independent central-difference oracle.
TEST(Autodiff, EveryOperationMatchesFiniteDifferences) {
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        std::uniform_int_distribution<int> dim(1, 4);
        const int n = dim(rng), c = dim(rng), k = dim(rng);
        Tensor a = variable(random_matrix(n, c, rng), "a");
        Tensor b = variable(random_matrix(n, c, rng), "b");
        Tensor w = variable(random_matrix(c, k, rng), "w");
        Tensor row = variable(random_matrix(1, c, rng), "row");
        Tensor col = variable(random_matrix(n, 1, rng), "col");
        Tensor pos = variable(positive_matrix(n, c, rng), "pos");

        Rng wr(100 + trial);
        const Matrix weights = random_matrix(2 * n + 1, 2 * std::max(c, k), wr);
        const auto weigh = [&](const Tensor& t) {
            return sum(mul(t, constant(weights.topLeftCorner(t.rows(), t.cols()))));
        };
        Matrix adj = Matrix::Zero(n, n);
        for (int i = 0; i + 1 < n; ++i) adj(i, i + 1) = adj(i + 1, i) = 1.0;
        const GraphBatch batch = make_graph_batch({&adj});
        std::vector<int> idx;
        for (int i = n - 1; i >= 0; --i) idx.push_back(i);
        idx.push_back(0);

        const std::vector<std::pair<const char*, std::function<Tensor()>>> ops = {
            {"matmul", [&] { return weigh(matmul(a, w)); }},
            {"matmul_rowwise", [&] { return weigh(matmul_rowwise(a, w)); }},
            {"add", [&] { return weigh(add(a, b)); }},
            {"sub", [&] { return weigh(sub(a, b)); }},
            {"mul", [&] { return weigh(mul(a, b)); }},
            {"div", [&] { return weigh(div(a, pos)); }},
            {"add_row", [&] { return weigh(add_row(a, row)); }},
            {"mul_col", [&] { return weigh(mul_col(a, col)); }},
            {"scale", [&] { return weigh(scale(a, -1.7)); }},
            {"add_scalar", [&] { return weigh(square(add_scalar(a, 0.3))); }},
            {"neg", [&] { return weigh(neg(a)); }},
            {"tanh", [&] { return weigh(tanh(a)); }},
            {"relu", [&] { return weigh(relu(a)); }},
            {"exp", [&] { return weigh(exp(a)); }},
            {"log", [&] { return weigh(log(pos)); }},
            {"sqrt", [&] { return weigh(sqrt(pos)); }},
            {"softplus", [&] { return weigh(softplus(a)); }},
            {"square", [&] { return weigh(square(a)); }},
            {"clamp", [&] { return weigh(clamp(a, -1.0, 1.0)); }},
            {"minimum", [&] { return weigh(minimum(a, b)); }},
            {"mean", [&] { return scale(mean(square(a)), 2.0); }},
            {"sum_cols", [&] { return weigh(sum_cols(square(a))); }},
            {"concat_cols", [&] { return weigh(concat_cols({a, square(b)})); }},
            {"concat_rows", [&] { return weigh(concat_rows({a, square(b)})); }},
            {"slice_cols", [&] { return weigh(slice_cols(square(a), c - 1, 1)); }},
            {"gather_rows", [&] { return weigh(gather_rows(square(a), idx)); }},
            {"segment_sum", [&] { return weigh(segment_sum(square(a), {0, n})); }},
            {"segment_mean", [&] { return weigh(segment_mean(square(a), {0, n})); }},
            {"graph_aggregate", [&] { return weigh(graph_aggregate(square(a), batch)); }},
        };
        const std::vector<Tensor> params{a, b, w, row, col, pos};
        for (const auto& [name, f] : ops) {
            EXPECT_LT(oracle::max_rel_grad_error(f, params), 1e-4) << name << " trial " << trial;
        }
    }
}

TEST(Autodiff, LibraryGradCheckAgreesWithOracle) {
    Rng rng(5);
    Tensor x = variable(random_matrix(3, 4, rng), "x");
    Tensor w = variable(random_matrix(4, 2, rng), "w");
    const Tensor weights = constant(random_matrix(3, 2, rng));
    const auto loss = [&] { return sum(mul(tanh(matmul(x, w)), weights)); };
    const double ours = grad_check(loss, {&x, &w}).max_rel_error;
    const double ref = oracle::max_rel_grad_error(loss, {x, w});
    EXPECT_LT(ours, 1e-5);
    EXPECT_LT(ref, 1e-5);
}

TEST(Autodiff, SegmentSumIgnoresRowOrderWithinGroup) {
    Rng rng(3);
    const Matrix m = random_matrix(5, 3, rng);
    std::vector<int> perm{0, 2, 1, 4, 3};
    Matrix p(5, 3);
    for (int i = 0; i < 5; ++i) p.row(i) = m.row(perm[i]);
    const Matrix s1 = segment_sum(constant(m), {0, 3, 5}).value();
    const Matrix s2 = segment_sum(constant(p), {0, 3, 5}).value();
    EXPECT_EQ(s1, s2);
}

TEST(Autodiff, BackwardRequiresScalar) {
    Tensor x = variable(Matrix::Ones(2, 2), "x");
    EXPECT_ANY_THROW(backward(square(x)));
}
