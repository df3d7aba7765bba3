#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "kktset/kkt.hpp"

using namespace kktset;
using namespace kktset::testing;

namespace {

/// Residual computed with the explicit per-point gradient and the opposite block order (v, b, W).
double residual_reversed_layout(const NetworkParams& p, const Matrix& X, const Vector& y, const Vector& lambda) {
    const Index k = p.hidden_width();
    const Index d = p.input_dim();
    Vector r(p.param_count());
    r.head(k) = p.v;
    r.segment(k, k) = p.b;
    for (Index j = 0; j < k; ++j) r.segment(2 * k + j * d, d) = p.W.row(j).transpose();
    for (Index i = 0; i < X.rows(); ++i) {
        for (Index j = 0; j < k; ++j) {
            const double pre = p.W.row(j).dot(X.row(i)) + p.b(j);
            if (pre <= 0.0) continue;
            const double c = lambda(i) * y(i);
            r(j) -= c * pre;
            r(k + j) -= c * p.v(j);
            r.segment(2 * k + j * d, d) -= c * p.v(j) * X.row(i).transpose();
        }
    }
    return r.norm();
}

}  // namespace

TEST(StationarityResidual, ZeroMultipliersGiveThetaNorm) {
    Rng rng(30);
    const NetworkParams p = random_params(4, 3, rng);
    const Matrix X = gaussian_matrix(5, 3, rng);
    const Vector y = Vector::Ones(5);
    EXPECT_NEAR(stationarity_residual(p, X, y, Vector::Zero(5)).norm, flatten(p).norm(), 1e-14);
    EXPECT_EQ(stationarity_residual(NetworkParams::zeros(4, 3), X, y, Vector::Zero(5)).norm, 0.0);
}

TEST(StationarityResidual, IndependentOfBlockOrder) {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const NetworkParams p = random_params(6, 4, rng);
        const Matrix X = gaussian_matrix(9, 4, rng);
        Vector y = Vector::Ones(9);
        y.tail(4).setConstant(-1.0);
        const Vector lambda = gaussian_vector(9, rng).cwiseAbs();
        const double expected = residual_reversed_layout(p, X, y, lambda);
        EXPECT_NEAR(stationarity_residual(p, X, y, lambda).norm, expected, 1e-12 * (1.0 + expected));
    }
}

TEST(StationarityResidual, VectorMatchesExplicitSum) {
    Rng rng(32);
    const NetworkParams p = random_params(5, 3, rng);
    const Matrix X = gaussian_matrix(7, 3, rng);
    const Vector y = Vector::Ones(7);
    const Vector lambda = gaussian_vector(7, rng).cwiseAbs();
    Vector expected = flatten(p);
    for (Index i = 0; i < 7; ++i) expected -= lambda(i) * grad_theta(p, X.row(i).transpose(), y(i));
    EXPECT_LE((stationarity_residual(p, X, y, lambda).vector - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(KKTLoss, PenaltyOnlyForNegativeMultipliers) {
    Rng rng(33);
    const NetworkParams p = random_params(3, 2, rng);
    const Matrix X = gaussian_matrix(2, 2, rng);
    const Vector y = Vector::Ones(2);
    const Vector lambda = Vector::Constant(2, 0.4);
    const KKTLossWeights w{1.0, 1.0};
    EXPECT_DOUBLE_EQ(kkt_loss(p, X, y, lambda, w), stationarity_residual(p, X, y, lambda).norm);
    EXPECT_EQ(negative_multiplier_penalty(lambda), 0.0);
}

TEST(KKTLoss, ZeroNetworkWithNegativeMultipliers) {
    Vector lambda(2);
    lambda << -1.0, -2.0;
    const Matrix X = Matrix::Ones(2, 3);
    EXPECT_DOUBLE_EQ(kkt_loss(NetworkParams::zeros(2, 3), X, Vector::Ones(2), lambda, {1.0, 1.0}), 3.0);
}

TEST(KKTLoss, LinearInGammaOne) {
    Rng rng(34);
    const NetworkParams p = random_params(3, 2, rng);
    const Matrix X = gaussian_matrix(4, 2, rng);
    const Vector y = Vector::Ones(4);
    const Vector lambda = gaussian_vector(4, rng).cwiseAbs();
    const double one = kkt_loss(p, X, y, lambda, {1.5, 1.0});
    EXPECT_NEAR(kkt_loss(p, X, y, lambda, {3.0, 1.0}), 2.0 * one, 1e-12 * one);
}

TEST(KKTLoss, WeightValidation) {
    EXPECT_THROW(KKTLossWeights({0.0, 1.0}).validate(), ValidationError);
    EXPECT_THROW(KKTLossWeights({1.0, -1.0}).validate(), ValidationError);
}

TEST(GradientGram, MatchesExplicitGradients) {
    Rng rng(35);
    const NetworkParams p = random_params(7, 4, rng);
    const Matrix X = gaussian_matrix(6, 4, rng);
    Vector y = Vector::Ones(6);
    y(2) = -1.0;
    Matrix G(p.param_count(), 6);
    for (Index i = 0; i < 6; ++i) G.col(i) = grad_theta(p, X.row(i).transpose(), y(i));
    const Matrix expected = G.transpose() * G;
    EXPECT_LE((gradient_gram(p, X, y) - expected).cwiseAbs().maxCoeff(), 1e-10 * (1.0 + expected.norm()));
}

TEST(FitMultipliers, ZeroNetworkGivesZero) {
    Rng rng(36);
    LabeledDataset ds{gaussian_matrix(5, 3, rng), Vector::Ones(5)};
    const Multipliers lambda = fit_multipliers(NetworkParams::zeros(4, 3), ds);
    EXPECT_EQ(lambda.size(), 5);
    EXPECT_LE(lambda.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FitMultipliers, RecoversPlantedMultipliers) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const PlantedSet s = planted_kkt_set(8, 3, 3, 2, seed);
        ASSERT_LE(stationarity_residual(s.params, s.data.X, s.data.y, s.lambda).norm, 1e-12);
        const Multipliers lambda = fit_multipliers(s.params, s.data);
        EXPECT_LE((lambda - s.lambda).cwiseAbs().maxCoeff(), 1e-6) << "seed " << seed;
    }
}

TEST(FitMultipliers, DuplicatedPointSplitsMass) {
    const PlantedSet s = planted_kkt_set(8, 2, 3, 2, 5);
    LabeledDataset dup = s.data;
    dup.X.conservativeResize(dup.X.rows() + 1, Eigen::NoChange);
    dup.y.conservativeResize(dup.y.size() + 1);
    dup.X.row(dup.X.rows() - 1) = s.data.X.row(0);
    dup.y(dup.y.size() - 1) = s.data.y(0);
    const Multipliers single = fit_multipliers(s.params, s.data);
    const Multipliers twice = fit_multipliers(s.params, dup);
    EXPECT_NEAR(twice(0) + twice(twice.size() - 1), single(0), 1e-6);
    for (Index i = 1; i < single.size(); ++i) EXPECT_NEAR(twice(i), single(i), 1e-6);
}

TEST(FitMultipliers, NonnegativeAndStationary) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const TrainedFixture f = trained_fixture(20, 8, 16, seed);
        EXPECT_GE(f.set.multipliers.minCoeff(), 0.0);
        const LabeledDataset ds = f.set.dataset();
        EXPECT_LE(nnls_projected_gradient_norm(f.params, ds, f.set.multipliers),
                  1e-10 * (1.0 + flatten(f.params).norm()));
    }
}

TEST(FitMultipliers, RandomNetworkOptimality) {
    Rng rng(37);
    const NetworkParams p = random_params(6, 3, rng);
    LabeledDataset ds = separable_data(12, 3, rng);
    const Multipliers lambda = fit_multipliers(p, ds);
    const double best = stationarity_residual(p, ds.X, ds.y, lambda).norm;
    // no feasible perturbation improves on the fit
    for (int trial = 0; trial < 200; ++trial) {
        const Vector other = (lambda + gaussian_vector(12, rng, 1e-3)).cwiseMax(0.0);
        EXPECT_GE(stationarity_residual(p, ds.X, ds.y, other).norm, best - 1e-12);
    }
}

TEST(Certify, ZeroMultipliers) {
    Rng rng(38);
    const NetworkParams p = random_params(4, 3, rng);
    const LabeledDataset ds = separable_data(6, 3, rng);
    const KKTCertificate c = certify(p, ds, Vector::Zero(6));
    EXPECT_EQ(c.delta, 0.0);
    EXPECT_NEAR(c.epsilon, flatten(p).norm(), 1e-14);
    EXPECT_EQ(c.p, margin_value(p, ds));
    EXPECT_TRUE(c.satisfied_margin);
}

TEST(Certify, PointOnMarginAddsNoSlack) {
    Rng rng(39);
    const NetworkParams p = random_params(4, 3, rng);
    const LabeledDataset ds = separable_data(6, 3, rng);
    const Vector margins = ds.y.cwiseProduct(forward_batch(p, ds.X));
    Index argmin = 0;
    margins.minCoeff(&argmin);
    Vector lambda = Vector::Zero(6);
    lambda(argmin) = 7.0;
    EXPECT_EQ(certify(p, ds, lambda).delta, 0.0);
}

TEST(Certify, SlackAgainstUserMargin) {
    Rng rng(40);
    const NetworkParams p = random_params(4, 3, rng);
    const LabeledDataset ds = separable_data(6, 3, rng);
    const Vector margins = ds.y.cwiseProduct(forward_batch(p, ds.X));
    const Vector lambda = Vector::LinSpaced(6, 0.1, 0.6);
    const double pv = margins.minCoeff() - 1.0;
    const KKTCertificate c = certify(p, ds, lambda, pv);
    EXPECT_NEAR(c.delta, (lambda.array() * (margins.array() - pv)).maxCoeff(), 1e-12);
    EXPECT_TRUE(c.satisfied_margin);
    EXPECT_FALSE(certify(p, ds, lambda, margins.maxCoeff() + 1.0).satisfied_margin);
}

TEST(Certify, NegativeMultiplierRejected) {
    Rng rng(41);
    const NetworkParams p = random_params(4, 3, rng);
    const LabeledDataset ds = separable_data(3, 3, rng);
    Vector lambda = Vector::Ones(3);
    lambda(1) = -0.1;
    EXPECT_THROW((void)certify(p, ds, lambda), InvalidMultiplierError);
}

TEST(Certify, IdempotentAndIgnoresZeroWeightPoints) {
    const TrainedFixture f = trained_fixture(16, 6, 12, 4);
    const LabeledDataset ds = f.set.dataset();
    EXPECT_EQ(certify(f.params, ds, f.set.multipliers), certify(f.params, ds, f.set.multipliers));

    LabeledDataset more = ds;
    more.X.conservativeResize(ds.size() + 1, Eigen::NoChange);
    more.y.conservativeResize(ds.size() + 1);
    more.X.row(ds.size()) = ds.X.row(0) * 1.1;
    more.y(ds.size()) = ds.y(0);
    Vector lambda(ds.size() + 1);
    lambda << f.set.multipliers, 0.0;
    const KKTCertificate a = certify(f.params, ds, f.set.multipliers, f.cert.p);
    const KKTCertificate b = certify(f.params, more, lambda, f.cert.p);
    EXPECT_EQ(a.epsilon, b.epsilon);
    EXPECT_EQ(a.delta, b.delta);
}

TEST(MarginValue, ZeroNetworkAndScaling) {
    Rng rng(42);
    const LabeledDataset ds = separable_data(6, 3, rng);
    EXPECT_EQ(margin_value(NetworkParams::zeros(3, 3), ds), 0.0);
    const NetworkParams p = random_params(5, 3, rng);
    EXPECT_NEAR(margin_value(p.scaled(3.0), ds), 9.0 * margin_value(p, ds), 1e-12);
}

TEST(Certify, TrainedFixtureResidualIsSmall) {
    const TrainedFixture f = trained_fixture(30, 15, 40, 2);
    EXPECT_LE(f.final_loss, 1e-5);
    EXPECT_LT(f.cert.epsilon / flatten(f.params).norm(), 0.5);
}
