#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "kktset/net.hpp"

using namespace kktset;
using namespace kktset::testing;

namespace {

NetworkParams hand_network() {
    NetworkParams p = NetworkParams::zeros(2, 1);
    p.W << 2.0, 1.0;
    p.b << 0.0, 1.0;
    p.v << 1.0, -1.0;
    return p;
}

}  // namespace

TEST(Forward, ZeroNetworkIsZero) {
    const NetworkParams p = NetworkParams::zeros(5, 3);
    EXPECT_EQ(forward(p, Vector::Constant(3, 2.5)), 0.0);
}

TEST(Forward, HandEvaluatedNetwork) {
    const NetworkParams p = hand_network();
    EXPECT_DOUBLE_EQ(forward(p, Vector::Constant(1, 1.0)), 0.0);
    // x = 3: relu(6) - relu(4) = 2
    EXPECT_DOUBLE_EQ(forward(p, Vector::Constant(1, 3.0)), 2.0);
    // x = -2: relu(-4) - relu(-1) = 0
    EXPECT_DOUBLE_EQ(forward(p, Vector::Constant(1, -2.0)), 0.0);
}

TEST(Forward, ScalingByThreeMultipliesByNine) {
    Rng rng(1);
    const NetworkParams p = random_params(7, 4, rng);
    const Vector x = gaussian_vector(4, rng);
    EXPECT_NEAR(forward(p.scaled(3.0), x), 9.0 * forward(p, x), 1e-12 * (1.0 + std::abs(forward(p, x))));
}

TEST(Forward, HomogeneityOnRandomInstances) {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const NetworkParams p = random_params(6, 5, rng);
        const Vector x = gaussian_vector(5, rng);
        const double base = forward(p, x);
        for (double s : {0.5, 2.0, 10.0}) {
            const double scaled = forward(p.scaled(s), x);
            EXPECT_LE(std::abs(scaled - s * s * base), 1e-9 * std::max(1.0, std::abs(s * s * base)));
        }
    }
}

TEST(Forward, BatchMatchesPointwise) {
    Rng rng(3);
    const NetworkParams p = random_params(8, 3, rng);
    const Matrix X = gaussian_matrix(10, 3, rng);
    const Vector batch = forward_batch(p, X);
    for (Index i = 0; i < X.rows(); ++i) EXPECT_DOUBLE_EQ(batch(i), forward(p, X.row(i).transpose()));
}

TEST(Forward, RejectsWrongDimension) {
    const NetworkParams p = NetworkParams::zeros(2, 3);
    EXPECT_THROW((void)forward(p, Vector::Zero(4)), DimensionError);
}

TEST(ActivationPattern, ZeroNetworkAllOff) {
    const ActivationPattern a = activation_pattern(NetworkParams::zeros(4, 2), Vector::Ones(2));
    for (bool bit : a.bits) EXPECT_FALSE(bit);
}

TEST(ActivationPattern, HandNetworkBothOn) {
    const ActivationPattern a = activation_pattern(hand_network(), Vector::Constant(1, 1.0));
    ASSERT_EQ(a.size(), 2U);
    EXPECT_TRUE(a.bits[0]);
    EXPECT_TRUE(a.bits[1]);
}

TEST(ActivationPattern, OnHyperplaneIsOff) {
    const ActivationPattern a = activation_pattern(hand_network(), Vector::Constant(1, -1.0));
    EXPECT_TRUE(!a.bits[1]);
}

TEST(ActivationPattern, FirstDifference) {
    ActivationPattern a{{true, false, true}};
    ActivationPattern b{{true, true, true}};
    EXPECT_EQ(a.first_difference(b), Index{1});
    EXPECT_FALSE(a.first_difference(a).has_value());
}

TEST(SignedDistance, AxisAligned) {
    NetworkParams p = NetworkParams::zeros(1, 2);
    p.W << 1.0, 0.0;
    Vector x(2);
    x << 3.0, 5.0;
    EXPECT_DOUBLE_EQ(signed_distance(p, 0, x), 3.0);
}

TEST(SignedDistance, HandEvaluated) {
    NetworkParams p = NetworkParams::zeros(1, 2);
    p.W << 2.0, 0.0;
    p.b << -2.0;
    EXPECT_DOUBLE_EQ(signed_distance(p, 0, Vector::Zero(2)), -1.0);
}

TEST(SignedDistance, ZeroOnHyperplane) {
    Rng rng(4);
    const NetworkParams p = random_params(3, 4, rng);
    Vector x = gaussian_vector(4, rng);
    const Vector w = p.W.row(1).transpose();
    x -= w * ((w.dot(x) + p.b(1)) / w.squaredNorm());
    EXPECT_NEAR(signed_distance(p, 1, x), 0.0, 1e-12);
}

TEST(SignedDistance, ZeroRowThrows) {
    NetworkParams p = NetworkParams::zeros(1, 2);
    EXPECT_THROW((void)signed_distance(p, 0, Vector::Zero(2)), DegenerateNeuronError);
}

TEST(GradTheta, InactiveNeuronBlockIsZero) {
    NetworkParams p = hand_network();
    const Vector x = Vector::Constant(1, -2.0);
    const Vector g = grad_theta(p, x, 1.0);
    const ParamLayout layout = ParamLayout::of(p);
    for (Index j = 0; j < 2; ++j) {
        EXPECT_EQ(g(layout.w_offset(j)), 0.0);
        EXPECT_EQ(g(layout.b_offset() + j), 0.0);
        EXPECT_EQ(g(layout.v_offset() + j), 0.0);
    }
}

TEST(GradTheta, MatchesCentralDifferences) {
    Rng rng(5);
    int checked = 0;
    while (checked < 20) {
        const NetworkParams p = random_params(5, 4, rng);
        const Vector x = gaussian_vector(4, rng);
        if (min_abs_preactivation(p, x.transpose()) < 1e-3) continue;
        const double y = checked % 2 == 0 ? 1.0 : -1.0;
        const ParamLayout layout = ParamLayout::of(p);
        const auto f = [&](const Vector& theta) { return y * forward(unflatten(theta, layout), x); };
        const Vector fd = central_difference(f, flatten(p), 1e-5);
        EXPECT_LE(max_relative_error(grad_theta(p, x, y), fd), 1e-5);
        ++checked;
    }
}

TEST(GradTheta, FlippingLabelNegates) {
    Rng rng(6);
    const NetworkParams p = random_params(4, 3, rng);
    const Vector x = gaussian_vector(3, rng);
    EXPECT_TRUE(grad_theta(p, x, -1.0).isApprox(-grad_theta(p, x, 1.0)));
}

TEST(GradTheta, EulerIdentityForDegreeTwo) {
    Rng rng(7);
    const NetworkParams p = random_params(6, 3, rng);
    const Vector x = gaussian_vector(3, rng);
    EXPECT_NEAR(grad_theta(p, x, 1.0).dot(flatten(p)), 2.0 * forward(p, x), 1e-10);
}

TEST(GradTheta, ConvexCombinationWithinPattern) {
    Rng rng(8);
    int checked = 0;
    while (checked < 20) {
        const NetworkParams p = random_params(6, 3, rng);
        const Vector x1 = gaussian_vector(3, rng);
        const Vector x2 = x1 + gaussian_vector(3, rng, 0.05);
        const Vector mid = 0.3 * x1 + 0.7 * x2;
        const auto a = activation_pattern(p, x1);
        if (a.bits != activation_pattern(p, x2).bits || a.bits != activation_pattern(p, mid).bits) continue;
        const Vector lhs = grad_theta(p, mid, 1.0);
        const Vector rhs = 0.3 * grad_theta(p, x1, 1.0) + 0.7 * grad_theta(p, x2, 1.0);
        EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
        ++checked;
    }
}

TEST(ParamLayout, FlattenRoundTrip) {
    Rng rng(9);
    const NetworkParams p = random_params(3, 2, rng);
    const Vector flat = flatten(p);
    ASSERT_EQ(flat.size(), 3 * 2 + 3 + 3);
    EXPECT_EQ(flat(0), p.W(0, 0));
    EXPECT_EQ(flat(1), p.W(0, 1));
    EXPECT_EQ(flat(6), p.b(0));
    EXPECT_EQ(flat(9), p.v(0));
    EXPECT_EQ(unflatten(flat, ParamLayout::of(p)), p);
}

TEST(ShiftBiasDefense, ZeroShiftIsIdentity) {
    Rng rng(10);
    const NetworkParams p = random_params(4, 3, rng);
    EXPECT_EQ(shift_bias_defense(p, Vector::Zero(3)), p);
}

TEST(ShiftBiasDefense, ShiftedInputsReproduceOriginal) {
    Rng rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        const NetworkParams p = random_params(5, 4, rng);
        const Vector u = gaussian_vector(4, rng, 3.0);
        const Vector x = gaussian_vector(4, rng);
        const NetworkParams s = shift_bias_defense(p, u);
        const double a = forward(s, x + u);
        const double b = forward(p, x);
        EXPECT_LE(std::abs(a - b), 1e-9 * std::max(1.0, std::abs(b)));
    }
}

TEST(ShiftBiasDefense, PreservesWeightsAndInverts) {
    Rng rng(12);
    const NetworkParams p = random_params(5, 4, rng);
    const Vector u = gaussian_vector(4, rng);
    const NetworkParams s = shift_bias_defense(p, u);
    EXPECT_EQ(s.W, p.W);
    EXPECT_EQ(s.v, p.v);
    const NetworkParams back = shift_bias_defense(s, -u);
    EXPECT_LE((back.b - p.b).cwiseAbs().maxCoeff(), 1e-12);
}
