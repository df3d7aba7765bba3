#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "kktset/dataset.hpp"
#include "kktset/forge.hpp"
#include "kktset/kkt.hpp"
#include "kktset/net.hpp"
#include "kktset/rng.hpp"
#include "kktset/trainer.hpp"

namespace kktset::testing {

inline Matrix gaussian_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) m(i, j) = n(rng);
    }
    return m;
}

inline Vector gaussian_vector(Index n, Rng& rng, double scale = 1.0) {
    return gaussian_matrix(n, 1, rng, scale).col(0);
}

inline Vector unit_vector(Index n, Rng& rng) {
    Vector v = gaussian_vector(n, rng);
    return v / v.norm();
}

inline NetworkParams random_params(Index k, Index d, Rng& rng, double scale = 1.0) {
    NetworkParams p;
    p.W = gaussian_matrix(k, d, rng, scale);
    p.b = gaussian_vector(k, rng, scale);
    p.v = gaussian_vector(k, rng, scale);
    return p;
}

/// Smallest |preactivation| over all neurons and rows.
inline double min_abs_preactivation(const NetworkParams& p, const MatrixRef& X) {
    return preactivations(p, X).cwiseAbs().minCoeff();
}

/// Central differences of f at x with step h.
inline Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
    Vector g(x.size());
    Vector xp = x;
    for (Index i = 0; i < x.size(); ++i) {
        const double keep = xp(i);
        xp(i) = keep + h;
        const double up = f(xp);
        xp(i) = keep - h;
        const double down = f(xp);
        xp(i) = keep;
        g(i) = (up - down) / (2.0 * h);
    }
    return g;
}

/// max_i |a_i - b_i| / max(1, |b_i|)
inline double max_relative_error(const Vector& a, const Vector& b) {
    double worst = 0.0;
    for (Index i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a(i) - b(i)) / std::max(1.0, std::abs(b(i))));
    }
    return worst;
}

/// A network that is an exact KKT point for a known set with known multipliers.
///
/// Points form well-separated clusters around scaled simplex vertices, each cluster has one
/// label, and each neuron is dedicated to one cluster with u_j = (w_j, b_j) = t_j * sum_g lambda_i z_i,
/// v_j = y_g t_j, where z_i = (x_i, 1). Cross-cluster inner products z_i . z_i' are negative, so
/// neuron j is active exactly on its own cluster, and lambda is scaled per cluster so that
/// ||sum_g lambda_i z_i|| = 1. Then theta equals sum_i lambda_i y_i grad_theta(x_i) exactly.
struct PlantedSet {
    NetworkParams params;
    LabeledDataset data;
    Multipliers lambda;
};

inline PlantedSet planted_kkt_set(Index d, Index clusters, Index per_cluster, Index neurons_per_cluster,
                                  std::uint64_t seed, double radius = 5.0, double spread = 0.3) {
    Rng rng(seed);
    // Regular simplex vertices: centred standard basis vectors in R^clusters, embedded and rotated into R^d.
    Matrix simplex = Matrix::Identity(clusters, clusters);
    simplex.rowwise() -= simplex.colwise().mean();
    for (Index g = 0; g < clusters; ++g) simplex.row(g).normalize();
    const Matrix rotation = gaussian_matrix(d, d, rng).householderQr().householderQ();
    Matrix centres = simplex * rotation.topRows(clusters) * radius;

    const Index n = clusters * per_cluster;
    PlantedSet out;
    out.data.X.resize(n, d);
    out.data.y.resize(n);
    out.lambda.resize(n);
    std::uniform_real_distribution<double> lam(0.5, 1.5);
    std::vector<Vector> cluster_sum(static_cast<std::size_t>(clusters));
    for (Index g = 0; g < clusters; ++g) {
        const double label = g % 2 == 0 ? 1.0 : -1.0;
        Vector s = Vector::Zero(d + 1);
        for (Index q = 0; q < per_cluster; ++q) {
            const Index i = g * per_cluster + q;
            out.data.X.row(i) = centres.row(g) + gaussian_vector(d, rng, spread).transpose();
            out.data.y(i) = label;
            out.lambda(i) = lam(rng);
            Vector z(d + 1);
            z << out.data.X.row(i).transpose(), 1.0;
            s += out.lambda(i) * z;
        }
        const double norm = s.norm();
        for (Index q = 0; q < per_cluster; ++q) out.lambda(g * per_cluster + q) /= norm;
        cluster_sum[static_cast<std::size_t>(g)] = s / norm;
    }

    const Index k = clusters * neurons_per_cluster;
    out.params = NetworkParams::zeros(k, d);
    std::uniform_real_distribution<double> scale(0.5, 2.0);
    for (Index g = 0; g < clusters; ++g) {
        const double label = g % 2 == 0 ? 1.0 : -1.0;
        for (Index q = 0; q < neurons_per_cluster; ++q) {
            const Index j = g * neurons_per_cluster + q;
            const double t = scale(rng);
            const Vector& u = cluster_sum[static_cast<std::size_t>(g)];
            out.params.W.row(j) = t * u.head(d).transpose();
            out.params.b(j) = t * u(d);
            out.params.v(j) = label * t;
        }
    }
    return out;
}

/// Sphere-like training data in a random rotation: labels by the sign of a fixed direction.
inline LabeledDataset separable_data(Index n, Index d, Rng& rng) {
    LabeledDataset ds;
    ds.X = gaussian_matrix(n, d, rng);
    ds.y.resize(n);
    for (Index i = 0; i < n; ++i) {
        ds.X.row(i).normalize();
        if (std::abs(ds.X(i, 0)) < 0.05) ds.X(i, 0) = ds.X(i, 0) < 0 ? -0.05 : 0.05;
        ds.y(i) = ds.X(i, 0) > 0 ? 1.0 : -1.0;
    }
    ds.y(0) = 1.0;
    ds.X(0, 0) = std::abs(ds.X(0, 0));
    ds.y(1) = -1.0;
    ds.X(1, 0) = -std::abs(ds.X(1, 0));
    return ds;
}

/// Network trained until the empirical loss reaches target_loss, with multipliers fit by NNLS.
struct TrainedFixture {
    NetworkParams params;
    WeightedSet set;
    KKTCertificate cert;
    double final_loss = 0.0;
};

inline TrainedFixture trained_fixture(Index n, Index d, Index k, std::uint64_t seed, double target_loss = 1e-5) {
    Rng rng(derive_seed({seed, 0xf1}));
    const LabeledDataset ds = separable_data(n, d, rng);
    TrainConfig config;
    config.hidden_width = k;
    config.learning_rate = 0.05;
    config.max_epochs = 200'000;
    config.target_loss = target_loss;
    config.seed = seed;
    config.init_scale = 0.01;
    config.lr_schedule = LrSchedule::loss_normalized;
    const TrainResult result = train_to_kkt(ds, config);
    TrainedFixture f;
    f.params = result.params;
    f.final_loss = result.trace.records.back().loss;
    const Multipliers lambda = fit_multipliers(f.params, ds);
    f.set = WeightedSet{ds.X, ds.y, lambda};
    f.cert = certify(f.params, ds, lambda);
    return f;
}

}  // namespace kktset::testing
