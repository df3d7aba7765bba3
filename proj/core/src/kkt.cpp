#include "kktset/kkt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "kktset/error.hpp"

namespace kktset {
namespace {

void require_weighted_shapes(const NetworkParams& params, const MatrixRef& points,
                             const VectorRef& labels, const VectorRef& lambda) {
    require_input_dim(params, points.cols(), "point matrix");
    if (labels.size() != points.rows() || lambda.size() != points.rows()) {
        throw DimensionError("got " + std::to_string(points.rows()) + " points, " +
                             std::to_string(labels.size()) + " labels and " +
                             std::to_string(lambda.size()) + " multipliers");
    }
    for (Index i = 0; i < labels.size(); ++i) require_label(labels(i));
}

Vector projected_gradient(const Vector& lambda, const Vector& grad) {
    Vector pg(grad.size());
    for (Index i = 0; i < grad.size(); ++i) {
        pg(i) = lambda(i) > 0.0 ? grad(i) : std::min(grad(i), 0.0);
    }
    return pg;
}

// Lawson-Hanson on 0.5 l^T Q l - c^T l. Columns whose passive-set system is not
// positive definite (duplicates) are skipped for that pass.
Vector lawson_hanson(const Matrix& Q, const Vector& c, double select_tol) {
    const Index m = c.size();
    Vector lambda = Vector::Zero(m);
    std::vector<char> passive(static_cast<std::size_t>(m), 0);
    std::vector<char> blocked(static_cast<std::size_t>(m), 0);
    const Index max_outer = 3 * m + 10;

    auto passive_indices = [&] {
        std::vector<Index> idx;
        for (Index i = 0; i < m; ++i) {
            if (passive[static_cast<std::size_t>(i)] != 0) idx.push_back(i);
        }
        return idx;
    };

    for (Index outer = 0; outer < max_outer; ++outer) {
        const Vector w = c - Q * lambda;
        Index t = -1;
        double best = select_tol;
        for (Index i = 0; i < m; ++i) {
            const auto u = static_cast<std::size_t>(i);
            if (passive[u] == 0 && blocked[u] == 0 && w(i) > best) {
                best = w(i);
                t = i;
            }
        }
        if (t < 0) break;
        passive[static_cast<std::size_t>(t)] = 1;

        bool accepted = false;
        for (Index inner = 0; inner <= m; ++inner) {
            const auto idx = passive_indices();
            const auto np = static_cast<Index>(idx.size());
            Matrix Qpp(np, np);
            Vector cp(np);
            for (Index a = 0; a < np; ++a) {
                cp(a) = c(idx[a]);
                for (Index b = 0; b < np; ++b) Qpp(a, b) = Q(idx[a], idx[b]);
            }
            Eigen::LLT<Matrix> llt(Qpp);
            Vector s;
            if (llt.info() == Eigen::Success) s = llt.solve(cp);
            if (llt.info() != Eigen::Success || !s.allFinite()) {
                passive[static_cast<std::size_t>(t)] = 0;
                blocked[static_cast<std::size_t>(t)] = 1;
                break;
            }
            if (s.minCoeff() > 0.0) {
                lambda.setZero();
                for (Index a = 0; a < np; ++a) lambda(idx[a]) = s(a);
                accepted = true;
                break;
            }
            double alpha = std::numeric_limits<double>::infinity();
            Index blocking = -1;
            for (Index a = 0; a < np; ++a) {
                if (s(a) <= 0.0) {
                    const double li = lambda(idx[a]);
                    const double ratio = li / (li - s(a));
                    if (ratio < alpha) {
                        alpha = ratio;
                        blocking = idx[a];
                    }
                }
            }
            for (Index a = 0; a < np; ++a) {
                const Index i = idx[a];
                lambda(i) += alpha * (s(a) - lambda(i));
            }
            lambda(blocking) = 0.0;
            for (Index a = 0; a < np; ++a) {
                const Index i = idx[a];
                if (lambda(i) <= 0.0) {
                    lambda(i) = 0.0;
                    passive[static_cast<std::size_t>(i)] = 0;
                }
            }
            if (passive[static_cast<std::size_t>(t)] == 0) {
                blocked[static_cast<std::size_t>(t)] = 1;
                break;
            }
        }
        if (accepted) std::fill(blocked.begin(), blocked.end(), 0);
    }
    return lambda;
}

// Projected gradient with Barzilai-Borwein steps and a monotone safeguard.
void polish(const Matrix& Q, const Vector& c, Vector& lambda, double tol, Index max_iter) {
    double lipschitz = 0.0;
    for (Index i = 0; i < Q.rows(); ++i) lipschitz = std::max(lipschitz, Q.row(i).cwiseAbs().sum());
    if (lipschitz <= 0.0) return;

    auto objective = [&](const Vector& l) { return 0.5 * l.dot(Q * l) - c.dot(l); };
    Vector grad = Q * lambda - c;
    double f = objective(lambda);
    Vector prev_lambda;
    Vector prev_grad;
    for (Index it = 0; it < max_iter; ++it) {
        if (projected_gradient(lambda, grad).norm() <= tol) return;
        double step = 1.0 / lipschitz;
        if (it > 0) {
            const Vector s = lambda - prev_lambda;
            const Vector yv = grad - prev_grad;
            const double sy = s.dot(yv);
            if (sy > 0.0) step = s.squaredNorm() / sy;
        }
        Vector next = (lambda - step * grad).cwiseMax(0.0);
        double f_next = objective(next);
        if (!(f_next <= f)) {
            next = (lambda - grad / lipschitz).cwiseMax(0.0);
            f_next = objective(next);
        }
        if (next == lambda) return;
        prev_lambda = lambda;
        prev_grad = grad;
        lambda = std::move(next);
        grad = Q * lambda - c;
        f = f_next;
    }
}

}  // namespace

void KKTLossWeights::validate() const {
    if (!(gamma1 > 0.0) || !(gamma2 > 0.0) || !std::isfinite(gamma1) || !std::isfinite(gamma2)) {
        throw ValidationError("KKT-loss weights must be positive and finite");
    }
}

Vector weighted_gradient_sum(const NetworkParams& params, const MatrixRef& points,
                             const VectorRef& labels, const VectorRef& lambda) {
    require_weighted_shapes(params, points, labels, lambda);
    const Matrix pre = preactivations(params, points);
    const Matrix active = (pre.array() > 0.0).cast<double>().matrix();
    const Vector coeff = lambda.cwiseProduct(labels);

    NetworkParams sum;
    sum.W = params.v.asDiagonal() *
            ((active.array().colwise() * coeff.array()).matrix().transpose() * points);
    sum.b = params.v.cwiseProduct(active.transpose() * coeff);
    sum.v = pre.cwiseMax(0.0).transpose() * coeff;
    return flatten(sum);
}

StationarityResidual stationarity_residual(const NetworkParams& params, const MatrixRef& points,
                                           const VectorRef& labels, const VectorRef& lambda) {
    StationarityResidual r;
    r.vector = flatten(params) - weighted_gradient_sum(params, points, labels, lambda);
    r.norm = r.vector.norm();
    return r;
}

double negative_multiplier_penalty(const VectorRef& lambda) {
    return (-lambda).cwiseMax(0.0).sum();
}

double kkt_loss(const NetworkParams& params, const MatrixRef& points, const VectorRef& labels,
                const VectorRef& lambda, const KKTLossWeights& weights) {
    weights.validate();
    const double stationary = stationarity_residual(params, points, labels, lambda).norm;
    return weights.gamma1 * stationary + weights.gamma2 * negative_multiplier_penalty(lambda);
}

Matrix gradient_gram(const NetworkParams& params, const MatrixRef& points, const VectorRef& labels) {
    require_weighted_shapes(params, points, labels, Vector::Zero(points.rows()));
    const Matrix pre = preactivations(params, points);
    const Matrix active = (pre.array() > 0.0).cast<double>().matrix();
    const Matrix relu = pre.cwiseMax(0.0);

    // <g_i, g_l> = y_i y_l sum_j [v_j^2 s_ij s_lj (<x_i, x_l> + 1) + a_ij a_lj]
    const Matrix weighted = active * params.v.cwiseAbs2().asDiagonal();
    Matrix inner = points * points.transpose();
    inner.array() += 1.0;
    Matrix Q = (weighted * active.transpose()).cwiseProduct(inner) + relu * relu.transpose();
    Q = Q.cwiseProduct(labels * labels.transpose());
    return Q;
}

Multipliers fit_multipliers(const NetworkParams& params, const LabeledDataset& dataset) {
    dataset.validate();
    params.validate();
    const Matrix Q = gradient_gram(params, dataset.X, dataset.y);
    // <g_i, theta> = 2 y_i Phi(x_i) by homogeneity.
    const Vector c = 2.0 * dataset.y.cwiseProduct(forward_batch(params, dataset.X));
    const double theta_norm = flatten(params).norm();
    const double tol = 1e-10 * (1.0 + theta_norm);

    Vector lambda = lawson_hanson(Q, c, 1e-12 * (1.0 + theta_norm));
    polish(Q, c, lambda, tol, 50'000);
    return lambda;
}

double nnls_projected_gradient_norm(const NetworkParams& params, const LabeledDataset& dataset,
                                    const VectorRef& lambda) {
    dataset.validate();
    if (lambda.size() != dataset.size()) throw DimensionError("multiplier count mismatch");
    const Vector residual = stationarity_residual(params, dataset.X, dataset.y, lambda).vector;
    // Gradient of 0.5 ||theta - G lambda||^2 is -G^T residual.
    const Matrix pre = preactivations(params, dataset.X);
    const Matrix active = (pre.array() > 0.0).cast<double>().matrix();
    const auto layout = ParamLayout::of(params);
    const NetworkParams r = unflatten(residual, layout);
    // <g_i, r> = y_i sum_j [v_j s_ij (<r_wj, x_i> + r_bj) + a_ij r_vj]
    Matrix rw_dot = dataset.X * r.W.transpose();
    rw_dot.rowwise() += r.b.transpose();
    const Vector corr = dataset.y.cwiseProduct(
        active.cwiseProduct(rw_dot) * params.v + pre.cwiseMax(0.0) * r.v);
    return projected_gradient(lambda, -corr).norm();
}

double margin_value(const NetworkParams& params, const LabeledDataset& dataset) {
    dataset.validate();
    return dataset.y.cwiseProduct(forward_batch(params, dataset.X)).minCoeff();
}

KKTCertificate certify(const NetworkParams& params, const LabeledDataset& dataset,
                       const VectorRef& lambda, std::optional<double> p) {
    dataset.validate();
    params.validate();
    if (lambda.size() != dataset.size()) {
        throw DimensionError("certificate needs one multiplier per point");
    }
    for (Index i = 0; i < lambda.size(); ++i) {
        if (!(lambda(i) >= 0.0) || !std::isfinite(lambda(i))) {
            throw InvalidMultiplierError("multiplier " + std::to_string(i) +
                                         " is negative or non-finite");
        }
    }
    const Vector margins = dataset.y.cwiseProduct(forward_batch(params, dataset.X));
    KKTCertificate cert;
    cert.multipliers = lambda;
    cert.epsilon = stationarity_residual(params, dataset.X, dataset.y, lambda).norm;
    cert.p = p.value_or(margins.minCoeff());
    cert.satisfied_margin = margins.minCoeff() >= cert.p;
    double slack = 0.0;
    for (Index i = 0; i < margins.size(); ++i) {
        slack = std::max(slack, lambda(i) * (margins(i) - cert.p));
    }
    cert.delta = slack;
    return cert;
}

}  // namespace kktset
