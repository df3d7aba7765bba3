#pragma once

#include <optional>

#include "kktset/dataset.hpp"
#include "kktset/net.hpp"

namespace kktset {

/// One multiplier per candidate point. Certificates require every entry >= 0;
/// raw attack state may go negative.
using Multipliers = Vector;

struct KKTLossWeights {
    double gamma1 = 1.0;
    double gamma2 = 1.0;

    void validate() const;
};

struct StationarityResidual {
    Vector vector;  // theta - sum_i lambda_i grad_theta(x_i, y_i), ParamLayout order
    double norm = 0.0;
};

/// Measured (epsilon, delta)-KKT status of a network against a weighted point set.
struct KKTCertificate {
    Multipliers multipliers;
    double epsilon = 0.0;  // stationarity residual norm
    double p = 0.0;        // margin value the slack is measured against
    double delta = 0.0;    // max_i lambda_i (y_i Phi(x_i) - p), floored at 0
    bool satisfied_margin = false;

    friend bool operator==(const KKTCertificate&, const KKTCertificate&) = default;
};

/// sum_i lambda_i * grad_theta(params, x_i, y_i), computed in batch.
[[nodiscard]] Vector weighted_gradient_sum(const NetworkParams& params, const MatrixRef& points,
                                           const VectorRef& labels, const VectorRef& lambda);

[[nodiscard]] StationarityResidual stationarity_residual(const NetworkParams& params,
                                                         const MatrixRef& points,
                                                         const VectorRef& labels,
                                                         const VectorRef& lambda);

/// sum_i max(-lambda_i, 0)
[[nodiscard]] double negative_multiplier_penalty(const VectorRef& lambda);

/// gamma1 * ||residual|| + gamma2 * sum_i max(-lambda_i, 0). The stationarity term is not squared.
[[nodiscard]] double kkt_loss(const NetworkParams& params, const MatrixRef& points,
                              const VectorRef& labels, const VectorRef& lambda,
                              const KKTLossWeights& weights);

/// Gram matrix G^T G of the columns g_i = y_i grad_theta(x_i), in closed form.
[[nodiscard]] Matrix gradient_gram(const NetworkParams& params, const MatrixRef& points,
                                   const VectorRef& labels);

/// Nonnegative least squares: argmin_{lambda >= 0} ||theta - sum_i lambda_i y_i grad_theta(x_i)||^2.
///
/// Lawson-Hanson active set on the Gram matrix, followed by projected-gradient
/// polishing with Barzilai-Borwein steps until the projected gradient is below
/// 1e-10 * (1 + ||theta||) or 50k iterations elapse.
[[nodiscard]] Multipliers fit_multipliers(const NetworkParams& params, const LabeledDataset& dataset);

/// Norm of the projected gradient of 0.5 ||theta - G lambda||^2 over the nonnegative orthant.
[[nodiscard]] double nnls_projected_gradient_norm(const NetworkParams& params,
                                                  const LabeledDataset& dataset,
                                                  const VectorRef& lambda);

/// min_i y_i Phi(x_i)
[[nodiscard]] double margin_value(const NetworkParams& params, const LabeledDataset& dataset);

/// Measures epsilon, delta and margin satisfaction. When p is not given it is the
/// measured margin value. Throws InvalidMultiplierError on a negative multiplier.
[[nodiscard]] KKTCertificate certify(const NetworkParams& params, const LabeledDataset& dataset,
                                     const VectorRef& lambda, std::optional<double> p = std::nullopt);

}  // namespace kktset
