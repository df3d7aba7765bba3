#pragma once

#include <optional>

#include "kktset/dataset.hpp"
#include "kktset/kkt.hpp"
#include "kktset/net.hpp"

namespace kktset {

/// Candidate training set together with its multipliers.
struct WeightedSet {
    Matrix points;  // m x d
    Vector labels;
    Multipliers multipliers;

    [[nodiscard]] Index size() const noexcept { return points.rows(); }
    [[nodiscard]] Index dim() const noexcept { return points.cols(); }
    [[nodiscard]] LabeledDataset dataset() const { return {points, labels}; }

    /// Equal lengths, labels in {-1, +1}, multipliers finite and >= 0.
    void validate() const;
};

/// Split of point `index` into x + alpha * nu and x - beta * nu.
struct SplitPlan {
    Index index = 0;
    Vector direction;  // unit length
    double alpha = 0.0;
    double beta = 0.0;
    /// Certified bound: |<nu, x_i>| <= gamma for every point of the set.
    double gamma = 0.0;

    void validate(Index set_size, Index dim) const;
};

/// Budgets at or above this value are reported as unbounded.
inline constexpr double kUnboundedBudget = 1e12;
[[nodiscard]] inline bool is_unbounded(double budget) noexcept { return !(budget < kUnboundedBudget); }

/// Largest steps t+ and t- such that x + t nu (resp. x - t nu) keeps the activation
/// pattern of x for every t in [0, t+) (resp. [0, t-)). Infinity when unconstrained.
struct BoundaryDistances {
    double forward = 0.0;
    double backward = 0.0;

    [[nodiscard]] double min() const noexcept { return forward < backward ? forward : backward; }
};

struct BudgetReport {
    /// min_j |<w_j,x_l> + b_j| / (gamma |v_j| sum lambda)
    double exact_budget = 0.0;
    /// The same quantity without the |v_j| factor.
    double exact_budget_verbatim = 0.0;
    /// min_j |<w_j,x_l> + b_j| / (epsilon + gamma |v_j| sum lambda)
    double approx_budget = 0.0;
    /// min(exact_budget, approx_budget)
    double safe_budget = 0.0;
    /// min(t+, t-) from the pattern boundary oracle along the chosen direction.
    double oracle_budget = 0.0;
    Vector per_neuron_terms;  // the terms minimized by approx_budget
};

struct DeltaDegradation {
    double increase = 0.0;    // Delta delta
    bool admissible = false;  // increase < p
};

struct SvdDirection {
    Vector direction;          // last left-singular vector of the column data matrix
    double sigma_min = 0.0;    // sigma_d, zero when there are fewer points than dimensions
};

/// Replaces points i1 and i2 (same label, same activation pattern, positive
/// multipliers) by their lambda-weighted average carrying lambda_1 + lambda_2.
/// The merged point takes the lower index; the weighted gradient sum is unchanged.
[[nodiscard]] WeightedSet merge(const WeightedSet& set, Index i1, Index i2, const NetworkParams& params);

/// Replaces point l by z1 = x + alpha nu (multiplier beta lambda / (alpha + beta)) at
/// index l and z2 = x - beta nu (multiplier alpha lambda / (alpha + beta)) at index l + 1.
/// Both children must keep the activation pattern and the output sign of x.
[[nodiscard]] WeightedSet split(const WeightedSet& set, const SplitPlan& plan, const NetworkParams& params);

[[nodiscard]] BoundaryDistances pattern_boundary_oracle(const NetworkParams& params, const VectorRef& x,
                                                        const VectorRef& direction);

/// Exact-KKT splitting budget with the |v_j| factor. Infinity when gamma <= 0.
[[nodiscard]] double split_budget_exact(const NetworkParams& params, const WeightedSet& set, Index l,
                                        double gamma);

/// Exact-KKT splitting budget as literally stated, without |v_j|.
[[nodiscard]] double split_budget_exact_verbatim(const NetworkParams& params, const WeightedSet& set,
                                                 Index l, double gamma);

/// Approximate-KKT splitting budget for a measured or assumed residual epsilon.
[[nodiscard]] double split_budget_approx(const NetworkParams& params, const WeightedSet& set, Index l,
                                         double gamma, double epsilon);

[[nodiscard]] BudgetReport budget_report(const NetworkParams& params, const WeightedSet& set, Index l,
                                         const VectorRef& direction, double gamma, double epsilon);

/// Worst-case growth of delta caused by the split, summed over all neurons.
/// Admissible when the growth stays below p (measured margin value when not given).
[[nodiscard]] DeltaDegradation delta_degradation(const NetworkParams& params, const WeightedSet& set,
                                                 const SplitPlan& plan, double epsilon,
                                                 std::optional<double> p = std::nullopt);

/// Unit vector orthogonal to every row of `points`, if the rows do not span R^d
/// (numerical rank with singular-value threshold 1e-10 * sigma_1).
[[nodiscard]] std::optional<Vector> orthogonal_direction(const MatrixRef& points);

/// Direction minimizing the worst dot product with the data: |<x_i, nu>| <= sigma_d.
[[nodiscard]] SvdDirection svd_direction(const MatrixRef& points);

/// Splits every point along a direction orthogonal to all of them with step
/// r * (1 + 1e-3), so every new point is farther than r from every original point.
/// Points whose multiplier is zero are moved the same way with zero weight.
/// Throws SubspaceError when the data spans R^d.
[[nodiscard]] WeightedSet construct_distant_kkt_set(const NetworkParams& params, const WeightedSet& set,
                                                    double r);

}  // namespace kktset
