#include "kktset/forge.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/SVD>

#include "kktset/error.hpp"

namespace kktset {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int sign_of(double z) { return (z > 0.0) - (z < 0.0); }

void require_index(const WeightedSet& set, Index i, const char* what) {
    if (i < 0 || i >= set.size()) {
        throw ValidationError(std::string(what) + " index " + std::to_string(i) + " out of range [0, " +
                              std::to_string(set.size()) + ")");
    }
}

void require_unit(const VectorRef& direction) {
    if (std::abs(direction.norm() - 1.0) > 1e-9) {
        throw ValidationError("direction must have unit length, norm is " +
                              std::to_string(direction.norm()));
    }
}

// Throws SplitError unless child keeps the pattern and output sign of parent.
void check_child(const NetworkParams& params, const VectorRef& parent, const VectorRef& child,
                 const char* name) {
    const auto parent_pattern = activation_pattern(params, parent);
    if (auto j = parent_pattern.first_difference(activation_pattern(params, child))) {
        throw SplitError(SplitError::Reason::pattern,
                         std::string(name) + " leaves the activation region at neuron " + std::to_string(*j),
                         static_cast<long>(*j));
    }
    if (sign_of(forward(params, child)) != sign_of(forward(params, parent))) {
        throw SplitError(SplitError::Reason::classification, std::string(name) + " flips the classification");
    }
}

// Replace row l by two rows.
WeightedSet with_children(const WeightedSet& set, Index l, const Vector& z1, double lambda1,
                          const Vector& z2, double lambda2) {
    const Index m = set.size();
    WeightedSet out;
    out.points.resize(m + 1, set.dim());
    out.labels.resize(m + 1);
    out.multipliers.resize(m + 1);
    out.points.topRows(l) = set.points.topRows(l);
    out.labels.head(l) = set.labels.head(l);
    out.multipliers.head(l) = set.multipliers.head(l);
    out.points.row(l) = z1.transpose();
    out.points.row(l + 1) = z2.transpose();
    out.labels(l) = out.labels(l + 1) = set.labels(l);
    out.multipliers(l) = lambda1;
    out.multipliers(l + 1) = lambda2;
    const Index tail = m - l - 1;
    out.points.bottomRows(tail) = set.points.bottomRows(tail);
    out.labels.tail(tail) = set.labels.tail(tail);
    out.multipliers.tail(tail) = set.multipliers.tail(tail);
    return out;
}

// |<w_j, x_l> + b_j| for each neuron; infinite for zero weight rows (no hyperplane).
Vector boundary_numerators(const NetworkParams& params, const VectorRef& x) {
    const Vector pre = params.W * x + params.b;
    Vector out = pre.cwiseAbs();
    for (Index j = 0; j < params.hidden_width(); ++j) {
        if (params.W.row(j).squaredNorm() == 0.0) out(j) = kInf;
    }
    return out;
}

double min_ratio(const Vector& numer, const Vector& denom) {
    double best = kInf;
    for (Index j = 0; j < numer.size(); ++j) {
        if (denom(j) > 0.0) best = std::min(best, numer(j) / denom(j));
    }
    return best;
}

Vector approx_terms(const NetworkParams& params, const WeightedSet& set, Index l, double gamma,
                    double epsilon) {
    const Vector numer = boundary_numerators(params, set.points.row(l).transpose());
    const double mass = set.multipliers.sum();
    Vector terms(numer.size());
    for (Index j = 0; j < numer.size(); ++j) {
        const double denom = epsilon + gamma * std::abs(params.v(j)) * mass;
        terms(j) = denom > 0.0 ? numer(j) / denom : kInf;
    }
    return terms;
}

}  // namespace

void WeightedSet::validate() const {
    if (labels.size() != points.rows() || multipliers.size() != points.rows()) {
        throw DimensionError("weighted set has " + std::to_string(points.rows()) + " points, " +
                             std::to_string(labels.size()) + " labels and " +
                             std::to_string(multipliers.size()) + " multipliers");
    }
    if (!points.allFinite()) throw ValidationError("weighted set contains NaN or Inf");
    for (Index i = 0; i < labels.size(); ++i) require_label(labels(i));
    for (Index i = 0; i < multipliers.size(); ++i) {
        if (!(multipliers(i) >= 0.0) || !std::isfinite(multipliers(i))) {
            throw InvalidMultiplierError("multiplier " + std::to_string(i) + " is negative or non-finite");
        }
    }
}

void SplitPlan::validate(Index set_size, Index dim) const {
    if (index < 0 || index >= set_size) throw ValidationError("split index out of range");
    if (direction.size() != dim) throw DimensionError("split direction has the wrong dimension");
    if (std::abs(direction.norm() - 1.0) > 1e-12) throw ValidationError("split direction must be a unit vector");
    if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
        throw ValidationError("split step sizes must be positive and finite");
    }
    if (!(gamma >= 0.0)) throw ValidationError("direction bound gamma must be nonnegative");
}

WeightedSet merge(const WeightedSet& set, Index i1, Index i2, const NetworkParams& params) {
    set.validate();
    require_input_dim(params, set.dim(), "weighted set");
    require_index(set, i1, "merge");
    require_index(set, i2, "merge");
    if (i1 == i2) throw ValidationError("cannot merge a point with itself");
    const double l1 = set.multipliers(i1);
    const double l2 = set.multipliers(i2);
    if (!(l1 > 0.0) || !(l2 > 0.0)) {
        throw MergeError(MergeError::Reason::multiplier, "merge needs two positive multipliers");
    }
    if (set.labels(i1) != set.labels(i2)) {
        throw MergeError(MergeError::Reason::label, "merge needs identical labels");
    }
    const Vector x1 = set.points.row(i1).transpose();
    const Vector x2 = set.points.row(i2).transpose();
    const double alpha = l1 / (l1 + l2);
    const Vector merged = alpha * x1 + (1.0 - alpha) * x2;
    const auto pattern = activation_pattern(params, x1);
    if (pattern != activation_pattern(params, x2) || pattern != activation_pattern(params, merged)) {
        throw MergeError(MergeError::Reason::pattern, "merge needs a shared activation pattern");
    }

    const Index keep = std::min(i1, i2);
    const Index drop = std::max(i1, i2);
    const Index m = set.size();
    WeightedSet out;
    out.points.resize(m - 1, set.dim());
    out.labels.resize(m - 1);
    out.multipliers.resize(m - 1);
    for (Index i = 0, o = 0; i < m; ++i) {
        if (i == drop) continue;
        out.points.row(o) = set.points.row(i);
        out.labels(o) = set.labels(i);
        out.multipliers(o) = set.multipliers(i);
        ++o;
    }
    out.points.row(keep) = merged.transpose();
    out.multipliers(keep) = l1 + l2;
    return out;
}

WeightedSet split(const WeightedSet& set, const SplitPlan& plan, const NetworkParams& params) {
    set.validate();
    require_input_dim(params, set.dim(), "weighted set");
    plan.validate(set.size(), set.dim());
    const double lambda = set.multipliers(plan.index);
    if (!(lambda > 0.0)) {
        throw SplitError(SplitError::Reason::multiplier, "split needs a positive multiplier");
    }
    const Vector x = set.points.row(plan.index).transpose();
    const Vector z1 = x + plan.alpha * plan.direction;
    const Vector z2 = x - plan.beta * plan.direction;
    check_child(params, x, z1, "x + alpha nu");
    check_child(params, x, z2, "x - beta nu");
    const double total = plan.alpha + plan.beta;
    return with_children(set, plan.index, z1, plan.beta * lambda / total, z2, plan.alpha * lambda / total);
}

BoundaryDistances pattern_boundary_oracle(const NetworkParams& params, const VectorRef& x,
                                          const VectorRef& direction) {
    require_input_dim(params, x.size(), "point");
    require_input_dim(params, direction.size(), "direction");
    require_unit(direction);
    const Vector pre = params.W * x + params.b;
    const Vector slope = params.W * direction;
    BoundaryDistances out{kInf, kInf};
    for (Index j = 0; j < pre.size(); ++j) {
        if (pre(j) == 0.0) {
            throw DegeneratePositionError("point lies on the hyperplane of neuron " + std::to_string(j));
        }
        if (slope(j) == 0.0) continue;
        // pre + t * slope = 0 going forward, pre - t * slope = 0 going backward.
        const double root = -pre(j) / slope(j);
        if (root > 0.0) {
            out.forward = std::min(out.forward, root);
        } else {
            out.backward = std::min(out.backward, -root);
        }
    }
    return out;
}

double split_budget_exact(const NetworkParams& params, const WeightedSet& set, Index l, double gamma) {
    set.validate();
    require_index(set, l, "split");
    require_input_dim(params, set.dim(), "weighted set");
    if (!(gamma > 0.0)) return kInf;
    const Vector numer = boundary_numerators(params, set.points.row(l).transpose());
    const Vector denom = gamma * set.multipliers.sum() * params.v.cwiseAbs();
    return min_ratio(numer, denom);
}

double split_budget_exact_verbatim(const NetworkParams& params, const WeightedSet& set, Index l,
                                   double gamma) {
    set.validate();
    require_index(set, l, "split");
    require_input_dim(params, set.dim(), "weighted set");
    if (!(gamma > 0.0)) return kInf;
    const Vector numer = boundary_numerators(params, set.points.row(l).transpose());
    const Vector denom = Vector::Constant(numer.size(), gamma * set.multipliers.sum());
    return min_ratio(numer, denom);
}

double split_budget_approx(const NetworkParams& params, const WeightedSet& set, Index l, double gamma,
                           double epsilon) {
    set.validate();
    require_index(set, l, "split");
    require_input_dim(params, set.dim(), "weighted set");
    if (!(epsilon >= 0.0) || !(gamma >= 0.0)) throw ValidationError("epsilon and gamma must be nonnegative");
    return approx_terms(params, set, l, gamma, epsilon).minCoeff();
}

BudgetReport budget_report(const NetworkParams& params, const WeightedSet& set, Index l,
                           const VectorRef& direction, double gamma, double epsilon) {
    BudgetReport report;
    report.exact_budget = split_budget_exact(params, set, l, gamma);
    report.exact_budget_verbatim = split_budget_exact_verbatim(params, set, l, gamma);
    report.approx_budget = split_budget_approx(params, set, l, gamma, epsilon);
    report.safe_budget = std::min(report.exact_budget, report.approx_budget);
    report.oracle_budget = pattern_boundary_oracle(params, set.points.row(l).transpose(), direction).min();
    report.per_neuron_terms = approx_terms(params, set, l, gamma, epsilon);
    return report;
}

DeltaDegradation delta_degradation(const NetworkParams& params, const WeightedSet& set,
                                   const SplitPlan& plan, double epsilon, std::optional<double> p) {
    set.validate();
    require_input_dim(params, set.dim(), "weighted set");
    if (plan.index < 0 || plan.index >= set.size()) throw ValidationError("split index out of range");
    if (!(plan.alpha >= 0.0) || !(plan.beta >= 0.0)) throw ValidationError("split steps must be nonnegative");
    const double mass = set.multipliers.sum();
    double per_unit = 0.0;
    for (Index j = 0; j < params.hidden_width(); ++j) {
        const double vj = std::abs(params.v(j));
        per_unit += vj * (epsilon + plan.gamma * vj * mass);
    }
    DeltaDegradation out;
    out.increase = set.multipliers(plan.index) * (plan.alpha + plan.beta) * per_unit;
    const double margin = p ? *p : margin_value(params, set.dataset());
    out.admissible = out.increase < margin;
    return out;
}

std::optional<Vector> orthogonal_direction(const MatrixRef& points) {
    const Index d = points.cols();
    if (d < 1) throw ValidationError("points must have at least one coordinate");
    if (points.rows() == 0) {
        Vector e = Vector::Zero(d);
        e(d - 1) = 1.0;
        return e;
    }
    Eigen::BDCSVD<Matrix> svd(points, Eigen::ComputeFullV);
    const Vector& sv = svd.singularValues();
    const double threshold = 1e-10 * sv(0);
    Index rank = 0;
    for (Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > threshold) ++rank;
    }
    if (rank >= d) return std::nullopt;
    return Vector(svd.matrixV().col(d - 1));
}

SvdDirection svd_direction(const MatrixRef& points) {
    const Index d = points.cols();
    if (points.rows() < 1 || d < 1) throw ValidationError("svd direction needs at least one point");
    Eigen::BDCSVD<Matrix> svd(points, Eigen::ComputeFullV);
    SvdDirection out;
    out.direction = svd.matrixV().col(d - 1);
    out.sigma_min = points.rows() >= d ? svd.singularValues()(d - 1) : 0.0;
    return out;
}

WeightedSet construct_distant_kkt_set(const NetworkParams& params, const WeightedSet& set, double r) {
    set.validate();
    require_input_dim(params, set.dim(), "weighted set");
    if (!(r >= 0.0) || !std::isfinite(r)) throw ValidationError("radius must be finite and nonnegative");
    const auto direction = orthogonal_direction(set.points);
    if (!direction) {
        throw SubspaceError("the points span the whole input space; no orthogonal direction exists");
    }
    const double step = r > 0.0 ? r * (1.0 + 1e-3) : 1e-6;

    const Index m = set.size();
    WeightedSet out;
    out.points.resize(2 * m, set.dim());
    out.labels.resize(2 * m);
    out.multipliers.resize(2 * m);
    for (Index l = 0; l < m; ++l) {
        const Vector x = set.points.row(l).transpose();
        const Vector z1 = x + step * *direction;
        const Vector z2 = x - step * *direction;
        const double lambda = set.multipliers(l);
        if (lambda > 0.0) {
            check_child(params, x, z1, "x + alpha nu");
            check_child(params, x, z2, "x - alpha nu");
        }
        out.points.row(2 * l) = z1.transpose();
        out.points.row(2 * l + 1) = z2.transpose();
        out.labels(2 * l) = out.labels(2 * l + 1) = set.labels(l);
        out.multipliers(2 * l) = out.multipliers(2 * l + 1) = 0.5 * lambda;
    }
    return out;
}

}  // namespace kktset
