#include "kktset/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "kktset/rng.hpp"

namespace kktset {
namespace {

// Everything one objective evaluation produces that the gradient step reuses.
struct Evaluation {
    Matrix pre;       // m x k preactivations
    NetworkParams r;  // stationarity residual in parameter shape
    double residual_sq = 0.0;
    double penalty = 0.0;
};

Evaluation evaluate(const NetworkParams& params, const AttackState& s) {
    Evaluation e;
    e.pre = preactivations(params, s.candidates);
    const Matrix active = (e.pre.array() > 0.0).cast<double>().matrix();
    const Vector coeff = s.multipliers.cwiseProduct(s.labels);
    e.r.W = params.W - params.v.asDiagonal() *
                           ((active.array().colwise() * coeff.array()).matrix().transpose() * s.candidates);
    e.r.b = params.b - params.v.cwiseProduct(active.transpose() * coeff);
    e.r.v = params.v - e.pre.cwiseMax(0.0).transpose() * coeff;
    e.residual_sq = e.r.W.squaredNorm() + e.r.b.squaredNorm() + e.r.v.squaredNorm();
    e.penalty = negative_multiplier_penalty(s.multipliers);
    return e;
}

double surrogate(const Evaluation& e, const KKTLossWeights& w) {
    return w.gamma1 * e.residual_sq + w.gamma2 * e.penalty;
}

double reported(const Evaluation& e, const KKTLossWeights& w) {
    return w.gamma1 * std::sqrt(e.residual_sq) + w.gamma2 * e.penalty;
}

AttackGradients gradients_from(const NetworkParams& params, const AttackState& s, const Evaluation& e,
                               const KKTLossWeights& w) {
    const Matrix active = (e.pre.array() > 0.0).cast<double>().matrix();
    // <grad_theta Phi(x_i), r> = sum_j v_j s_ij (<r_wj, x_i> + r_bj) + relu_ij r_vj
    Matrix rw_dot = s.candidates * e.r.W.transpose();
    rw_dot.rowwise() += e.r.b.transpose();
    const Vector corr = active.cwiseProduct(rw_dot) * params.v + e.pre.cwiseMax(0.0) * e.r.v;

    AttackGradients g;
    g.multipliers = -2.0 * w.gamma1 * s.labels.cwiseProduct(corr);
    for (Index i = 0; i < g.multipliers.size(); ++i) {
        if (s.multipliers(i) < 0.0) {
            g.multipliers(i) -= w.gamma2;
        } else if (s.multipliers(i) == 0.0 && g.multipliers(i) > 0.0) {
            // Minimum-norm element of [g - gamma2, g].
            g.multipliers(i) = std::max(g.multipliers(i) - w.gamma2, 0.0);
        }
    }
    // d/dx_i <grad_theta Phi(x_i), r> = sum_j s_ij (v_j r_wj + r_vj w_j)
    const Matrix mixed = params.v.asDiagonal() * e.r.W + e.r.v.asDiagonal() * params.W;
    const Vector coeff = -2.0 * w.gamma1 * s.multipliers.cwiseProduct(s.labels);
    g.candidates = coeff.asDiagonal() * (active * mixed);
    return g;
}

void require_state(const NetworkParams& params, const AttackState& s) {
    require_input_dim(params, s.candidates.cols(), "candidate matrix");
    if (s.labels.size() != s.candidates.rows() || s.multipliers.size() != s.candidates.rows()) {
        throw DimensionError("attack state needs one label and one multiplier per candidate");
    }
    for (Index i = 0; i < s.labels.size(); ++i) require_label(s.labels(i));
    if (!s.candidates.allFinite() || !s.multipliers.allFinite()) {
        throw ValidationError("attack state contains NaN or Inf");
    }
}

// Rows of `after` whose activation pattern differs from `before`.
std::vector<Index> pattern_changes(const Matrix& before, const Matrix& after) {
    std::vector<Index> out;
    for (Index i = 0; i < before.rows(); ++i) {
        for (Index j = 0; j < before.cols(); ++j) {
            if ((before(i, j) > 0.0) != (after(i, j) > 0.0)) {
                out.push_back(i);
                break;
            }
        }
    }
    return out;
}

struct Descent {
    AttackState state;
    double loss = 0.0;
    std::vector<double> trace;
    std::vector<double> objective_trace;
};

Descent descend(const NetworkParams& params, AttackState state, const AttackConfig& config) {
    const auto& w = config.weights;
    Evaluation current = evaluate(params, state);
    double f = surrogate(current, w);
    double loss = reported(current, w);
    Descent out;
    out.trace.push_back(loss);
    out.objective_trace.push_back(f);
    if (!std::isfinite(f)) {
        out.state = std::move(state);
        out.loss = std::numeric_limits<double>::infinity();
        return out;
    }

    // Candidates and multipliers take alternating steps with separate step sizes: the
    // multiplier block is stiff (its curvature is the gradient Gram matrix) and would
    // otherwise throttle the candidates. Each candidate also carries its own step size.
    // The objective jumps where a candidate crosses an activation boundary, so a rejected
    // candidate step first shrinks only the candidates that crossed one.
    const Index m = state.candidates.rows();
    const double lr_max = config.learning_rate;
    const double floor = lr_max * config.min_step_fraction;
    Vector lr = Vector::Constant(m, lr_max);
    double lr_lambda = lr_max;
    std::vector<char> frozen(static_cast<std::size_t>(m));
    const auto accept = [&](AttackState&& trial, Evaluation&& next, double f_next) {
        state = std::move(trial);
        current = std::move(next);
        f = f_next;
        loss = reported(current, w);
    };
    for (std::int64_t it = 0; it < config.iterations && f > 0.0; ++it) {
        bool moved = false;

        const Matrix gx = gradients_from(params, state, current, w).candidates;
        std::fill(frozen.begin(), frozen.end(), 0);
        while (gx.squaredNorm() > 0.0) {
            AttackState trial = state;
            bool any = false;
            for (Index i = 0; i < m; ++i) {
                if (frozen[static_cast<std::size_t>(i)] != 0) continue;
                trial.candidates.row(i) -= lr(i) * gx.row(i);
                any = true;
            }
            if (!any) break;
            Evaluation next = evaluate(params, trial);
            const double f_next = surrogate(next, w);
            if (std::isfinite(f_next) && f_next <= f) {
                accept(std::move(trial), std::move(next), f_next);
                lr = (2.0 * lr).cwiseMin(lr_max);
                moved = true;
                break;
            }
            const auto crossed = pattern_changes(current.pre, next.pre);
            if (!crossed.empty()) {
                for (Index i : crossed) {
                    lr(i) *= 0.5;
                    // A candidate sitting on a boundary stays put for this iteration.
                    if (lr(i) < floor) frozen[static_cast<std::size_t>(i)] = 1;
                }
            } else {
                lr *= 0.5;
                if (lr.maxCoeff() < floor) break;
            }
        }

        const Vector gl = gradients_from(params, state, current, w).multipliers;
        while (gl.squaredNorm() > 0.0 && lr_lambda >= floor) {
            AttackState trial{state.candidates, state.labels, state.multipliers - lr_lambda * gl};
            Evaluation next = evaluate(params, trial);
            const double f_next = surrogate(next, w);
            if (std::isfinite(f_next) && f_next <= f) {
                accept(std::move(trial), std::move(next), f_next);
                lr_lambda = std::min(2.0 * lr_lambda, lr_max);
                moved = true;
                break;
            }
            lr_lambda *= 0.5;
        }

        if (!moved) break;
        out.trace.push_back(loss);
        out.objective_trace.push_back(f);
    }
    out.state = std::move(state);
    out.loss = loss;
    return out;
}

ReconstructionResult finish(const Descent& best, const std::optional<LabeledDataset>& true_set, Index top_k) {
    ReconstructionResult result;
    result.candidates = best.state.candidates;
    result.labels = best.state.labels;
    result.multipliers = best.state.multipliers;
    result.final_kkt_loss = best.loss;
    result.loss_trace = best.trace;
    result.objective_trace = best.objective_trace;
    if (true_set) {
        const Index k = std::clamp<Index>(top_k, 1, result.candidates.rows());
        NNMetrics metrics = nn_metrics(result.candidates, true_set->X, k);
        result.per_candidate_nn_distance = std::move(metrics.distances);
        result.top_k_mean = metrics.top_k_mean;
    }
    return result;
}

void require_true_set(const NetworkParams& params, const std::optional<LabeledDataset>& true_set) {
    if (!true_set) return;
    true_set->validate();
    require_input_dim(params, true_set->dim(), "true set");
}

}  // namespace

void AttackConfig::validate() const {
    if (m < 1) throw ValidationError("candidate count m must be >= 1");
    if (const auto* s = std::get_if<SphereInit>(&init)) {
        if (!(s->radius > 0.0) || !std::isfinite(s->radius)) {
            throw ValidationError("sphere radius must be positive and finite");
        }
    } else {
        const auto& b = std::get<BoxInit>(init);
        if (!(b.lo <= b.hi) || !std::isfinite(b.lo) || !std::isfinite(b.hi)) {
            throw ValidationError("box bounds must be finite with lo <= hi");
        }
    }
    weights.validate();
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ValidationError("learning rate must be positive");
    }
    if (iterations < 1) throw ValidationError("iterations must be >= 1");
    if (restarts < 1) throw ValidationError("restarts must be >= 1");
    if (!std::isfinite(initial_multiplier)) throw ValidationError("initial multiplier must be finite");
    if (!(min_step_fraction > 0.0) || !(min_step_fraction < 1.0)) {
        throw ValidationError("min_step_fraction must lie in (0, 1)");
    }
}

double attack_objective(const NetworkParams& params, const AttackState& state, const KKTLossWeights& weights) {
    weights.validate();
    require_state(params, state);
    return surrogate(evaluate(params, state), weights);
}

AttackGradients attack_gradients(const NetworkParams& params, const MatrixRef& candidates, const VectorRef& labels,
                                 const VectorRef& lambda, const KKTLossWeights& weights) {
    weights.validate();
    AttackState s{candidates, labels, lambda};
    require_state(params, s);
    return gradients_from(params, s, evaluate(params, s), weights);
}

AttackState initial_attack_state(const NetworkParams& params, const AttackConfig& config, std::int64_t restart) {
    config.validate();
    const Index m = config.m;
    const Index d = params.input_dim();
    AttackState s;
    s.candidates.resize(m, d);
    for (Index i = 0; i < m; ++i) {
        Rng rng(derive_seed({config.seed, static_cast<std::uint64_t>(restart), static_cast<std::uint64_t>(i)}));
        if (const auto* sphere = std::get_if<SphereInit>(&config.init)) {
            std::normal_distribution<double> normal(0.0, 1.0);
            Vector z(d);
            do {
                for (Index c = 0; c < d; ++c) z(c) = normal(rng);
            } while (z.norm() == 0.0);
            s.candidates.row(i) = (sphere->radius / z.norm()) * z.transpose();
        } else {
            const auto& box = std::get<BoxInit>(config.init);
            std::uniform_real_distribution<double> uniform(box.lo, box.hi);
            for (Index c = 0; c < d; ++c) s.candidates(i, c) = uniform(rng);
        }
    }
    s.labels.resize(m);
    for (Index i = 0; i < m; ++i) {
        switch (config.label_assignment) {
            case LabelAssignment::balanced:
                s.labels(i) = i < (m + 1) / 2 ? 1.0 : -1.0;
                break;
            case LabelAssignment::all_positive:
                s.labels(i) = 1.0;
                break;
            case LabelAssignment::all_negative:
                s.labels(i) = -1.0;
                break;
        }
    }
    if (config.multiplier_init == MultiplierInit::nnls) {
        s.multipliers = fit_multipliers(params, LabeledDataset{s.candidates, s.labels});
    } else {
        s.multipliers = Vector::Constant(m, config.initial_multiplier);
    }
    return s;
}

ReconstructionResult reconstruct(const NetworkParams& params, const AttackConfig& config,
                                 const std::optional<LabeledDataset>& true_set, Index top_k) {
    config.validate();
    params.validate();
    require_true_set(params, true_set);

    std::vector<double> losses;
    std::vector<std::vector<double>> traces;
    std::optional<Descent> best;
    Index best_index = 0;
    for (std::int64_t restart = 0; restart < config.restarts; ++restart) {
        Descent run = descend(params, initial_attack_state(params, config, restart), config);
        losses.push_back(run.loss);
        traces.push_back(run.trace);
        // Strict comparison keeps the lowest restart index on ties.
        if (std::isfinite(run.loss) && (!best || run.loss < best->loss)) {
            best_index = static_cast<Index>(restart);
            best = std::move(run);
        }
    }
    if (!best) throw AttackDivergedError("the KKT-loss diverged in every restart", std::move(traces));

    ReconstructionResult result = finish(*best, true_set, top_k);
    result.restart_losses = std::move(losses);
    result.best_restart = best_index;
    return result;
}

ReconstructionResult reconstruct_from(const NetworkParams& params, AttackState state, const AttackConfig& config,
                                      const std::optional<LabeledDataset>& true_set, Index top_k) {
    config.validate();
    params.validate();
    require_state(params, state);
    require_true_set(params, true_set);
    Descent run = descend(params, std::move(state), config);
    if (!std::isfinite(run.loss)) {
        throw AttackDivergedError("the KKT-loss diverged", {run.trace});
    }
    ReconstructionResult result = finish(run, true_set, top_k);
    result.restart_losses = {run.loss};
    return result;
}

NNMetrics nn_metrics(const MatrixRef& candidates, const MatrixRef& true_points, Index top_k) {
    if (true_points.rows() == 0) throw ValidationError("nearest-neighbor metrics need a nonempty true set");
    if (candidates.cols() != true_points.cols()) throw DimensionError("candidate and true point dimensions differ");
    const Index m = candidates.rows();
    if (top_k < 1 || top_k > m) {
        throw ValidationError("top_k must lie in [1, " + std::to_string(m) + "]");
    }
    NNMetrics out;
    out.distances.resize(m);
    for (Index i = 0; i < m; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Index t = 0; t < true_points.rows(); ++t) {
            best = std::min(best, (candidates.row(i) - true_points.row(t)).squaredNorm());
        }
        out.distances(i) = std::sqrt(best);
    }
    std::vector<double> sorted(out.distances.begin(), out.distances.end());
    std::partial_sort(sorted.begin(), sorted.begin() + top_k, sorted.end());
    double sum = 0.0;
    for (Index i = 0; i < top_k; ++i) sum += sorted[static_cast<std::size_t>(i)];
    out.top_k_mean = sum / static_cast<double>(top_k);
    return out;
}

}  // namespace kktset
