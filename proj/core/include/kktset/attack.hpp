#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "kktset/dataset.hpp"
#include "kktset/error.hpp"
#include "kktset/kkt.hpp"
#include "kktset/net.hpp"

namespace kktset {

/// Candidates drawn uniformly on the sphere of the given radius around the origin.
struct SphereInit {
    double radius = 1.0;
};

/// Candidates drawn uniformly from the box [lo, hi]^d.
struct BoxInit {
    double lo = 0.0;
    double hi = 1.0;
};

using InitPrior = std::variant<SphereInit, BoxInit>;

enum class LabelAssignment : std::uint8_t {
    balanced,  // first ceil(m/2) candidates +1, the rest -1
    all_positive,
    all_negative,
};

/// How candidate multipliers start.
enum class MultiplierInit : std::uint8_t {
    nnls,      // best nonnegative fit for the initial candidates
    constant,  // every multiplier set to AttackConfig::initial_multiplier
};

struct AttackConfig {
    Index m = 1;
    InitPrior init = SphereInit{};
    LabelAssignment label_assignment = LabelAssignment::balanced;
    KKTLossWeights weights;
    double learning_rate = 0.01;
    std::int64_t iterations = 5000;
    std::int64_t restarts = 8;
    std::uint64_t seed = 0;
    MultiplierInit multiplier_init = MultiplierInit::nnls;
    double initial_multiplier = 0.0;
    /// A restart stops once its step size falls below learning_rate * min_step_fraction.
    double min_step_fraction = 1e-12;

    void validate() const;
};

/// Candidate points with their labels and multipliers; the optimization variables.
struct AttackState {
    Matrix candidates;  // m x d
    Vector labels;
    Multipliers multipliers;
};

struct AttackGradients {
    Matrix candidates;  // d objective / d x_i, one row per candidate
    Vector multipliers;
};

struct NNMetrics {
    Vector distances;  // per candidate, distance to the nearest true point
    double top_k_mean = 0.0;
};

struct ReconstructionResult {
    Matrix candidates;
    Vector labels;
    Multipliers multipliers;
    double final_kkt_loss = 0.0;
    /// Filled only when the true set was supplied.
    Vector per_candidate_nn_distance;
    std::optional<double> top_k_mean;
    std::vector<double> restart_losses;
    Index best_restart = 0;
    /// Unsquared KKT-loss after every accepted step of the best restart, starting at the initial state.
    std::vector<double> loss_trace;
    /// The descended surrogate at the same steps; non-increasing.
    std::vector<double> objective_trace;
};

class AttackDivergedError : public NumericError {
public:
    AttackDivergedError(const std::string& what, std::vector<std::vector<double>> traces)
        : NumericError(what), traces_(std::move(traces)) {}
    [[nodiscard]] const std::vector<std::vector<double>>& traces() const noexcept { return traces_; }

private:
    std::vector<std::vector<double>> traces_;
};

/// gamma1 ||r||^2 + gamma2 sum_i max(-lambda_i, 0), the smooth surrogate the attack descends.
[[nodiscard]] double attack_objective(const NetworkParams& params, const AttackState& state,
                                      const KKTLossWeights& weights);

/// Closed-form gradients of attack_objective with the subgradient convention sigma'(0) = 0.
[[nodiscard]] AttackGradients attack_gradients(const NetworkParams& params, const MatrixRef& candidates,
                                               const VectorRef& labels, const VectorRef& lambda,
                                               const KKTLossWeights& weights);

/// Initial candidates, labels and multipliers for one restart.
[[nodiscard]] AttackState initial_attack_state(const NetworkParams& params, const AttackConfig& config,
                                               std::int64_t restart);

/// Best of `restarts` independent descents from fresh initializations.
[[nodiscard]] ReconstructionResult reconstruct(const NetworkParams& params, const AttackConfig& config,
                                               const std::optional<LabeledDataset>& true_set = std::nullopt,
                                               Index top_k = 5);

/// A single descent from a caller-supplied state.
[[nodiscard]] ReconstructionResult reconstruct_from(const NetworkParams& params, AttackState state,
                                                    const AttackConfig& config,
                                                    const std::optional<LabeledDataset>& true_set = std::nullopt,
                                                    Index top_k = 5);

/// Nearest-neighbor distances from each candidate to the true points and the mean of the
/// top_k smallest. Requires 1 <= top_k <= number of candidates.
[[nodiscard]] NNMetrics nn_metrics(const MatrixRef& candidates, const MatrixRef& true_points, Index top_k);

}  // namespace kktset
