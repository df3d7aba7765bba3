#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "kktset/dataset.hpp"
#include "kktset/error.hpp"
#include "kktset/net.hpp"

namespace kktset {

enum class LossKind : std::uint8_t { logistic, exponential };

enum class LrSchedule : std::uint8_t {
    constant,
    /// Divide the step by the current loss once it is below 1/n.
    loss_normalized,
};

struct TrainConfig {
    Index hidden_width = 200;
    LossKind loss_kind = LossKind::logistic;
    double learning_rate = 0.1;
    std::int64_t max_epochs = 50'000;
    double target_loss = 1e-7;
    std::uint64_t seed = 0;
    /// Half-width of the uniform initialization; 1/sqrt(d) when unset.
    std::optional<double> init_scale;
    LrSchedule lr_schedule = LrSchedule::constant;

    void validate() const;
};

struct TrainRecord {
    std::int64_t epoch = 0;
    double loss = 0.0;
    double normalized_margin = 0.0;
    /// Stationarity residual norm under the nonnegative least-squares multipliers.
    double residual = 0.0;
    double theta_norm = 0.0;
    bool below_one_over_n = false;
};

struct TrainTrace {
    std::vector<TrainRecord> records;

    [[nodiscard]] bool ever_below_one_over_n() const noexcept;
};

struct TrainResult {
    NetworkParams params;
    TrainTrace trace;
};

class TrainingDivergedError : public NumericError {
public:
    TrainingDivergedError(const std::string& what, TrainTrace trace)
        : NumericError(what), trace_(std::move(trace)) {}
    /// Records up to the last epoch with a finite loss.
    [[nodiscard]] const TrainTrace& trace() const noexcept { return trace_; }

private:
    TrainTrace trace_;
};

/// l(z) for the chosen loss, evaluated without overflow.
[[nodiscard]] double loss_value(LossKind kind, double z);
/// dl/dz
[[nodiscard]] double loss_derivative(LossKind kind, double z);

/// (1/n) sum_i l(y_i Phi(x_i))
[[nodiscard]] double empirical_loss(const NetworkParams& params, const LabeledDataset& dataset,
                                    LossKind kind);

/// Gradient of empirical_loss with respect to theta, in ParamLayout order.
[[nodiscard]] Vector empirical_loss_gradient(const NetworkParams& params,
                                             const LabeledDataset& dataset, LossKind kind);

/// min_i y_i Phi(x_i) / ||theta||^2. Throws ValidationError for a zero network.
[[nodiscard]] double normalized_margin(const NetworkParams& params, const LabeledDataset& dataset);

/// Entries i.i.d. uniform in [-scale, scale].
[[nodiscard]] NetworkParams initialize_network(Index k, Index d, const TrainConfig& config);

/// Full-batch gradient descent from a seeded initialization. Stops at max_epochs or
/// once the empirical loss is at or below target_loss. The trace is logged at epoch 0,
/// at powers of two and at the final epoch.
[[nodiscard]] TrainResult train_to_kkt(const LabeledDataset& dataset, const TrainConfig& config);

/// Same loop, starting from the given parameters instead of a random draw.
[[nodiscard]] TrainResult train_from(NetworkParams init, const LabeledDataset& dataset,
                                     const TrainConfig& config);

}  // namespace kktset
