#include "kktset/trainer.hpp"

#include <cmath>
#include <random>
#include <string>

#include "kktset/kkt.hpp"
#include "kktset/rng.hpp"

namespace kktset {
namespace {

struct Evaluation {
    double loss = 0.0;
    NetworkParams gradient;
};

// Loss and its parameter gradient from a single preactivation pass.
Evaluation evaluate(const NetworkParams& params, const LabeledDataset& data, LossKind kind) {
    const Matrix pre = preactivations(params, data.X);
    const Matrix relu = pre.cwiseMax(0.0);
    const Vector margins = data.y.cwiseProduct(relu * params.v);
    const auto n = static_cast<double>(data.size());

    Evaluation eval;
    Vector coeff(data.size());
    double total = 0.0;
    for (Index i = 0; i < data.size(); ++i) {
        total += loss_value(kind, margins(i));
        coeff(i) = loss_derivative(kind, margins(i)) * data.y(i) / n;
    }
    eval.loss = total / n;

    const Matrix active = (pre.array() > 0.0).cast<double>().matrix();
    eval.gradient.W = params.v.asDiagonal() *
                      ((active.array().colwise() * coeff.array()).matrix().transpose() * data.X);
    eval.gradient.b = params.v.cwiseProduct(active.transpose() * coeff);
    eval.gradient.v = relu.transpose() * coeff;
    return eval;
}

TrainRecord make_record(std::int64_t epoch, double loss, const NetworkParams& params,
                        const LabeledDataset& data) {
    TrainRecord rec;
    rec.epoch = epoch;
    rec.loss = loss;
    rec.theta_norm = flatten(params).norm();
    rec.normalized_margin = rec.theta_norm > 0.0 ? normalized_margin(params, data) : 0.0;
    const Multipliers lambda = fit_multipliers(params, data);
    rec.residual = stationarity_residual(params, data.X, data.y, lambda).norm;
    rec.below_one_over_n = loss < 1.0 / static_cast<double>(data.size());
    return rec;
}

bool is_power_of_two(std::int64_t e) { return e > 0 && (e & (e - 1)) == 0; }

}  // namespace

void TrainConfig::validate() const {
    if (hidden_width < 1) throw ValidationError("hidden width must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ValidationError("learning rate must be positive");
    }
    if (max_epochs < 0) throw ValidationError("max_epochs must be nonnegative");
    if (!(target_loss > 0.0)) throw ValidationError("target loss must be positive");
    if (init_scale && !(*init_scale > 0.0)) throw ValidationError("init scale must be positive");
}

bool TrainTrace::ever_below_one_over_n() const noexcept {
    for (const auto& r : records) {
        if (r.below_one_over_n) return true;
    }
    return false;
}

double loss_value(LossKind kind, double z) {
    switch (kind) {
        case LossKind::logistic:
            return z >= 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
        case LossKind::exponential:
            return std::exp(-z);
    }
    return 0.0;
}

double loss_derivative(LossKind kind, double z) {
    switch (kind) {
        case LossKind::logistic: {
            if (z >= 0.0) {
                const double e = std::exp(-z);
                return -e / (1.0 + e);
            }
            return -1.0 / (1.0 + std::exp(z));
        }
        case LossKind::exponential:
            return -std::exp(-z);
    }
    return 0.0;
}

double empirical_loss(const NetworkParams& params, const LabeledDataset& dataset, LossKind kind) {
    dataset.validate();
    const Vector margins = dataset.y.cwiseProduct(forward_batch(params, dataset.X));
    double total = 0.0;
    for (Index i = 0; i < margins.size(); ++i) total += loss_value(kind, margins(i));
    return total / static_cast<double>(margins.size());
}

Vector empirical_loss_gradient(const NetworkParams& params, const LabeledDataset& dataset,
                               LossKind kind) {
    dataset.validate();
    return flatten(evaluate(params, dataset, kind).gradient);
}

double normalized_margin(const NetworkParams& params, const LabeledDataset& dataset) {
    const double norm = flatten(params).norm();
    if (norm == 0.0) throw ValidationError("normalized margin is undefined for a zero network");
    return margin_value(params, dataset) / (norm * norm);
}

NetworkParams initialize_network(Index k, Index d, const TrainConfig& config) {
    const double scale = config.init_scale.value_or(1.0 / std::sqrt(static_cast<double>(d)));
    Rng rng(derive_seed({config.seed, 0x1417}));
    std::uniform_real_distribution<double> dist(-scale, scale);
    NetworkParams params = NetworkParams::zeros(k, d);
    // Fixed fill order keeps draws reproducible across Eigen storage orders.
    for (Index j = 0; j < k; ++j) {
        for (Index c = 0; c < d; ++c) params.W(j, c) = dist(rng);
    }
    for (Index j = 0; j < k; ++j) params.b(j) = dist(rng);
    for (Index j = 0; j < k; ++j) params.v(j) = dist(rng);
    return params;
}

TrainResult train_to_kkt(const LabeledDataset& dataset, const TrainConfig& config) {
    config.validate();
    dataset.validate(true);
    return train_from(initialize_network(config.hidden_width, dataset.dim(), config), dataset, config);
}

TrainResult train_from(NetworkParams params, const LabeledDataset& dataset, const TrainConfig& config) {
    config.validate();
    dataset.validate(true);
    params.validate();
    require_input_dim(params, dataset.dim(), "training data");

    const double one_over_n = 1.0 / static_cast<double>(dataset.size());
    TrainTrace trace;
    std::int64_t epoch = 0;
    Evaluation eval = evaluate(params, dataset, config.loss_kind);
    if (!std::isfinite(eval.loss)) {
        throw TrainingDivergedError("initial loss is not finite", trace);
    }
    trace.records.push_back(make_record(epoch, eval.loss, params, dataset));

    while (epoch < config.max_epochs && eval.loss > config.target_loss) {
        double step = config.learning_rate;
        if (config.lr_schedule == LrSchedule::loss_normalized && eval.loss < one_over_n) {
            step /= eval.loss;
        }
        params.W -= step * eval.gradient.W;
        params.b -= step * eval.gradient.b;
        params.v -= step * eval.gradient.v;
        ++epoch;
        eval = evaluate(params, dataset, config.loss_kind);
        if (!std::isfinite(eval.loss) || !params.W.allFinite() || !params.v.allFinite() ||
            !params.b.allFinite()) {
            throw TrainingDivergedError("training diverged at epoch " + std::to_string(epoch), trace);
        }
        if (is_power_of_two(epoch)) trace.records.push_back(make_record(epoch, eval.loss, params, dataset));
    }
    if (trace.records.back().epoch != epoch) {
        trace.records.push_back(make_record(epoch, eval.loss, params, dataset));
    }
    return {std::move(params), std::move(trace)};
}

}  // namespace kktset
