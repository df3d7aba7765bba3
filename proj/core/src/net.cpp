#include "kktset/net.hpp"

#include <cmath>
#include <string>

#include "kktset/error.hpp"

namespace kktset {

NetworkParams NetworkParams::zeros(Index k, Index d) {
    return {Matrix::Zero(k, d), Vector::Zero(k), Vector::Zero(k)};
}

void NetworkParams::validate() const {
    const Index k = W.rows();
    if (k < 1 || W.cols() < 1) {
        throw ValidationError("network must have k >= 1 and d >= 1, got k=" + std::to_string(k) +
                              " d=" + std::to_string(W.cols()));
    }
    if (b.size() != k || v.size() != k) {
        throw DimensionError("bias and output weights must have length k=" + std::to_string(k));
    }
    if (!W.allFinite() || !b.allFinite() || !v.allFinite()) {
        throw ValidationError("network parameters contain NaN or Inf");
    }
}

NetworkParams NetworkParams::scaled(double s) const { return {s * W, s * b, s * v}; }

Vector flatten(const NetworkParams& params) {
    const auto layout = ParamLayout::of(params);
    Vector flat(layout.size());
    for (Index j = 0; j < layout.k; ++j) {
        flat.segment(layout.w_offset(j), layout.d) = params.W.row(j).transpose();
    }
    flat.segment(layout.b_offset(), layout.k) = params.b;
    flat.segment(layout.v_offset(), layout.k) = params.v;
    return flat;
}

NetworkParams unflatten(const VectorRef& flat, ParamLayout layout) {
    if (flat.size() != layout.size()) {
        throw DimensionError("flat parameter vector has length " + std::to_string(flat.size()) +
                             ", layout expects " + std::to_string(layout.size()));
    }
    NetworkParams params = NetworkParams::zeros(layout.k, layout.d);
    for (Index j = 0; j < layout.k; ++j) {
        params.W.row(j) = flat.segment(layout.w_offset(j), layout.d).transpose();
    }
    params.b = flat.segment(layout.b_offset(), layout.k);
    params.v = flat.segment(layout.v_offset(), layout.k);
    return params;
}

std::optional<Index> ActivationPattern::first_difference(const ActivationPattern& other) const {
    const std::size_t n = std::min(bits.size(), other.bits.size());
    for (std::size_t j = 0; j < n; ++j) {
        if (bits[j] != other.bits[j]) return static_cast<Index>(j);
    }
    if (bits.size() != other.bits.size()) return static_cast<Index>(n);
    return std::nullopt;
}

void require_input_dim(const NetworkParams& params, Index dim, const char* what) {
    if (dim != params.input_dim()) {
        throw DimensionError(std::string(what) + " has dimension " + std::to_string(dim) +
                             ", network expects " + std::to_string(params.input_dim()));
    }
}

void require_label(double y) {
    if (y != 1.0 && y != -1.0) {
        throw ValidationError("label must be -1 or +1, got " + std::to_string(y));
    }
}

double forward(const NetworkParams& params, const VectorRef& x) {
    require_input_dim(params, x.size(), "input");
    const Vector pre = params.W * x + params.b;
    return params.v.dot(pre.cwiseMax(0.0));
}

Matrix preactivations(const NetworkParams& params, const MatrixRef& X) {
    require_input_dim(params, X.cols(), "input matrix");
    Matrix pre = X * params.W.transpose();
    pre.rowwise() += params.b.transpose();
    return pre;
}

Vector forward_batch(const NetworkParams& params, const MatrixRef& X) {
    return preactivations(params, X).cwiseMax(0.0) * params.v;
}

ActivationPattern activation_pattern(const NetworkParams& params, const VectorRef& x) {
    require_input_dim(params, x.size(), "input");
    const Vector pre = params.W * x + params.b;
    ActivationPattern pattern;
    pattern.bits.resize(static_cast<std::size_t>(pre.size()));
    for (Index j = 0; j < pre.size(); ++j) pattern.bits[static_cast<std::size_t>(j)] = pre(j) > 0.0;
    return pattern;
}

double signed_distance(const NetworkParams& params, Index j, const VectorRef& x) {
    require_input_dim(params, x.size(), "input");
    if (j < 0 || j >= params.hidden_width()) {
        throw ValidationError("neuron index " + std::to_string(j) + " out of range");
    }
    const double norm = params.W.row(j).norm();
    if (norm == 0.0) {
        throw DegenerateNeuronError("neuron " + std::to_string(j) + " has a zero weight row");
    }
    return (params.W.row(j).dot(x) + params.b(j)) / norm;
}

Vector grad_theta(const NetworkParams& params, const VectorRef& x, double y) {
    require_input_dim(params, x.size(), "input");
    require_label(y);
    const auto layout = ParamLayout::of(params);
    const Vector pre = params.W * x + params.b;
    Vector g = Vector::Zero(layout.size());
    for (Index j = 0; j < layout.k; ++j) {
        if (pre(j) <= 0.0) continue;
        const double scale = y * params.v(j);
        g.segment(layout.w_offset(j), layout.d) = scale * x;
        g(layout.b_offset() + j) = scale;
        g(layout.v_offset() + j) = y * pre(j);
    }
    return g;
}

NetworkParams shift_bias_defense(const NetworkParams& params, const VectorRef& u) {
    require_input_dim(params, u.size(), "shift vector");
    NetworkParams shifted = params;
    shifted.b = params.b - params.W * u;
    return shifted;
}

}  // namespace kktset
