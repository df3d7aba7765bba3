#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace kktset {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<const Vector>;
using MatrixRef = Eigen::Ref<const Matrix>;

/// Homogeneous two-layer ReLU classifier
///
///     Phi(x) = sum_j v_j * max(0, <w_j, x> + b_j)
///
/// Row j of W is w_j. Scaling every parameter by s > 0 scales the output by s^2.
struct NetworkParams {
    Matrix W;  // k x d
    Vector b;  // k
    Vector v;  // k

    static constexpr int homogeneity_order = 2;

    [[nodiscard]] static NetworkParams zeros(Index k, Index d);

    [[nodiscard]] Index hidden_width() const noexcept { return W.rows(); }
    [[nodiscard]] Index input_dim() const noexcept { return W.cols(); }
    [[nodiscard]] Index param_count() const noexcept { return W.size() + b.size() + v.size(); }

    /// Throws ValidationError on inconsistent shapes, k or d of zero, or non-finite entries.
    void validate() const;

    [[nodiscard]] NetworkParams scaled(double s) const;

    friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

/// Offsets of the flat parameter vector: all W rows in order, then b, then v.
struct ParamLayout {
    Index k = 0;
    Index d = 0;

    [[nodiscard]] Index size() const noexcept { return k * d + 2 * k; }
    [[nodiscard]] Index w_offset(Index j) const noexcept { return j * d; }
    [[nodiscard]] Index b_offset() const noexcept { return k * d; }
    [[nodiscard]] Index v_offset() const noexcept { return k * d + k; }

    [[nodiscard]] static ParamLayout of(const NetworkParams& params) noexcept {
        return {params.hidden_width(), params.input_dim()};
    }
};

[[nodiscard]] Vector flatten(const NetworkParams& params);
[[nodiscard]] NetworkParams unflatten(const VectorRef& flat, ParamLayout layout);

/// Bit j is set iff <w_j, x> + b_j > 0. Exact zero counts as inactive.
struct ActivationPattern {
    std::vector<bool> bits;

    [[nodiscard]] std::size_t size() const noexcept { return bits.size(); }
    /// Index of the first differing bit, or nullopt when the patterns are equal.
    [[nodiscard]] std::optional<Index> first_difference(const ActivationPattern& other) const;

    friend bool operator==(const ActivationPattern&, const ActivationPattern&) = default;
};

[[nodiscard]] double forward(const NetworkParams& params, const VectorRef& x);

/// Outputs for every row of X (n x d).
[[nodiscard]] Vector forward_batch(const NetworkParams& params, const MatrixRef& X);

/// Preactivations <w_j, x_i> + b_j as an n x k matrix.
[[nodiscard]] Matrix preactivations(const NetworkParams& params, const MatrixRef& X);

[[nodiscard]] ActivationPattern activation_pattern(const NetworkParams& params, const VectorRef& x);

/// (<w_j, x> + b_j) / ||w_j||. Throws DegenerateNeuronError when w_j = 0.
[[nodiscard]] double signed_distance(const NetworkParams& params, Index j, const VectorRef& x);

/// Gradient of y * Phi(theta; x) with respect to theta, in ParamLayout order.
/// Per neuron: w-block y v_j s_j x, b entry y v_j s_j, v entry y [<w_j,x>+b_j]_+,
/// with s_j the activation bit.
[[nodiscard]] Vector grad_theta(const NetworkParams& params, const VectorRef& x, double y);

/// Replaces b_j by b_j - <w_j, u>, so that the result evaluated at x + u equals
/// the original evaluated at x. W and v are copied untouched.
[[nodiscard]] NetworkParams shift_bias_defense(const NetworkParams& params, const VectorRef& u);

// Shape and label guards shared by the other modules.
void require_input_dim(const NetworkParams& params, Index dim, const char* what);
void require_label(double y);

}  // namespace kktset
