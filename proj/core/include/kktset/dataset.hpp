#pragma once

#include "kktset/net.hpp"

namespace kktset {

/// Points x_i (rows of X) with labels y_i in {-1, +1}.
struct LabeledDataset {
    Matrix X;  // n x d
    Vector y;  // n

    [[nodiscard]] Index size() const noexcept { return X.rows(); }
    [[nodiscard]] Index dim() const noexcept { return X.cols(); }

    /// Throws on n = 0, length mismatch, non-finite entries or labels outside {-1, +1}.
    /// Training fixtures additionally need both classes present.
    void validate(bool require_both_classes = false) const;

    friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

}  // namespace kktset
