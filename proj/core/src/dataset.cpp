#include "kktset/dataset.hpp"

#include <string>

#include "kktset/error.hpp"

namespace kktset {

void LabeledDataset::validate(bool require_both_classes) const {
    if (X.rows() < 1) throw ValidationError("dataset is empty");
    if (X.cols() < 1) throw ValidationError("dataset has zero feature columns");
    if (y.size() != X.rows()) {
        throw DimensionError("dataset has " + std::to_string(X.rows()) + " points but " +
                             std::to_string(y.size()) + " labels");
    }
    if (!X.allFinite()) throw ValidationError("dataset contains NaN or Inf");
    bool has_pos = false;
    bool has_neg = false;
    for (Index i = 0; i < y.size(); ++i) {
        require_label(y(i));
        (y(i) > 0 ? has_pos : has_neg) = true;
    }
    if (require_both_classes && !(has_pos && has_neg)) {
        throw ValidationError("training data must contain both classes");
    }
}

}  // namespace kktset
