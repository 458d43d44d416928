#pragma once

#include <string>
#include <vector>

#include "esgstack/matrix.hpp"
#include "esgstack/types.hpp"

namespace esgstack {

// n x 12 log-probability features for one base family, columns
// [E0..E3, S0..S3, G0..G3].
struct MetaFeatureMatrix {
    std::string model_id;
    Matrix features;
};

// One entry per base family, all sharing the same document ordering.
using FamilySet = std::vector<MetaFeatureMatrix>;

// Elementwise ln(clip(p, 1e-6, 1)). Entries must lie in [0,1]; upstream
// rounding noise within 1e-9 outside that range is clipped silently.
Matrix logit_transform(const Matrix& p);

// [le | ls | lg], each n x 4, in fixed aspect order.
Matrix concat_aspects(const Matrix& le, const Matrix& ls, const Matrix& lg);

// Horizontal concatenation in the given family order; n x 12k.
Matrix concat_families(const FamilySet& fams);

// logit_transform each aspect block of a prediction set and concatenate.
MetaFeatureMatrix meta_features_of(const PredictionSet& set);

} // namespace esgstack
