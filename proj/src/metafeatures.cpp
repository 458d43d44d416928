#include "esgstack/metafeatures.hpp"

#include <cmath>

#include "esgstack/errors.hpp"

namespace esgstack {

namespace {
constexpr double kClipFloor = 1e-6;
constexpr double kSlack = 1e-9;
} // namespace

Matrix logit_transform(const Matrix& p) {
    Matrix out(p.rows(), p.cols());
    for (std::size_t r = 0; r < p.rows(); ++r) {
        for (std::size_t c = 0; c < p.cols(); ++c) {
            double v = p.at(r, c);
            if (v < -kSlack || v > 1.0 + kSlack)
                throw validation_error("logit_transform: probability " + std::to_string(v) +
                                       " outside [0,1] at (" + std::to_string(r) + "," +
                                       std::to_string(c) + ")");
            v = std::min(1.0, std::max(kClipFloor, v));
            out.at(r, c) = std::log(v);
        }
    }
    return out;
}

Matrix concat_aspects(const Matrix& le, const Matrix& ls, const Matrix& lg) {
    for (const Matrix* m : {&le, &ls, &lg})
        if (m->cols() != kNumClasses)
            throw validation_error("concat_aspects: each aspect block must have 4 columns, got " +
                                   shape_string(*m));
    if (le.rows() != ls.rows() || le.rows() != lg.rows())
        throw validation_error("concat_aspects: row counts differ: " + shape_string(le) + ", " +
                               shape_string(ls) + ", " + shape_string(lg));
    return hcat({&le, &ls, &lg});
}

Matrix concat_families(const FamilySet& fams) {
    if (fams.empty()) throw validation_error("concat_families: empty family list");
    std::vector<const Matrix*> blocks;
    blocks.reserve(fams.size());
    for (const auto& f : fams) {
        if (f.features.rows() != fams.front().features.rows())
            throw validation_error("concat_families: family '" + f.model_id +
                                   "' has a different document count");
        blocks.push_back(&f.features);
    }
    return hcat(blocks);
}

MetaFeatureMatrix meta_features_of(const PredictionSet& set) {
    MetaFeatureMatrix out;
    out.model_id = set.model_id;
    out.features = concat_aspects(logit_transform(set.probs[0]), logit_transform(set.probs[1]),
                                  logit_transform(set.probs[2]));
    return out;
}

} // namespace esgstack
