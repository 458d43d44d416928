#pragma once

#include <array>
#include <vector>

#include "esgstack/matrix.hpp"
#include "esgstack/types.hpp"

namespace esgstack {

struct AspectMetrics {
    double accuracy = 0.0;
    double f1_macro = 0.0;
    double bacc = 0.0;
    double auprc = 0.0;
};

// Fraction of exact matches.
double accuracy(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& gold);

// Unweighted mean of per-class F1 over all `num_classes` classes; any 0/0
// ratio along the way (precision, recall, or F1 itself) counts as 0.
double f1_macro(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& gold,
                std::size_t num_classes = kNumClasses);

// Mean per-class recall over the classes that appear in gold.
double balanced_accuracy(const std::vector<std::size_t>& pred,
                         const std::vector<std::size_t>& gold,
                         std::size_t num_classes = kNumClasses);

// Average precision of one score column against a binary relevance vector:
// descending-score threshold sweep with tied scores collapsed into a single
// block, AP = sum (R_k - R_{k-1}) * P_k. No positives -> 0.
double average_precision(const std::vector<double>& scores, const std::vector<char>& positive);

// One-vs-rest AP per class, averaged over the classes present in gold.
double auprc_macro(const Matrix& scores, const std::vector<std::size_t>& gold);

// Row argmax with ties toward the lower class index.
std::vector<std::size_t> argmax_rows(const Matrix& probs);

// All four metrics for one aspect; predictions are the score-row argmaxes.
AspectMetrics evaluate_aspect(const Matrix& scores, const std::vector<std::size_t>& gold);

// Most frequent class per aspect in the given labels (ties toward the lower
// class index), the reference against which the stacked models are compared.
std::array<SentimentClass, kNumAspects> majority_classes(const std::vector<LabelTriplet>& gold);

// Constant majority-class predictions plus flat uniform score columns.
struct BaselineOutput {
    std::vector<std::size_t> pred;
    Matrix scores; // n x 4, every entry 0.25
};
BaselineOutput majority_predictions(SentimentClass majority, std::size_t n);

// Fleiss' kappa for an items x categories count table with a constant
// number of raters (>= 2) per item.
double fleiss_kappa(const Matrix& counts);

// items x 4 count table for one aspect, built from long-form annotation
// rows; every item must be rated by the same set size of annotators.
struct AnnotationRow;
Matrix agreement_counts(const std::vector<AnnotationRow>& rows, Aspect aspect);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

// Arithmetic mean and sample (n-1) standard deviation; one value -> std 0.
MeanStd aggregate_seeds(const std::vector<double>& values);

} // namespace esgstack
