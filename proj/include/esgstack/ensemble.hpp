#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "esgstack/matrix.hpp"
#include "esgstack/metafeatures.hpp"
#include "esgstack/neural.hpp"
#include "esgstack/types.hpp"

namespace esgstack {

enum class BaseKind {
    softmax_regression,
    knn,
};

BaseKind parse_base_kind(const std::string& text);
std::string to_string(BaseKind kind);

// Probabilistic base model: fit on row-aligned features and targets, emit
// per-aspect n x 4 rows on the probability simplex.
class BaseClassifier {
public:
    virtual ~BaseClassifier() = default;
    virtual void fit(const Matrix& x, const Targets& y) = 0;
    virtual std::array<Matrix, kNumAspects> predict_proba(const Matrix& x) const = 0;
};

std::unique_ptr<BaseClassifier> make_base(BaseKind kind);

// Per-aspect multinomial logistic regression, full-batch AdamW from zero
// weights. The objective is convex, so no random state is involved.
class SoftmaxRegressionBase final : public BaseClassifier {
public:
    explicit SoftmaxRegressionBase(std::size_t epochs = 300, double lr = 0.05);

    void fit(const Matrix& x, const Targets& y) override;
    std::array<Matrix, kNumAspects> predict_proba(const Matrix& x) const override;

private:
    std::size_t epochs_;
    double lr_;
    std::array<Matrix, kNumAspects> w_;                // kNumClasses x d
    std::array<std::vector<double>, kNumAspects> b_;   // kNumClasses
};

// k-nearest-neighbour class-frequency estimator (Euclidean distance,
// neighbour ties broken by lower row index, k clipped to the fit size).
class KnnBase final : public BaseClassifier {
public:
    explicit KnnBase(std::size_t k = 5);

    void fit(const Matrix& x, const Targets& y) override;
    std::array<Matrix, kNumAspects> predict_proba(const Matrix& x) const override;

private:
    std::size_t k_;
    Matrix train_x_;
    Targets train_y_;
};

// x projected onto the top right-singular directions: x * vt^T.
Matrix svd_project(const Matrix& x, const Matrix& vt);

struct SvdSelection {
    std::vector<std::size_t> candidates;  // feasible dims, ascending
    std::vector<double> scores;           // mean per-aspect macro-F1 per candidate
    std::size_t chosen = 0;

    bool operator==(const SvdSelection&) const = default;
};

// Picks the truncation dimension from {32, 64, 128, 256} by refitting the
// base classifier on an internal stratified 80/20 split of the given
// partition and scoring macro-F1 on the held-out side. Candidates that do
// not fit the factorized matrix (> min(split rows, d)) are dropped; ties go
// to the smallest dimension. Requires at least 10 rows.
SvdSelection select_svd_dim(const EmbeddingSet& emb, const std::vector<LabelTriplet>& labels,
                            BaseKind kind, std::uint64_t seed);

// Throws if any fitting document also appears in a held-out list.
void assert_no_leakage(const std::vector<std::string>& fit_docs,
                       const std::vector<std::string>& docs_meta,
                       const std::vector<std::string>& docs_test);

struct FamilyOutput {
    PredictionSet on_meta;  // rows aligned to docs_meta
    PredictionSet on_test;  // rows aligned to docs_test
    std::optional<SvdSelection> svd;
};

// Fits one base family on the 80% partition and predicts the meta and test
// partitions. With use_svd, the dimension search runs inside the 80%
// partition and the final factors are refit on all of it.
FamilyOutput fit_base_family(const std::string& family_id, const EmbeddingSet& emb,
                             const std::vector<LabelTriplet>& labels_80,
                             const std::vector<std::string>& docs_meta,
                             const std::vector<std::string>& docs_test, bool use_svd,
                             BaseKind kind, std::uint64_t seed);

// External prediction records bypass fitting: the named family is aligned
// to both partitions and passed through.
FamilyOutput external_family(const std::string& family_id,
                             const std::vector<AspectProbs>& records,
                             const std::vector<std::string>& docs_meta,
                             const std::vector<std::string>& docs_test);

// Single meta-MLP over the 12k-wide concatenation of all families.
struct TowerAModel {
    std::vector<std::string> family_order;
    MlpModel mlp;
};

// Per-family 12-input meta-MLPs whose concatenated head logits (n x 12 each)
// feed a second-level meta-MLP of width 12k.
struct TowerBModel {
    std::vector<std::string> family_order;
    std::vector<MlpModel> level1;
    MlpModel level2;
};

struct TowerTrainReport {
    std::size_t t_star = 0;
    std::size_t epochs_run = 0;
    std::size_t retrain_steps = 0;
};

struct TowerAOutcome {
    TowerAModel model;
    TowerTrainReport report;
};

struct TowerBOutcome {
    TowerBModel model;
    std::vector<TowerTrainReport> level1_reports;
    TowerTrainReport level2_report;
};

// Both towers canonicalize rows by ascending doc_id before splitting and
// batching, making training invariant to input row order. Each constituent
// model runs the same protocol: early stopping on a shared internal 80/20
// split seeded by cfg.seed, then a fresh fixed-epoch refit on all rows.
TowerAOutcome train_tower_a(const FamilySet& fams, const std::vector<LabelTriplet>& labels,
                            const TrainConfig& cfg);
TowerBOutcome train_tower_b(const FamilySet& fams, const std::vector<LabelTriplet>& labels,
                            const TrainConfig& cfg);

// The three 4-logit heads side by side, [E0..E3, S0..S3, G0..G3]; eval mode.
Matrix head_logits_concat(const MlpModel& model, const Matrix& x);

struct TowerPrediction {
    std::array<Matrix, kNumAspects> probs;               // n x 4, softmaxed
    std::array<std::vector<std::size_t>, kNumAspects> hard; // argmax, ties to class 0 side
};

// Eval-mode inference; the family ids must match the training order exactly.
TowerPrediction predict_tower(const TowerAModel& model, const FamilySet& fams);
TowerPrediction predict_tower(const TowerBModel& model, const FamilySet& fams);

} // namespace esgstack
