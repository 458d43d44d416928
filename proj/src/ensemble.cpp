#include "esgstack/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>
#include <utility>

#include "esgstack/errors.hpp"
#include "esgstack/io.hpp"
#include "esgstack/metrics.hpp"
#include "esgstack/stratify.hpp"
#include "esgstack/svd.hpp"

namespace esgstack {

namespace {

Matrix linear_forward(const Matrix& x, const Matrix& w, const std::vector<double>& b) {
    Matrix z = multiply_abt(x, w);
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t c = 0; c < z.cols(); ++c) z.at(i, c) += b[c];
    return z;
}

void check_targets(const Matrix& x, const Targets& y) {
    if (x.rows() == 0) throw validation_error("cannot fit a base classifier on zero rows");
    for (const auto& aspect : y) {
        if (aspect.size() != x.rows())
            throw validation_error("base classifier targets cover " +
                                   std::to_string(aspect.size()) + " rows but features have " +
                                   std::to_string(x.rows()));
        for (std::size_t v : aspect)
            if (v >= kNumClasses)
                throw validation_error("class index " + std::to_string(v) + " out of range");
    }
}

std::string joined(const std::vector<std::string>& ids) {
    std::string out;
    for (const auto& id : ids) {
        if (!out.empty()) out += ",";
        out += id;
    }
    return out;
}

} // namespace

BaseKind parse_base_kind(const std::string& text) {
    if (text == "softmax") return BaseKind::softmax_regression;
    if (text == "knn") return BaseKind::knn;
    throw validation_error("unknown base classifier kind '" + text +
                           "' (expected 'softmax' or 'knn')");
}

std::string to_string(BaseKind kind) {
    return kind == BaseKind::softmax_regression ? "softmax" : "knn";
}

std::unique_ptr<BaseClassifier> make_base(BaseKind kind) {
    if (kind == BaseKind::knn) return std::make_unique<KnnBase>();
    return std::make_unique<SoftmaxRegressionBase>();
}

SoftmaxRegressionBase::SoftmaxRegressionBase(std::size_t epochs, double lr)
    : epochs_(epochs), lr_(lr) {
    if (epochs_ == 0) throw validation_error("softmax regression needs at least one epoch");
    if (!(lr_ > 0)) throw validation_error("softmax regression learning rate must be positive");
}

void SoftmaxRegressionBase::fit(const Matrix& x, const Targets& y) {
    check_targets(x, y);
    const std::size_t d = x.cols();
    AdamWConfig ocfg;
    ocfg.lr = lr_;
    ocfg.weight_decay = 0.0;
    for (std::size_t a = 0; a < kNumAspects; ++a) {
        w_[a] = Matrix(kNumClasses, d);
        b_[a].assign(kNumClasses, 0.0);
        AdamW opt(w_[a].data().size() + b_[a].size(), ocfg);
        for (std::size_t epoch = 0; epoch < epochs_; ++epoch) {
            Matrix logits = linear_forward(x, w_[a], b_[a]);
            Matrix dlogits;
            cross_entropy(logits, y[a], &dlogits);
            Matrix dw = multiply_atb(dlogits, x);
            std::vector<double> db(kNumClasses, 0.0);
            for (std::size_t i = 0; i < x.rows(); ++i)
                for (std::size_t c = 0; c < kNumClasses; ++c) db[c] += dlogits.at(i, c);
            opt.step({std::span<double>(w_[a].data()), std::span<double>(b_[a])},
                     {std::span<const double>(dw.data()), std::span<const double>(db)});
        }
    }
}

std::array<Matrix, kNumAspects> SoftmaxRegressionBase::predict_proba(const Matrix& x) const {
    if (w_[0].rows() == 0) throw validation_error("softmax regression predicts before fit");
    if (x.cols() != w_[0].cols())
        throw validation_error("softmax regression expects " + std::to_string(w_[0].cols()) +
                               " features, got " + std::to_string(x.cols()));
    std::array<Matrix, kNumAspects> out;
    for (std::size_t a = 0; a < kNumAspects; ++a)
        out[a] = softmax_rows(linear_forward(x, w_[a], b_[a]));
    return out;
}

KnnBase::KnnBase(std::size_t k) : k_(k) {
    if (k_ == 0) throw validation_error("knn needs k >= 1");
}

void KnnBase::fit(const Matrix& x, const Targets& y) {
    check_targets(x, y);
    train_x_ = x;
    train_y_ = y;
}

std::array<Matrix, kNumAspects> KnnBase::predict_proba(const Matrix& x) const {
    if (train_x_.rows() == 0) throw validation_error("knn predicts before fit");
    if (x.cols() != train_x_.cols())
        throw validation_error("knn expects " + std::to_string(train_x_.cols()) +
                               " features, got " + std::to_string(x.cols()));
    const std::size_t n_train = train_x_.rows();
    const std::size_t k = std::min(k_, n_train);
    std::array<Matrix, kNumAspects> out;
    for (auto& m : out) m = Matrix(x.rows(), kNumClasses);
    std::vector<std::pair<double, std::size_t>> dist(n_train);
    for (std::size_t q = 0; q < x.rows(); ++q) {
        for (std::size_t t = 0; t < n_train; ++t) {
            double d2 = 0.0;
            for (std::size_t c = 0; c < x.cols(); ++c) {
                const double diff = x.at(q, c) - train_x_.at(t, c);
                d2 += diff * diff;
            }
            dist[t] = {d2, t};
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k),
                          dist.end());
        for (std::size_t a = 0; a < kNumAspects; ++a)
            for (std::size_t j = 0; j < k; ++j)
                out[a].at(q, train_y_[a][dist[j].second]) += 1.0 / static_cast<double>(k);
    }
    return out;
}

Matrix svd_project(const Matrix& x, const Matrix& vt) {
    if (x.cols() != vt.cols())
        throw validation_error("projection expects " + std::to_string(vt.cols()) +
                               " input features, got " + std::to_string(x.cols()));
    return multiply_abt(x, vt);
}

SvdSelection select_svd_dim(const EmbeddingSet& emb, const std::vector<LabelTriplet>& labels,
                            BaseKind kind, std::uint64_t seed) {
    const std::size_t n = labels.size();
    if (n < 10)
        throw validation_error("svd dimension search needs at least 10 documents, got " +
                               std::to_string(n));
    const auto ids = doc_ids_of(labels);
    const EmbeddingSet aligned = align_embeddings(emb, ids);
    const std::size_t d = aligned.features.cols();

    const auto [fit_ids, val_ids] = split_80_20(labels, seed);
    const auto fit_rows = row_indices(ids, fit_ids);
    const auto val_rows = row_indices(ids, val_ids);
    const Matrix x_fit = take_rows(aligned.features, fit_rows);
    const Matrix x_val = take_rows(aligned.features, val_rows);

    const std::size_t cap = std::min({n - 1, d, fit_rows.size()});
    SvdSelection sel;
    for (std::size_t c : std::array<std::size_t, 4>{32, 64, 128, 256})
        if (c <= cap) sel.candidates.push_back(c);
    if (sel.candidates.empty())
        throw validation_error("no feasible truncation dimension: the limit here is " +
                               std::to_string(cap) + " but the smallest candidate is 32");

    const Targets y_all = targets_of(labels);
    const Targets y_fit = take_targets(y_all, fit_rows);
    const Targets y_val = take_targets(y_all, val_rows);

    double best = -1.0;
    for (std::size_t k : sel.candidates) {
        const SvdResult factors = truncated_svd(x_fit, k);
        const Matrix pf = svd_project(x_fit, factors.vt);
        const Matrix pv = svd_project(x_val, factors.vt);
        auto base = make_base(kind);
        base->fit(pf, y_fit);
        const auto probs = base->predict_proba(pv);
        double score = 0.0;
        for (std::size_t a = 0; a < kNumAspects; ++a)
            score += f1_macro(argmax_rows(probs[a]), y_val[a]);
        score /= kNumAspects;
        sel.scores.push_back(score);
        // candidates are ascending, so strict improvement keeps the smallest
        if (score > best) {
            best = score;
            sel.chosen = k;
        }
    }
    return sel;
}

void assert_no_leakage(const std::vector<std::string>& fit_docs,
                       const std::vector<std::string>& docs_meta,
                       const std::vector<std::string>& docs_test) {
    const std::unordered_set<std::string> fit(fit_docs.begin(), fit_docs.end());
    for (const auto& doc : docs_meta)
        if (fit.count(doc))
            throw validation_error("leakage: document '" + doc +
                                   "' appears in both the fit partition and the meta partition");
    for (const auto& doc : docs_test)
        if (fit.count(doc))
            throw validation_error("leakage: document '" + doc +
                                   "' appears in both the fit partition and the test partition");
}

FamilyOutput fit_base_family(const std::string& family_id, const EmbeddingSet& emb,
                             const std::vector<LabelTriplet>& labels_80,
                             const std::vector<std::string>& docs_meta,
                             const std::vector<std::string>& docs_test, bool use_svd,
                             BaseKind kind, std::uint64_t seed) {
    if (family_id.empty()) throw validation_error("family id must not be empty");
    const auto fit_ids = doc_ids_of(labels_80);
    assert_no_leakage(fit_ids, docs_meta, docs_test);

    Matrix x_fit = align_embeddings(emb, fit_ids).features;
    Matrix x_meta = align_embeddings(emb, docs_meta).features;
    Matrix x_test = align_embeddings(emb, docs_test).features;

    FamilyOutput out;
    if (use_svd) {
        SvdSelection sel = select_svd_dim(emb, labels_80, kind, seed);
        const SvdResult factors = truncated_svd(x_fit, sel.chosen);
        x_fit = svd_project(x_fit, factors.vt);
        x_meta = svd_project(x_meta, factors.vt);
        x_test = svd_project(x_test, factors.vt);
        out.svd = std::move(sel);
    }

    auto base = make_base(kind);
    base->fit(x_fit, targets_of(labels_80));
    out.on_meta = PredictionSet{family_id, docs_meta, base->predict_proba(x_meta)};
    out.on_test = PredictionSet{family_id, docs_test, base->predict_proba(x_test)};
    return out;
}

FamilyOutput external_family(const std::string& family_id,
                             const std::vector<AspectProbs>& records,
                             const std::vector<std::string>& docs_meta,
                             const std::vector<std::string>& docs_test) {
    // the file may cover more documents than either slice needs
    const std::unordered_set<std::string> meta_set(docs_meta.begin(), docs_meta.end());
    const std::unordered_set<std::string> test_set(docs_test.begin(), docs_test.end());
    std::vector<AspectProbs> meta_records, test_records;
    bool any = false;
    for (const auto& r : records) {
        if (r.model_id != family_id) continue;
        any = true;
        if (meta_set.count(r.doc_id)) meta_records.push_back(r);
        if (test_set.count(r.doc_id)) test_records.push_back(r);
    }
    if (!any)
        throw validation_error("no prediction rows for external family '" + family_id + "'");
    if (meta_records.empty() || test_records.empty())
        throw validation_error("external family '" + family_id +
                               "' covers neither requested partition completely");
    FamilyOutput out;
    out.on_meta = std::move(group_predictions(meta_records, docs_meta).front());
    out.on_test = std::move(group_predictions(test_records, docs_test).front());
    return out;
}

namespace {

std::vector<std::string> family_ids(const FamilySet& fams) {
    std::vector<std::string> ids;
    ids.reserve(fams.size());
    for (const auto& f : fams) ids.push_back(f.model_id);
    return ids;
}

void check_families(const FamilySet& fams, std::size_t n) {
    if (fams.empty()) throw validation_error("at least one family is required");
    std::unordered_set<std::string> seen;
    for (const auto& f : fams) {
        if (f.model_id.empty()) throw validation_error("family id must not be empty");
        if (!seen.insert(f.model_id).second)
            throw validation_error("duplicate family id '" + f.model_id + "'");
        if (f.features.rows() != n)
            throw validation_error("family '" + f.model_id + "' has " +
                                   std::to_string(f.features.rows()) + " rows, expected " +
                                   std::to_string(n));
        if (f.features.cols() != 4 * kNumAspects)
            throw validation_error("family '" + f.model_id + "' has width " +
                                   std::to_string(f.features.cols()) + ", expected 12");
    }
}

// Rows reordered by ascending doc_id so training ignores input order.
std::vector<std::size_t> canonical_order(const std::vector<LabelTriplet>& labels) {
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return labels[a].doc_id < labels[b].doc_id;
    });
    for (std::size_t i = 1; i < order.size(); ++i)
        if (labels[order[i - 1]].doc_id == labels[order[i]].doc_id)
            throw validation_error("duplicate doc_id '" + labels[order[i]].doc_id + "'");
    return order;
}

struct CanonicalInput {
    std::vector<LabelTriplet> labels;
    FamilySet fams;
    Targets y;
    std::vector<std::size_t> train_rows, val_rows;
};

CanonicalInput canonicalize(const FamilySet& fams, const std::vector<LabelTriplet>& labels,
                            std::uint64_t seed) {
    if (labels.empty()) throw validation_error("tower training needs at least one document");
    check_families(fams, labels.size());
    const auto order = canonical_order(labels);

    CanonicalInput in;
    in.labels.reserve(labels.size());
    for (std::size_t i : order) in.labels.push_back(labels[i]);
    in.fams.reserve(fams.size());
    for (const auto& f : fams) in.fams.push_back({f.model_id, take_rows(f.features, order)});
    in.y = targets_of(in.labels);

    const auto ids = doc_ids_of(in.labels);
    const auto [train_ids, val_ids] = split_80_20(in.labels, seed);
    in.train_rows = row_indices(ids, train_ids);
    in.val_rows = row_indices(ids, val_ids);
    return in;
}

struct StageOutcome {
    MlpModel model;
    TowerTrainReport report;
};

// Early stopping on the internal split, then a fresh refit of t* epochs on
// every row.
StageOutcome run_stage(const Matrix& x, const CanonicalInput& in, const TrainConfig& cfg) {
    const TrainOutcome search = train_early_stopped(
        take_rows(x, in.train_rows), take_targets(in.y, in.train_rows),
        take_rows(x, in.val_rows), take_targets(in.y, in.val_rows), cfg);
    RetrainOutcome refit = retrain_fixed_epochs(x, in.y, search.t_star, cfg);
    StageOutcome out;
    out.model = std::move(refit.model);
    out.report = {search.t_star, search.epochs_run, refit.optimizer_steps};
    return out;
}

void check_family_order(const std::vector<std::string>& expected, const FamilySet& fams) {
    if (family_ids(fams) != expected)
        throw validation_error("family order mismatch: model was trained on [" +
                               joined(expected) + "] but received [" +
                               joined(family_ids(fams)) + "]");
}

TowerPrediction prediction_of(const std::array<Matrix, kNumAspects>& logits) {
    TowerPrediction p;
    for (std::size_t a = 0; a < kNumAspects; ++a) {
        p.probs[a] = softmax_rows(logits[a]);
        p.hard[a] = argmax_rows(p.probs[a]);
    }
    return p;
}

} // namespace

TowerAOutcome train_tower_a(const FamilySet& fams, const std::vector<LabelTriplet>& labels,
                            const TrainConfig& cfg) {
    const CanonicalInput in = canonicalize(fams, labels, cfg.seed);
    const Matrix x = concat_families(in.fams);
    StageOutcome st = run_stage(x, in, cfg);
    TowerAOutcome out;
    out.model.family_order = family_ids(fams);
    out.model.mlp = std::move(st.model);
    out.report = st.report;
    return out;
}

TowerBOutcome train_tower_b(const FamilySet& fams, const std::vector<LabelTriplet>& labels,
                            const TrainConfig& cfg) {
    const CanonicalInput in = canonicalize(fams, labels, cfg.seed);
    TowerBOutcome out;
    out.model.family_order = family_ids(fams);

    std::vector<Matrix> z_blocks;
    z_blocks.reserve(in.fams.size());
    for (const auto& fam : in.fams) {
        StageOutcome st = run_stage(fam.features, in, cfg);
        z_blocks.push_back(head_logits_concat(st.model, fam.features));
        out.model.level1.push_back(std::move(st.model));
        out.level1_reports.push_back(st.report);
    }

    std::vector<const Matrix*> blocks;
    blocks.reserve(z_blocks.size());
    for (const auto& z : z_blocks) blocks.push_back(&z);
    const Matrix x2 = hcat(blocks);

    StageOutcome st = run_stage(x2, in, cfg);
    out.model.level2 = std::move(st.model);
    out.level2_report = st.report;
    return out;
}

Matrix head_logits_concat(const MlpModel& model, const Matrix& x) {
    const auto heads = model.forward_eval(x);
    return concat_aspects(heads[0], heads[1], heads[2]);
}

TowerPrediction predict_tower(const TowerAModel& model, const FamilySet& fams) {
    check_family_order(model.family_order, fams);
    const Matrix x = concat_families(fams);
    if (x.cols() != model.mlp.d_in())
        throw validation_error("tower expects input width " + std::to_string(model.mlp.d_in()) +
                               ", got " + std::to_string(x.cols()));
    return prediction_of(model.mlp.forward_eval(x));
}

TowerPrediction predict_tower(const TowerBModel& model, const FamilySet& fams) {
    check_family_order(model.family_order, fams);
    if (model.level1.size() != fams.size())
        throw validation_error("tower has " + std::to_string(model.level1.size()) +
                               " first-level models but received " +
                               std::to_string(fams.size()) + " families");
    std::vector<Matrix> z_blocks;
    z_blocks.reserve(fams.size());
    for (std::size_t i = 0; i < fams.size(); ++i) {
        if (fams[i].features.cols() != model.level1[i].d_in())
            throw validation_error("family '" + fams[i].model_id + "' has width " +
                                   std::to_string(fams[i].features.cols()) + ", expected " +
                                   std::to_string(model.level1[i].d_in()));
        z_blocks.push_back(head_logits_concat(model.level1[i], fams[i].features));
    }
    std::vector<const Matrix*> blocks;
    blocks.reserve(z_blocks.size());
    for (const auto& z : z_blocks) blocks.push_back(&z);
    const Matrix x2 = hcat(blocks);
    if (x2.cols() != model.level2.d_in())
        throw validation_error("tower expects input width " +
                               std::to_string(model.level2.d_in()) + ", got " +
                               std::to_string(x2.cols()));
    return prediction_of(model.level2.forward_eval(x2));
}

} // namespace esgstack
