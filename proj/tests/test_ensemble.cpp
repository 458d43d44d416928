#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "esgstack/ensemble.hpp"
#include "esgstack/errors.hpp"
#include "esgstack/io.hpp"
#include "esgstack/metafeatures.hpp"
#include "esgstack/metrics.hpp"
#include "esgstack/rng.hpp"
#include "esgstack/stratify.hpp"

using namespace esgstack;

namespace {

std::string padded_id(std::size_t i) {
    std::string s = std::to_string(i);
    return "doc" + std::string(4 - s.size(), '0') + s;
}

std::vector<LabelTriplet> random_labels(std::size_t n, Rng& rng) {
    std::vector<LabelTriplet> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i].doc_id = padded_id(i);
        labels[i].e = static_cast<SentimentClass>(rng.below(4));
        labels[i].s = static_cast<SentimentClass>(rng.below(4));
        labels[i].g = static_cast<SentimentClass>(rng.below(4));
    }
    return labels;
}

// Block one-hot embedding: 12 informative columns (4 per aspect, scaled),
// optionally padded with low-amplitude noise columns.
EmbeddingSet separable_embeddings(const std::vector<LabelTriplet>& labels, std::size_t noise_cols,
                                  Rng& rng) {
    EmbeddingSet emb;
    emb.model_id = "toy";
    emb.doc_ids = doc_ids_of(labels);
    emb.features = Matrix(labels.size(), 12 + noise_cols);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto t = labels[i];
        emb.features.at(i, static_cast<std::size_t>(t.e)) = 10.0;
        emb.features.at(i, 4 + static_cast<std::size_t>(t.s)) = 10.0;
        emb.features.at(i, 8 + static_cast<std::size_t>(t.g)) = 10.0;
        for (std::size_t c = 0; c < 12 + noise_cols; ++c)
            emb.features.at(i, c) += 0.01 * (rng.uniform01() - 0.5);
    }
    return emb;
}

// Family whose class distribution peaks on the gold label; flip_prob moves
// the peak to a wrong class.
PredictionSet oracle_family(const std::string& id, const std::vector<LabelTriplet>& labels,
                            double top, double flip_prob, Rng& rng) {
    PredictionSet set;
    set.model_id = id;
    set.doc_ids = doc_ids_of(labels);
    const double rest = (1.0 - top) / 3.0;
    for (std::size_t a = 0; a < kNumAspects; ++a) {
        set.probs[a] = Matrix(labels.size(), kNumClasses);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            std::size_t peak = static_cast<std::size_t>(labels[i].aspect(kAllAspects[a]));
            if (flip_prob > 0 && rng.uniform01() < flip_prob)
                peak = (peak + 1 + rng.below(3)) % kNumClasses;
            for (std::size_t c = 0; c < kNumClasses; ++c)
                set.probs[a].at(i, c) = c == peak ? top : rest;
        }
    }
    return set;
}

std::vector<std::size_t> gold_of(const std::vector<LabelTriplet>& labels, std::size_t aspect) {
    std::vector<std::size_t> y(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        y[i] = static_cast<std::size_t>(labels[i].aspect(kAllAspects[aspect]));
    return y;
}

void check_simplex(const std::array<Matrix, kNumAspects>& probs) {
    for (const auto& m : probs)
        for (std::size_t i = 0; i < m.rows(); ++i) {
            double sum = 0.0;
            for (std::size_t c = 0; c < kNumClasses; ++c) {
                CHECK(m.at(i, c) >= 0.0);
                sum += m.at(i, c);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
}

} // namespace

TEST_CASE("base kind names") {
    CHECK(parse_base_kind("softmax") == BaseKind::softmax_regression);
    CHECK(parse_base_kind("knn") == BaseKind::knn);
    CHECK(to_string(BaseKind::knn) == "knn");
    CHECK(to_string(BaseKind::softmax_regression) == "softmax");
    CHECK_THROWS_AS(parse_base_kind("tabpfn"), validation_error);
}

TEST_CASE("softmax regression separates the toy embeddings") {
    Rng rng(1);
    const auto labels = random_labels(100, rng);
    const auto emb = separable_embeddings(labels, 0, rng);
    const Matrix x_fit = take_rows(emb.features, [&] {
        std::vector<std::size_t> idx(80);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        return idx;
    }());
    std::vector<LabelTriplet> fit_labels(labels.begin(), labels.begin() + 80);
    std::vector<LabelTriplet> eval_labels(labels.begin() + 80, labels.end());
    Matrix x_eval(20, emb.features.cols());
    for (std::size_t i = 0; i < 20; ++i)
        for (std::size_t c = 0; c < emb.features.cols(); ++c)
            x_eval.at(i, c) = emb.features.at(80 + i, c);

    SoftmaxRegressionBase base;
    base.fit(x_fit, targets_of(fit_labels));
    const auto probs = base.predict_proba(x_eval);
    check_simplex(probs);
    for (std::size_t a = 0; a < kNumAspects; ++a)
        CHECK(accuracy(argmax_rows(probs[a]), gold_of(eval_labels, a)) == 1.0);
}

TEST_CASE("base classifier misuse is rejected") {
    CHECK_THROWS_AS(SoftmaxRegressionBase(0), validation_error);
    CHECK_THROWS_AS(SoftmaxRegressionBase(10, -1.0), validation_error);
    CHECK_THROWS_AS(KnnBase(0), validation_error);

    SoftmaxRegressionBase unfit;
    CHECK_THROWS_AS(unfit.predict_proba(Matrix(1, 3)), validation_error);
    KnnBase unfit_knn;
    CHECK_THROWS_AS(unfit_knn.predict_proba(Matrix(1, 3)), validation_error);

    Matrix x(3, 2, {0, 0, 1, 1, 2, 2});
    Targets y;
    for (auto& a : y) a = {0, 1, 2};
    SoftmaxRegressionBase base(5);
    base.fit(x, y);
    CHECK_THROWS_AS(base.predict_proba(Matrix(1, 5)), validation_error);

    Targets short_y;
    for (auto& a : short_y) a = {0, 1};
    CHECK_THROWS_AS(base.fit(x, short_y), validation_error);
    Targets bad_class;
    for (auto& a : bad_class) a = {0, 1, 7};
    CHECK_THROWS_AS(base.fit(x, bad_class), validation_error);
}

TEST_CASE("knn frequency estimates and tie handling") {
    Matrix x(3, 1, {0.0, 1.0, 4.0});
    Targets y;
    y[0] = {0, 1, 2};
    y[1] = {3, 3, 3};
    y[2] = {1, 1, 0};

    // k larger than the fit set: every neighbour participates
    KnnBase wide(5);
    wide.fit(x, y);
    auto probs = wide.predict_proba(Matrix(1, 1, {2.0}));
    CHECK(probs[0].at(0, 0) == doctest::Approx(1.0 / 3));
    CHECK(probs[0].at(0, 1) == doctest::Approx(1.0 / 3));
    CHECK(probs[0].at(0, 2) == doctest::Approx(1.0 / 3));
    CHECK(probs[0].at(0, 3) == 0.0);
    CHECK(probs[1].at(0, 3) == doctest::Approx(1.0));

    // query at 2.0: row 1 is nearest, rows 0 and 2 tie at distance 2 and the
    // lower index wins the second slot
    KnnBase two(2);
    two.fit(x, y);
    probs = two.predict_proba(Matrix(1, 1, {2.0}));
    CHECK(probs[0].at(0, 1) == doctest::Approx(0.5));
    CHECK(probs[0].at(0, 0) == doctest::Approx(0.5));
    // rows 1 and 0 both carry label 1 for the third aspect
    CHECK(probs[2].at(0, 1) == doctest::Approx(1.0));
    check_simplex(probs);

    // exact hit still counts itself as a neighbour
    KnnBase one(1);
    one.fit(x, y);
    probs = one.predict_proba(Matrix(1, 1, {4.0}));
    CHECK(probs[0].at(0, 2) == doctest::Approx(1.0));
}

TEST_CASE("knn separates the toy embeddings") {
    Rng rng(2);
    const auto labels = random_labels(90, rng);
    const auto emb = separable_embeddings(labels, 0, rng);
    KnnBase base;
    base.fit(emb.features, targets_of(labels));
    const auto probs = base.predict_proba(emb.features);
    check_simplex(probs);
    for (std::size_t a = 0; a < kNumAspects; ++a) {
        const auto pred = argmax_rows(probs[a]);
        CHECK(accuracy(pred, gold_of(labels, a)) >= 0.9);
    }
}

TEST_CASE("svd dimension selection") {
    Rng rng(3);
    SUBCASE("narrow embeddings leave no feasible candidate") {
        const auto labels = random_labels(100, rng);
        auto emb = separable_embeddings(labels, 4, rng); // d = 16
        CHECK_THROWS_AS(select_svd_dim(emb, labels, BaseKind::softmax_regression, 0),
                        validation_error);
    }
    SUBCASE("signal in the leading directions ties toward the smallest dimension") {
        const auto labels = random_labels(200, rng);
        const auto emb = separable_embeddings(labels, 58, rng); // d = 70
        const auto sel = select_svd_dim(emb, labels, BaseKind::softmax_regression, 0);
        REQUIRE(sel.candidates == std::vector<std::size_t>{32, 64});
        REQUIRE(sel.scores.size() == 2);
        CHECK(sel.chosen == 32);
        const double best = *std::max_element(sel.scores.begin(), sel.scores.end());
        CHECK(sel.scores[0] == doctest::Approx(best));
        CHECK(sel.scores[0] >= 0.95);

        const auto again = select_svd_dim(emb, labels, BaseKind::softmax_regression, 0);
        CHECK(again == sel);
    }
    SUBCASE("candidates clip to the factorizable size") {
        const auto labels = random_labels(40, rng); // internal fit side has 32 rows
        const auto emb = separable_embeddings(labels, 52, rng); // d = 64
        const auto sel = select_svd_dim(emb, labels, BaseKind::knn, 7);
        CHECK(sel.candidates == std::vector<std::size_t>{32});
        CHECK(sel.chosen == 32);
    }
    SUBCASE("too few documents") {
        const auto labels = random_labels(9, rng);
        const auto emb = separable_embeddings(labels, 52, rng);
        CHECK_THROWS_AS(select_svd_dim(emb, labels, BaseKind::knn, 0), validation_error);
    }
}

TEST_CASE("family fitting") {
    Rng rng(4);
    auto labels = random_labels(280, rng);
    const auto emb = separable_embeddings(labels, 58, rng); // d = 70
    const std::vector<LabelTriplet> labels_80(labels.begin(), labels.begin() + 200);
    const std::vector<LabelTriplet> labels_20(labels.begin() + 200, labels.begin() + 240);
    const std::vector<LabelTriplet> labels_test(labels.begin() + 240, labels.end());
    const auto docs_20 = doc_ids_of(labels_20);
    const auto docs_test = doc_ids_of(labels_test);

    SUBCASE("leakage guard") {
        auto overlapping = docs_20;
        overlapping.push_back(labels_80.front().doc_id);
        CHECK_THROWS_WITH_AS(
            fit_base_family("fam", emb, labels_80, overlapping, docs_test, false,
                            BaseKind::softmax_regression, 0),
            doctest::Contains(labels_80.front().doc_id.c_str()), validation_error);
    }
    SUBCASE("plain fit predicts the held-out partitions") {
        const auto out = fit_base_family("fam", emb, labels_80, docs_20, docs_test, false,
                                         BaseKind::softmax_regression, 0);
        CHECK(!out.svd.has_value());
        CHECK(out.on_meta.model_id == "fam");
        CHECK(out.on_meta.doc_ids == docs_20);
        CHECK(out.on_test.doc_ids == docs_test);
        check_simplex(out.on_meta.probs);
        for (std::size_t a = 0; a < kNumAspects; ++a) {
            CHECK(accuracy(argmax_rows(out.on_meta.probs[a]), gold_of(labels_20, a)) == 1.0);
            CHECK(accuracy(argmax_rows(out.on_test.probs[a]), gold_of(labels_test, a)) == 1.0);
        }
    }
    SUBCASE("svd reduction keeps the signal") {
        const auto out = fit_base_family("fam", emb, labels_80, docs_20, docs_test, true,
                                         BaseKind::softmax_regression, 0);
        REQUIRE(out.svd.has_value());
        CHECK(out.svd->chosen == 32);
        for (std::size_t a = 0; a < kNumAspects; ++a)
            CHECK(accuracy(argmax_rows(out.on_meta.probs[a]), gold_of(labels_20, a)) >= 0.95);
    }
    SUBCASE("external records pass through aligned") {
        Rng noise(5);
        auto set = oracle_family("ext", labels, 0.7, 0.0, noise);
        auto records = prediction_records_of(set);
        // a second family in the same file must not interfere
        auto other = oracle_family("other", labels_20, 0.7, 0.0, noise);
        for (const auto& r : prediction_records_of(other)) records.push_back(r);

        const auto out = external_family("ext", records, docs_20, docs_test);
        CHECK(out.on_meta.model_id == "ext");
        CHECK(out.on_meta.doc_ids == docs_20);
        CHECK(out.on_test.doc_ids == docs_test);
        // row for the first meta doc matches the source set
        const std::size_t src = 200;
        for (std::size_t c = 0; c < kNumClasses; ++c)
            CHECK(out.on_meta.probs[0].at(0, c) == set.probs[0].at(src, c));

        CHECK_THROWS_AS(external_family("absent", records, docs_20, docs_test),
                        validation_error);
    }
}

TEST_CASE("head logits concatenate in aspect order") {
    Rng rng(6);
    MlpModel model(12, rng);
    Matrix x(5, 12);
    for (double& v : x.data()) v = rng.uniform01();
    const Matrix z = head_logits_concat(model, x);
    REQUIRE(z.rows() == 5);
    REQUIRE(z.cols() == 12);
    const auto heads = model.forward_eval(x);
    for (std::size_t a = 0; a < kNumAspects; ++a)
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t c = 0; c < kNumClasses; ++c)
                CHECK(z.at(i, 4 * a + c) == heads[a].at(i, c));
}

TEST_CASE("tower a learns from an oracle family") {
    Rng rng(7);
    const auto train_labels = random_labels(240, rng);
    std::vector<LabelTriplet> test_labels(60);
    for (std::size_t i = 0; i < 60; ++i) {
        test_labels[i].doc_id = padded_id(1000 + i);
        test_labels[i].e = static_cast<SentimentClass>(rng.below(4));
        test_labels[i].s = static_cast<SentimentClass>(rng.below(4));
        test_labels[i].g = static_cast<SentimentClass>(rng.below(4));
    }
    Rng noise(8);
    const FamilySet train_fams = {
        meta_features_of(oracle_family("main", train_labels, 0.91, 0.0, noise))};
    const FamilySet test_fams = {
        meta_features_of(oracle_family("main", test_labels, 0.91, 0.0, noise))};

    TrainConfig cfg;
    cfg.seed = 0;
    const auto outcome = train_tower_a(train_fams, train_labels, cfg);
    CHECK(outcome.model.family_order == std::vector<std::string>{"main"});
    CHECK(outcome.model.mlp.d_in() == 12);
    CHECK(outcome.report.t_star >= 1);
    // 240 rows in batches of 64 gives 4 refit steps per epoch
    CHECK(outcome.report.retrain_steps == outcome.report.t_star * 4);

    const auto pred = predict_tower(outcome.model, test_fams);
    check_simplex(pred.probs);
    for (std::size_t a = 0; a < kNumAspects; ++a)
        CHECK(accuracy(pred.hard[a], gold_of(test_labels, a)) >= 0.95);
}

TEST_CASE("tower training is deterministic and row-order invariant") {
    Rng rng(9);
    const auto labels = random_labels(120, rng);
    Rng noise(10);
    const FamilySet fams = {meta_features_of(oracle_family("m", labels, 0.8, 0.1, noise))};

    TrainConfig cfg;
    cfg.seed = 100;
    const auto first = train_tower_a(fams, labels, cfg);
    const auto second = train_tower_a(fams, labels, cfg);
    CHECK(first.model.mlp == second.model.mlp);
    CHECK(first.report.t_star == second.report.t_star);

    // joint row permutation leaves the trained model untouched
    const auto perm = rng.permutation(labels.size());
    std::vector<LabelTriplet> labels_p(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels_p[i] = labels[perm[i]];
    const FamilySet fams_p = {{"m", take_rows(fams[0].features, perm)}};
    const auto shuffled = train_tower_a(fams_p, labels_p, cfg);
    CHECK(shuffled.model.mlp == first.model.mlp);

    cfg.seed = 200;
    const auto reseeded = train_tower_a(fams, labels, cfg);
    CHECK(reseeded.model.mlp.params.w1.data() != first.model.mlp.params.w1.data());
}

TEST_CASE("tower b learns from an oracle family") {
    Rng rng(11);
    const auto train_labels = random_labels(240, rng);
    std::vector<LabelTriplet> test_labels(60);
    for (std::size_t i = 0; i < 60; ++i) {
        test_labels[i].doc_id = padded_id(2000 + i);
        test_labels[i].e = static_cast<SentimentClass>(rng.below(4));
        test_labels[i].s = static_cast<SentimentClass>(rng.below(4));
        test_labels[i].g = static_cast<SentimentClass>(rng.below(4));
    }
    Rng noise(12);
    const FamilySet train_fams = {
        meta_features_of(oracle_family("main", train_labels, 0.91, 0.0, noise))};
    const FamilySet test_fams = {
        meta_features_of(oracle_family("main", test_labels, 0.91, 0.0, noise))};

    TrainConfig cfg;
    cfg.seed = 0;
    const auto outcome = train_tower_b(train_fams, train_labels, cfg);
    REQUIRE(outcome.model.level1.size() == 1);
    CHECK(outcome.model.level1[0].d_in() == 12);
    CHECK(outcome.model.level2.d_in() == 12); // 12k with k = 1
    REQUIRE(outcome.level1_reports.size() == 1);
    CHECK(outcome.level1_reports[0].t_star >= 1);
    CHECK(outcome.level2_report.t_star >= 1);

    const auto pred = predict_tower(outcome.model, test_fams);
    check_simplex(pred.probs);
    for (std::size_t a = 0; a < kNumAspects; ++a) {
        CHECK(pred.probs[a].rows() == 60);
        CHECK(accuracy(pred.hard[a], gold_of(test_labels, a)) >= 0.95);
    }
}

TEST_CASE("duplicating a family does not wreck tower a") {
    Rng rng(13);
    const auto train_labels = random_labels(160, rng);
    std::vector<LabelTriplet> test_labels(60);
    for (std::size_t i = 0; i < 60; ++i) {
        test_labels[i].doc_id = padded_id(3000 + i);
        test_labels[i].e = static_cast<SentimentClass>(rng.below(4));
        test_labels[i].s = static_cast<SentimentClass>(rng.below(4));
        test_labels[i].g = static_cast<SentimentClass>(rng.below(4));
    }
    Rng noise(14);
    const auto train_set = oracle_family("a", train_labels, 0.6, 0.2, noise);
    const auto test_set = oracle_family("a", test_labels, 0.6, 0.2, noise);
    auto train_dup = train_set;
    train_dup.model_id = "b";
    auto test_dup = test_set;
    test_dup.model_id = "b";

    TrainConfig cfg;
    cfg.seed = 0;
    const FamilySet one = {meta_features_of(train_set)};
    const FamilySet two = {meta_features_of(train_set), meta_features_of(train_dup)};
    const auto single = train_tower_a(one, train_labels, cfg);
    const auto doubled = train_tower_a(two, train_labels, cfg);
    CHECK(doubled.model.mlp.d_in() == 24);

    const FamilySet one_test = {meta_features_of(test_set)};
    const FamilySet two_test = {meta_features_of(test_set), meta_features_of(test_dup)};
    double f1_single = 0.0, f1_double = 0.0;
    const auto p1 = predict_tower(single.model, one_test);
    const auto p2 = predict_tower(doubled.model, two_test);
    for (std::size_t a = 0; a < kNumAspects; ++a) {
        f1_single += f1_macro(p1.hard[a], gold_of(test_labels, a));
        f1_double += f1_macro(p2.hard[a], gold_of(test_labels, a));
    }
    CHECK(f1_double / 3.0 >= f1_single / 3.0 - 0.05);
}

TEST_CASE("prediction guards") {
    Rng rng(15);
    const auto labels = random_labels(80, rng);
    Rng noise(16);
    const auto set_a = oracle_family("a", labels, 0.9, 0.0, noise);
    auto set_b = set_a;
    set_b.model_id = "b";
    const FamilySet fams = {meta_features_of(set_a), meta_features_of(set_b)};

    TrainConfig cfg;
    cfg.seed = 0;
    cfg.max_epochs = 3;
    cfg.patience = 2;
    const auto a = train_tower_a(fams, labels, cfg);
    const auto b = train_tower_b(fams, labels, cfg);

    const FamilySet swapped = {fams[1], fams[0]};
    CHECK_THROWS_AS(predict_tower(a.model, swapped), validation_error);
    CHECK_THROWS_AS(predict_tower(b.model, swapped), validation_error);
    const FamilySet missing = {fams[0]};
    CHECK_THROWS_AS(predict_tower(a.model, missing), validation_error);
    CHECK_THROWS_AS(predict_tower(b.model, missing), validation_error);
}

TEST_CASE("zeroed tower resolves symmetric logits to the first class") {
    Rng rng(17);
    TowerAModel model;
    model.family_order = {"m"};
    model.mlp = MlpModel(12, rng);
    for (auto block : model.mlp.params.blocks())
        for (double& v : block) v = 0.0;

    const auto labels = random_labels(6, rng);
    Rng noise(18);
    const FamilySet fams = {meta_features_of(oracle_family("m", labels, 0.9, 0.0, noise))};
    const auto pred = predict_tower(model, fams);
    for (std::size_t a = 0; a < kNumAspects; ++a)
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(pred.hard[a][i] == 0);
            CHECK(pred.probs[a].at(i, 2) == doctest::Approx(0.25));
        }
}

TEST_CASE("tower input validation") {
    Rng rng(19);
    auto labels = random_labels(40, rng);
    Rng noise(20);
    const auto set = oracle_family("m", labels, 0.9, 0.0, noise);
    const FamilySet fams = {meta_features_of(set)};
    TrainConfig cfg;
    cfg.seed = 0;
    cfg.max_epochs = 2;
    cfg.patience = 1;

    CHECK_THROWS_AS(train_tower_a({}, labels, cfg), validation_error);
    CHECK_THROWS_AS(train_tower_a(fams, {}, cfg), validation_error);

    FamilySet dup = {fams[0], fams[0]};
    CHECK_THROWS_AS(train_tower_a(dup, labels, cfg), validation_error);

    FamilySet narrow = {{"m", Matrix(labels.size(), 7)}};
    CHECK_THROWS_AS(train_tower_a(narrow, labels, cfg), validation_error);

    FamilySet short_rows = {{"m", Matrix(labels.size() - 1, 12)}};
    CHECK_THROWS_AS(train_tower_a(short_rows, labels, cfg), validation_error);

    auto dup_docs = labels;
    dup_docs[1].doc_id = dup_docs[0].doc_id;
    CHECK_THROWS_AS(train_tower_a(fams, dup_docs, cfg), validation_error);
}
