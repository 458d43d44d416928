#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "esgstack/errors.hpp"
#include "esgstack/io.hpp"
#include "esgstack/metrics.hpp"
#include "esgstack/rng.hpp"

using namespace esgstack;

namespace {

using Labels = std::vector<std::size_t>;

// Oracle built the long way round: full confusion matrix first.
struct Confusion {
    double m[4][4] = {}; // m[gold][pred]
};

Confusion confusion_of(const Labels& pred, const Labels& gold) {
    Confusion c;
    for (std::size_t i = 0; i < pred.size(); ++i) c.m[gold[i]][pred[i]] += 1.0;
    return c;
}

double oracle_f1(const Labels& pred, const Labels& gold) {
    const Confusion cm = confusion_of(pred, gold);
    double sum = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
        const double tp = cm.m[c][c];
        double fp = 0, fn = 0;
        for (std::size_t o = 0; o < 4; ++o) {
            if (o == c) continue;
            fp += cm.m[o][c];
            fn += cm.m[c][o];
        }
        const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        sum += prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    }
    return sum / 4.0;
}

double oracle_bacc(const Labels& pred, const Labels& gold) {
    const Confusion cm = confusion_of(pred, gold);
    double sum = 0.0;
    int present = 0;
    for (std::size_t c = 0; c < 4; ++c) {
        double row = 0;
        for (std::size_t o = 0; o < 4; ++o) row += cm.m[c][o];
        if (row == 0) continue;
        ++present;
        sum += cm.m[c][c] / row;
    }
    return sum / present;
}

// Staircase AP recomputed from scratch at every distinct score threshold.
double oracle_ap(const std::vector<double>& scores, const std::vector<char>& positive) {
    double pos_total = 0;
    for (char p : positive) pos_total += p != 0;
    if (pos_total == 0) return 0.0;
    std::set<double, std::greater<double>> thresholds(scores.begin(), scores.end());
    double ap = 0.0, prev_recall = 0.0;
    for (double t : thresholds) {
        double tp = 0, fp = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] < t) continue;
            tp += positive[i] != 0;
            fp += positive[i] == 0;
        }
        const double recall = tp / pos_total;
        ap += (recall - prev_recall) * (tp / (tp + fp));
        prev_recall = recall;
    }
    return ap;
}

// Gold labels matching published per-class test counts, grouped by class.
Labels counts_to_labels(const std::array<std::size_t, 4>& counts) {
    Labels gold;
    for (std::size_t c = 0; c < 4; ++c) gold.insert(gold.end(), counts[c], c);
    return gold;
}

std::vector<Labels> all_label_vectors(std::size_t n) {
    std::vector<Labels> out;
    out.reserve(static_cast<std::size_t>(std::pow(4.0, static_cast<double>(n))));
    Labels cur(n, 0);
    while (true) {
        out.push_back(cur);
        std::size_t k = 0;
        while (k < n && cur[k] == 3) cur[k++] = 0;
        if (k == n) break;
        ++cur[k];
    }
    return out;
}

} // namespace

TEST_CASE("accuracy basics") {
    CHECK(accuracy({1, 2, 3}, {1, 2, 3}) == 1.0);
    CHECK(accuracy({1, 2, 3, 0}, {1, 2, 0, 0}) == 0.75);
    CHECK_THROWS_AS(accuracy({1}, {1, 2}), validation_error);
    CHECK_THROWS_AS(accuracy({}, {}), validation_error);
}

TEST_CASE("published majority-baseline rows reproduce from the class counts") {
    struct Row {
        std::array<std::size_t, 4> counts; // irrelevant, negative, neutral, positive
        double acc, f1;
    };
    const std::vector<Row> rows = {
        {{77, 6, 12, 15}, 0.7000, 0.2059},
        {{37, 15, 22, 36}, 0.3364, 0.1259},
        {{53, 23, 19, 15}, 0.4818, 0.1626},
    };
    for (const auto& row : rows) {
        const Labels gold = counts_to_labels(row.counts);
        REQUIRE(gold.size() == 110);

        // majority class of the evaluated labels themselves
        std::array<std::size_t, 4> tally{};
        for (auto g : gold) ++tally[g];
        std::size_t mode = 0;
        for (std::size_t c = 1; c < 4; ++c)
            if (tally[c] > tally[mode]) mode = c;

        auto base = majority_predictions(static_cast<SentimentClass>(mode), gold.size());
        CHECK(accuracy(base.pred, gold) == doctest::Approx(row.acc).epsilon(5e-5));
        CHECK(f1_macro(base.pred, gold) == doctest::Approx(row.f1).epsilon(5e-4));
        CHECK(balanced_accuracy(base.pred, gold) == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(auprc_macro(base.scores, gold) == doctest::Approx(0.25).epsilon(1e-12));

        AspectMetrics m = evaluate_aspect(base.scores, gold);
        CHECK(m.bacc == doctest::Approx(0.25));
        CHECK(m.auprc == doctest::Approx(0.25));
    }
}

TEST_CASE("majority class extraction") {
    std::vector<LabelTriplet> labels;
    // E: 3 irrelevant vs 1 positive; S: 2/2 tie between negative and neutral;
    // G: all positive
    for (int i = 0; i < 4; ++i) {
        LabelTriplet t;
        t.doc_id = "d" + std::to_string(i);
        t.e = i == 0 ? SentimentClass::positive : SentimentClass::irrelevant;
        t.s = i < 2 ? SentimentClass::negative : SentimentClass::neutral;
        t.g = SentimentClass::positive;
        labels.push_back(t);
    }
    auto cls = majority_classes(labels);
    CHECK(cls[0] == SentimentClass::irrelevant);
    CHECK(cls[1] == SentimentClass::negative); // tie resolved to the lower index
    CHECK(cls[2] == SentimentClass::positive);
    CHECK_THROWS_AS(majority_classes({}), validation_error);
    CHECK_THROWS_AS(majority_predictions(SentimentClass::positive, 0), validation_error);
}

TEST_CASE("f1 and balanced accuracy match the confusion-matrix oracle") {
    // exhaustive over every (gold, pred) pair up to n=5
    for (std::size_t n = 1; n <= 5; ++n) {
        const auto vectors = all_label_vectors(n);
        for (const auto& gold : vectors)
            for (const auto& pred : vectors) {
                const double f_mine = f1_macro(pred, gold);
                const double f_oracle = oracle_f1(pred, gold);
                if (std::abs(f_mine - f_oracle) > 1e-12) {
                    CAPTURE(n);
                    CHECK(f_mine == doctest::Approx(f_oracle).epsilon(1e-12));
                }
                const double b_mine = balanced_accuracy(pred, gold);
                const double b_oracle = oracle_bacc(pred, gold);
                if (std::abs(b_mine - b_oracle) > 1e-12) {
                    CAPTURE(n);
                    CHECK(b_mine == doctest::Approx(b_oracle).epsilon(1e-12));
                }
            }
    }
    // dense random coverage at n=6
    Rng rng(77);
    for (int trial = 0; trial < 500000; ++trial) {
        Labels gold(6), pred(6);
        for (auto& v : gold) v = rng.below(4);
        for (auto& v : pred) v = rng.below(4);
        CHECK(std::abs(f1_macro(pred, gold) - oracle_f1(pred, gold)) <= 1e-12);
        CHECK(std::abs(balanced_accuracy(pred, gold) - oracle_bacc(pred, gold)) <= 1e-12);
    }
}

TEST_CASE("f1 perfect and balanced accuracy edge cases") {
    CHECK(f1_macro({0, 1, 2, 3}, {0, 1, 2, 3}) == 1.0);
    // perfect predictions with one class absent from gold
    CHECK(balanced_accuracy({0, 1, 3, 3}, {0, 1, 3, 3}) == 1.0);
}

TEST_CASE("average precision hand cases") {
    // single positive ranked 2nd of 4
    CHECK(average_precision({0.9, 0.8, 0.7, 0.6}, {0, 1, 0, 0}) == doctest::Approx(0.5));
    // perfect ranking
    CHECK(average_precision({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}) == doctest::Approx(1.0));
    // constant scores: one tie block, AP = prevalence
    CHECK(average_precision({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == doctest::Approx(0.5));
    CHECK(average_precision({0.1, 0.1}, {0, 0}) == 0.0);
    CHECK_THROWS_AS(average_precision({0.1}, {0, 1}), validation_error);
    CHECK_THROWS_AS(average_precision({}, {}), validation_error);
    CHECK_THROWS_AS(average_precision({std::nan("")}, {1}), numeric_error);
}

TEST_CASE("average precision matches the threshold-recount oracle") {
    Rng rng(88);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.below(49);
        std::vector<double> scores(n);
        std::vector<char> pos(n);
        bool any = false;
        for (std::size_t i = 0; i < n; ++i) {
            // quantized scores force plenty of ties
            scores[i] = static_cast<double>(rng.below(8)) / 8.0;
            pos[i] = rng.uniform01() < 0.3;
            any = any || pos[i];
        }
        if (!any) pos[0] = 1;
        CHECK(average_precision(scores, pos) ==
              doctest::Approx(oracle_ap(scores, pos)).epsilon(1e-12));
    }
}

TEST_CASE("macro auprc") {
    // gold class always scored highest -> every class AP is 1
    Matrix scores(4, 4);
    Labels gold = {0, 1, 2, 3};
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t c = 0; c < 4; ++c) scores.at(i, c) = c == gold[i] ? 0.9 : 0.03;
    CHECK(auprc_macro(scores, gold) == doctest::Approx(1.0));

    // absent classes are left out of the mean
    Labels two_classes = {0, 1, 0, 1};
    Matrix flat(4, 4);
    for (double& v : flat.data()) v = 0.25;
    // both present classes have prevalence 0.5
    CHECK(auprc_macro(flat, two_classes) == doctest::Approx(0.5));

    CHECK_THROWS_AS(auprc_macro(Matrix(2, 3), {0, 1}), validation_error);
    CHECK_THROWS_AS(auprc_macro(scores, {0, 1}), validation_error);
}

TEST_CASE("metrics are permutation invariant and bounded") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 3 + rng.below(40);
        Labels gold(n), pred(n);
        Matrix scores(n, 4);
        for (std::size_t i = 0; i < n; ++i) {
            gold[i] = rng.below(4);
            pred[i] = rng.below(4);
            for (std::size_t c = 0; c < 4; ++c)
                scores.at(i, c) = static_cast<double>(rng.below(10)) / 10.0;
        }
        const double a0 = accuracy(pred, gold);
        const double f0 = f1_macro(pred, gold);
        const double b0 = balanced_accuracy(pred, gold);
        const double p0 = auprc_macro(scores, gold);
        for (double v : {a0, f0, b0, p0}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }

        const auto perm = rng.permutation(n);
        Labels gold2(n), pred2(n);
        Matrix scores2(n, 4);
        for (std::size_t i = 0; i < n; ++i) {
            gold2[i] = gold[perm[i]];
            pred2[i] = pred[perm[i]];
            for (std::size_t c = 0; c < 4; ++c) scores2.at(i, c) = scores.at(perm[i], c);
        }
        CHECK(accuracy(pred2, gold2) == a0);
        CHECK(f1_macro(pred2, gold2) == f0);
        CHECK(balanced_accuracy(pred2, gold2) == b0);
        CHECK(auprc_macro(scores2, gold2) == p0);
    }
}

TEST_CASE("row argmax ties go to the lower class") {
    Matrix p(2, 4, {0.25, 0.25, 0.25, 0.25, 0.1, 0.4, 0.4, 0.1});
    CHECK(argmax_rows(p) == Labels{0, 1});
}

TEST_CASE("fleiss kappa") {
    SUBCASE("perfect agreement across two categories") {
        Matrix t(2, 4);
        t.at(0, 1) = 3; // item 0: all three raters say class 1
        t.at(1, 3) = 3;
        CHECK(fleiss_kappa(t) == doctest::Approx(1.0));
    }
    SUBCASE("perfect disagreement") {
        Matrix t(2, 2, {1, 1, 1, 1});
        CHECK(fleiss_kappa(t) == doctest::Approx(-1.0));
    }
    SUBCASE("published fourteen-rater example") {
        const std::vector<std::vector<double>> rows = {
            {0, 0, 0, 0, 14}, {0, 2, 6, 4, 2}, {0, 0, 3, 5, 6}, {0, 3, 9, 2, 0},
            {2, 2, 8, 1, 1},  {7, 7, 0, 0, 0}, {3, 2, 6, 3, 0}, {2, 5, 3, 2, 2},
            {6, 5, 2, 1, 0},  {0, 2, 2, 3, 7}};
        Matrix t(10, 5);
        for (std::size_t i = 0; i < 10; ++i)
            for (std::size_t j = 0; j < 5; ++j) t.at(i, j) = rows[i][j];
        CHECK(fleiss_kappa(t) == doctest::Approx(0.20993).epsilon(1e-4));
    }
    SUBCASE("rejections") {
        Matrix uneven(2, 2, {2, 0, 2, 1});
        CHECK_THROWS_AS(fleiss_kappa(uneven), validation_error);
        Matrix single_rater(1, 2, {1, 0});
        CHECK_THROWS_AS(fleiss_kappa(single_rater), validation_error);
        Matrix one_category(2, 2, {3, 0, 3, 0});
        CHECK_THROWS_AS(fleiss_kappa(one_category), validation_error); // Pe == 1
        Matrix fractional(1, 2, {1.5, 0.5});
        CHECK_THROWS_AS(fleiss_kappa(fractional), validation_error);
        CHECK_THROWS_AS(fleiss_kappa(Matrix(0, 4)), validation_error);
    }
}

TEST_CASE("agreement table from annotation rows") {
    std::vector<AnnotationRow> rows;
    for (const char* item : {"i1", "i2"})
        for (const char* rater : {"r1", "r2", "r3"}) {
            AnnotationRow r;
            r.item_id = item;
            r.annotator_id = rater;
            r.aspect = Aspect::E;
            r.label = item[1] == '1' ? SentimentClass::positive : SentimentClass::negative;
            rows.push_back(r);
        }
    Matrix t = agreement_counts(rows, Aspect::E);
    REQUIRE(t.rows() == 2);
    CHECK(t.at(0, 3) == 3.0);
    CHECK(t.at(1, 1) == 3.0);
    CHECK(fleiss_kappa(t) == doctest::Approx(1.0));
    CHECK_THROWS_AS(agreement_counts(rows, Aspect::S), validation_error);
}

TEST_CASE("seed aggregation") {
    auto ms = aggregate_seeds({0.4, 0.5, 0.6});
    CHECK(ms.mean == doctest::Approx(0.5));
    CHECK(ms.std == doctest::Approx(0.1));

    ms = aggregate_seeds({0.7, 0.7, 0.7});
    CHECK(ms.mean == doctest::Approx(0.7));
    CHECK(ms.std <= 1e-12);

    ms = aggregate_seeds({0.42});
    CHECK(ms.mean == 0.42);
    CHECK(ms.std == 0.0);

    CHECK_THROWS_AS(aggregate_seeds({}), validation_error);
}
