#include "esgstack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "esgstack/errors.hpp"
#include "esgstack/io.hpp"

namespace esgstack {

namespace {

void check_aligned(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& gold,
                   std::size_t num_classes) {
    if (pred.size() != gold.size())
        throw validation_error("metrics: " + std::to_string(pred.size()) + " predictions vs " +
                               std::to_string(gold.size()) + " gold labels");
    if (gold.empty()) throw validation_error("metrics: empty label vectors");
    for (std::size_t v : pred)
        if (v >= num_classes) throw validation_error("metrics: prediction class out of range");
    for (std::size_t v : gold)
        if (v >= num_classes) throw validation_error("metrics: gold class out of range");
}

double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

} // namespace

double accuracy(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& gold) {
    if (pred.size() != gold.size())
        throw validation_error("metrics: " + std::to_string(pred.size()) + " predictions vs " +
                               std::to_string(gold.size()) + " gold labels");
    if (gold.empty()) throw validation_error("metrics: empty label vectors");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == gold[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double f1_macro(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& gold,
                std::size_t num_classes) {
    check_aligned(pred, gold, num_classes);
    double sum = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const bool p = pred[i] == c, g = gold[i] == c;
            tp += p && g;
            fp += p && !g;
            fn += !p && g;
        }
        const double precision = safe_ratio(tp, tp + fp);
        const double recall = safe_ratio(tp, tp + fn);
        sum += safe_ratio(2.0 * precision * recall, precision + recall);
    }
    return sum / static_cast<double>(num_classes);
}

double balanced_accuracy(const std::vector<std::size_t>& pred,
                         const std::vector<std::size_t>& gold, std::size_t num_classes) {
    check_aligned(pred, gold, num_classes);
    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        double tp = 0, fn = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (gold[i] != c) continue;
            tp += pred[i] == c;
            fn += pred[i] != c;
        }
        if (tp + fn == 0.0) continue; // class absent from gold
        ++present;
        sum += tp / (tp + fn);
    }
    return sum / static_cast<double>(present);
}

double average_precision(const std::vector<double>& scores, const std::vector<char>& positive) {
    if (scores.size() != positive.size())
        throw validation_error("average_precision: score/label length mismatch");
    if (scores.empty()) throw validation_error("average_precision: empty input");
    for (double s : scores)
        if (!std::isfinite(s)) throw numeric_error("average_precision: non-finite score");

    double pos_total = 0;
    for (char p : positive) pos_total += p != 0;
    if (pos_total == 0.0) return 0.0;

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0, tp = 0.0, fp = 0.0, prev_recall = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            tp += positive[order[j]] != 0;
            fp += positive[order[j]] == 0;
            ++j;
        }
        const double recall = tp / pos_total;
        const double precision = tp / (tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

double auprc_macro(const Matrix& scores, const std::vector<std::size_t>& gold) {
    if (scores.rows() != gold.size())
        throw validation_error("auprc: score rows and gold labels misaligned");
    if (gold.empty()) throw validation_error("auprc: empty input");
    if (scores.cols() != kNumClasses)
        throw validation_error("auprc: expected 4 score columns, got " +
                               std::to_string(scores.cols()));

    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        std::vector<double> col(gold.size());
        std::vector<char> pos(gold.size());
        bool any = false;
        for (std::size_t i = 0; i < gold.size(); ++i) {
            col[i] = scores.at(i, c);
            pos[i] = gold[i] == c;
            any = any || pos[i];
        }
        if (!any) continue;
        ++present;
        sum += average_precision(col, pos);
    }
    if (present == 0) throw validation_error("auprc: no class present in gold");
    return sum / static_cast<double>(present);
}

std::vector<std::size_t> argmax_rows(const Matrix& probs) {
    std::vector<std::size_t> out(probs.rows(), 0);
    for (std::size_t i = 0; i < probs.rows(); ++i)
        for (std::size_t c = 1; c < probs.cols(); ++c)
            if (probs.at(i, c) > probs.at(i, out[i])) out[i] = c;
    return out;
}

AspectMetrics evaluate_aspect(const Matrix& scores, const std::vector<std::size_t>& gold) {
    const auto pred = argmax_rows(scores);
    AspectMetrics m;
    m.accuracy = accuracy(pred, gold);
    m.f1_macro = f1_macro(pred, gold);
    m.bacc = balanced_accuracy(pred, gold);
    m.auprc = auprc_macro(scores, gold);
    return m;
}

std::array<SentimentClass, kNumAspects> majority_classes(
    const std::vector<LabelTriplet>& gold) {
    if (gold.empty()) throw validation_error("majority baseline: empty labels");
    std::array<SentimentClass, kNumAspects> out{};
    for (Aspect a : kAllAspects) {
        std::array<std::size_t, kNumClasses> counts{};
        for (const auto& l : gold) ++counts[static_cast<std::size_t>(l.aspect(a))];
        std::size_t best = 0;
        for (std::size_t c = 1; c < kNumClasses; ++c)
            if (counts[c] > counts[best]) best = c; // ties keep the lower index
        out[static_cast<std::size_t>(a)] = static_cast<SentimentClass>(best);
    }
    return out;
}

BaselineOutput majority_predictions(SentimentClass majority, std::size_t n) {
    if (n == 0) throw validation_error("majority baseline: empty evaluation set");
    BaselineOutput out;
    out.pred.assign(n, static_cast<std::size_t>(majority));
    out.scores = Matrix(n, kNumClasses);
    for (double& v : out.scores.data()) v = 0.25;
    return out;
}

double fleiss_kappa(const Matrix& counts) {
    const std::size_t items = counts.rows();
    const std::size_t cats = counts.cols();
    if (items == 0 || cats < 2)
        throw validation_error("fleiss_kappa: need at least 1 item and 2 categories");

    double raters = 0;
    for (std::size_t j = 0; j < cats; ++j) raters += counts.at(0, j);
    if (raters < 2) throw validation_error("fleiss_kappa: need at least 2 raters per item");
    for (std::size_t i = 0; i < items; ++i) {
        double row = 0;
        for (std::size_t j = 0; j < cats; ++j) {
            const double v = counts.at(i, j);
            if (v < 0 || v != std::floor(v))
                throw validation_error("fleiss_kappa: counts must be non-negative integers");
            row += v;
        }
        if (row != raters)
            throw validation_error("fleiss_kappa: item " + std::to_string(i) + " has " +
                                   std::to_string(row) + " ratings, expected " +
                                   std::to_string(raters));
    }

    double p_bar = 0.0;
    for (std::size_t i = 0; i < items; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < cats; ++j) sq += counts.at(i, j) * counts.at(i, j);
        p_bar += (sq - raters) / (raters * (raters - 1.0));
    }
    p_bar /= static_cast<double>(items);

    double pe = 0.0;
    for (std::size_t j = 0; j < cats; ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < items; ++i) col += counts.at(i, j);
        const double pj = col / (static_cast<double>(items) * raters);
        pe += pj * pj;
    }
    if (pe >= 1.0)
        throw validation_error(
            "fleiss_kappa: all ratings fall in one category, kappa is undefined");
    return (p_bar - pe) / (1.0 - pe);
}

Matrix agreement_counts(const std::vector<AnnotationRow>& rows, Aspect aspect) {
    std::map<std::string, std::array<double, kNumClasses>> per_item;
    for (const auto& r : rows) {
        if (r.aspect != aspect) continue;
        auto& cell = per_item[r.item_id];
        ++cell[static_cast<std::size_t>(r.label)];
    }
    if (per_item.empty())
        throw validation_error("agreement: no annotations for aspect " +
                               std::string(to_string(aspect)));
    Matrix counts(per_item.size(), kNumClasses);
    std::size_t i = 0;
    for (const auto& [item, cell] : per_item) {
        for (std::size_t c = 0; c < kNumClasses; ++c) counts.at(i, c) = cell[c];
        ++i;
    }
    return counts;
}

MeanStd aggregate_seeds(const std::vector<double>& values) {
    if (values.empty()) throw validation_error("aggregate: no values");
    MeanStd out;
    for (double v : values) out.mean += v;
    out.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double sq = 0.0;
        for (double v : values) sq += (v - out.mean) * (v - out.mean);
        out.std = std::sqrt(sq / (static_cast<double>(values.size()) - 1.0));
    }
    return out;
}

} // namespace esgstack
