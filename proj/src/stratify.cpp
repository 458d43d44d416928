#include "esgstack/stratify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "esgstack/errors.hpp"
#include "esgstack/rng.hpp"

namespace esgstack {

namespace {

constexpr std::size_t kNumIndicators = kNumAspects * kNumClasses;
constexpr double kTieTol = 1e-9;

// A part can accept another document only while strictly below its real
// capacity fraction*n; the epsilon guards against capacities like
// 0.8*440 = 352.00000000000006 admitting a 353rd document.
bool has_room(double assigned, double capacity) { return assigned + 1e-6 < capacity; }

// The greedy loop balances each label during its own round, but documents
// consumed by earlier (rarer) rounds can leave a frequent label skewed
// beyond the promised |count - fraction*total| <= num_parts. When that
// happens, swap pairs of documents between parts (first improving swap in
// index order) until every cell is back inside the bound. Swapping, rather
// than moving, keeps part sizes untouched.
void repair_swaps(const Matrix& indicators, const std::vector<double>& fractions,
                  std::vector<std::size_t>& part_of) {
    const std::size_t n = indicators.rows();
    const std::size_t num_parts = fractions.size();
    const double bound = static_cast<double>(num_parts);

    std::vector<std::vector<double>> count(num_parts, std::vector<double>(kNumIndicators, 0.0));
    std::vector<double> label_total(kNumIndicators, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = 0; l < kNumIndicators; ++l)
            if (indicators.at(i, l) != 0.0) {
                count[part_of[i]][l] += 1.0;
                label_total[l] += 1.0;
            }
    std::vector<std::vector<double>> ideal(num_parts, std::vector<double>(kNumIndicators, 0.0));
    for (std::size_t p = 0; p < num_parts; ++p)
        for (std::size_t l = 0; l < kNumIndicators; ++l)
            ideal[p][l] = fractions[p] * label_total[l];

    auto excess_sq = [&](double cnt, double idl) {
        const double e = std::max(0.0, std::abs(cnt - idl) - bound);
        return e * e;
    };
    auto total_excess = [&]() {
        double f = 0.0;
        for (std::size_t p = 0; p < num_parts; ++p)
            for (std::size_t l = 0; l < kNumIndicators; ++l)
                f += excess_sq(count[p][l], ideal[p][l]);
        return f;
    };

    double objective = total_excess();
    for (int sweep = 0; sweep < 50 && objective > 0.0; ++sweep) {
        bool improved = false;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const std::size_t p = part_of[i];
                const std::size_t q = part_of[j];
                if (p == q) continue;
                double delta = 0.0;
                for (std::size_t l = 0; l < kNumIndicators; ++l) {
                    const double di = indicators.at(i, l);
                    const double dj = indicators.at(j, l);
                    if (di == dj) continue;
                    const double shift = dj - di; // effect on part p; part q gets -shift
                    delta -= excess_sq(count[p][l], ideal[p][l]);
                    delta -= excess_sq(count[q][l], ideal[q][l]);
                    delta += excess_sq(count[p][l] + shift, ideal[p][l]);
                    delta += excess_sq(count[q][l] - shift, ideal[q][l]);
                }
                if (delta < -1e-12) {
                    for (std::size_t l = 0; l < kNumIndicators; ++l) {
                        const double di = indicators.at(i, l);
                        const double dj = indicators.at(j, l);
                        if (di == dj) continue;
                        count[p][l] += dj - di;
                        count[q][l] += di - dj;
                    }
                    std::swap(part_of[i], part_of[j]);
                    objective += delta;
                    improved = true;
                }
            }
        }
        if (!improved) break;
        objective = total_excess();
    }
}

} // namespace

Matrix one_hot_expand(const std::vector<LabelTriplet>& labels) {
    if (labels.empty()) throw validation_error("one_hot_expand: empty label list");
    Matrix m(labels.size(), kNumIndicators);
    for (std::size_t i = 0; i < labels.size(); ++i)
        for (Aspect a : kAllAspects)
            m.at(i, kNumClasses * static_cast<std::size_t>(a) +
                        static_cast<std::size_t>(labels[i].aspect(a))) = 1.0;
    return m;
}

SplitResult iterative_stratified_split(const std::vector<LabelTriplet>& labels,
                                       const SplitSpec& spec) {
    const std::size_t n = labels.size();
    const std::size_t num_parts = spec.fractions.size();
    if (n == 0) throw validation_error("stratified split: empty label list");
    if (num_parts == 0) throw validation_error("stratified split: no fractions given");
    double frac_sum = 0.0;
    for (double f : spec.fractions) {
        if (!(f > 0.0)) throw validation_error("stratified split: fractions must be positive");
        frac_sum += f;
    }
    if (std::abs(frac_sum - 1.0) > 1e-9)
        throw validation_error("stratified split: fractions must sum to 1");
    if (n < num_parts)
        throw validation_error("stratified split: fewer documents than parts");

    const Matrix indicators = one_hot_expand(labels);

    std::vector<double> capacity(num_parts);
    std::vector<std::size_t> assigned_count(num_parts, 0);
    // desire[p][l]: how many more docs carrying label l part p still wants
    std::vector<std::vector<double>> desire(num_parts,
                                            std::vector<double>(kNumIndicators, 0.0));
    std::vector<std::size_t> remaining_per_label(kNumIndicators, 0);
    for (std::size_t l = 0; l < kNumIndicators; ++l)
        for (std::size_t i = 0; i < n; ++i)
            if (indicators.at(i, l) != 0.0) ++remaining_per_label[l];
    for (std::size_t p = 0; p < num_parts; ++p) {
        capacity[p] = spec.fractions[p] * static_cast<double>(n);
        for (std::size_t l = 0; l < kNumIndicators; ++l)
            desire[p][l] = spec.fractions[p] * static_cast<double>(remaining_per_label[l]);
    }

    Rng rng(spec.seed);
    const std::vector<std::size_t> visit_order = rng.permutation(n);

    std::vector<char> unassigned(n, 1);
    std::vector<std::size_t> part_of(n, 0);
    std::size_t left = n;

    while (left > 0) {
        // rarest label still present among unassigned docs; ties -> smallest index
        std::size_t label = kNumIndicators;
        for (std::size_t l = 0; l < kNumIndicators; ++l) {
            if (remaining_per_label[l] == 0) continue;
            if (label == kNumIndicators || remaining_per_label[l] < remaining_per_label[label])
                label = l;
        }

        for (std::size_t idx : visit_order) {
            if (!unassigned[idx] || indicators.at(idx, label) == 0.0) continue;

            std::vector<std::size_t> eligible;
            for (std::size_t p = 0; p < num_parts; ++p)
                if (has_room(static_cast<double>(assigned_count[p]), capacity[p]))
                    eligible.push_back(p);
            if (eligible.empty())
                for (std::size_t p = 0; p < num_parts; ++p) eligible.push_back(p);

            double best_desire = -std::numeric_limits<double>::infinity();
            for (std::size_t p : eligible) best_desire = std::max(best_desire, desire[p][label]);
            std::vector<std::size_t> tied;
            for (std::size_t p : eligible)
                if (desire[p][label] > best_desire - kTieTol) tied.push_back(p);

            if (tied.size() > 1) {
                double best_room = -std::numeric_limits<double>::infinity();
                for (std::size_t p : tied)
                    best_room = std::max(
                        best_room, capacity[p] - static_cast<double>(assigned_count[p]));
                std::vector<std::size_t> roomiest;
                for (std::size_t p : tied)
                    if (capacity[p] - static_cast<double>(assigned_count[p]) >
                        best_room - kTieTol)
                        roomiest.push_back(p);
                tied = std::move(roomiest);
            }
            const std::size_t chosen =
                tied.size() == 1 ? tied[0] : tied[rng.below(tied.size())];

            part_of[idx] = chosen;
            unassigned[idx] = 0;
            ++assigned_count[chosen];
            --left;
            for (std::size_t l = 0; l < kNumIndicators; ++l) {
                if (indicators.at(idx, l) == 0.0) continue;
                desire[chosen][l] -= 1.0;
                --remaining_per_label[l];
            }
        }
    }

    repair_swaps(indicators, spec.fractions, part_of);

    SplitResult result;
    result.parts.resize(num_parts);
    for (std::size_t i = 0; i < n; ++i) result.parts[part_of[i]].push_back(labels[i].doc_id);
    return result;
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_80_20(
    const std::vector<LabelTriplet>& labels, std::uint64_t seed) {
    SplitSpec spec;
    spec.fractions = {0.8, 0.2};
    spec.seed = seed;
    auto result = iterative_stratified_split(labels, spec);
    return {std::move(result.parts[0]), std::move(result.parts[1])};
}

std::vector<std::size_t> row_indices(const std::vector<std::string>& all_ids,
                                     const std::vector<std::string>& subset) {
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < all_ids.size(); ++i) pos.emplace(all_ids[i], i);
    std::vector<std::size_t> out;
    out.reserve(subset.size());
    for (const auto& id : subset) {
        auto it = pos.find(id);
        if (it == pos.end()) throw validation_error("row_indices: unknown doc_id '" + id + "'");
        out.push_back(it->second);
    }
    return out;
}

} // namespace esgstack
