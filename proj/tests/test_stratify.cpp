#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "esgstack/errors.hpp"
#include "esgstack/rng.hpp"
#include "esgstack/stratify.hpp"

using namespace esgstack;

namespace {

LabelTriplet triplet(std::string id, SentimentClass e, SentimentClass s, SentimentClass g) {
    return LabelTriplet{std::move(id), e, s, g};
}

SentimentClass cls(std::size_t c) { return static_cast<SentimentClass>(c); }

// Labels with the requested per-aspect marginals; the joint distribution is
// whatever the seeded shuffles produce.
std::vector<LabelTriplet> synthetic_labels(const std::array<std::array<std::size_t, 4>, 3>& marg,
                                           std::uint64_t seed) {
    std::size_t n = 0;
    for (std::size_t c = 0; c < 4; ++c) n += marg[0][c];
    for (std::size_t a = 1; a < 3; ++a) {
        std::size_t na = 0;
        for (std::size_t c = 0; c < 4; ++c) na += marg[a][c];
        REQUIRE(na == n);
    }
    std::array<std::vector<std::size_t>, 3> cols;
    Rng rng(seed);
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t c = 0; c < 4; ++c)
            cols[a].insert(cols[a].end(), marg[a][c], c);
        rng.shuffle(cols[a]);
    }
    std::vector<LabelTriplet> labels;
    for (std::size_t i = 0; i < n; ++i) {
        std::string id = "d" + std::to_string(1000 + i);
        labels.push_back(triplet(id, cls(cols[0][i]), cls(cols[1][i]), cls(cols[2][i])));
    }
    return labels;
}

// Independent tally: docs in `part` whose aspect-a label is class c.
std::size_t count_in_part(const std::vector<LabelTriplet>& labels,
                          const std::vector<std::string>& part, std::size_t a, std::size_t c) {
    std::map<std::string, const LabelTriplet*> by_id;
    for (const auto& l : labels) by_id[l.doc_id] = &l;
    std::size_t k = 0;
    for (const auto& id : part)
        if (by_id.at(id)->aspect(static_cast<Aspect>(a)) == cls(c)) ++k;
    return k;
}

void check_partition(const std::vector<LabelTriplet>& labels, const SplitResult& result) {
    std::set<std::string> seen;
    std::size_t total = 0;
    for (const auto& part : result.parts) {
        total += part.size();
        for (const auto& id : part) CHECK(seen.insert(id).second);
    }
    CHECK(total == labels.size());
    for (const auto& l : labels) CHECK(seen.count(l.doc_id) == 1);
}

} // namespace

TEST_CASE("one hot expansion") {
    std::vector<LabelTriplet> labels = {
        triplet("a", SentimentClass::irrelevant, SentimentClass::irrelevant,
                SentimentClass::irrelevant),
        triplet("b", SentimentClass::positive, SentimentClass::negative, SentimentClass::neutral),
    };
    Matrix m = one_hot_expand(labels);
    REQUIRE(m.rows() == 2);
    REQUIRE(m.cols() == 12);
    auto ones_of = [&](std::size_t r) {
        std::vector<std::size_t> ones;
        for (std::size_t c = 0; c < 12; ++c)
            if (m.at(r, c) == 1.0) ones.push_back(c);
        return ones;
    };
    CHECK(ones_of(0) == std::vector<std::size_t>{0, 4, 8});
    CHECK(ones_of(1) == std::vector<std::size_t>{3, 5, 10});
    for (std::size_t r = 0; r < 2; ++r) {
        double sum = 0;
        for (std::size_t c = 0; c < 12; ++c) sum += m.at(r, c);
        CHECK(sum == 3.0);
    }
    CHECK_THROWS_AS(one_hot_expand({}), validation_error);
}

TEST_CASE("single stratum splits by size alone") {
    std::vector<LabelTriplet> labels;
    for (int i = 0; i < 10; ++i)
        labels.push_back(triplet("d" + std::to_string(i), SentimentClass::irrelevant,
                                 SentimentClass::irrelevant, SentimentClass::irrelevant));
    for (std::uint64_t seed : {0ULL, 100ULL, 200ULL, 7ULL}) {
        auto [train, holdout] = split_80_20(labels, seed);
        CHECK(train.size() == 8);
        CHECK(holdout.size() == 2);
        SplitResult r;
        r.parts = {train, holdout};
        check_partition(labels, r);
    }
}

TEST_CASE("two patterns twice each split into balanced halves") {
    auto run = [&](const std::vector<LabelTriplet>& labels) {
        // the only acceptable partitions put one doc of each pattern in each part
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            SplitSpec spec;
            spec.fractions = {0.5, 0.5};
            spec.seed = seed;
            auto result = iterative_stratified_split(labels, spec);
            check_partition(labels, result);
            REQUIRE(result.parts.size() == 2);
            for (const auto& part : result.parts) {
                REQUIRE(part.size() == 2);
                std::set<char> kinds;
                for (const auto& id : part) kinds.insert(id[0]);
                CHECK(kinds == std::set<char>{'A', 'B'});
            }
        }
    };
    run({triplet("A1", SentimentClass::irrelevant, SentimentClass::irrelevant,
                 SentimentClass::irrelevant),
         triplet("A2", SentimentClass::irrelevant, SentimentClass::irrelevant,
                 SentimentClass::irrelevant),
         triplet("B1", SentimentClass::positive, SentimentClass::positive,
                 SentimentClass::positive),
         triplet("B2", SentimentClass::positive, SentimentClass::positive,
                 SentimentClass::positive)});
    // patterns sharing the E label still separate cleanly
    run({triplet("A1", SentimentClass::positive, SentimentClass::negative,
                 SentimentClass::neutral),
         triplet("A2", SentimentClass::positive, SentimentClass::negative,
                 SentimentClass::neutral),
         triplet("B1", SentimentClass::positive, SentimentClass::irrelevant,
                 SentimentClass::irrelevant),
         triplet("B2", SentimentClass::positive, SentimentClass::irrelevant,
                 SentimentClass::irrelevant)});
}

TEST_CASE("440 documents with published training marginals") {
    const std::array<std::array<std::size_t, 4>, 3> marginals = {{
        {288, 41, 39, 72},
        {144, 48, 69, 179},
        {193, 78, 86, 83},
    }};
    auto labels = synthetic_labels(marginals, 42);
    REQUIRE(labels.size() == 440);

    auto [train, holdout] = split_80_20(labels, 0);
    CHECK(train.size() == 352);
    CHECK(holdout.size() == 88);
    SplitResult r;
    r.parts = {train, holdout};
    check_partition(labels, r);

    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t c = 0; c < 4; ++c) {
            const double ideal = 0.2 * static_cast<double>(marginals[a][c]);
            const double got = static_cast<double>(count_in_part(labels, holdout, a, c));
            CHECK(std::abs(got - ideal) <= 2.0);
        }

    SUBCASE("same seed reproduces, different seeds diverge") {
        auto [train2, holdout2] = split_80_20(labels, 0);
        CHECK(train2 == train);
        CHECK(holdout2 == holdout);

        auto [train3, holdout3] = split_80_20(labels, 100);
        CHECK(train3.size() == 352);
        CHECK(holdout3 != holdout);
    }
}

TEST_CASE("stratification quality over random datasets") {
    const std::vector<std::vector<double>> fraction_sets = {
        {0.8, 0.2}, {0.5, 0.5}, {0.6, 0.2, 0.2}};
    Rng gen(9001);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 17 + gen.below(234);
        std::vector<LabelTriplet> labels;
        for (std::size_t i = 0; i < n; ++i)
            labels.push_back(triplet("t" + std::to_string(i), cls(gen.below(4)),
                                     cls(gen.below(4)), cls(gen.below(4))));
        const auto& fractions = fraction_sets[trial % fraction_sets.size()];
        SplitSpec spec;
        spec.fractions = fractions;
        spec.seed = static_cast<std::uint64_t>(trial);
        auto result = iterative_stratified_split(labels, spec);
        check_partition(labels, result);

        const auto np = static_cast<double>(fractions.size());
        for (std::size_t p = 0; p < fractions.size(); ++p) {
            CHECK(std::abs(static_cast<double>(result.parts[p].size()) -
                           fractions[p] * static_cast<double>(n)) <= np);
            for (std::size_t a = 0; a < 3; ++a)
                for (std::size_t c = 0; c < 4; ++c) {
                    std::size_t global = 0;
                    for (const auto& l : labels)
                        if (l.aspect(static_cast<Aspect>(a)) == cls(c)) ++global;
                    const double ideal = fractions[p] * static_cast<double>(global);
                    const double got =
                        static_cast<double>(count_in_part(labels, result.parts[p], a, c));
                    CHECK(std::abs(got - ideal) <= np);
                }
        }
    }
}

TEST_CASE("split validation errors") {
    std::vector<LabelTriplet> labels = {
        triplet("a", SentimentClass::positive, SentimentClass::positive,
                SentimentClass::positive)};
    SplitSpec spec;
    spec.fractions = {0.8, 0.2};
    CHECK_THROWS_AS(iterative_stratified_split({}, spec), validation_error);
    CHECK_THROWS_AS(iterative_stratified_split(labels, spec), validation_error); // n < parts

    SplitSpec bad_sum;
    bad_sum.fractions = {0.8, 0.1};
    CHECK_THROWS_AS(iterative_stratified_split(labels, bad_sum), validation_error);

    SplitSpec zero_frac;
    zero_frac.fractions = {1.0, 0.0};
    CHECK_THROWS_AS(iterative_stratified_split(labels, zero_frac), validation_error);

    SplitSpec empty_frac;
    CHECK_THROWS_AS(iterative_stratified_split(labels, empty_frac), validation_error);
}

TEST_CASE("row indices lookup") {
    std::vector<std::string> ids = {"a", "b", "c", "d"};
    CHECK(row_indices(ids, {"c", "a"}) == std::vector<std::size_t>{2, 0});
    CHECK_THROWS_AS(row_indices(ids, {"zz"}), validation_error);
}
