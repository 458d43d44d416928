#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "esgstack/matrix.hpp"
#include "esgstack/types.hpp"

namespace esgstack {

struct SplitSpec {
    std::vector<double> fractions; // each > 0, summing to 1 within 1e-9
    std::uint64_t seed = 0;
};

struct SplitResult {
    std::vector<std::vector<std::string>> parts; // disjoint, exhaustive, input order kept
};

// n x 12 binary indicator matrix; column 4*aspect + class. Every row has
// exactly three ones, one per aspect.
Matrix one_hot_expand(const std::vector<LabelTriplet>& labels);

// Greedy iterative stratification over the 12 indicator labels. Documents
// are visited in a seed-shuffled order, rarest remaining label first; each
// document goes to the under-capacity part with the greatest remaining
// desire for that label (ties: larger remaining capacity, then seeded RNG).
// The shuffle makes distinct seeds produce distinct splits even when the
// desire arithmetic alone never ties.
SplitResult iterative_stratified_split(const std::vector<LabelTriplet>& labels,
                                       const SplitSpec& spec);

// fractions [0.8, 0.2]; returns (train_ids, holdout_ids).
std::pair<std::vector<std::string>, std::vector<std::string>> split_80_20(
    const std::vector<LabelTriplet>& labels, std::uint64_t seed);

// Positions of `subset` ids within `all_ids`; every id must be present.
std::vector<std::size_t> row_indices(const std::vector<std::string>& all_ids,
                                     const std::vector<std::string>& subset);

} // namespace esgstack
