#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "esgstack/matrix.hpp"

namespace esgstack {

// Class index order is fixed everywhere: irrelevant, negative, neutral,
// positive. Column layouts, report tables, and tie-breaking all rely on it.
enum class SentimentClass : std::uint8_t {
    irrelevant = 0,
    negative = 1,
    neutral = 2,
    positive = 3,
};

inline constexpr std::size_t kNumClasses = 4;

// Aspect order is fixed to E, S, G in every concatenation.
enum class Aspect : std::uint8_t { E = 0, S = 1, G = 2 };

inline constexpr std::size_t kNumAspects = 3;
inline constexpr std::array<Aspect, 3> kAllAspects = {Aspect::E, Aspect::S, Aspect::G};

const char* to_string(SentimentClass c);
const char* to_string(Aspect a);

// Case-insensitive; accepts full names and the abbreviations irr/neg/neut/pos.
SentimentClass parse_sentiment(const std::string& token);
Aspect parse_aspect(const std::string& token);

// Gold (E,S,G) sentiment labels for one document.
struct LabelTriplet {
    std::string doc_id;
    SentimentClass e = SentimentClass::irrelevant;
    SentimentClass s = SentimentClass::irrelevant;
    SentimentClass g = SentimentClass::irrelevant;

    SentimentClass aspect(Aspect a) const {
        switch (a) {
            case Aspect::E: return e;
            case Aspect::S: return s;
            default: return g;
        }
    }
    bool operator==(const LabelTriplet&) const = default;
};

// One base model's 4-class distribution for one aspect of one document.
struct AspectProbs {
    std::string doc_id;
    std::string model_id;
    Aspect aspect = Aspect::E;
    std::array<double, kNumClasses> probs{};

    bool operator==(const AspectProbs&) const = default;
};

// Per-model probabilities with all three aspects aligned to one doc ordering.
struct PredictionSet {
    std::string model_id;
    std::vector<std::string> doc_ids;
    std::array<Matrix, kNumAspects> probs; // each n x 4, rows sum to 1 +- 1e-6

    bool operator==(const PredictionSet&) const = default;
};

struct EmbeddingSet {
    std::string model_id;
    std::vector<std::string> doc_ids;
    Matrix features; // n x d, d >= 1

    bool operator==(const EmbeddingSet&) const = default;
};

// A dated, company-tagged article with predicted per-aspect sentiment.
struct ArticleRecord {
    std::string doc_id;
    std::string company;
    int year = 0;
    int month = 0;
    int day = 0;
    std::array<SentimentClass, kNumAspects> sentiments{};
};

std::vector<std::string> doc_ids_of(const std::vector<LabelTriplet>& labels);

} // namespace esgstack
