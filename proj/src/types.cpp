#include "esgstack/types.hpp"

#include <algorithm>
#include <cctype>

#include "esgstack/errors.hpp"

namespace esgstack {

const char* to_string(SentimentClass c) {
    switch (c) {
        case SentimentClass::irrelevant: return "irrelevant";
        case SentimentClass::negative: return "negative";
        case SentimentClass::neutral: return "neutral";
        case SentimentClass::positive: return "positive";
    }
    return "?";
}

const char* to_string(Aspect a) {
    switch (a) {
        case Aspect::E: return "E";
        case Aspect::S: return "S";
        case Aspect::G: return "G";
    }
    return "?";
}

SentimentClass parse_sentiment(const std::string& token) {
    std::string t = token;
    std::transform(t.begin(), t.end(), t.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (t == "irrelevant" || t == "irr") return SentimentClass::irrelevant;
    if (t == "negative" || t == "neg") return SentimentClass::negative;
    if (t == "neutral" || t == "neut") return SentimentClass::neutral;
    if (t == "positive" || t == "pos") return SentimentClass::positive;
    throw validation_error("unknown sentiment label '" + token + "'");
}

Aspect parse_aspect(const std::string& token) {
    if (token == "E" || token == "e") return Aspect::E;
    if (token == "S" || token == "s") return Aspect::S;
    if (token == "G" || token == "g") return Aspect::G;
    throw validation_error("unknown aspect '" + token + "' (expected E, S, or G)");
}

std::vector<std::string> doc_ids_of(const std::vector<LabelTriplet>& labels) {
    std::vector<std::string> ids;
    ids.reserve(labels.size());
    for (const auto& l : labels) ids.push_back(l.doc_id);
    return ids;
}

} // namespace esgstack
