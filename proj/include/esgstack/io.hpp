#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "esgstack/types.hpp"

namespace esgstack {

// Labels CSV: header `doc_id,E,S,G`, one row per document, class tokens
// case-insensitive. Duplicate ids, unknown tokens, and ragged rows are
// rejected.
std::vector<LabelTriplet> read_labels(const std::filesystem::path& path);
void write_labels(const std::vector<LabelTriplet>& labels, const std::filesystem::path& path);

// Predictions JSONL: one object per line,
// {"doc_id":"a1","model_id":"m","aspect":"E","probs":[p0,p1,p2,p3]}.
std::vector<AspectProbs> read_prediction_records(const std::filesystem::path& path);
void write_prediction_records(const std::vector<AspectProbs>& records,
                              const std::filesystem::path& path);

// Groups records by model_id and aligns every aspect matrix to `doc_ids`
// (the canonical label-file order). Missing (doc, aspect) pairs, unknown
// docs, and simplex violations are rejected.
std::vector<PredictionSet> group_predictions(const std::vector<AspectProbs>& records,
                                             const std::vector<std::string>& doc_ids);
std::vector<PredictionSet> read_predictions(const std::filesystem::path& path,
                                            const std::vector<std::string>& doc_ids);

std::vector<AspectProbs> prediction_records_of(const PredictionSet& set);

// Embeddings CSV: header `doc_id,f0,f1,...`; constant column count enforced.
// model_id defaults to the file stem.
EmbeddingSet read_embeddings(const std::filesystem::path& path, const std::string& model_id = "");

// Reorders an embedding set's rows to the requested doc ids; every id must be
// present, extra rows are dropped.
EmbeddingSet align_embeddings(const EmbeddingSet& emb, const std::vector<std::string>& doc_ids);

// Articles CSV: header `doc_id,company,date,E,S,G` with ISO-8601 dates.
std::vector<ArticleRecord> read_articles(const std::filesystem::path& path);

// Annotations CSV: header `item_id,annotator_id,aspect,label`.
struct AnnotationRow {
    std::string item_id;
    std::string annotator_id;
    Aspect aspect = Aspect::E;
    SentimentClass label = SentimentClass::irrelevant;
};
std::vector<AnnotationRow> read_annotations(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

} // namespace esgstack
