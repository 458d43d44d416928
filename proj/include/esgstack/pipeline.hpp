#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "esgstack/ensemble.hpp"
#include "esgstack/io.hpp"
#include "esgstack/metrics.hpp"
#include "esgstack/neural.hpp"
#include "esgstack/stratify.hpp"
#include "esgstack/types.hpp"

namespace esgstack {

// Verbosity set through the ESGSTACK_LOG environment variable
// (quiet | info | debug, or 0 | 1 | 2; default quiet). Messages go to
// stderr so machine-readable stdout stays clean.
enum class LogLevel { quiet = 0, info = 1, debug = 2 };
LogLevel log_level();
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

inline constexpr const char* kConfigFormat = "esgstack-config/1";
inline constexpr const char* kSplitsFormat = "esgstack-splits/1";
inline constexpr const char* kReportFormat = "esgstack-report/1";

struct FamilyConfig {
    std::string id;
    bool external = false;  // prediction file instead of embeddings
    std::filesystem::path path;
    bool use_svd = false;
    BaseKind base = BaseKind::softmax_regression;

    bool operator==(const FamilyConfig&) const = default;
};

struct PipelineConfig {
    std::filesystem::path train_labels;
    std::filesystem::path test_labels;
    std::filesystem::path output_dir = "out";
    std::vector<std::uint64_t> seeds = {0, 100, 200};
    std::string towers = "AB";  // non-empty subset of "AB"
    TrainConfig train;          // .seed is overwritten per run
    std::vector<FamilyConfig> families;

    bool operator==(const PipelineConfig&) const = default;
};

// Strict parse of the versioned JSON document: wrong format tag, unknown
// keys at any level, and out-of-range values are all rejected.
PipelineConfig parse_config(const std::string& json_text);

struct LoadedConfig {
    PipelineConfig config;
    std::string raw;  // exact file bytes, hashed into the report
};

// Reads and parses; input paths are resolved relative to the config file.
LoadedConfig load_config(const std::filesystem::path& path);

// Structural checks plus existence of every referenced input file.
void validate_config(const PipelineConfig& cfg);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

std::string splits_json(const SplitResult& split, const std::vector<double>& fractions,
                        std::uint64_t seed);
SplitResult parse_splits_json(const std::string& text);

struct EvalRow {
    std::string model_id;
    Aspect aspect = Aspect::E;
    AspectMetrics metrics;
};

std::vector<EvalRow> evaluate_sets(const std::vector<PredictionSet>& sets,
                                   const std::vector<LabelTriplet>& gold);

// Prediction input is either a JSONL probability file or a hard-label CSV
// (rows become one-hot scores); both are aligned to the gold documents.
std::vector<EvalRow> evaluate_file(const std::filesystem::path& pred_path,
                                   const std::filesystem::path& gold_path);

std::string eval_rows_text(const std::vector<EvalRow>& rows);

struct BaselineReport {
    std::array<SentimentClass, kNumAspects> majority{};
    std::array<AspectMetrics, kNumAspects> metrics{};
};

// Majority-class predictor derived from and scored on the same labels.
BaselineReport majority_baseline(const std::vector<LabelTriplet>& gold);

struct AspectAgreement {
    double kappa = 0.0;
    std::size_t raters = 0;        // ratings per item in the balanced subset
    std::size_t items_used = 0;
    std::size_t items_skipped = 0; // under two ratings or off the modal count
    std::array<std::size_t, kNumClasses> label_counts{};
};

struct AgreementReport {
    std::array<AspectAgreement, kNumAspects> aspects;
};

// Kappa per aspect over the balanced subset: items with fewer than two
// ratings are dropped, then only items matching the modal rating count are
// kept (ties prefer the larger count).
AgreementReport agreement_report(const std::vector<AnnotationRow>& rows);
std::string agreement_counts_csv(const AgreementReport& report);

struct TimelineYear {
    int year = 0;
    std::array<std::size_t, kNumClasses> counts{};  // by sentiment class
    long long net = 0;                              // positive minus negative
    double normalized = 0.0;                        // net / max(1, relevant)
};

struct TimelineSeries {
    std::string company;
    Aspect aspect = Aspect::E;
    std::vector<TimelineYear> years;  // contiguous over the selected span
};

std::vector<TimelineSeries> build_timeline(const std::vector<ArticleRecord>& articles,
                                           const std::string& company = "",
                                           std::optional<int> year_from = {},
                                           std::optional<int> year_to = {});

struct SummaryRow {
    std::string company;
    Aspect aspect = Aspect::E;
    std::size_t total = 0;
    std::size_t relevant = 0;  // positive + negative + neutral
    std::size_t positive = 0, negative = 0, neutral = 0, irrelevant = 0;
};

std::vector<SummaryRow> summarize_articles(const std::vector<ArticleRecord>& articles);

std::string timeline_csv(const std::vector<TimelineSeries>& series);
std::string summary_csv(const std::vector<SummaryRow>& rows);

struct TowerSeedResult {
    char tower = 'A';
    std::array<AspectMetrics, kNumAspects> metrics{};
    TowerTrainReport report;                       // tower A, or tower B level 2
    std::vector<TowerTrainReport> level1_reports;  // tower B only
};

struct SeedResult {
    std::uint64_t seed = 0;
    std::size_t n80 = 0, n20 = 0;
    std::vector<std::pair<std::string, std::optional<std::size_t>>> family_svd;
    std::vector<TowerSeedResult> towers;
};

struct PipelineResult {
    std::string report_json;  // also written to <output_dir>/report.json
    std::vector<SeedResult> seeds;
};

// The full three-stage protocol per seed (split, base families, towers),
// then cross-seed aggregation. Per-seed work runs on up to `jobs` threads;
// artifacts are seed-namespaced and byte-stable across reruns. On failure a
// FAILED marker naming the seed and stage is left in the output directory.
PipelineResult run_pipeline(const LoadedConfig& loaded, std::size_t jobs = 1);

} // namespace esgstack
