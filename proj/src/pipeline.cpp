#include "esgstack/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <climits>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "esgstack/errors.hpp"
#include "esgstack/metafeatures.hpp"
#include "json.hpp"

namespace esgstack {

using nlohmann::json;

namespace {

LogLevel parse_log_level() {
    const char* raw = std::getenv("ESGSTACK_LOG");
    if (raw == nullptr) return LogLevel::quiet;
    const std::string v(raw);
    if (v == "quiet" || v == "0" || v.empty()) return LogLevel::quiet;
    if (v == "info" || v == "1") return LogLevel::info;
    if (v == "debug" || v == "2") return LogLevel::debug;
    return LogLevel::info;  // any other value: be chatty rather than silent
}

std::mutex& log_mutex() {
    static std::mutex m;
    return m;
}

void log_at(LogLevel level, const std::string& msg) {
    if (static_cast<int>(log_level()) < static_cast<int>(level)) return;
    const std::lock_guard<std::mutex> lock(log_mutex());
    std::cerr << "[esgstack] " << msg << "\n";
}

json parse_json_text(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw validation_error(what + ": " + e.what());
    }
}

void check_keys(const json& obj, const std::vector<std::string>& allowed,
                const std::string& ctx) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw validation_error(ctx + ": unknown key '" + it.key() + "'");
}

const json& require_key(const json& obj, const char* key, const std::string& ctx) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw validation_error(ctx + ": missing key '" + key + "'");
    return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& ctx) {
    const json& v = require_key(obj, key, ctx);
    if (!v.is_string() || v.get<std::string>().empty())
        throw validation_error(ctx + ": '" + key + "' must be a non-empty string");
    return v.get<std::string>();
}

std::size_t require_count(const json& v, const char* key, const std::string& ctx) {
    if (!v.is_number_unsigned())
        throw validation_error(ctx + ": '" + key + "' must be a non-negative integer");
    return v.get<std::size_t>();
}

std::string format4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string format6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

} // namespace

LogLevel log_level() {
    static const LogLevel level = parse_log_level();
    return level;
}

void log_info(const std::string& msg) { log_at(LogLevel::info, msg); }
void log_debug(const std::string& msg) { log_at(LogLevel::debug, msg); }

PipelineConfig parse_config(const std::string& json_text) {
    const json j = parse_json_text(json_text, "config");
    if (!j.is_object()) throw validation_error("config: top level must be a JSON object");
    const std::string format = require_string(j, "format", "config");
    if (format != kConfigFormat)
        throw validation_error("config: unsupported format '" + format + "', expected '" +
                               kConfigFormat + "'");
    check_keys(j,
               {"format", "train_labels", "test_labels", "output_dir", "seeds", "towers",
                "train", "families"},
               "config");

    PipelineConfig cfg;
    cfg.train_labels = require_string(j, "train_labels", "config");
    cfg.test_labels = require_string(j, "test_labels", "config");
    if (j.contains("output_dir")) cfg.output_dir = require_string(j, "output_dir", "config");

    if (j.contains("seeds")) {
        const json& seeds = j["seeds"];
        if (!seeds.is_array() || seeds.empty())
            throw validation_error("config: 'seeds' must be a non-empty array");
        cfg.seeds.clear();
        for (const json& s : seeds)
            cfg.seeds.push_back(require_count(s, "seeds", "config"));
        std::unordered_set<std::uint64_t> unique(cfg.seeds.begin(), cfg.seeds.end());
        if (unique.size() != cfg.seeds.size())
            throw validation_error("config: 'seeds' must be distinct");
    }

    if (j.contains("towers")) {
        const json& towers = j["towers"];
        if (!towers.is_array() || towers.empty())
            throw validation_error("config: 'towers' must be a non-empty array");
        bool a = false, b = false;
        for (const json& t : towers) {
            const std::string name = t.is_string() ? t.get<std::string>() : "";
            if (name == "A" && !a)
                a = true;
            else if (name == "B" && !b)
                b = true;
            else
                throw validation_error("config: 'towers' entries must be 'A' and/or 'B', "
                                       "each at most once");
        }
        cfg.towers = a && b ? "AB" : (a ? "A" : "B");
    }

    if (j.contains("train")) {
        const json& t = j["train"];
        if (!t.is_object()) throw validation_error("config: 'train' must be an object");
        check_keys(t, {"batch_size", "max_epochs", "patience"}, "config train block");
        if (t.contains("batch_size"))
            cfg.train.batch_size = require_count(t["batch_size"], "batch_size", "config");
        if (t.contains("max_epochs"))
            cfg.train.max_epochs = require_count(t["max_epochs"], "max_epochs", "config");
        if (t.contains("patience"))
            cfg.train.patience = require_count(t["patience"], "patience", "config");
    }

    const json& families = require_key(j, "families", "config");
    if (!families.is_array() || families.empty())
        throw validation_error("config: 'families' must be a non-empty array");
    for (const json& f : families) {
        if (!f.is_object()) throw validation_error("config: family entries must be objects");
        FamilyConfig fam;
        fam.id = require_string(f, "id", "config family");
        const std::string ctx = "config family '" + fam.id + "'";
        const std::string source = require_string(f, "source", ctx);
        fam.path = require_string(f, "path", ctx);
        if (source == "external") {
            fam.external = true;
            check_keys(f, {"id", "source", "path"}, ctx);
        } else if (source == "embedding") {
            check_keys(f, {"id", "source", "path", "use_svd", "base"}, ctx);
            if (f.contains("use_svd")) {
                if (!f["use_svd"].is_boolean())
                    throw validation_error(ctx + ": 'use_svd' must be a boolean");
                fam.use_svd = f["use_svd"].get<bool>();
            }
            if (f.contains("base")) {
                if (!f["base"].is_string())
                    throw validation_error(ctx + ": 'base' must be a string");
                fam.base = parse_base_kind(f["base"].get<std::string>());
            }
        } else {
            throw validation_error(ctx + ": source must be 'external' or 'embedding', got '" +
                                   source + "'");
        }
        cfg.families.push_back(std::move(fam));
    }
    return cfg;
}

LoadedConfig load_config(const std::filesystem::path& path) {
    LoadedConfig loaded;
    loaded.raw = read_text_file(path);
    loaded.config = parse_config(loaded.raw);

    const auto base = path.parent_path();
    const auto resolve = [&](std::filesystem::path& p) {
        if (p.is_relative()) p = base / p;
    };
    resolve(loaded.config.train_labels);
    resolve(loaded.config.test_labels);
    for (auto& fam : loaded.config.families) resolve(fam.path);

    validate_config(loaded.config);
    return loaded;
}

void validate_config(const PipelineConfig& cfg) {
    if (cfg.seeds.empty()) throw validation_error("config: 'seeds' must be non-empty");
    std::unordered_set<std::uint64_t> unique(cfg.seeds.begin(), cfg.seeds.end());
    if (unique.size() != cfg.seeds.size())
        throw validation_error("config: 'seeds' must be distinct");
    if (cfg.towers.empty() || (cfg.towers != "A" && cfg.towers != "B" && cfg.towers != "AB"))
        throw validation_error("config: towers must be 'A', 'B', or both");
    if (cfg.train.batch_size < 2)
        throw validation_error("config: batch_size must be at least 2");
    if (cfg.train.max_epochs < 1 || cfg.train.patience < 1)
        throw validation_error("config: max_epochs and patience must be at least 1");
    if (cfg.families.empty()) throw validation_error("config: at least one family is required");

    std::unordered_set<std::string> ids;
    for (const auto& fam : cfg.families)
        if (!ids.insert(fam.id).second)
            throw validation_error("config: duplicate family id '" + fam.id + "'");

    const auto must_exist = [](const std::filesystem::path& p, const std::string& what) {
        if (p.empty()) throw validation_error("config: " + what + " path is empty");
        if (!std::filesystem::exists(p))
            throw validation_error("config: " + what + " file '" + p.string() +
                                   "' does not exist");
    };
    must_exist(cfg.train_labels, "train_labels");
    must_exist(cfg.test_labels, "test_labels");
    for (const auto& fam : cfg.families) must_exist(fam.path, "family '" + fam.id + "'");
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ull;
    }
    return hash;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::string splits_json(const SplitResult& split, const std::vector<double>& fractions,
                        std::uint64_t seed) {
    json j;
    j["format"] = kSplitsFormat;
    j["seed"] = seed;
    j["fractions"] = fractions;
    j["parts"] = split.parts;
    return j.dump(2) + "\n";
}

SplitResult parse_splits_json(const std::string& text) {
    const json j = parse_json_text(text, "splits");
    if (!j.is_object() || !j.contains("format") || j["format"] != kSplitsFormat)
        throw validation_error("splits: missing or unsupported format tag");
    const json& parts = require_key(j, "parts", "splits");
    if (!parts.is_array() || parts.empty())
        throw validation_error("splits: 'parts' must be a non-empty array");
    SplitResult out;
    for (const json& part : parts) {
        if (!part.is_array()) throw validation_error("splits: each part must be an array");
        std::vector<std::string> ids;
        for (const json& id : part) {
            if (!id.is_string()) throw validation_error("splits: doc ids must be strings");
            ids.push_back(id.get<std::string>());
        }
        out.parts.push_back(std::move(ids));
    }
    return out;
}

std::vector<EvalRow> evaluate_sets(const std::vector<PredictionSet>& sets,
                                   const std::vector<LabelTriplet>& gold) {
    if (gold.empty()) throw validation_error("evaluation needs at least one gold label");
    const auto ids = doc_ids_of(gold);
    const Targets y = targets_of(gold);
    std::vector<EvalRow> rows;
    for (const auto& set : sets) {
        if (set.doc_ids != ids)
            throw validation_error("prediction set '" + set.model_id +
                                   "' is not aligned to the gold documents");
        for (std::size_t a = 0; a < kNumAspects; ++a) {
            EvalRow row;
            row.model_id = set.model_id;
            row.aspect = kAllAspects[a];
            row.metrics = evaluate_aspect(set.probs[a], y[a]);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::vector<EvalRow> evaluate_file(const std::filesystem::path& pred_path,
                                   const std::filesystem::path& gold_path) {
    const auto gold = read_labels(gold_path);
    const auto ids = doc_ids_of(gold);

    const std::string text = read_text_file(pred_path);
    const auto first = text.find_first_not_of(" \t\r\n");
    std::vector<PredictionSet> sets;
    if (first != std::string::npos && text[first] == '{') {
        sets = read_predictions(pred_path, ids);
    } else {
        // hard labels become one-hot scores
        const auto pred = read_labels(pred_path);
        std::unordered_map<std::string, const LabelTriplet*> by_doc;
        for (const auto& p : pred) by_doc[p.doc_id] = &p;
        std::string missing;
        for (const auto& id : ids)
            if (!by_doc.count(id)) missing += missing.empty() ? id : ", " + id;
        if (!missing.empty())
            throw validation_error(pred_path.string() + ": no prediction for documents: " +
                                   missing);
        PredictionSet set;
        set.model_id = pred_path.stem().string();
        set.doc_ids = ids;
        for (auto& m : set.probs) m = Matrix(ids.size(), kNumClasses);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const LabelTriplet& t = *by_doc[ids[i]];
            for (std::size_t a = 0; a < kNumAspects; ++a)
                set.probs[a].at(i, static_cast<std::size_t>(t.aspect(kAllAspects[a]))) = 1.0;
        }
        sets.push_back(std::move(set));
    }
    return evaluate_sets(sets, gold);
}

std::string eval_rows_text(const std::vector<EvalRow>& rows) {
    std::size_t width = 5;
    for (const auto& row : rows) width = std::max(width, row.model_id.size());
    std::string out = "model";
    out += std::string(width - 5, ' ');
    out += "  aspect  accuracy  f1_macro  bacc    auprc\n";
    for (const auto& row : rows) {
        out += row.model_id + std::string(width - row.model_id.size(), ' ');
        out += "  " + std::string(to_string(row.aspect)) + "       ";
        out += format4(row.metrics.accuracy) + "    " + format4(row.metrics.f1_macro) + "    " +
               format4(row.metrics.bacc) + "  " + format4(row.metrics.auprc) + "\n";
    }
    return out;
}

BaselineReport majority_baseline(const std::vector<LabelTriplet>& gold) {
    BaselineReport report;
    report.majority = majority_classes(gold);
    const Targets y = targets_of(gold);
    for (std::size_t a = 0; a < kNumAspects; ++a) {
        const auto base = majority_predictions(report.majority[a], gold.size());
        report.metrics[a] = evaluate_aspect(base.scores, y[a]);
    }
    return report;
}

AgreementReport agreement_report(const std::vector<AnnotationRow>& rows) {
    AgreementReport report;
    for (std::size_t a = 0; a < kNumAspects; ++a) {
        const Aspect aspect = kAllAspects[a];
        std::map<std::string, std::vector<SentimentClass>> items;
        for (const auto& row : rows)
            if (row.aspect == aspect) items[row.item_id].push_back(row.label);
        if (items.empty())
            throw validation_error(std::string("no annotations for aspect ") + to_string(aspect));

        AspectAgreement& out = report.aspects[a];
        std::map<std::size_t, std::size_t> count_freq;
        for (const auto& [item, labels] : items) {
            if (labels.size() < 2)
                ++out.items_skipped;
            else
                ++count_freq[labels.size()];
        }
        if (count_freq.empty())
            throw validation_error(std::string("aspect ") + to_string(aspect) +
                                   " has no item with at least two ratings");
        // modal rating count; ties prefer the larger count
        std::size_t modal = 0, best = 0;
        for (const auto& [count, freq] : count_freq)
            if (freq >= best) {
                best = freq;
                modal = count;
            }
        out.raters = modal;

        std::vector<const std::vector<SentimentClass>*> used;
        for (const auto& [item, labels] : items) {
            if (labels.size() < 2) continue;
            if (labels.size() == modal)
                used.push_back(&labels);
            else
                ++out.items_skipped;
        }
        out.items_used = used.size();

        Matrix table(used.size(), kNumClasses);
        for (std::size_t i = 0; i < used.size(); ++i)
            for (const SentimentClass label : *used[i]) {
                table.at(i, static_cast<std::size_t>(label)) += 1.0;
                ++out.label_counts[static_cast<std::size_t>(label)];
            }
        out.kappa = fleiss_kappa(table);
        if (out.items_skipped > 0)
            log_info(std::string("aspect ") + to_string(aspect) + ": skipped " +
                     std::to_string(out.items_skipped) + " item(s) outside the balanced subset");
    }
    return report;
}

std::string agreement_counts_csv(const AgreementReport& report) {
    std::string out = "aspect,irrelevant,negative,neutral,positive\n";
    for (std::size_t a = 0; a < kNumAspects; ++a) {
        out += to_string(kAllAspects[a]);
        for (const std::size_t count : report.aspects[a].label_counts)
            out += "," + std::to_string(count);
        out += "\n";
    }
    return out;
}

std::vector<TimelineSeries> build_timeline(const std::vector<ArticleRecord>& articles,
                                           const std::string& company,
                                           std::optional<int> year_from,
                                           std::optional<int> year_to) {
    if (year_from && year_to && *year_from > *year_to)
        throw validation_error("timeline: year range is inverted");

    int lo = INT_MAX, hi = INT_MIN;
    std::map<std::string, std::array<std::map<int, std::array<std::size_t, kNumClasses>>,
                                     kNumAspects>>
        acc;
    for (const auto& art : articles) {
        if (!company.empty() && art.company != company) continue;
        if (year_from && art.year < *year_from) continue;
        if (year_to && art.year > *year_to) continue;
        lo = std::min(lo, art.year);
        hi = std::max(hi, art.year);
        for (std::size_t a = 0; a < kNumAspects; ++a)
            ++acc[art.company][a][art.year][static_cast<std::size_t>(art.sentiments[a])];
    }
    if (acc.empty()) throw validation_error("timeline: no articles match the filter");
    if (year_from) lo = *year_from;
    if (year_to) hi = *year_to;

    std::vector<TimelineSeries> out;
    for (const auto& [name, aspects] : acc)
        for (std::size_t a = 0; a < kNumAspects; ++a) {
            TimelineSeries series;
            series.company = name;
            series.aspect = kAllAspects[a];
            for (int year = lo; year <= hi; ++year) {
                TimelineYear ty;
                ty.year = year;
                const auto it = aspects[a].find(year);
                if (it != aspects[a].end()) ty.counts = it->second;
                const auto cls = [&](SentimentClass c) {
                    return ty.counts[static_cast<std::size_t>(c)];
                };
                ty.net = static_cast<long long>(cls(SentimentClass::positive)) -
                         static_cast<long long>(cls(SentimentClass::negative));
                const std::size_t relevant = cls(SentimentClass::positive) +
                                             cls(SentimentClass::negative) +
                                             cls(SentimentClass::neutral);
                ty.normalized = static_cast<double>(ty.net) /
                                static_cast<double>(std::max<std::size_t>(1, relevant));
                series.years.push_back(ty);
            }
            out.push_back(std::move(series));
        }
    return out;
}

std::vector<SummaryRow> summarize_articles(const std::vector<ArticleRecord>& articles) {
    if (articles.empty()) throw validation_error("summary: no articles");
    std::map<std::string, std::array<std::array<std::size_t, kNumClasses>, kNumAspects>> acc;
    for (const auto& art : articles)
        for (std::size_t a = 0; a < kNumAspects; ++a)
            ++acc[art.company][a][static_cast<std::size_t>(art.sentiments[a])];

    std::vector<SummaryRow> out;
    for (const auto& [name, aspects] : acc)
        for (std::size_t a = 0; a < kNumAspects; ++a) {
            SummaryRow row;
            row.company = name;
            row.aspect = kAllAspects[a];
            row.irrelevant = aspects[a][static_cast<std::size_t>(SentimentClass::irrelevant)];
            row.negative = aspects[a][static_cast<std::size_t>(SentimentClass::negative)];
            row.neutral = aspects[a][static_cast<std::size_t>(SentimentClass::neutral)];
            row.positive = aspects[a][static_cast<std::size_t>(SentimentClass::positive)];
            row.relevant = row.positive + row.negative + row.neutral;
            row.total = row.relevant + row.irrelevant;
            out.push_back(std::move(row));
        }
    return out;
}

std::string timeline_csv(const std::vector<TimelineSeries>& series) {
    // net_per_relevant = (positive - negative) / max(1, positive+negative+neutral)
    std::string out = "company,aspect,year,positive,negative,neutral,irrelevant,net,"
                      "net_per_relevant\n";
    for (const auto& s : series)
        for (const auto& y : s.years) {
            const auto cls = [&](SentimentClass c) {
                return std::to_string(y.counts[static_cast<std::size_t>(c)]);
            };
            out += s.company + "," + to_string(s.aspect) + "," + std::to_string(y.year) + "," +
                   cls(SentimentClass::positive) + "," + cls(SentimentClass::negative) + "," +
                   cls(SentimentClass::neutral) + "," + cls(SentimentClass::irrelevant) + "," +
                   std::to_string(y.net) + "," + format6(y.normalized) + "\n";
        }
    return out;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::string out = "company,aspect,total,relevant,positive,negative,neutral,irrelevant\n";
    for (const auto& r : rows)
        out += r.company + "," + to_string(r.aspect) + "," + std::to_string(r.total) + "," +
               std::to_string(r.relevant) + "," + std::to_string(r.positive) + "," +
               std::to_string(r.negative) + "," + std::to_string(r.neutral) + "," +
               std::to_string(r.irrelevant) + "\n";
    return out;
}

namespace {

struct FamilyData {
    FamilyConfig cfg;
    EmbeddingSet emb;                  // when fitting in-repo
    std::vector<AspectProbs> records;  // when external
};

std::vector<LabelTriplet> subset_labels(const std::vector<LabelTriplet>& all,
                                        const std::vector<std::string>& ids) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < all.size(); ++i) index[all[i].doc_id] = i;
    std::vector<LabelTriplet> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        const auto it = index.find(id);
        if (it == index.end())
            throw validation_error("split references unknown doc_id '" + id + "'");
        out.push_back(all[it->second]);
    }
    return out;
}

template <typename F>
auto with_stage(std::uint64_t seed, const std::string& name, F&& f) {
    const std::string ctx = "seed " + std::to_string(seed) + ", " + name + ": ";
    try {
        return std::forward<F>(f)();
    } catch (const validation_error& e) {
        throw validation_error(ctx + e.what());
    } catch (const numeric_error& e) {
        throw numeric_error(ctx + e.what());
    } catch (const std::exception& e) {
        throw std::runtime_error(ctx + e.what());
    }
}

std::string tower_name(char tower) { return std::string("tower_") + tower; }

json metrics_json(const AspectMetrics& m) {
    json j;
    j["accuracy"] = m.accuracy;
    j["f1_macro"] = m.f1_macro;
    j["bacc"] = m.bacc;
    j["auprc"] = m.auprc;
    return j;
}

json training_json(const TowerTrainReport& r) {
    json j;
    j["t_star"] = r.t_star;
    j["epochs_run"] = r.epochs_run;
    j["retrain_steps"] = r.retrain_steps;
    return j;
}

} // namespace

PipelineResult run_pipeline(const LoadedConfig& loaded, std::size_t jobs) {
    const PipelineConfig& cfg = loaded.config;
    validate_config(cfg);
    if (jobs < 1) throw validation_error("jobs must be at least 1");

    const std::string hash = hex64(fnv1a64(loaded.raw));
    log_info("config hash " + hash);

    const auto train_labels = read_labels(cfg.train_labels);
    const auto test_labels = read_labels(cfg.test_labels);
    const auto test_ids = doc_ids_of(test_labels);
    const Targets test_y = targets_of(test_labels);

    std::vector<FamilyData> family_data;
    for (const auto& fam : cfg.families) {
        FamilyData data;
        data.cfg = fam;
        if (fam.external)
            data.records = read_prediction_records(fam.path);
        else
            data.emb = read_embeddings(fam.path, fam.id);
        family_data.push_back(std::move(data));
    }

    std::filesystem::create_directories(cfg.output_dir);

    const auto run_seed = [&](std::uint64_t seed) {
        SeedResult result;
        result.seed = seed;
        const auto seed_dir = cfg.output_dir / ("seed_" + std::to_string(seed));
        std::filesystem::create_directories(seed_dir);

        // stage 1: stratified 80/20 split of the training documents
        const SplitResult split = with_stage(seed, "stage 1 (split)", [&] {
            return iterative_stratified_split(train_labels, SplitSpec{{0.8, 0.2}, seed});
        });
        const auto& d80_ids = split.parts[0];
        const auto& d20_ids = split.parts[1];
        const auto labels_80 = subset_labels(train_labels, d80_ids);
        const auto labels_20 = subset_labels(train_labels, d20_ids);
        result.n80 = d80_ids.size();
        result.n20 = d20_ids.size();
        assert_no_leakage(d80_ids, d20_ids, test_ids);
        write_text_file(seed_dir / "split.json", splits_json(split, {0.8, 0.2}, seed));
        log_info("seed " + std::to_string(seed) + ": split " + std::to_string(result.n80) +
                 "/" + std::to_string(result.n20));

        // stage 2: base families predict the meta and test partitions
        FamilySet meta_20, meta_test;
        for (const auto& data : family_data) {
            const FamilyOutput out =
                with_stage(seed, "stage 2 (family '" + data.cfg.id + "')", [&] {
                    if (data.cfg.external)
                        return external_family(data.cfg.id, data.records, d20_ids, test_ids);
                    return fit_base_family(data.cfg.id, data.emb, labels_80, d20_ids, test_ids,
                                           data.cfg.use_svd, data.cfg.base, seed);
                });
            result.family_svd.emplace_back(
                data.cfg.id, out.svd ? std::optional<std::size_t>(out.svd->chosen)
                                     : std::optional<std::size_t>());
            write_prediction_records(prediction_records_of(out.on_meta),
                                     seed_dir / ("family_" + data.cfg.id + "_meta.jsonl"));
            write_prediction_records(prediction_records_of(out.on_test),
                                     seed_dir / ("family_" + data.cfg.id + "_test.jsonl"));
            meta_20.push_back(meta_features_of(out.on_meta));
            meta_test.push_back(meta_features_of(out.on_test));
        }

        // stage 3: towers trained on the meta partition, scored on test
        TrainConfig tc = cfg.train;
        tc.seed = seed;
        for (const char tower : cfg.towers) {
            TowerSeedResult ts;
            ts.tower = tower;
            TowerPrediction pred;
            if (tower == 'A') {
                const TowerAOutcome outcome =
                    with_stage(seed, "stage 3 (tower A)",
                               [&] { return train_tower_a(meta_20, labels_20, tc); });
                ts.report = outcome.report;
                pred = predict_tower(outcome.model, meta_test);
            } else {
                const TowerBOutcome outcome =
                    with_stage(seed, "stage 3 (tower B)",
                               [&] { return train_tower_b(meta_20, labels_20, tc); });
                ts.report = outcome.level2_report;
                ts.level1_reports = outcome.level1_reports;
                pred = predict_tower(outcome.model, meta_test);
            }
            for (std::size_t a = 0; a < kNumAspects; ++a)
                ts.metrics[a] = evaluate_aspect(pred.probs[a], test_y[a]);

            PredictionSet dump;
            dump.model_id = tower_name(tower);
            dump.doc_ids = test_ids;
            dump.probs = pred.probs;
            write_prediction_records(prediction_records_of(dump),
                                     seed_dir / (tower_name(tower) + "_test.jsonl"));
            result.towers.push_back(std::move(ts));
            log_info("seed " + std::to_string(seed) + ": " + tower_name(tower) + " done");
        }
        return result;
    };

    std::vector<SeedResult> results(cfg.seeds.size());
    std::vector<std::exception_ptr> errors(cfg.seeds.size());
    const auto worker_body = [&](std::size_t i) {
        try {
            results[i] = run_seed(cfg.seeds[i]);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    const std::size_t workers = std::min(jobs, cfg.seeds.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i) worker_body(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                while (true) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= cfg.seeds.size()) break;
                    worker_body(i);
                }
            });
        for (auto& t : pool) t.join();
    }

    for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
        if (errors[i]) {
            try {
                std::rethrow_exception(errors[i]);
            } catch (const std::exception& e) {
                write_text_file(cfg.output_dir / "FAILED", std::string(e.what()) + "\n");
                throw;
            }
        }

    json report;
    report["format"] = kReportFormat;
    report["config_hash"] = hash;
    report["seeds"] = cfg.seeds;
    report["counts"] = {{"train", train_labels.size()},
                        {"test", test_labels.size()},
                        {"d80", results.front().n80},
                        {"d20", results.front().n20}};

    json families = json::object();
    for (std::size_t f = 0; f < cfg.families.size(); ++f) {
        const auto& fam = cfg.families[f];
        json entry;
        entry["source"] = fam.external ? "external" : "embedding";
        if (!fam.external) {
            entry["base"] = to_string(fam.base);
            entry["use_svd"] = fam.use_svd;
            if (fam.use_svd) {
                json chosen = json::object();
                for (const auto& result : results)
                    chosen[std::to_string(result.seed)] = *result.family_svd[f].second;
                entry["svd_chosen"] = std::move(chosen);
            }
        }
        families[fam.id] = std::move(entry);
    }
    report["families"] = std::move(families);

    json towers = json::object();
    for (std::size_t t = 0; t < cfg.towers.size(); ++t) {
        json per_seed = json::object();
        json training = json::object();
        std::array<std::array<std::vector<double>, 4>, kNumAspects> columns;
        for (const auto& result : results) {
            const TowerSeedResult& ts = result.towers[t];
            json aspects = json::object();
            for (std::size_t a = 0; a < kNumAspects; ++a) {
                aspects[to_string(kAllAspects[a])] = metrics_json(ts.metrics[a]);
                columns[a][0].push_back(ts.metrics[a].accuracy);
                columns[a][1].push_back(ts.metrics[a].f1_macro);
                columns[a][2].push_back(ts.metrics[a].bacc);
                columns[a][3].push_back(ts.metrics[a].auprc);
            }
            per_seed[std::to_string(result.seed)] = std::move(aspects);
            json train_entry = training_json(ts.report);
            if (!ts.level1_reports.empty()) {
                json level1 = json::array();
                for (const auto& r : ts.level1_reports) level1.push_back(training_json(r));
                train_entry["level1"] = std::move(level1);
            }
            training[std::to_string(result.seed)] = std::move(train_entry);
        }
        json aggregate = json::object();
        static constexpr const char* kMetricNames[4] = {"accuracy", "f1_macro", "bacc",
                                                        "auprc"};
        for (std::size_t a = 0; a < kNumAspects; ++a) {
            json per_metric = json::object();
            for (std::size_t m = 0; m < 4; ++m) {
                const MeanStd ms = aggregate_seeds(columns[a][m]);
                per_metric[kMetricNames[m]] = {{"mean", ms.mean}, {"std", ms.std}};
            }
            aggregate[to_string(kAllAspects[a])] = std::move(per_metric);
        }
        json block;
        block["per_seed"] = std::move(per_seed);
        block["training"] = std::move(training);
        block["aggregate"] = std::move(aggregate);
        towers[tower_name(cfg.towers[t])] = std::move(block);
    }
    report["towers"] = std::move(towers);

    PipelineResult out;
    out.report_json = report.dump(2) + "\n";
    out.seeds = std::move(results);
    write_text_file(cfg.output_dir / "report.json", out.report_json);
    log_info("report written to " + (cfg.output_dir / "report.json").string());
    return out;
}

} // namespace esgstack
