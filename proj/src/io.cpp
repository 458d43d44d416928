#include "esgstack/io.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "esgstack/errors.hpp"
#include "json.hpp"

namespace esgstack {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// Plain comma split; the file formats here never quote fields.
std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    fields.push_back(trim(cur));
    return fields;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot open file: " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

double parse_double_field(const std::string& field, const std::string& context) {
    const std::string t = trim(field);
    if (t.empty()) throw validation_error(context + ": empty numeric field");
    const char* begin = t.c_str();
    char* end = nullptr;
    errno = 0;
    double v = std::strtod(begin, &end);
    if (end != begin + t.size())
        throw validation_error(context + ": not a number: '" + field + "'");
    if (!std::isfinite(v))
        throw validation_error(context + ": non-finite value: '" + field + "'");
    return v;
}

void expect_header(const std::vector<std::string>& lines, const std::string& expected,
                   const std::filesystem::path& path) {
    if (lines.empty())
        throw validation_error(path.string() + ": empty file, expected header '" + expected + "'");
    if (trim(lines[0]) != expected)
        throw validation_error(path.string() + ": bad header '" + lines[0] + "', expected '" +
                               expected + "'");
}

std::string line_ctx(const std::filesystem::path& path, std::size_t lineno) {
    return path.string() + ":" + std::to_string(lineno);
}

// Probabilities may carry tiny negative or >1 float noise; anything beyond
// the slack is a real error, anything inside it is clamped.
constexpr double kProbSlack = 1e-9;
constexpr double kSimplexTol = 1e-6;

std::array<double, kNumClasses> validate_prob_row(const std::vector<double>& raw,
                                                  const std::string& context) {
    if (raw.size() != kNumClasses)
        throw validation_error(context + ": probs must have exactly 4 entries, got " +
                               std::to_string(raw.size()));
    std::array<double, kNumClasses> out{};
    double sum = 0.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        double p = raw[c];
        if (!std::isfinite(p))
            throw validation_error(context + ": non-finite probability");
        if (p < -kProbSlack || p > 1.0 + kProbSlack)
            throw validation_error(context + ": probability " + std::to_string(p) +
                                   " outside [0,1]");
        p = std::min(1.0, std::max(0.0, p));
        out[c] = p;
        sum += p;
    }
    if (std::abs(sum - 1.0) > kSimplexTol) {
        std::ostringstream os;
        os << context << ": probabilities sum to " << sum << ", expected 1 within " << kSimplexTol;
        throw validation_error(os.str());
    }
    return out;
}

int parse_date_part(const std::string& s, const std::string& context) {
    for (char ch : s)
        if (ch < '0' || ch > '9')
            throw validation_error(context + ": bad date component '" + s + "'");
    if (s.empty()) throw validation_error(context + ": bad date component ''");
    return std::stoi(s);
}

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

void parse_iso_date(const std::string& s, int& year, int& month, int& day,
                    const std::string& context) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-')
        throw validation_error(context + ": date '" + s + "' is not YYYY-MM-DD");
    year = parse_date_part(s.substr(0, 4), context);
    month = parse_date_part(s.substr(5, 2), context);
    day = parse_date_part(s.substr(8, 2), context);
    static const int days_in[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (month < 1 || month > 12)
        throw validation_error(context + ": month " + std::to_string(month) + " out of range");
    int dmax = days_in[month - 1];
    if (month == 2 && is_leap(year)) dmax = 29;
    if (day < 1 || day > dmax)
        throw validation_error(context + ": day " + std::to_string(day) + " out of range for " + s);
}

} // namespace

std::vector<LabelTriplet> read_labels(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    expect_header(lines, "doc_id,E,S,G", path);
    std::vector<LabelTriplet> labels;
    std::set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const auto f = split_csv(lines[i]);
        const std::string ctx = line_ctx(path, i + 1);
        if (f.size() != 4)
            throw validation_error(ctx + ": expected 4 fields, got " + std::to_string(f.size()));
        if (f[0].empty()) throw validation_error(ctx + ": empty doc_id");
        if (!seen.insert(f[0]).second)
            throw validation_error(ctx + ": duplicate doc_id '" + f[0] + "'");
        LabelTriplet t;
        t.doc_id = f[0];
        try {
            t.e = parse_sentiment(f[1]);
            t.s = parse_sentiment(f[2]);
            t.g = parse_sentiment(f[3]);
        } catch (const validation_error& e) {
            throw validation_error(ctx + ": " + e.what());
        }
        labels.push_back(std::move(t));
    }
    if (labels.empty()) throw validation_error(path.string() + ": no label rows");
    return labels;
}

void write_labels(const std::vector<LabelTriplet>& labels, const std::filesystem::path& path) {
    std::ostringstream os;
    os << "doc_id,E,S,G\n";
    for (const auto& l : labels)
        os << l.doc_id << ',' << to_string(l.e) << ',' << to_string(l.s) << ',' << to_string(l.g)
           << '\n';
    write_text_file(path, os.str());
}

std::vector<AspectProbs> read_prediction_records(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    std::vector<AspectProbs> records;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const std::string ctx = line_ctx(path, i + 1);
        ordered_json j;
        try {
            j = ordered_json::parse(lines[i]);
        } catch (const std::exception& e) {
            throw validation_error(ctx + ": bad JSON: " + e.what());
        }
        if (!j.is_object()) throw validation_error(ctx + ": expected a JSON object");
        for (const char* key : {"doc_id", "model_id", "aspect", "probs"})
            if (!j.contains(key))
                throw validation_error(ctx + ": missing key '" + std::string(key) + "'");
        if (!j["doc_id"].is_string() || !j["model_id"].is_string() || !j["aspect"].is_string())
            throw validation_error(ctx + ": doc_id, model_id, and aspect must be strings");
        if (!j["probs"].is_array())
            throw validation_error(ctx + ": probs must be an array");
        AspectProbs r;
        r.doc_id = j["doc_id"].get<std::string>();
        r.model_id = j["model_id"].get<std::string>();
        if (r.doc_id.empty()) throw validation_error(ctx + ": empty doc_id");
        if (r.model_id.empty()) throw validation_error(ctx + ": empty model_id");
        try {
            r.aspect = parse_aspect(j["aspect"].get<std::string>());
        } catch (const validation_error& e) {
            throw validation_error(ctx + ": " + e.what());
        }
        std::vector<double> raw;
        for (const auto& v : j["probs"]) {
            if (!v.is_number()) throw validation_error(ctx + ": probs entries must be numbers");
            raw.push_back(v.get<double>());
        }
        r.probs = validate_prob_row(raw, ctx + " (doc '" + r.doc_id + "')");
        records.push_back(std::move(r));
    }
    return records;
}

void write_prediction_records(const std::vector<AspectProbs>& records,
                              const std::filesystem::path& path) {
    std::ostringstream os;
    for (const auto& r : records) {
        ordered_json j;
        j["doc_id"] = r.doc_id;
        j["model_id"] = r.model_id;
        j["aspect"] = to_string(r.aspect);
        j["probs"] = r.probs;
        os << j.dump() << '\n';
    }
    write_text_file(path, os.str());
}

std::vector<PredictionSet> group_predictions(const std::vector<AspectProbs>& records,
                                             const std::vector<std::string>& doc_ids) {
    std::map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < doc_ids.size(); ++i) {
        if (!row_of.emplace(doc_ids[i], i).second)
            throw validation_error("duplicate doc_id '" + doc_ids[i] + "' in requested ordering");
    }
    const std::size_t n = doc_ids.size();

    // model_id -> per-aspect matrices plus fill mask. std::map keeps the
    // resulting family order lexicographic, which everything downstream
    // relies on.
    struct Partial {
        std::array<Matrix, kNumAspects> probs;
        std::array<std::vector<char>, kNumAspects> filled;
    };
    std::map<std::string, Partial> by_model;
    for (const auto& r : records) {
        auto it = row_of.find(r.doc_id);
        if (it == row_of.end())
            throw validation_error("prediction for unknown doc_id '" + r.doc_id + "' (model '" +
                                   r.model_id + "')");
        auto& p = by_model[r.model_id];
        const auto a = static_cast<std::size_t>(r.aspect);
        if (p.probs[a].rows() == 0) {
            p.probs[a] = Matrix(n, kNumClasses);
            p.filled[a].assign(n, 0);
        }
        if (p.filled[a][it->second])
            throw validation_error("duplicate prediction for doc '" + r.doc_id + "', model '" +
                                   r.model_id + "', aspect " + to_string(r.aspect));
        p.filled[a][it->second] = 1;
        for (std::size_t c = 0; c < kNumClasses; ++c)
            p.probs[a].at(it->second, c) = r.probs[c];
    }
    if (by_model.empty()) throw validation_error("no prediction records");

    std::vector<PredictionSet> sets;
    for (auto& [model_id, p] : by_model) {
        for (std::size_t a = 0; a < kNumAspects; ++a) {
            if (p.probs[a].rows() == 0)
                throw validation_error("model '" + model_id + "' has no predictions for aspect " +
                                       std::string(to_string(static_cast<Aspect>(a))));
            for (std::size_t i = 0; i < n; ++i)
                if (!p.filled[a][i])
                    throw validation_error("model '" + model_id + "' is missing aspect " +
                                           std::string(to_string(static_cast<Aspect>(a))) +
                                           " for doc '" + doc_ids[i] + "'");
        }
        PredictionSet s;
        s.model_id = model_id;
        s.doc_ids = doc_ids;
        s.probs = std::move(p.probs);
        sets.push_back(std::move(s));
    }
    return sets;
}

std::vector<PredictionSet> read_predictions(const std::filesystem::path& path,
                                            const std::vector<std::string>& doc_ids) {
    return group_predictions(read_prediction_records(path), doc_ids);
}

std::vector<AspectProbs> prediction_records_of(const PredictionSet& set) {
    std::vector<AspectProbs> records;
    records.reserve(set.doc_ids.size() * kNumAspects);
    for (std::size_t i = 0; i < set.doc_ids.size(); ++i) {
        for (Aspect a : kAllAspects) {
            AspectProbs r;
            r.doc_id = set.doc_ids[i];
            r.model_id = set.model_id;
            r.aspect = a;
            const auto& m = set.probs[static_cast<std::size_t>(a)];
            for (std::size_t c = 0; c < kNumClasses; ++c) r.probs[c] = m.at(i, c);
            records.push_back(std::move(r));
        }
    }
    return records;
}

EmbeddingSet read_embeddings(const std::filesystem::path& path, const std::string& model_id) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw validation_error(path.string() + ": empty embeddings file");
    const auto header = split_csv(lines[0]);
    if (header.size() < 2 || header[0] != "doc_id")
        throw validation_error(path.string() +
                               ": embeddings header must be 'doc_id,<f0>,<f1>,...'");
    const std::size_t d = header.size() - 1;

    EmbeddingSet set;
    set.model_id = model_id.empty() ? path.stem().string() : model_id;
    std::vector<double> values;
    std::set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const auto f = split_csv(lines[i]);
        const std::string ctx = line_ctx(path, i + 1);
        if (f.size() != d + 1)
            throw validation_error(ctx + ": expected " + std::to_string(d + 1) + " fields, got " +
                                   std::to_string(f.size()));
        if (f[0].empty()) throw validation_error(ctx + ": empty doc_id");
        if (!seen.insert(f[0]).second)
            throw validation_error(ctx + ": duplicate doc_id '" + f[0] + "'");
        set.doc_ids.push_back(f[0]);
        for (std::size_t c = 1; c < f.size(); ++c) values.push_back(parse_double_field(f[c], ctx));
    }
    if (set.doc_ids.empty()) throw validation_error(path.string() + ": no embedding rows");
    set.features = Matrix(set.doc_ids.size(), d, values);
    return set;
}

EmbeddingSet align_embeddings(const EmbeddingSet& emb, const std::vector<std::string>& doc_ids) {
    std::map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < emb.doc_ids.size(); ++i) row_of.emplace(emb.doc_ids[i], i);
    std::vector<std::size_t> rows;
    rows.reserve(doc_ids.size());
    for (const auto& id : doc_ids) {
        auto it = row_of.find(id);
        if (it == row_of.end())
            throw validation_error("embeddings for model '" + emb.model_id +
                                   "' are missing doc_id '" + id + "'");
        rows.push_back(it->second);
    }
    EmbeddingSet out;
    out.model_id = emb.model_id;
    out.doc_ids = doc_ids;
    out.features = take_rows(emb.features, rows);
    return out;
}

std::vector<ArticleRecord> read_articles(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    expect_header(lines, "doc_id,company,date,E,S,G", path);
    std::vector<ArticleRecord> articles;
    std::set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const auto f = split_csv(lines[i]);
        const std::string ctx = line_ctx(path, i + 1);
        if (f.size() != 6)
            throw validation_error(ctx + ": expected 6 fields, got " + std::to_string(f.size()));
        if (f[0].empty()) throw validation_error(ctx + ": empty doc_id");
        if (f[1].empty()) throw validation_error(ctx + ": empty company");
        if (!seen.insert(f[0]).second)
            throw validation_error(ctx + ": duplicate doc_id '" + f[0] + "'");
        ArticleRecord a;
        a.doc_id = f[0];
        a.company = f[1];
        parse_iso_date(f[2], a.year, a.month, a.day, ctx);
        try {
            for (std::size_t k = 0; k < kNumAspects; ++k) a.sentiments[k] = parse_sentiment(f[3 + k]);
        } catch (const validation_error& e) {
            throw validation_error(ctx + ": " + e.what());
        }
        articles.push_back(std::move(a));
    }
    if (articles.empty()) throw validation_error(path.string() + ": no article rows");
    return articles;
}

std::vector<AnnotationRow> read_annotations(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    expect_header(lines, "item_id,annotator_id,aspect,label", path);
    std::vector<AnnotationRow> rows;
    std::set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const auto f = split_csv(lines[i]);
        const std::string ctx = line_ctx(path, i + 1);
        if (f.size() != 4)
            throw validation_error(ctx + ": expected 4 fields, got " + std::to_string(f.size()));
        if (f[0].empty() || f[1].empty())
            throw validation_error(ctx + ": empty item_id or annotator_id");
        AnnotationRow r;
        r.item_id = f[0];
        r.annotator_id = f[1];
        try {
            r.aspect = parse_aspect(f[2]);
            r.label = parse_sentiment(f[3]);
        } catch (const validation_error& e) {
            throw validation_error(ctx + ": " + e.what());
        }
        const std::string key = r.item_id + "\x1f" + r.annotator_id + "\x1f" + to_string(r.aspect);
        if (!seen.insert(key).second)
            throw validation_error(ctx + ": duplicate annotation for item '" + r.item_id +
                                   "', annotator '" + r.annotator_id + "', aspect " +
                                   to_string(r.aspect));
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw validation_error(path.string() + ": no annotation rows");
    return rows;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw validation_error("cannot open file for writing: " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw validation_error("failed writing file: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot open file: " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

} // namespace esgstack
