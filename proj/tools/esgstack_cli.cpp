// Command line front end over the esgstack library.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "esgstack/errors.hpp"
#include "esgstack/io.hpp"
#include "esgstack/pipeline.hpp"
#include "esgstack/stratify.hpp"

namespace fs = std::filesystem;
using namespace esgstack;

namespace {

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty())
        std::cout << text;
    else
        write_text_file(out_path, text);
}

int cmd_split(const std::string& labels_path, const std::vector<double>& fractions,
              std::uint64_t seed, const std::string& out_path) {
    SplitSpec spec;
    spec.fractions = fractions;
    spec.seed = seed;
    const auto labels = read_labels(labels_path);
    const SplitResult split = iterative_stratified_split(labels, spec);
    emit(splits_json(split, fractions, seed), out_path);
    return 0;
}

int cmd_run(const std::string& config_path, const std::vector<std::uint64_t>& seeds,
            std::size_t jobs, const std::string& out_path) {
    LoadedConfig loaded = load_config(config_path);
    if (!seeds.empty()) loaded.config.seeds = seeds;
    if (!out_path.empty()) loaded.config.output_dir = out_path;
    run_pipeline(loaded, jobs);
    std::cout << "report: " << (loaded.config.output_dir / "report.json").string() << "\n";
    return 0;
}

int cmd_evaluate(const std::string& pred_path, const std::string& gold_path,
                 const std::string& out_path) {
    const auto rows = evaluate_file(pred_path, gold_path);
    const std::string text = eval_rows_text(rows);
    std::cout << text;
    if (!out_path.empty()) write_text_file(out_path, text);
    return 0;
}

int cmd_agreement(const std::string& annotations_path, const std::string& out_path) {
    const AgreementReport report = agreement_report(read_annotations(annotations_path));
    char line[160];
    for (std::size_t a = 0; a < kNumAspects; ++a) {
        const AspectAgreement& agg = report.aspects[a];
        std::snprintf(line, sizeof(line),
                      "%s kappa=%.4f raters=%zu items_used=%zu items_skipped=%zu\n",
                      to_string(kAllAspects[a]), agg.kappa, agg.raters, agg.items_used,
                      agg.items_skipped);
        std::cout << line;
    }
    if (!out_path.empty()) write_text_file(out_path, agreement_counts_csv(report));
    return 0;
}

int cmd_timeline(const std::string& articles_path, const std::string& company,
                 std::optional<int> year_from, std::optional<int> year_to,
                 const std::string& out_path, const std::string& summary_path) {
    const auto articles = read_articles(articles_path);
    const auto series = build_timeline(articles, company, year_from, year_to);
    emit(timeline_csv(series), out_path);
    std::vector<ArticleRecord> filtered;
    for (const auto& art : articles) {
        if (!company.empty() && art.company != company) continue;
        if (year_from && art.year < *year_from) continue;
        if (year_to && art.year > *year_to) continue;
        filtered.push_back(art);
    }
    const std::string summary = summary_csv(summarize_articles(filtered));
    if (summary_path.empty()) {
        if (out_path.empty()) std::cout << "\n";
        std::cout << summary;
    } else {
        write_text_file(summary_path, summary);
    }
    return 0;
}

int cmd_baseline(const std::string& labels_path, const std::string& out_path) {
    const auto gold = read_labels(labels_path);
    const BaselineReport report = majority_baseline(gold);
    std::vector<EvalRow> rows;
    for (std::size_t a = 0; a < kNumAspects; ++a)
        rows.push_back({"majority", kAllAspects[a], report.metrics[a]});
    std::cout << eval_rows_text(rows);
    if (!out_path.empty()) {
        std::vector<LabelTriplet> preds = gold;
        for (auto& t : preds) {
            t.e = report.majority[0];
            t.s = report.majority[1];
            t.g = report.majority[2];
        }
        write_labels(preds, out_path);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ESG aspect sentiment stacking toolkit"};
    app.require_subcommand(1);
    app.footer("Set ESGSTACK_LOG=info or ESGSTACK_LOG=debug for progress output.");

    auto* split = app.add_subcommand("split", "Stratified split of a labels file");
    std::string split_labels, split_out;
    std::vector<double> split_fractions{0.8, 0.2};
    std::uint64_t split_seed = 0;
    split->add_option("--labels", split_labels, "labels CSV")->required();
    split->add_option("--fractions", split_fractions, "part fractions")->delimiter(',');
    split->add_option("--seed", split_seed, "split seed");
    split->add_option("--out", split_out, "output JSON path (default stdout)");

    auto* run = app.add_subcommand("run", "Run the full stacking pipeline");
    std::string run_config, run_out;
    std::vector<std::uint64_t> run_seeds;
    std::size_t run_jobs = 1;
    run->add_option("--config", run_config, "config JSON")->required();
    run->add_option("--seeds", run_seeds, "override config seeds")->delimiter(',');
    run->add_option("--jobs", run_jobs, "max parallel seed workers");
    run->add_option("--out", run_out, "override output directory");

    auto* evaluate = app.add_subcommand("evaluate", "Score a prediction file against gold labels");
    std::string eval_pred, eval_gold, eval_out;
    evaluate->add_option("--pred", eval_pred, "prediction file (JSONL probs or labels CSV)")
        ->required();
    evaluate->add_option("--gold", eval_gold, "gold labels CSV")->required();
    evaluate->add_option("--out", eval_out, "also write the table to this path");

    auto* agreement = app.add_subcommand("agreement", "Inter-annotator agreement per aspect");
    std::string agr_annotations, agr_out;
    agreement->add_option("--annotations", agr_annotations, "annotations CSV")->required();
    agreement->add_option("--out", agr_out, "write per-class count CSV to this path");

    auto* timeline = app.add_subcommand("timeline", "Per-year sentiment series and summary");
    std::string tl_articles, tl_company, tl_out, tl_summary;
    std::optional<int> tl_from, tl_to;
    timeline->add_option("--articles", tl_articles, "articles CSV")->required();
    timeline->add_option("--company", tl_company, "restrict to one company");
    timeline->add_option("--from", tl_from, "first year");
    timeline->add_option("--to", tl_to, "last year");
    timeline->add_option("--out", tl_out, "timeline CSV path (default stdout)");
    timeline->add_option("--summary", tl_summary, "summary CSV path (default stdout)");

    auto* baseline = app.add_subcommand("baseline", "Majority-class reference metrics");
    std::string base_labels, base_out;
    baseline->add_option("--labels", base_labels, "labels CSV")->required();
    baseline->add_option("--out", base_out, "write majority predictions CSV to this path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(split))
            return cmd_split(split_labels, split_fractions, split_seed, split_out);
        if (app.got_subcommand(run)) return cmd_run(run_config, run_seeds, run_jobs, run_out);
        if (app.got_subcommand(evaluate)) return cmd_evaluate(eval_pred, eval_gold, eval_out);
        if (app.got_subcommand(agreement)) return cmd_agreement(agr_annotations, agr_out);
        if (app.got_subcommand(timeline))
            return cmd_timeline(tl_articles, tl_company, tl_from, tl_to, tl_out, tl_summary);
        if (app.got_subcommand(baseline)) return cmd_baseline(base_labels, base_out);
        std::cerr << "error: no subcommand selected\n";
        return 2;
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
