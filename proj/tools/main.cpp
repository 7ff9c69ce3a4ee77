// sqlcot: command-line driver for the rationale pipeline.
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "sqlcot/pipeline.hpp"

namespace {

struct Overrides {
    std::string config;
    std::optional<std::size_t> workers;
    std::optional<std::string> corpus;
    std::optional<std::string> registry;
    std::optional<std::string> output_dir;
};

void check_kind(const std::string& kind) {
    if (kind != "mock" && kind != "replay" && kind != "http") {
        throw sqlcot::Error(sqlcot::Errc::invalid_input, "client kind must be mock, replay or http, got '" + kind + "'");
    }
}

sqlcot::PipelineConfig load_config(const Overrides& o) {
    if (o.config.empty()) throw sqlcot::Error(sqlcot::Errc::invalid_input, "--config is required for this command");
    auto config = sqlcot::PipelineConfig::load(o.config);
    if (o.workers) {
        config.workers = *o.workers;
        config.bootstrap.workers = *o.workers;
        config.rationalizer.workers = *o.workers;
    }
    if (o.corpus) config.corpus = *o.corpus;
    if (o.registry) config.registry = *o.registry;
    if (o.output_dir) config.output_dir = *o.output_dir;
    return config;
}

template <typename T>
std::vector<T> parse_list(const std::vector<std::string>& names, T (*from)(std::string_view)) {
    std::vector<T> out;
    for (const auto& n : names) out.push_back(from(n));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    auto logger = spdlog::stderr_color_mt("sqlcot");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");

    CLI::App app{"Bootstrap, validate and export step-by-step SQL rationales"};
    app.set_version_flag("--version", std::string("sqlcot ") + SQLCOT_VERSION);
    app.require_subcommand(1);

    Overrides o;
    bool verbose = false;
    app.add_option("-c,--config", o.config, "Pipeline configuration (JSON)");
    app.add_option("--workers", o.workers, "Worker threads");
    app.add_option("--corpus", o.corpus, "Override paths.corpus");
    app.add_option("--registry", o.registry, "Override paths.registry");
    app.add_option("--output-dir", o.output_dir, "Override paths.output_dir");
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    auto* clean = app.add_subcommand("clean", "Drop instances whose gold SQL fails, times out or returns no rows");

    auto* bootstrap = app.add_subcommand("bootstrap", "Run the dynamic few-shot loop against the teacher");
    std::optional<std::string> seeds, teacher_kind, teacher_model, teacher_transcript;
    std::optional<int> max_iterations;
    bootstrap->add_option("--seeds", seeds, "Seed rationale directory (<instance_id>.md files)");
    bootstrap->add_option("--teacher", teacher_kind, "Teacher client: mock, replay or http");
    bootstrap->add_option("--model", teacher_model, "Teacher model name");
    bootstrap->add_option("--transcript", teacher_transcript, "Replay source, or record target");
    bootstrap->add_option("--max-iterations", max_iterations, "Iteration limit");

    auto* rationalize = app.add_subcommand("rationalize", "Answer-aware pass over instances still lacking a rationale");
    std::optional<std::string> rat_kind, rat_model, rat_transcript;
    rationalize->add_option("--model", rat_kind, "Rationalizer client: mock, replay or http");
    rationalize->add_option("--model-name", rat_model, "Rationalizer model name");
    rationalize->add_option("--transcript", rat_transcript, "Replay source, or record target");

    auto* triage = app.add_subcommand("triage", "Apply review decisions to inconsistency flags");
    std::optional<std::string> review;
    triage->add_option("--review", review, "Review file (JSONL of flag_id, disposition, corrected_gold_sql)");

    auto* exp = app.add_subcommand("export", "Write fine-tuning sets");
    std::vector<std::string> variants{"gold", "cot_short", "cot_long"};
    std::vector<std::string> scopes{"covered_only", "full"};
    exp->add_option("--variant", variants, "gold, cot_short, cot_long")->delimiter(',');
    exp->add_option("--scope", scopes, "covered_only, full")->delimiter(',');

    auto* eval = app.add_subcommand("eval", "Score predictions against a dev corpus");
    std::optional<std::string> dev, predictions;
    eval->add_option("--dev", dev, "Dev corpus");
    eval->add_option("--predictions", predictions, "Prediction JSONL");

    auto* report = app.add_subcommand("report", "Stage coverage report");

    auto* diff = app.add_subcommand("diff", "Per-category deltas between two eval reports");
    std::string report_a, report_b;
    diff->add_option("before", report_a, "Baseline eval_report.json")->required();
    diff->add_option("after", report_b, "Candidate eval_report.json")->required();

    auto* compact = app.add_subcommand("compact", "Drop repeated records from the repository file");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        sqlcot::CommandSummary summary;
        if (diff->parsed()) {
            summary = sqlcot::cmd_diff(report_a, report_b);
        } else {
            auto config = load_config(o);
            if (clean->parsed()) {
                summary = sqlcot::cmd_clean(config);
            } else if (bootstrap->parsed()) {
                if (seeds) config.seeds_dir = *seeds;
                if (teacher_kind) {
                    check_kind(*teacher_kind);
                    config.teacher.kind = *teacher_kind;
                }
                if (teacher_model) config.teacher.model = config.bootstrap.model = *teacher_model;
                if (teacher_transcript) config.teacher.transcript = *teacher_transcript;
                if (max_iterations) config.bootstrap.max_iterations = *max_iterations;
                spdlog::info("bootstrap with {} teacher '{}'", config.teacher.kind, config.teacher.model);
                summary = sqlcot::cmd_bootstrap(config);
            } else if (rationalize->parsed()) {
                if (rat_kind) {
                    check_kind(*rat_kind);
                    config.rationalizer_client.kind = *rat_kind;
                }
                if (rat_model) config.rationalizer_client.model = config.rationalizer.model = *rat_model;
                if (rat_transcript) config.rationalizer_client.transcript = *rat_transcript;
                summary = sqlcot::cmd_rationalize(config);
            } else if (triage->parsed()) {
                if (review) config.review_file = *review;
                summary = sqlcot::cmd_triage(config);
            } else if (exp->parsed()) {
                summary = sqlcot::cmd_export(config, parse_list(variants, &sqlcot::variant_from_string),
                                             parse_list(scopes, &sqlcot::scope_from_string));
            } else if (eval->parsed()) {
                if (dev) config.dev_corpus = *dev;
                if (predictions) config.predictions = *predictions;
                summary = sqlcot::cmd_eval(config);
            } else if (report->parsed()) {
                summary = sqlcot::cmd_report(config);
            } else if (compact->parsed()) {
                summary = sqlcot::cmd_compact(config);
            }
        }
        spdlog::debug("{}: {}", summary.command, summary.json);
        if (!summary.text.empty()) std::cout << summary.text;
        std::cout << summary.json << '\n';
        return EXIT_SUCCESS;
    } catch (const std::exception& e) {
        spdlog::debug("failed: {}", e.what());
        std::cerr << sqlcot::error_json(e) << '\n';
        return EXIT_FAILURE;
    }
}
