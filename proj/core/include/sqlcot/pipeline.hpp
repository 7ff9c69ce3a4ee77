#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sqlcot/bootstrap.hpp"
#include "sqlcot/corpus.hpp"
#include "sqlcot/export.hpp"
#include "sqlcot/rationalizer.hpp"

namespace sqlcot {

// Which TeacherClient to build for a stage.
struct ClientSettings {
    std::string kind = "mock";          // mock | replay | http
    std::string model;
    std::string policy = "feature_distance";  // mock only: feature_distance | always | shares_join
    std::string transcript;             // replay source, or record target for http
    std::string env_prefix;             // http: <prefix>_URL / <prefix>_API_KEY
};

struct PipelineConfig {
    std::string corpus;
    CorpusFormat corpus_format = CorpusFormat::generic_jsonl;
    std::string registry;
    std::string seeds_dir;
    std::string repository;  // default: <output_dir>/repository.jsonl
    std::string output_dir;
    std::string dev_corpus;
    CorpusFormat dev_format = CorpusFormat::generic_jsonl;
    std::string predictions;
    std::string review_file;
    std::string vocabulary;  // empty: built-in vocabulary

    BootstrapConfig bootstrap;
    RationalizerConfig rationalizer;
    ClientSettings teacher{"mock", "teacher", "feature_distance", "", "SQLCOT_TEACHER"};
    ClientSettings rationalizer_client{"mock", "rationalizer", "always", "", "SQLCOT_RATIONALIZER"};

    std::size_t workers = 1;
    std::optional<double> timeout_seconds;  // overrides the registry value
    std::size_t row_cap = ExecOptions::kDefaultRowCap;
    std::size_t schema_sample_rows = 3;
    std::size_t feature_distance = 1;
    std::vector<std::string> hard_features{"COMPOUND", "CTE", "CASE"};

    // Relative paths resolve against the config file's directory. Keys that
    // look like credentials are rejected: secrets come from the environment.
    static PipelineConfig load(const std::string& path);
    static PipelineConfig parse(std::string_view json, const std::string& base_dir);

    std::string repository_path() const;
    std::string output(std::string_view name) const;
};

// Machine-readable per-command summary (also logged).
struct CommandSummary {
    std::string command;
    std::string json;
    std::string text;  // human-readable table, when the command has one
};

CommandSummary cmd_clean(const PipelineConfig& config);
CommandSummary cmd_bootstrap(const PipelineConfig& config);
CommandSummary cmd_rationalize(const PipelineConfig& config);
CommandSummary cmd_triage(const PipelineConfig& config);
CommandSummary cmd_export(const PipelineConfig& config, const std::vector<Variant>& variants,
                          const std::vector<Scope>& scopes);
CommandSummary cmd_eval(const PipelineConfig& config);
CommandSummary cmd_report(const PipelineConfig& config);
CommandSummary cmd_diff(const std::string& report_a, const std::string& report_b);
CommandSummary cmd_compact(const PipelineConfig& config);

// JSON error object written to stderr on failure.
std::string error_json(const std::exception& e);

}  // namespace sqlcot
