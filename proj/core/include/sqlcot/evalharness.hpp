#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sqlcot/execval.hpp"
#include "sqlcot/instance.hpp"

namespace sqlcot {

// instance_id -> raw SQL or CoT markdown.
using PredictionFile = std::map<std::string, std::string>;

// JSONL {instance_id, prediction}. Throws Errc::parse on duplicates.
PredictionFile parse_predictions(std::string_view content);
PredictionFile load_predictions(const std::string& path);

// A CoT prediction reduces to its final SQL; anything else is raw SQL.
std::string prediction_sql(std::string_view prediction);

enum class PredictionStatus { correct, incorrect, error, missing };

std::string_view to_string(PredictionStatus s);
PredictionStatus prediction_status_from_string(std::string_view s);

struct InstanceScore {
    std::string instance_id;
    Difficulty difficulty = Difficulty::unknown;
    PredictionStatus status = PredictionStatus::missing;
    std::string detail;
};

struct CategoryScore {
    std::size_t correct = 0;
    std::size_t total = 0;
    std::int64_t hundredths = 0;
};

struct EvalReport {
    std::string devset;  // fingerprint of the scored instance ids
    std::map<Difficulty, CategoryScore> categories;
    CategoryScore overall;
    std::vector<InstanceScore> instances;  // devset order

    // Builds a report from counts alone (no per-instance verdicts).
    static EvalReport from_counts(std::string devset, const std::map<Difficulty, std::pair<std::size_t, std::size_t>>& counts);
};

std::string devset_fingerprint(std::span<const TrainInstance> devset);

std::string eval_report_json(const EvalReport& report);
EvalReport eval_report_from_json(std::string_view json);
// Columns: Simple | Moderate | Challenging | Total, with counts.
std::string eval_report_table(const EvalReport& report);

struct EvalOptions {
    std::size_t workers = 1;
    CompareOptions compare;
    ExecOptions exec;
};

// Throws Errc::invalid_input when a prediction key is not in the devset.
EvalReport score_predictions(std::span<const TrainInstance> devset, const PredictionFile& predictions,
                             const DatabaseRegistry& registry, const EvalOptions& options = {});

struct ReportDiff {
    std::map<Difficulty, std::int64_t> category_delta;  // hundredths, b - a
    std::int64_t total_delta = 0;
    std::vector<std::string> fixed;      // incorrect in a, correct in b
    std::vector<std::string> regressed;  // correct in a, incorrect in b
};

// Throws Errc::invalid_input when the reports come from different devsets.
ReportDiff diff_reports(const EvalReport& a, const EvalReport& b);
std::string report_diff_table(const ReportDiff& diff);
std::string report_diff_json(const ReportDiff& diff);

}  // namespace sqlcot
