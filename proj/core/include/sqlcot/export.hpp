#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sqlcot/bootstrap.hpp"

namespace sqlcot {

// covered/total as hundredths of a percent, rounded half-up. 0 when total is 0.
std::int64_t percent_hundredths(std::size_t covered, std::size_t total);
// "53.18" style rendering of a hundredths value, sign kept for negatives.
std::string format_hundredths(std::int64_t hundredths, bool explicit_plus = false);

enum class Variant { gold, cot_short, cot_long };
enum class Scope { covered_only, full };

std::string_view to_string(Variant v);
std::string_view to_string(Scope s);
Variant variant_from_string(std::string_view s);
Scope scope_from_string(std::string_view s);

// Shortest (cot_short) or longest (cot_long) record by step count, then by
// canonical length; remaining ties go to the smallest key. Throws
// Errc::precondition on an empty set or Variant::gold.
const ValidatedCotRecord& select_cot_variant(std::span<const ValidatedCotRecord* const> records, Variant variant);

struct FinetuneExample {
    std::string instance_id;
    Difficulty difficulty = Difficulty::unknown;
    Variant variant = Variant::gold;
    std::string input;
    std::string target;
};

std::string finetune_example_json(const FinetuneExample& example);

// One example per in-scope instance, corpus order. Under Scope::full every
// instance must be covered for CoT variants (Errc::precondition otherwise).
std::vector<FinetuneExample> finetune_set(std::span<const TrainInstance> corpus, const Repository& repo,
                                          Variant variant, Scope scope, const SchemaResolver& schemas);
std::size_t export_finetune_set(std::ostream& out, std::span<const TrainInstance> corpus, const Repository& repo,
                                Variant variant, Scope scope, const SchemaResolver& schemas);

// A reporting stage: cumulative over the records it admits.
struct StageSpec {
    std::string name;
    std::string model;
    std::function<bool(const ValidatedCotRecord&)> includes;
};

// Manual few-shot (seeds and iteration 1), dynamic few-shot (every teacher
// iteration), fine-tuning (plus rationalizer records).
std::vector<StageSpec> default_stages(std::string teacher_label = "teacher",
                                      std::string rationalizer_label = "rationalizer");

struct CoverageRow {
    std::string stage;
    std::string model;
    std::size_t covered = 0;
    std::size_t total = 0;
    std::int64_t hundredths = 0;

    std::string percentage() const { return format_hundredths(hundredths); }
};

struct CoverageReport {
    std::vector<CoverageRow> rows;
};

CoverageReport coverage_report(std::span<const TrainInstance> corpus, const Repository& repo,
                               std::span<const StageSpec> stages);
std::string coverage_report_json(const CoverageReport& report);
std::string coverage_report_table(const CoverageReport& report);

}  // namespace sqlcot
