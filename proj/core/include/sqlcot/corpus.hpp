#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sqlcot/instance.hpp"
#include "sqlcot/registry.hpp"

namespace sqlcot {

enum class CorpusFormat { bird_json, generic_jsonl };

CorpusFormat corpus_format_from_string(std::string_view s);

// Throws Errc::io for unreadable files and Errc::parse for malformed records
// (the message carries the 0-based record index) or duplicate instance ids.
std::vector<TrainInstance> load_corpus(const std::string& path, CorpusFormat format);
std::vector<TrainInstance> parse_corpus(std::string_view content, CorpusFormat format);

// Generic JSONL, one object per instance. Optional fields are omitted when
// empty so that parse_corpus(write) returns the same instances.
void write_corpus_jsonl(std::ostream& out, const std::vector<TrainInstance>& instances);
std::string corpus_to_jsonl(const std::vector<TrainInstance>& instances);

enum class RejectReason { syntax_error, timeout, empty_result, missing_db };

std::string_view to_string(RejectReason r);

struct Rejection {
    std::string instance_id;
    RejectReason reason;
    std::string message;
    friend bool operator==(const Rejection&, const Rejection&) = default;
};

struct CleaningReport {
    std::size_t kept = 0;
    std::vector<Rejection> rejected;  // input order

    std::size_t count(RejectReason reason) const;
};

std::string cleaning_report_json(const CleaningReport& report);

struct CleanResult {
    std::vector<TrainInstance> kept;
    CleaningReport report;
};

// Keeps instances whose gold SQL runs within the registry timeout and yields
// at least one row. Engine errors (syntax or runtime) reject as syntax_error.
CleanResult clean_corpus(const std::vector<TrainInstance>& instances, const DatabaseRegistry& registry,
                         std::size_t workers = 1);

// CREATE TABLE statements plus up to `sample_rows` distinct non-NULL sample
// values per column, in ascending order. Returns the schema body only (the
// prompt builder adds the [SCHEMA] markers). Throws ExecutionError(missing_db).
std::string render_schema_fallback(const std::string& db_id, const DatabaseRegistry& registry,
                                   std::size_t sample_rows = 3);

}  // namespace sqlcot
