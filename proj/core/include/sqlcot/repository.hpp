#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sqlcot/execval.hpp"
#include "sqlcot/sqllex.hpp"

namespace sqlcot {

enum class Decoding { manual, greedy, sampling, rationalizer };

std::string_view to_string(Decoding d);
Decoding decoding_from_string(std::string_view s);

// Iteration tag carried by records produced by the rationalizer pass.
inline constexpr int kRationalizerIteration = -1;

struct ValidatedCotRecord {
    std::string key;  // sha256 of cot_markdown
    std::string instance_id;
    std::string cot_markdown;  // canonical serialization
    std::string final_sql;
    SqlVector sql_vector;
    Verdict verdict;
    int iteration = 0;  // 0 = manual seed
    Decoding decoding = Decoding::manual;
    std::string created_at;  // ISO-8601 UTC

    bool positive() const noexcept { return verdict.positive(); }
    friend bool operator==(const ValidatedCotRecord&, const ValidatedCotRecord&) = default;
};

// Builds a record from a rationale: canonical markdown, key, final SQL and
// its vector under `vocab`.
ValidatedCotRecord make_record(std::string instance_id, const CotRationale& cot, Verdict verdict, int iteration,
                               Decoding decoding, const KeywordVocabulary& vocab, std::string created_at);

std::string record_to_json(const ValidatedCotRecord& record);
ValidatedCotRecord record_from_json(std::string_view line);

// UTC timestamp. Honors SOURCE_DATE_EPOCH when set, for reproducible files.
std::string utc_timestamp();

// In-memory set of records, unique on (instance_id, key), in insertion order.
class Repository {
public:
    Repository() = default;

    // Loads an append-only JSONL file. Repeated (instance_id, key) lines are
    // ignored. A missing file yields an empty repository.
    static Repository load(const std::string& path);

    // Returns false when an identical record is already stored.
    bool add(ValidatedCotRecord record);

    const std::vector<ValidatedCotRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }

    std::vector<const ValidatedCotRecord*> positives() const;
    std::vector<const ValidatedCotRecord*> positives_of(const std::string& instance_id) const;
    bool covers(const std::string& instance_id) const { return covered_.count(instance_id) != 0; }
    const std::set<std::string>& covered() const noexcept { return covered_; }

    std::string to_jsonl() const;

private:
    std::vector<ValidatedCotRecord> records_;
    std::set<std::pair<std::string, std::string>> keys_;
    std::set<std::string> covered_;
};

// Append-only writer for the repository file.
class RepositoryStore {
public:
    explicit RepositoryStore(std::string path) : path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }
    void append(std::span<const ValidatedCotRecord> records) const;

private:
    std::string path_;
};

// Rewrites the file keeping the first occurrence of each (instance_id, key).
// Returns the number of dropped lines.
std::size_t compact_repository(const std::string& path);

struct RankedExemplar {
    const ValidatedCotRecord* record = nullptr;
    double score = 0.0;
};

// Top-n positive records by descending cosine to `query`, ties broken by
// ascending instance_id then key. Records of `exclude_instance_id` are
// skipped. Scores are compared exactly (as rationals), so ranking does not
// change when the query counts are scaled.
std::vector<RankedExemplar> rank_examples(const SqlVector& query, std::string_view exclude_instance_id,
                                          std::span<const ValidatedCotRecord* const> pool, std::size_t n);

std::vector<RankedExemplar> rank_examples(std::string_view query_sql, std::string_view exclude_instance_id,
                                          std::span<const ValidatedCotRecord* const> pool, std::size_t n,
                                          const KeywordVocabulary& vocab);

}  // namespace sqlcot
