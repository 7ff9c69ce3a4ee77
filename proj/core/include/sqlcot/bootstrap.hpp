#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sqlcot/execval.hpp"
#include "sqlcot/instance.hpp"
#include "sqlcot/registry.hpp"
#include "sqlcot/repository.hpp"
#include "sqlcot/sqllex.hpp"
#include "sqlcot/teacher.hpp"

namespace sqlcot {

// The instruction sentence closing every source prompt.
extern const std::string kGenerationInstruction;

// Supplies schema text for instances whose schema_text is empty. Fallback
// renders are cached per db_id. Thread-safe.
class SchemaResolver {
public:
    SchemaResolver() = default;  // fallback disabled
    SchemaResolver(const DatabaseRegistry& registry, std::size_t sample_rows);

    // Throws Errc::precondition when the schema is empty and fallback is off.
    std::string schema_for(const TrainInstance& instance) const;

private:
    const DatabaseRegistry* registry_ = nullptr;
    std::size_t sample_rows_ = 3;
    mutable std::mutex mutex_;
    mutable std::map<std::string, std::string> cache_;
};

// [SCHEMA] block with the evidence text placed in its Note: section.
std::string schema_block(const std::string& schema_body, const std::optional<std::string>& evidence);
// [SCHEMA] + [QUESTION] blocks followed by `instruction`.
std::string source_block(const TrainInstance& instance, const std::string& schema_body,
                         const std::string& instruction);

struct Exemplar {
    const TrainInstance* instance = nullptr;
    const ValidatedCotRecord* record = nullptr;
};

// Exemplar source blocks each followed by their rationale, then the target
// source block. Throws Errc::precondition for negative exemplars.
std::string build_prompt(const TrainInstance& target, std::span<const Exemplar> exemplars,
                         const SchemaResolver& schemas);

struct BootstrapConfig {
    std::size_t few_shot_n = 3;
    int max_iterations = 16;
    double greedy_temperature = 0.0;
    double sampling_temperature = 0.7;
    std::uint64_t sampling_seed = 0;
    bool stop_on_plateau = true;
    // Re-prompt already covered instances each iteration; the plateau then
    // counts new distinct positive CoTs instead of newly covered instances.
    bool regenerate_covered = false;
    std::string model = "teacher";
    RetryPolicy retry;
    std::size_t workers = 1;
    CompareOptions compare;

    void check() const;
};

// Odd iterations decode greedily, even iterations sample with seed
// sampling_seed + iteration.
DecodingParams select_decoding(int iteration, const BootstrapConfig& config);

// Everything an iteration needs besides the repository and the client.
struct PipelineContext {
    const DatabaseRegistry* registry = nullptr;
    const KeywordVocabulary* vocab = nullptr;
    const SchemaResolver* schemas = nullptr;
    std::map<std::string, const TrainInstance*> instances;  // by instance_id

    static PipelineContext make(std::span<const TrainInstance> corpus, const DatabaseRegistry& registry,
                                const KeywordVocabulary& vocab, const SchemaResolver& schemas);
    const TrainInstance* find(const std::string& instance_id) const;
};

// validation_error: the gold query itself could not be executed.
enum class AttemptStatus { positive, negative, parse_error, transport_failed, duplicate, validation_error };

std::string_view to_string(AttemptStatus s);

struct InstanceOutcome {
    std::string instance_id;
    AttemptStatus status = AttemptStatus::transport_failed;
    std::string detail;
    std::vector<std::string> exemplar_ids;
};

struct IterationReport {
    int iteration = 0;
    Decoding decoding = Decoding::greedy;
    std::size_t pending = 0;
    std::vector<ValidatedCotRecord> records;  // new positive and negative records, pending order
    std::vector<InstanceOutcome> outcomes;    // one per pending instance, pending order

    std::size_t new_positive_records() const;
    std::size_t count(AttemptStatus s) const;
};

std::string iteration_report_json(const IterationReport& report);

// One pass over `pending` against a frozen repository snapshot.
IterationReport run_iteration(std::span<const TrainInstance* const> pending, const Repository& snapshot,
                              TeacherClient& teacher, const BootstrapConfig& config, int iteration,
                              const PipelineContext& context);

struct SeedRationale {
    std::string instance_id;
    std::string markdown;
};

// Markdown seed files named <instance_id>.md, sorted by file name. Throws
// Errc::not_found when the directory is missing.
std::vector<SeedRationale> load_seeds(const std::string& directory);

struct BootstrapResult {
    Repository repository;
    std::vector<IterationReport> iterations;
    std::vector<std::string> rejected_seeds;  // "<instance_id>: reason"
    bool plateau = false;
};

// Optional persistence: the repository file gets every new record after each
// iteration, a state file beside it records the last finished iteration so an
// interrupted run resumes where it stopped, and a log keeps one report line
// per finished iteration.
struct BootstrapStorage {
    std::string repository_path;
    std::string state_path() const { return repository_path + ".state.json"; }
    std::string log_path() const { return repository_path + ".iterations.jsonl"; }
};

BootstrapResult bootstrap_loop(std::span<const TrainInstance> corpus, std::span<const SeedRationale> seeds,
                               TeacherClient& teacher, const BootstrapConfig& config, const PipelineContext& context,
                               const std::optional<BootstrapStorage>& storage = std::nullopt);

}  // namespace sqlcot
