#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sqlcot/bootstrap.hpp"

namespace sqlcot {

// Instruction closing answer-aware (rationalization) prompts.
extern const std::string kRationalizationInstruction;

// Source block with the gold SQL in a [SQL] block after [QUESTION].
std::string rationalization_prompt(const TrainInstance& instance, const SchemaResolver& schemas);

struct RationalizationExample {
    std::string instance_id;
    std::string input;
    std::string output;
};

// One example per covered instance (corpus order), taking the longest
// positive CoT among records with decoding other than `rationalizer`.
// Throws Errc::precondition when no such record exists.
std::vector<RationalizationExample> rationalization_trainset(std::span<const TrainInstance> corpus,
                                                             const Repository& repo, const SchemaResolver& schemas);
// JSONL lines {instance_id, input, output}; returns the line count.
std::size_t export_rationalization_trainset(std::ostream& out, std::span<const TrainInstance> corpus,
                                            const Repository& repo, const SchemaResolver& schemas);

enum class Disposition { unreviewed, gold_wrong, generation_wrong };

std::string_view to_string(Disposition d);
Disposition disposition_from_string(std::string_view s);

struct InconsistencyFlag {
    std::string flag_id;
    std::string instance_id;
    std::string generated_final_sql;
    VerdictDetail detail = VerdictDetail::result_mismatch;
    std::string message;
    std::optional<ResultShape> gold_shape;
    std::optional<ResultShape> generated_shape;
    Disposition disposition = Disposition::unreviewed;

    friend bool operator==(const InconsistencyFlag&, const InconsistencyFlag&) = default;
};

std::string flag_to_json(const InconsistencyFlag& flag);
InconsistencyFlag flag_from_json(std::string_view line);

struct RationalizerConfig {
    std::string model = "rationalizer";
    RetryPolicy retry;
    // Each instance gets this many greedy attempts, then as many sampled ones.
    int attempts_per_mode = 1;
    double sampling_temperature = 0.7;
    std::uint64_t sampling_seed = 0;
    std::size_t workers = 1;
    CompareOptions compare;
};

struct RationalizerResult {
    std::vector<ValidatedCotRecord> records;  // positives, pending order
    std::vector<InconsistencyFlag> flags;     // one per instance whose attempts all ended negative
    std::vector<InstanceOutcome> outcomes;
};

// Answer-aware generation for instances without positive records. Positives
// get iteration kRationalizerIteration; negatives raise flags.
RationalizerResult apply_rationalizer(std::span<const TrainInstance* const> pending, TeacherClient& model,
                                      const RationalizerConfig& config, const PipelineContext& context);

enum class ProceduralStyle {
    full,     // one step per peeled clause
    compact,  // plan step, joined core, final query
};

struct ProceduralCot {
    CotRationale cot;
    std::vector<std::string> warnings;
};

// Builds a rationale by re-adding the gold query's top-level clauses one at
// a time. Intermediate steps that fail to execute on `executor` are dropped;
// shapes the peeler cannot segment fall back to plan + final query.
ProceduralCot procedural_rationalize(const TrainInstance& instance, Executor* executor,
                                     ProceduralStyle style = ProceduralStyle::full);

// Decides whether the offline teacher "knows" how to answer a target.
using TeacherPolicy = std::function<bool(const TrainInstance& target, std::span<const std::string> exemplar_sqls,
                                         const DecodingParams& decoding)>;

// Succeeds when any exemplar's SQL contains `keyword`.
TeacherPolicy shares_keyword_policy(std::string keyword, const KeywordVocabulary& vocab);

// Structural features of a query: keyword families such as JOIN, WHERE,
// GROUP, ORDER, aggregation and nesting.
std::set<std::string> structural_features(std::string_view sql, const KeywordVocabulary& vocab);

// Succeeds when some exemplar covers all but at most `max_new_features` of
// the target's structural features and the target has none of `hard`.
TeacherPolicy feature_distance_policy(std::size_t max_new_features, std::set<std::string> hard,
                                      const KeywordVocabulary& vocab);

// Deterministic offline model. Looks the target up by request.instance_id;
// on success answers with procedural_rationalize (full style for greedy,
// compact for sampling), otherwise with a rationale whose final SQL returns
// no rows. Unknown instances raise TransportError.
class ProceduralTeacher : public TeacherClient {
public:
    ProceduralTeacher(const PipelineContext& context, TeacherPolicy policy);
    TeacherResponse complete(const TeacherRequest& request) override;

private:
    const PipelineContext* context_;
    TeacherPolicy policy_;
};

// Always-succeeding policy, the default for the offline rationalizer.
TeacherPolicy always_policy();

struct ReviewDecision {
    std::string flag_id;
    Disposition disposition = Disposition::unreviewed;
    std::optional<std::string> corrected_gold_sql;
};

std::vector<ReviewDecision> load_review_file(const std::string& path);
std::vector<ReviewDecision> parse_review_jsonl(std::string_view content);

struct TriageEntry {
    std::string flag_id;
    std::string instance_id;
    Disposition disposition = Disposition::unreviewed;
    std::string action;  // excluded | gold_replaced | returned_to_pending | awaiting_review
};

struct TriageResult {
    std::vector<TrainInstance> corpus;  // without excluded instances; corrections applied
    std::vector<std::string> excluded;
    std::vector<std::string> pending;   // instances needing a new CoT
    std::vector<TriageEntry> audit;

    std::size_t count(Disposition d) const;
};

std::string triage_audit_json(const TriageResult& result);

// Applies review decisions to flagged instances. Throws Errc::invalid_input
// when a decision names an unknown flag id.
TriageResult triage_inconsistencies(std::span<const TrainInstance> corpus, std::span<const InconsistencyFlag> flags,
                                    std::span<const ReviewDecision> decisions);

}  // namespace sqlcot
