#include "sqlcot/bootstrap.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sqlcot/corpus.hpp"
#include "sqlcot/error.hpp"
#include "sqlcot/parallel.hpp"
#include "sqlcot/text.hpp"

namespace sqlcot {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

const std::string kGenerationInstruction =
    "Given the above [SCHEMA] of a database and a question [QUESTION], translate the question into a valid "
    "SQLite statement. Decompose the SQL in increasingly complex building blocks. Explain each step of the SQL "
    "building process thinking step by step. Format the output using the Markdown language.";

SchemaResolver::SchemaResolver(const DatabaseRegistry& registry, std::size_t sample_rows)
    : registry_(&registry), sample_rows_(sample_rows) {}

std::string SchemaResolver::schema_for(const TrainInstance& instance) const {
    if (!text::trim(instance.schema_text).empty()) return instance.schema_text;
    if (!registry_) {
        throw Error(Errc::precondition,
                    "instance '" + instance.instance_id + "' has no schema text and the fallback renderer is off");
    }
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(instance.db_id); it != cache_.end()) return it->second;
    }
    auto rendered = render_schema_fallback(instance.db_id, *registry_, sample_rows_);
    std::lock_guard lock(mutex_);
    return cache_.emplace(instance.db_id, std::move(rendered)).first->second;
}

namespace {

bool has_note_line(const std::string& body) {
    for (auto line : text::split_lines(body)) {
        if (text::trim(line) == "Note:") return true;
    }
    return false;
}

}  // namespace

std::string schema_block(const std::string& schema_body, const std::optional<std::string>& evidence) {
    std::string inner = text::trim_blank_lines(schema_body);
    if (evidence) {
        const auto note = text::trim_blank_lines(*evidence);
        if (!note.empty()) {
            if (has_note_line(inner)) {
                inner += "\n" + note;
            } else {
                inner += (inner.empty() ? "" : "\n\n") + std::string("Note:\n") + note;
            }
        }
    }
    return "[SCHEMA]\n" + inner + (inner.empty() ? "" : "\n") + "[/SCHEMA]";
}

std::string source_block(const TrainInstance& instance, const std::string& schema_body,
                         const std::string& instruction) {
    return schema_block(schema_body, instance.evidence) + "\n\n[QUESTION]\n" +
           std::string(text::trim(instance.question)) + "\n[/QUESTION]\n\n" + instruction;
}

std::string build_prompt(const TrainInstance& target, std::span<const Exemplar> exemplars,
                         const SchemaResolver& schemas) {
    std::string prompt;
    for (const auto& ex : exemplars) {
        if (!ex.record->positive()) {
            throw Error(Errc::precondition, "exemplar " + ex.record->key + " is not a positive record");
        }
        if (ex.record->instance_id == target.instance_id) {
            throw Error(Errc::precondition, "exemplar drawn from the target instance '" + target.instance_id + "'");
        }
        prompt += source_block(*ex.instance, schemas.schema_for(*ex.instance), kGenerationInstruction);
        prompt += "\n\n";
        prompt += text::trim_right(ex.record->cot_markdown);
        prompt += "\n\n";
    }
    prompt += source_block(target, schemas.schema_for(target), kGenerationInstruction);
    return prompt;
}

void BootstrapConfig::check() const {
    if (few_shot_n < 1) throw Error(Errc::invalid_input, "few_shot_n must be at least 1");
    if (max_iterations < 1) throw Error(Errc::invalid_input, "max_iterations must be at least 1");
    if (greedy_temperature < 0 || sampling_temperature < 0) {
        throw Error(Errc::invalid_input, "temperatures must be non-negative");
    }
}

DecodingParams select_decoding(int iteration, const BootstrapConfig& config) {
    if (iteration < 1) throw Error(Errc::invalid_input, "iterations are numbered from 1");
    if (iteration % 2 == 1) return {Decoding::greedy, config.greedy_temperature, std::nullopt};
    return {Decoding::sampling, config.sampling_temperature,
            config.sampling_seed + static_cast<std::uint64_t>(iteration)};
}

PipelineContext PipelineContext::make(std::span<const TrainInstance> corpus, const DatabaseRegistry& registry,
                                      const KeywordVocabulary& vocab, const SchemaResolver& schemas) {
    PipelineContext ctx;
    ctx.registry = &registry;
    ctx.vocab = &vocab;
    ctx.schemas = &schemas;
    for (const auto& inst : corpus) ctx.instances.emplace(inst.instance_id, &inst);
    return ctx;
}

const TrainInstance* PipelineContext::find(const std::string& instance_id) const {
    auto it = instances.find(instance_id);
    return it == instances.end() ? nullptr : it->second;
}

std::string_view to_string(AttemptStatus s) {
    switch (s) {
        case AttemptStatus::positive: return "positive";
        case AttemptStatus::negative: return "negative";
        case AttemptStatus::parse_error: return "parse_error";
        case AttemptStatus::transport_failed: return "transport_failed";
        case AttemptStatus::duplicate: return "duplicate";
        case AttemptStatus::validation_error: return "validation_error";
    }
    return "transport_failed";
}

std::size_t IterationReport::new_positive_records() const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [](const auto& r) { return r.positive(); }));
}

std::size_t IterationReport::count(AttemptStatus s) const {
    return static_cast<std::size_t>(
        std::count_if(outcomes.begin(), outcomes.end(), [s](const auto& o) { return o.status == s; }));
}

std::string iteration_report_json(const IterationReport& report) {
    ojson doc;
    doc["iteration"] = report.iteration;
    doc["decoding"] = std::string(to_string(report.decoding));
    doc["pending"] = report.pending;
    doc["new_positive_records"] = report.new_positive_records();
    ojson counts = ojson::object();
    for (auto s : {AttemptStatus::positive, AttemptStatus::negative, AttemptStatus::parse_error,
                   AttemptStatus::transport_failed, AttemptStatus::duplicate,
                   AttemptStatus::validation_error}) {
        counts[std::string(to_string(s))] = report.count(s);
    }
    doc["outcomes"] = counts;
    doc["failures"] = ojson::array();
    for (const auto& o : report.outcomes) {
        if (o.status == AttemptStatus::positive) continue;
        doc["failures"].push_back(
            {{"instance_id", o.instance_id}, {"status", std::string(to_string(o.status))}, {"detail", o.detail}});
    }
    return doc.dump(-1, ' ', false, json::error_handler_t::replace);
}

IterationReport run_iteration(std::span<const TrainInstance* const> pending, const Repository& snapshot,
                              TeacherClient& teacher, const BootstrapConfig& config, int iteration,
                              const PipelineContext& context) {
    config.check();
    IterationReport report;
    report.iteration = iteration;
    const auto decoding = select_decoding(iteration, config);
    report.decoding = decoding.mode;
    report.pending = pending.size();

    std::vector<const ValidatedCotRecord*> pool;
    for (const auto* r : snapshot.positives()) {
        if (context.find(r->instance_id)) pool.push_back(r);
    }

    struct Slot {
        std::optional<ValidatedCotRecord> record;
        InstanceOutcome outcome;
    };
    std::vector<Slot> slots(pending.size());
    const std::size_t workers = std::max<std::size_t>(config.workers, 1);
    std::vector<Executor> executors;
    for (std::size_t w = 0; w < workers; ++w) executors.emplace_back(*context.registry);

    parallel_for(pending.size(), workers, [&](std::size_t i, std::size_t w) {
        const TrainInstance& inst = *pending[i];
        auto& slot = slots[i];
        slot.outcome.instance_id = inst.instance_id;

        const auto ranked = rank_examples(inst.gold_sql, inst.instance_id, pool, config.few_shot_n, *context.vocab);
        std::vector<Exemplar> exemplars;
        TeacherRequest request;
        for (const auto& r : ranked) {
            exemplars.push_back({context.find(r.record->instance_id), r.record});
            request.exemplar_sqls.push_back(r.record->final_sql);
            slot.outcome.exemplar_ids.push_back(r.record->instance_id);
        }
        request.model = config.model;
        request.prompt = build_prompt(inst, exemplars, *context.schemas);
        request.decoding = decoding;
        request.instance_id = inst.instance_id;

        TeacherResponse response;
        try {
            response = complete_with_retry(teacher, request, config.retry);
        } catch (const TransportError& e) {
            slot.outcome.status = AttemptStatus::transport_failed;
            slot.outcome.detail = e.what();
            return;
        }

        CotRationale cot;
        try {
            cot = parse_cot(response.completion);
            check_rationale(cot);
        } catch (const Error& e) {
            slot.outcome.status = AttemptStatus::parse_error;
            slot.outcome.detail = e.what();
            return;
        }

        Verdict verdict;
        try {
            verdict = validate_cot(inst, cot, executors[w], config.compare);
        } catch (const Error& e) {
            slot.outcome.status = AttemptStatus::validation_error;
            slot.outcome.detail = e.what();
            return;
        }
        auto record = make_record(inst.instance_id, cot, std::move(verdict), iteration, decoding.mode,
                                  *context.vocab, utc_timestamp());
        const bool stored = std::any_of(snapshot.records().begin(), snapshot.records().end(), [&](const auto& r) {
            return r.instance_id == record.instance_id && r.key == record.key;
        });
        // A repeated positive adds nothing; a repeated negative is still a failure.
        if (stored && record.positive()) {
            slot.outcome.status = AttemptStatus::duplicate;
            slot.outcome.detail = "identical rationale already stored";
            return;
        }
        slot.outcome.status = record.positive() ? AttemptStatus::positive : AttemptStatus::negative;
        if (!record.positive()) {
            slot.outcome.detail = std::string(to_string(record.verdict.detail));
            if (!record.verdict.message.empty()) slot.outcome.detail += ": " + record.verdict.message;
        }
        if (!stored) slot.record = std::move(record);
    });

    for (auto& slot : slots) {
        if (slot.record) report.records.push_back(std::move(*slot.record));
        report.outcomes.push_back(std::move(slot.outcome));
    }
    return report;
}

std::vector<SeedRationale> load_seeds(const std::string& directory) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(directory)) throw Error(Errc::not_found, "seeds directory not found: " + directory);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(directory)) {
        if (entry.is_regular_file() && entry.path().extension() == ".md") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<SeedRationale> seeds;
    for (const auto& f : files) seeds.push_back({f.stem().string(), text::read_file(f.string())});
    return seeds;
}

namespace {

struct LoopState {
    int last_iteration = 0;
    bool plateau = false;
};

LoopState read_state(const std::string& path) {
    LoopState state;
    if (!std::filesystem::exists(path)) return state;
    try {
        const auto doc = json::parse(text::read_file(path));
        state.last_iteration = doc.at("last_iteration").get<int>();
        state.plateau = doc.at("plateau").get<bool>();
    } catch (const json::exception& e) {
        throw Error(Errc::parse, path + ": " + e.what());
    }
    return state;
}

void append_line(const std::string& path, const std::string& line) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << line << '\n';
    if (!out) throw Error(Errc::io, "write failed on " + path);
}

void write_state(const std::string& path, const LoopState& state) {
    ojson doc;
    doc["last_iteration"] = state.last_iteration;
    doc["plateau"] = state.plateau;
    text::write_file_atomic(path, doc.dump(2) + "\n");
}

}  // namespace

BootstrapResult bootstrap_loop(std::span<const TrainInstance> corpus, std::span<const SeedRationale> seeds,
                               TeacherClient& teacher, const BootstrapConfig& config, const PipelineContext& context,
                               const std::optional<BootstrapStorage>& storage) {
    config.check();
    BootstrapResult result;
    LoopState state;
    std::optional<RepositoryStore> store;
    if (storage) {
        result.repository = Repository::load(storage->repository_path);
        state = read_state(storage->state_path());
        store.emplace(storage->repository_path);
    }

    // Seeds are validated on every run; records already stored are skipped.
    Executor executor(*context.registry);
    std::vector<ValidatedCotRecord> seed_records;
    for (const auto& seed : seeds) {
        const auto* inst = context.find(seed.instance_id);
        if (!inst) {
            result.rejected_seeds.push_back(seed.instance_id + ": not in the corpus");
            continue;
        }
        try {
            auto cot = parse_cot(seed.markdown);
            check_rationale(cot);
            auto verdict = validate_cot(*inst, cot, executor, config.compare);
            if (!verdict.positive()) {
                result.rejected_seeds.push_back(seed.instance_id + ": " + std::string(to_string(verdict.detail)) +
                                                (verdict.message.empty() ? "" : " (" + verdict.message + ")"));
                continue;
            }
            seed_records.push_back(
                make_record(inst->instance_id, cot, std::move(verdict), 0, Decoding::manual, *context.vocab,
                            utc_timestamp()));
        } catch (const Error& e) {
            result.rejected_seeds.push_back(seed.instance_id + ": " + e.what());
        }
    }
    if (seed_records.empty()) {
        std::string message = "no valid seed rationales";
        for (const auto& r : result.rejected_seeds) message += "; " + r;
        throw Error(Errc::precondition, message);
    }
    std::vector<ValidatedCotRecord> fresh;
    for (auto& r : seed_records) {
        if (result.repository.add(r)) fresh.push_back(std::move(r));
    }
    if (store && !fresh.empty()) store->append(fresh);

    if (state.plateau) {
        result.plateau = true;
        return result;
    }

    for (int iteration = state.last_iteration + 1; iteration <= config.max_iterations; ++iteration) {
        std::vector<const TrainInstance*> pending;
        for (const auto& inst : corpus) {
            if (config.regenerate_covered || !result.repository.covers(inst.instance_id)) pending.push_back(&inst);
        }
        auto report = run_iteration(pending, result.repository, teacher, config, iteration, context);

        std::vector<ValidatedCotRecord> appended;
        std::size_t growth = 0;
        for (const auto& r : report.records) {
            const bool newly_covered = r.positive() && !result.repository.covers(r.instance_id);
            if (!result.repository.add(r)) continue;
            appended.push_back(r);
            if (config.regenerate_covered ? r.positive() : newly_covered) ++growth;
        }
        state.last_iteration = iteration;
        state.plateau = growth == 0 && config.stop_on_plateau;
        if (store) {
            store->append(appended);
            append_line(storage->log_path(), iteration_report_json(report));
            write_state(storage->state_path(), state);
        }
        result.iterations.push_back(std::move(report));
        if (state.plateau) {
            result.plateau = true;
            break;
        }
    }
    return result;
}

}  // namespace sqlcot
