#include "sqlcot/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <memory>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sqlcot/error.hpp"
#include "sqlcot/evalharness.hpp"
#include "sqlcot/text.hpp"

namespace sqlcot {

namespace fs = std::filesystem;
using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

std::string dump(const ojson& j) {
    return j.dump(2, ' ', false, json::error_handler_t::replace);
}

bool looks_like_credential(std::string key) {
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    for (const char* marker : {"api_key", "apikey", "token", "secret", "password", "credential", "authorization"}) {
        if (key.find(marker) != std::string::npos) return true;
    }
    return false;
}

void reject_credentials(const json& j, const std::string& where) {
    if (!j.is_object()) return;
    for (const auto& [key, value] : j.items()) {
        if (looks_like_credential(key)) {
            throw Error(Errc::invalid_input, "config key '" + where + key +
                                                 "' looks like a credential; secrets are read from environment "
                                                 "variables only");
        }
        reject_credentials(value, where + key + ".");
    }
}

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw Error(Errc::invalid_input, "config section '" + where + "' must be an object");
    for (const auto& [key, _] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw Error(Errc::invalid_input, "unknown config key '" + where + (where.empty() ? "" : ".") + key + "'");
        }
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

std::string resolve(const std::string& base, const std::string& p) {
    if (p.empty()) return p;
    fs::path path(p);
    if (path.is_relative()) path = fs::path(base) / path;
    return path.lexically_normal().string();
}

OrderMode order_mode_from(const std::string& s) {
    if (s == "gold_order_by") return OrderMode::gold_order_by;
    if (s == "multiset") return OrderMode::multiset;
    if (s == "sequence") return OrderMode::sequence;
    throw Error(Errc::invalid_input, "unknown order mode '" + s + "'");
}

void read_client(const json& j, const std::string& where, ClientSettings& out) {
    only_keys(j, where, {"kind", "model", "policy", "transcript", "env_prefix"});
    read(j, "kind", out.kind);
    read(j, "model", out.model);
    read(j, "policy", out.policy);
    read(j, "transcript", out.transcript);
    read(j, "env_prefix", out.env_prefix);
}

}  // namespace

PipelineConfig PipelineConfig::parse(std::string_view content, const std::string& base_dir) {
    json doc;
    try {
        doc = json::parse(content);
    } catch (const json::exception& e) {
        throw Error(Errc::parse, std::string("config: ") + e.what());
    }
    reject_credentials(doc, "");
    PipelineConfig c;
    try {
        only_keys(doc, "", {"paths", "bootstrap", "rationalizer", "teacher", "rationalizer_client", "workers",
                            "timeout_seconds", "row_cap", "schema_sample_rows", "feature_distance", "hard_features"});
        if (doc.contains("paths")) {
            const auto& p = doc["paths"];
            only_keys(p, "paths", {"corpus", "corpus_format", "registry", "seeds_dir", "repository", "output_dir",
                                   "dev_corpus", "dev_format", "predictions", "review_file", "vocabulary"});
            read(p, "corpus", c.corpus);
            read(p, "registry", c.registry);
            read(p, "seeds_dir", c.seeds_dir);
            read(p, "repository", c.repository);
            read(p, "output_dir", c.output_dir);
            read(p, "dev_corpus", c.dev_corpus);
            read(p, "predictions", c.predictions);
            read(p, "review_file", c.review_file);
            read(p, "vocabulary", c.vocabulary);
            if (p.contains("corpus_format")) c.corpus_format = corpus_format_from_string(p["corpus_format"].get<std::string>());
            if (p.contains("dev_format")) c.dev_format = corpus_format_from_string(p["dev_format"].get<std::string>());
        }
        if (doc.contains("bootstrap")) {
            const auto& b = doc["bootstrap"];
            only_keys(b, "bootstrap", {"few_shot_n", "max_iterations", "greedy_temperature", "sampling_temperature",
                                       "sampling_seed", "stop_on_plateau", "regenerate_covered", "retry_attempts",
                                       "retry_backoff_ms", "order", "epsilon"});
            read(b, "few_shot_n", c.bootstrap.few_shot_n);
            read(b, "max_iterations", c.bootstrap.max_iterations);
            read(b, "greedy_temperature", c.bootstrap.greedy_temperature);
            read(b, "sampling_temperature", c.bootstrap.sampling_temperature);
            read(b, "sampling_seed", c.bootstrap.sampling_seed);
            read(b, "stop_on_plateau", c.bootstrap.stop_on_plateau);
            read(b, "regenerate_covered", c.bootstrap.regenerate_covered);
            read(b, "retry_attempts", c.bootstrap.retry.attempts);
            if (b.contains("retry_backoff_ms")) {
                c.bootstrap.retry.initial_backoff = std::chrono::milliseconds(b["retry_backoff_ms"].get<long>());
            }
            if (b.contains("order")) c.bootstrap.compare.order = order_mode_from(b["order"].get<std::string>());
            read(b, "epsilon", c.bootstrap.compare.epsilon);
        }
        c.rationalizer.retry = c.bootstrap.retry;
        c.rationalizer.compare = c.bootstrap.compare;
        if (doc.contains("rationalizer")) {
            const auto& r = doc["rationalizer"];
            only_keys(r, "rationalizer", {"attempts_per_mode", "sampling_temperature", "sampling_seed"});
            read(r, "attempts_per_mode", c.rationalizer.attempts_per_mode);
            read(r, "sampling_temperature", c.rationalizer.sampling_temperature);
            read(r, "sampling_seed", c.rationalizer.sampling_seed);
        }
        if (doc.contains("teacher")) read_client(doc["teacher"], "teacher", c.teacher);
        if (doc.contains("rationalizer_client")) {
            read_client(doc["rationalizer_client"], "rationalizer_client", c.rationalizer_client);
        }
        read(doc, "workers", c.workers);
        if (doc.contains("timeout_seconds")) c.timeout_seconds = doc["timeout_seconds"].get<double>();
        read(doc, "row_cap", c.row_cap);
        read(doc, "schema_sample_rows", c.schema_sample_rows);
        read(doc, "feature_distance", c.feature_distance);
        read(doc, "hard_features", c.hard_features);
    } catch (const json::exception& e) {
        throw Error(Errc::invalid_input, std::string("config: ") + e.what());
    }

    for (auto* p : {&c.corpus, &c.registry, &c.seeds_dir, &c.repository, &c.output_dir, &c.dev_corpus,
                    &c.predictions, &c.review_file, &c.vocabulary, &c.teacher.transcript,
                    &c.rationalizer_client.transcript}) {
        *p = resolve(base_dir, *p);
    }
    if (c.output_dir.empty()) throw Error(Errc::invalid_input, "config: paths.output_dir is required");
    if (c.workers < 1) throw Error(Errc::invalid_input, "config: workers must be at least 1");
    for (const auto* kind : {&c.teacher.kind, &c.rationalizer_client.kind}) {
        if (*kind != "mock" && *kind != "replay" && *kind != "http") {
            throw Error(Errc::invalid_input, "config: unknown client kind '" + *kind + "'");
        }
    }
    c.bootstrap.workers = c.workers;
    c.rationalizer.workers = c.workers;
    c.bootstrap.model = c.teacher.model;
    c.rationalizer.model = c.rationalizer_client.model;
    c.bootstrap.check();
    return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    if (!fs::exists(path)) throw Error(Errc::not_found, "config file not found: " + path);
    const auto base = fs::absolute(path).parent_path().string();
    return parse(text::read_file(path), base);
}

std::string PipelineConfig::repository_path() const {
    return repository.empty() ? output("repository.jsonl") : repository;
}

std::string PipelineConfig::output(std::string_view name) const {
    return (fs::path(output_dir) / std::string(name)).string();
}

namespace {

void require_path(const std::string& path, const char* what) {
    if (path.empty()) throw Error(Errc::invalid_input, std::string("config: ") + what + " is not set");
    if (!fs::exists(path)) throw Error(Errc::not_found, std::string(what) + " not found: " + path);
}

void write_output(const std::string& path, const std::string& content) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    text::write_file_atomic(path, content);
}

KeywordVocabulary vocabulary_for(const PipelineConfig& c) {
    if (c.vocabulary.empty()) return KeywordVocabulary::builtin();
    require_path(c.vocabulary, "vocabulary file");
    return KeywordVocabulary::load(c.vocabulary);
}

DatabaseRegistry registry_for(const PipelineConfig& c) {
    require_path(c.registry, "database registry");
    auto registry = DatabaseRegistry::load(c.registry);
    if (c.timeout_seconds) registry.set_timeout_seconds(*c.timeout_seconds);
    return registry;
}

std::vector<TrainInstance> cleaned_corpus(const PipelineConfig& c) {
    const auto path = c.output("cleaned.jsonl");
    if (!fs::exists(path)) throw Error(Errc::precondition, "cleaned corpus missing (run clean first): " + path);
    return load_corpus(path, CorpusFormat::generic_jsonl);
}

// Shared state for commands that touch the corpus and the databases.
struct Workspace {
    DatabaseRegistry registry;
    KeywordVocabulary vocab;
    SchemaResolver schemas;
    std::vector<TrainInstance> corpus;
    PipelineContext context;

    Workspace(const PipelineConfig& c, std::vector<TrainInstance> instances)
        : registry(registry_for(c)),
          vocab(vocabulary_for(c)),
          schemas(registry, c.schema_sample_rows),
          corpus(std::move(instances)) {
        context = PipelineContext::make(corpus, registry, vocab, schemas);
    }
};

class ClientHandle {
public:
    ClientHandle(const ClientSettings& s, const PipelineConfig& config, const Workspace& ws) {
        if (s.kind == "replay") {
            require_path(s.transcript, "replay transcript");
            base_ = std::make_unique<ReplayTeacherClient>(s.transcript);
            return;
        }
        if (s.kind == "http") {
            base_ = std::make_unique<HttpTeacherClient>(HttpTeacherSettings::from_environment(s.env_prefix));
        } else {
            TeacherPolicy policy;
            if (s.policy == "always") {
                policy = always_policy();
            } else if (s.policy == "feature_distance") {
                policy = feature_distance_policy(
                    config.feature_distance, std::set<std::string>(config.hard_features.begin(), config.hard_features.end()),
                    ws.vocab);
            } else if (s.policy == "shares_join") {
                policy = shares_keyword_policy("JOIN", ws.vocab);
            } else {
                throw Error(Errc::invalid_input, "unknown mock policy '" + s.policy + "'");
            }
            base_ = std::make_unique<ProceduralTeacher>(ws.context, std::move(policy));
        }
        if (!s.transcript.empty()) recorder_ = std::make_unique<RecordingTeacherClient>(*base_, s.transcript);
    }

    TeacherClient& get() { return recorder_ ? *recorder_ : *base_; }

private:
    std::unique_ptr<TeacherClient> base_;
    std::unique_ptr<TeacherClient> recorder_;
};

std::size_t covered_count(const std::vector<TrainInstance>& corpus, const Repository& repo) {
    return static_cast<std::size_t>(std::count_if(corpus.begin(), corpus.end(),
                                                  [&](const TrainInstance& i) { return repo.covers(i.instance_id); }));
}

ojson coverage_json(const std::vector<TrainInstance>& corpus, const Repository& repo) {
    const auto covered = covered_count(corpus, repo);
    ojson j;
    j["covered"] = covered;
    j["total"] = corpus.size();
    j["percentage"] = format_hundredths(percent_hundredths(covered, corpus.size()));
    return j;
}

}  // namespace

CommandSummary cmd_clean(const PipelineConfig& config) {
    require_path(config.corpus, "corpus");
    const auto registry = registry_for(config);
    const auto corpus = load_corpus(config.corpus, config.corpus_format);
    const auto result = clean_corpus(corpus, registry, config.workers);
    write_output(config.output("cleaned.jsonl"), corpus_to_jsonl(result.kept));
    write_output(config.output("cleaning_report.json"), cleaning_report_json(result.report) + "\n");

    ojson s;
    s["command"] = "clean";
    s["input"] = corpus.size();
    s["kept"] = result.report.kept;
    ojson reasons = ojson::object();
    for (auto r : {RejectReason::syntax_error, RejectReason::timeout, RejectReason::empty_result,
                   RejectReason::missing_db}) {
        reasons[std::string(to_string(r))] = result.report.count(r);
    }
    s["rejected"] = reasons;
    return {"clean", s.dump(), ""};
}

CommandSummary cmd_bootstrap(const PipelineConfig& config) {
    if (config.seeds_dir.empty()) throw Error(Errc::invalid_input, "config: paths.seeds_dir is not set");
    const auto seeds = load_seeds(config.seeds_dir);
    Workspace ws(config, cleaned_corpus(config));
    ClientHandle teacher(config.teacher, config, ws);

    BootstrapStorage storage{config.repository_path()};
    const fs::path repo_path(storage.repository_path);
    if (repo_path.has_parent_path()) fs::create_directories(repo_path.parent_path());
    const auto result = bootstrap_loop(ws.corpus, seeds, teacher.get(), config.bootstrap, ws.context, storage);

    // The report is rebuilt from the iteration log, so reruns reproduce it.
    ojson report;
    report["iterations"] = ojson::array();
    if (fs::exists(storage.log_path())) {
        const auto log = text::read_file(storage.log_path());
        for (auto line : text::split_lines(log)) {
            if (!text::trim(line).empty()) report["iterations"].push_back(ojson::parse(line));
        }
    }
    report["rejected_seeds"] = result.rejected_seeds;
    report["plateau"] = result.plateau;
    report["coverage"] = coverage_json(ws.corpus, result.repository);
    write_output(config.output("bootstrap_report.json"), dump(report) + "\n");

    ojson s;
    s["command"] = "bootstrap";
    s["iterations_run"] = result.iterations.size();
    s["plateau"] = result.plateau;
    s["rejected_seeds"] = result.rejected_seeds.size();
    s["records"] = result.repository.size();
    s["coverage"] = coverage_json(ws.corpus, result.repository);
    return {"bootstrap", s.dump(), ""};
}

CommandSummary cmd_rationalize(const PipelineConfig& config) {
    Workspace ws(config, cleaned_corpus(config));
    auto repo = Repository::load(config.repository_path());
    if (repo.positives().empty()) {
        throw Error(Errc::precondition, "repository has no positive rationale (run bootstrap first): " +
                                            config.repository_path());
    }
    const auto before = covered_count(ws.corpus, repo);

    std::ostringstream trainset;
    const auto examples = export_rationalization_trainset(trainset, ws.corpus, repo, ws.schemas);
    write_output(config.output("rationalization_trainset.jsonl"), trainset.str());

    std::vector<const TrainInstance*> pending;
    for (const auto& inst : ws.corpus) {
        if (!repo.covers(inst.instance_id)) pending.push_back(&inst);
    }
    ClientHandle model(config.rationalizer_client, config, ws);
    const auto result = apply_rationalizer(pending, model.get(), config.rationalizer, ws.context);

    std::vector<ValidatedCotRecord> fresh;
    for (const auto& r : result.records) {
        if (repo.add(r)) fresh.push_back(r);
    }
    RepositoryStore(config.repository_path()).append(fresh);

    std::string flags;
    for (const auto& f : result.flags) flags += flag_to_json(f) + "\n";
    write_output(config.output("inconsistencies.jsonl"), flags);

    ojson s;
    s["command"] = "rationalize";
    s["trainset_examples"] = examples;
    s["pending"] = pending.size();
    s["new_records"] = fresh.size();
    s["flags"] = result.flags.size();
    s["covered_before"] = before;
    s["coverage"] = coverage_json(ws.corpus, repo);
    return {"rationalize", s.dump(), ""};
}

CommandSummary cmd_triage(const PipelineConfig& config) {
    const auto corpus = cleaned_corpus(config);
    const auto flags_path = config.output("inconsistencies.jsonl");
    if (!fs::exists(flags_path)) {
        throw Error(Errc::precondition, "inconsistency flags missing (run rationalize first): " + flags_path);
    }
    std::vector<InconsistencyFlag> flags;
    const auto flag_lines = text::read_file(flags_path);
    for (auto line : text::split_lines(flag_lines)) {
        if (!text::trim(line).empty()) flags.push_back(flag_from_json(line));
    }
    std::vector<ReviewDecision> decisions;
    if (!config.review_file.empty()) {
        require_path(config.review_file, "review file");
        decisions = load_review_file(config.review_file);
    }
    const auto result = triage_inconsistencies(corpus, flags, decisions);
    write_output(config.output("triaged.jsonl"), corpus_to_jsonl(result.corpus));
    write_output(config.output("triage_audit.json"), triage_audit_json(result) + "\n");

    ojson s;
    s["command"] = "triage";
    s["flags"] = flags.size();
    s["excluded"] = result.excluded.size();
    s["pending"] = result.pending.size();
    s["corpus"] = result.corpus.size();
    return {"triage", s.dump(), ""};
}

CommandSummary cmd_export(const PipelineConfig& config, const std::vector<Variant>& variants,
                          const std::vector<Scope>& scopes) {
    const auto triaged = config.output("triaged.jsonl");
    auto corpus = fs::exists(triaged) ? load_corpus(triaged, CorpusFormat::generic_jsonl) : cleaned_corpus(config);
    Workspace ws(config, std::move(corpus));
    const auto repo = Repository::load(config.repository_path());

    ojson s;
    s["command"] = "export";
    s["corpus"] = fs::exists(triaged) ? "triaged" : "cleaned";
    s["files"] = ojson::array();
    for (auto scope : scopes) {
        for (auto variant : variants) {
            std::ostringstream out;
            const auto n = export_finetune_set(out, ws.corpus, repo, variant, scope, ws.schemas);
            const auto name = "finetune_" + std::string(to_string(variant)) + "_" + std::string(to_string(scope)) +
                              ".jsonl";
            write_output(config.output(name), out.str());
            s["files"].push_back({{"file", name}, {"examples", n}});
        }
    }
    return {"export", s.dump(), ""};
}

CommandSummary cmd_eval(const PipelineConfig& config) {
    require_path(config.dev_corpus, "dev corpus");
    require_path(config.predictions, "predictions file");
    const auto registry = registry_for(config);
    const auto devset = load_corpus(config.dev_corpus, config.dev_format);
    const auto predictions = load_predictions(config.predictions);
    EvalOptions options;
    options.workers = config.workers;
    options.compare = config.bootstrap.compare;
    options.exec.row_cap = config.row_cap;
    const auto report = score_predictions(devset, predictions, registry, options);
    const auto table = eval_report_table(report);
    write_output(config.output("eval_report.json"), eval_report_json(report) + "\n");
    write_output(config.output("eval_report.txt"), table);

    ojson s;
    s["command"] = "eval";
    s["instances"] = devset.size();
    s["predictions"] = predictions.size();
    s["correct"] = report.overall.correct;
    s["accuracy"] = format_hundredths(report.overall.hundredths);
    return {"eval", s.dump(), table};
}

CommandSummary cmd_report(const PipelineConfig& config) {
    const auto corpus = cleaned_corpus(config);
    const auto repo = Repository::load(config.repository_path());
    const auto stages = default_stages(config.teacher.model, config.rationalizer_client.model);
    const auto report = coverage_report(corpus, repo, stages);
    const auto table = coverage_report_table(report);
    write_output(config.output("coverage_report.json"), coverage_report_json(report) + "\n");
    write_output(config.output("coverage_report.txt"), table);

    ojson s;
    s["command"] = "report";
    s["stages"] = ojson::array();
    for (const auto& row : report.rows) s["stages"].push_back({{"stage", row.stage}, {"percentage", row.percentage()}});
    return {"report", s.dump(), table};
}

CommandSummary cmd_diff(const std::string& report_a, const std::string& report_b) {
    require_path(report_a, "eval report");
    require_path(report_b, "eval report");
    const auto a = eval_report_from_json(text::read_file(report_a));
    const auto b = eval_report_from_json(text::read_file(report_b));
    const auto diff = diff_reports(a, b);
    auto j = ojson::parse(report_diff_json(diff));
    ojson s;
    s["command"] = "diff";
    s["diff"] = j;
    return {"diff", s.dump(), report_diff_table(diff)};
}

CommandSummary cmd_compact(const PipelineConfig& config) {
    require_path(config.repository_path(), "repository");
    const auto dropped = compact_repository(config.repository_path());
    ojson s;
    s["command"] = "compact";
    s["dropped"] = dropped;
    return {"compact", s.dump(), ""};
}

std::string error_json(const std::exception& e) {
    ojson j;
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        j["error"] = {{"code", std::string(to_string(err->code()))}, {"message", err->what()}};
    } else {
        j["error"] = {{"code", "internal"}, {"message", e.what()}};
    }
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace sqlcot
