#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <mutex>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "sqlcot/bootstrap.hpp"
#include "sqlcot/rationalizer.hpp"
#include "sqlcot/text.hpp"

using namespace sqlcot;
namespace fx = sqlcot::fixtures;

namespace {

struct Env {
    fx::fs::path dir;
    DatabaseRegistry registry;
    std::vector<TrainInstance> corpus;
    SchemaResolver schemas;
    PipelineContext context;

    explicit Env(std::vector<TrainInstance> instances = fx::toy_corpus())
        : dir(fx::make_temp_dir("bootstrap")),
          registry(fx::build_toy_registry(dir)),
          corpus(std::move(instances)),
          schemas(registry, 3) {
        context = PipelineContext::make(corpus, registry, KeywordVocabulary::builtin(), schemas);
    }
};

BootstrapConfig quick_config() {
    BootstrapConfig c;
    c.retry = RetryPolicy{2, std::chrono::milliseconds(0)};
    return c;
}

std::string two_step_cot(const std::string& sql) {
    CotRationale cot;
    cot.steps = {CotStep{1, "Identify the tables", "Read the schema.", std::nullopt},
                 CotStep{2, "Write the query", "", std::string(text::trim(sql))}};
    return serialize_cot(cot);
}

// Answers every request with the gold query wrapped in a two-step rationale.
class GoldTeacher : public TeacherClient {
public:
    explicit GoldTeacher(const PipelineContext& ctx) : ctx_(&ctx) {}
    TeacherResponse complete(const TeacherRequest& r) override {
        std::lock_guard lock(mutex);
        requests.push_back(r);
        return {two_step_cot(ctx_->find(r.instance_id)->gold_sql), "stop", std::nullopt};
    }
    std::mutex mutex;
    std::vector<TeacherRequest> requests;

private:
    const PipelineContext* ctx_;
};

// Answers with a query that returns no rows.
class WrongTeacher : public TeacherClient {
public:
    TeacherResponse complete(const TeacherRequest&) override { return {two_step_cot("SELECT 1 WHERE 0"), "stop", {}}; }
};

class BrokenTeacher : public TeacherClient {
public:
    TeacherResponse complete(const TeacherRequest&) override { throw TransportError("connection refused"); }
};

class ProseTeacher : public TeacherClient {
public:
    TeacherResponse complete(const TeacherRequest&) override { return {"I cannot answer that.", "stop", {}}; }
};

std::set<std::string> positive_ids(const IterationReport& report) {
    std::set<std::string> out;
    for (const auto& o : report.outcomes) {
        if (o.status == AttemptStatus::positive) out.insert(o.instance_id);
    }
    return out;
}

struct EnvVar {
    std::string name;
    std::optional<std::string> saved;
    EnvVar(std::string n, const std::string& value) : name(std::move(n)) {
        if (const char* v = std::getenv(name.c_str())) saved = v;
        ::setenv(name.c_str(), value.c_str(), 1);
    }
    ~EnvVar() {
        if (saved) ::setenv(name.c_str(), saved->c_str(), 1);
        else ::unsetenv(name.c_str());
    }
};

}  // namespace

TEST_SUITE("bootstrap") {
    TEST_CASE("zero-exemplar prompt matches the reference prompt byte for byte") {
        const auto reference = fx::read_fixture("reference_prompt.txt");
        const std::string open = "[SCHEMA]\n";
        const std::string note = "Note:\n";
        const auto note_at = reference.find(note);
        const auto schema_end = reference.find("\n[/SCHEMA]");
        REQUIRE(note_at != std::string::npos);
        TrainInstance target;
        target.instance_id = "ref";
        target.db_id = "school";
        target.schema_text = reference.substr(open.size(), note_at + note.size() - 1 - open.size());
        target.evidence = reference.substr(note_at + note.size(), schema_end - note_at - note.size());
        target.question =
            "Among professors with the highest popularity, how many of their students have research capability of 5?";
        const auto prompt = build_prompt(target, {}, SchemaResolver());
        CHECK(prompt + "\n" == reference);
        CHECK(prompt.substr(prompt.size() - kGenerationInstruction.size()) == kGenerationInstruction);
    }

    TEST_CASE("evidence goes into a new Note section when the schema has none") {
        CHECK(schema_block("CREATE TABLE t (a);", std::string("a means b")) ==
              "[SCHEMA]\nCREATE TABLE t (a);\n\nNote:\na means b\n[/SCHEMA]");
        CHECK(schema_block("CREATE TABLE t (a);", std::nullopt) == "[SCHEMA]\nCREATE TABLE t (a);\n[/SCHEMA]");
        CHECK(schema_block("", std::nullopt) == "[SCHEMA]\n[/SCHEMA]");
    }

    TEST_CASE("exemplars precede the target in rank order") {
        Env env;
        const auto& a = env.corpus[0];
        const auto& b = env.corpus[1];
        const auto& target = env.corpus[2];
        Verdict positive;
        positive.label = Label::positive;
        auto ra = make_record(a.instance_id, parse_cot(two_step_cot(a.gold_sql)), positive, 0, Decoding::manual,
                              KeywordVocabulary::builtin(), "t");
        auto rb = make_record(b.instance_id, parse_cot(two_step_cot(b.gold_sql)), positive, 0, Decoding::manual,
                              KeywordVocabulary::builtin(), "t");
        const std::vector<Exemplar> exemplars = {{&a, &ra}, {&b, &rb}};
        const auto prompt = build_prompt(target, exemplars, env.schemas);
        const auto expected = source_block(a, env.schemas.schema_for(a), kGenerationInstruction) + "\n\n" +
                              std::string(text::trim_right(ra.cot_markdown)) + "\n\n" +
                              source_block(b, env.schemas.schema_for(b), kGenerationInstruction) + "\n\n" +
                              std::string(text::trim_right(rb.cot_markdown)) + "\n\n" +
                              source_block(target, env.schemas.schema_for(target), kGenerationInstruction);
        CHECK(prompt == expected);
        CHECK(build_prompt(target, exemplars, env.schemas) == prompt);

        auto negative = ra;
        negative.verdict.label = Label::negative;
        const std::vector<Exemplar> bad = {{&a, &negative}};
        CHECK_THROWS_AS(build_prompt(target, bad, env.schemas), Error);
        const std::vector<Exemplar> self = {{&a, &ra}};
        CHECK_THROWS_AS(build_prompt(a, self, env.schemas), Error);
    }

    TEST_CASE("empty schema without fallback is a precondition error") {
        TrainInstance t{"x", "school", "q", "SELECT 1", "", Difficulty::simple, std::nullopt};
        try {
            SchemaResolver().schema_for(t);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::precondition);
        }
    }

    TEST_CASE("decoding alternates greedy and seeded sampling") {
        auto config = quick_config();
        config.sampling_seed = 100;
        config.sampling_temperature = 0.9;
        for (int i = 1; i <= 13; ++i) {
            const auto d = select_decoding(i, config);
            if (i % 2 == 1) {
                CHECK(d.mode == Decoding::greedy);
                CHECK(d.temperature == 0.0);
                CHECK_FALSE(d.seed);
            } else {
                CHECK(d.mode == Decoding::sampling);
                CHECK(d.temperature == 0.9);
                CHECK(d.seed == std::optional<std::uint64_t>(100 + i));
            }
        }
    }

    TEST_CASE("an iteration over nothing is empty") {
        Env env;
        GoldTeacher teacher(env.context);
        const auto report = run_iteration({}, Repository(), teacher, quick_config(), 1, env.context);
        CHECK(report.pending == 0);
        CHECK(report.records.empty());
        CHECK(teacher.requests.empty());
    }

    TEST_CASE("a perfect teacher covers everything in one iteration without self exemplars") {
        Env env;
        GoldTeacher teacher(env.context);
        auto config = quick_config();
        config.workers = 3;
        const auto seeds = fx::toy_seeds();
        const auto result = bootstrap_loop(env.corpus, seeds, teacher, config, env.context);
        REQUIRE(result.iterations.size() >= 1);
        CHECK(result.repository.covered().size() == env.corpus.size());
        CHECK(positive_ids(result.iterations[0]).size() == env.corpus.size() - seeds.size());
        for (const auto& o : result.iterations[0].outcomes) {
            CHECK(o.exemplar_ids.size() <= config.few_shot_n);
            CHECK(std::find(o.exemplar_ids.begin(), o.exemplar_ids.end(), o.instance_id) == o.exemplar_ids.end());
        }
        for (const auto& r : teacher.requests) {
            CHECK(r.exemplar_sqls.size() <= config.few_shot_n);
            CHECK(r.prompt.find(env.context.find(r.instance_id)->question) != std::string::npos);
        }
        // Nothing left to do: the second iteration adds nothing and stops.
        REQUIRE(result.iterations.size() == 2);
        CHECK(result.iterations[1].pending == 0);
        CHECK(result.plateau);
    }

    TEST_CASE("a teacher that never matches stops after one iteration") {
        Env env;
        WrongTeacher teacher;
        const auto result = bootstrap_loop(env.corpus, fx::toy_seeds(), teacher, quick_config(), env.context);
        REQUIRE(result.iterations.size() == 1);
        CHECK(result.plateau);
        CHECK(result.repository.covered().size() == 2);
        CHECK(result.iterations[0].count(AttemptStatus::negative) == env.corpus.size() - 2);
        // Negative records are kept for later inspection.
        CHECK(result.repository.size() == env.corpus.size());
    }

    TEST_CASE("transport failures and unparsable answers are recorded, not dropped") {
        Env env;
        BrokenTeacher broken;
        auto result = bootstrap_loop(env.corpus, fx::toy_seeds(), broken, quick_config(), env.context);
        REQUIRE(result.iterations.size() == 1);
        CHECK(result.iterations[0].count(AttemptStatus::transport_failed) == env.corpus.size() - 2);
        CHECK(result.iterations[0].outcomes.size() == env.corpus.size() - 2);

        ProseTeacher prose;
        result = bootstrap_loop(env.corpus, fx::toy_seeds(), prose, quick_config(), env.context);
        CHECK(result.iterations[0].count(AttemptStatus::parse_error) == env.corpus.size() - 2);
        CHECK(iteration_report_json(result.iterations[0]).find("parse_error") != std::string::npos);
    }

    TEST_CASE("seed problems") {
        Env env;
        GoldTeacher teacher(env.context);
        std::vector<SeedRationale> seeds = fx::toy_seeds();
        seeds.push_back({"school_02", two_step_cot("SELECT 1")});
        seeds.push_back({"unknown", two_step_cot("SELECT 1")});
        seeds.push_back({"school_03", "not a rationale"});
        const auto result = bootstrap_loop(env.corpus, seeds, teacher, quick_config(), env.context);
        CHECK(result.rejected_seeds.size() == 3);

        const std::vector<SeedRationale> bad = {{"school_02", two_step_cot("SELECT 1")}};
        try {
            bootstrap_loop(env.corpus, bad, teacher, quick_config(), env.context);
            FAIL("expected a precondition error");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::precondition);
            CHECK(std::string(e.what()).find("school_02") != std::string::npos);
        }
        CHECK_THROWS_AS(load_seeds((env.dir / "no-seeds").string()), Error);
        CHECK(fx::toy_seeds().size() == 2);
    }

    TEST_CASE("top-1 JOIN policy matches an independent simulation") {
        Env env;
        const auto& vocab = KeywordVocabulary::builtin();
        ProceduralTeacher teacher(env.context, shares_keyword_policy("JOIN", vocab));
        auto config = quick_config();
        config.few_shot_n = 1;
        const auto seeds = fx::toy_seeds();
        const auto result = bootstrap_loop(env.corpus, seeds, teacher, config, env.context);

        // Simulation: dense keyword counts, cosine by long double, ties by id.
        std::map<std::string, std::vector<double>> vectors;
        auto dense = [&](const std::string& sql) {
            std::vector<double> v(vocab.size());
            for (const auto& kw : tokenize_keywords(sql, vocab).keywords) v[static_cast<std::size_t>(vocab.index_of(kw))] += 1;
            return v;
        };
        for (const auto& inst : env.corpus) vectors[inst.instance_id] = dense(inst.gold_sql);
        auto cos = [](const std::vector<double>& a, const std::vector<double>& b) {
            long double dot = 0, na = 0, nb = 0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                dot += a[i] * b[i];
                na += a[i] * a[i];
                nb += b[i] * b[i];
            }
            return na == 0 || nb == 0 ? 0.0L : dot / std::sqrt(na * nb);
        };
        std::set<std::string> covered;
        for (const auto& s : seeds) covered.insert(s.instance_id);
        std::vector<std::set<std::string>> expected;
        for (int it = 1; it <= config.max_iterations; ++it) {
            std::set<std::string> gained;
            for (const auto& inst : env.corpus) {
                if (covered.count(inst.instance_id)) continue;
                std::string best;
                long double best_score = -1;
                for (const auto& c : covered) {
                    const auto s = cos(vectors[inst.instance_id], vectors[c]);
                    if (s > best_score + 1e-12L) {
                        best_score = s;
                        best = c;
                    }
                }
                const auto& exemplar_sql = env.context.find(best)->gold_sql;
                if (exemplar_sql.find(" JOIN ") != std::string::npos) gained.insert(inst.instance_id);
            }
            expected.push_back(gained);
            covered.insert(gained.begin(), gained.end());
            if (gained.empty()) break;
        }
        REQUIRE(result.iterations.size() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) {
            CAPTURE(i);
            CHECK(positive_ids(result.iterations[i]) == expected[i]);
        }
        CHECK(result.repository.covered() == covered);
    }

    TEST_CASE("coverage is monotone and runs are deterministic") {
        EnvVar epoch("SOURCE_DATE_EPOCH", "1700000000");
        Env env;
        const auto& vocab = KeywordVocabulary::builtin();
        ProceduralTeacher teacher(env.context, feature_distance_policy(1, {"COMPOUND", "CTE", "CASE"}, vocab));
        auto config = quick_config();
        const auto first = bootstrap_loop(env.corpus, fx::toy_seeds(), teacher, config, env.context);
        config.workers = 4;
        const auto second = bootstrap_loop(env.corpus, fx::toy_seeds(), teacher, config, env.context);
        CHECK(first.repository.to_jsonl() == second.repository.to_jsonl());

        std::size_t covered = 2;
        std::set<std::string> seen;
        for (const auto& it : first.iterations) {
            const auto gained = positive_ids(it);
            for (const auto& id : gained) CHECK(seen.insert(id).second);
            covered += gained.size();
        }
        CHECK(covered == first.repository.covered().size());
    }

    TEST_CASE("an interrupted run resumes to the same repository") {
        EnvVar epoch("SOURCE_DATE_EPOCH", "1700000000");
        Env env;
        const auto& vocab = KeywordVocabulary::builtin();
        ProceduralTeacher teacher(env.context, feature_distance_policy(1, {"COMPOUND", "CTE", "CASE"}, vocab));
        auto config = quick_config();

        const BootstrapStorage whole{(env.dir / "whole.jsonl").string()};
        const auto full = bootstrap_loop(env.corpus, fx::toy_seeds(), teacher, config, env.context, whole);

        const BootstrapStorage split{(env.dir / "split.jsonl").string()};
        config.max_iterations = 1;
        bootstrap_loop(env.corpus, fx::toy_seeds(), teacher, config, env.context, split);
        config.max_iterations = 16;
        const auto resumed = bootstrap_loop(env.corpus, fx::toy_seeds(), teacher, config, env.context, split);
        CHECK(resumed.iterations.size() + 1 == full.iterations.size());
        CHECK(text::read_file(split.repository_path) == text::read_file(whole.repository_path));
        CHECK(text::read_file(split.log_path()) == text::read_file(whole.log_path()));

        // A finished run does no further work.
        const auto again = bootstrap_loop(env.corpus, fx::toy_seeds(), teacher, config, env.context, split);
        CHECK(again.iterations.empty());
        CHECK(again.plateau);
        CHECK(text::read_file(split.repository_path) == text::read_file(whole.repository_path));
    }

    TEST_CASE("config checks") {
        auto config = quick_config();
        config.few_shot_n = 0;
        CHECK_THROWS_AS(config.check(), Error);
        config = quick_config();
        config.max_iterations = 0;
        CHECK_THROWS_AS(config.check(), Error);
    }
}
