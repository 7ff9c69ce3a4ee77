#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"
#include "sqlcot/pipeline.hpp"

using namespace sqlcot;
namespace fx = sqlcot::fixtures;

namespace {

Errc code_of(std::string_view json) {
    try {
        PipelineConfig::parse(json, "/base");
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::io;
}

}  // namespace

TEST_SUITE("pipeline") {
    TEST_CASE("config parsing resolves relative paths") {
        const auto c = PipelineConfig::parse(R"({
            "paths": {"corpus": "data/train.jsonl", "registry": "/abs/registry.json", "output_dir": "out",
                      "seeds_dir": "seeds", "corpus_format": "bird"},
            "bootstrap": {"few_shot_n": 4, "max_iterations": 3, "retry_attempts": 2, "retry_backoff_ms": 5,
                          "order": "multiset"},
            "teacher": {"kind": "replay", "model": "m", "transcript": "t.jsonl"},
            "workers": 2,
            "timeout_seconds": 1.5
        })", "/base");
        CHECK(c.corpus == "/base/data/train.jsonl");
        CHECK(c.registry == "/abs/registry.json");
        CHECK(c.output_dir == "/base/out");
        CHECK(c.seeds_dir == "/base/seeds");
        CHECK(c.teacher.transcript == "/base/t.jsonl");
        CHECK(c.corpus_format == CorpusFormat::bird_json);
        CHECK(c.bootstrap.few_shot_n == 4);
        CHECK(c.bootstrap.max_iterations == 3);
        CHECK(c.bootstrap.retry.attempts == 2);
        CHECK(c.bootstrap.compare.order == OrderMode::multiset);
        CHECK(c.teacher.kind == "replay");
        CHECK(c.workers == 2);
        REQUIRE(c.timeout_seconds);
        CHECK(*c.timeout_seconds == 1.5);
        CHECK(c.repository_path() == "/base/out/repository.jsonl");
        CHECK(c.output("x.json") == "/base/out/x.json");
    }

    TEST_CASE("credentials never come from the config file") {
        CHECK(code_of(R"({"paths": {"output_dir": "o"}, "api_key": "k"})") == Errc::invalid_input);
        CHECK(code_of(R"({"paths": {"output_dir": "o"}, "teacher": {"kind": "http", "token": "k"}})") ==
              Errc::invalid_input);
        CHECK(code_of(R"({"paths": {"output_dir": "o"}, "teacher": {"API_KEY": "k"}})") == Errc::invalid_input);
    }

    TEST_CASE("invalid configs are rejected") {
        CHECK(code_of(R"({"paths": {}})") == Errc::invalid_input);
        CHECK(code_of(R"({"paths": {"output_dir": "o"}, "colour": 1})") == Errc::invalid_input);
        CHECK(code_of(R"({"paths": {"output_dir": "o", "corpsu": "x"}})") == Errc::invalid_input);
        CHECK(code_of(R"({"paths": {"output_dir": "o"}, "workers": 0})") == Errc::invalid_input);
        CHECK(code_of(R"({"paths": {"output_dir": "o"}, "teacher": {"kind": "oracle"}})") == Errc::invalid_input);
        CHECK(code_of(R"({"paths": {"output_dir": "o"}, "bootstrap": {"order": "random"}})") == Errc::invalid_input);
        CHECK(code_of(R"({"paths": {"output_dir": "o"}, "workers": "two"})") == Errc::invalid_input);
        CHECK(code_of("{not json") == Errc::parse);
        CHECK_THROWS_AS(PipelineConfig::load("/nonexistent/config.json"), Error);
    }

    TEST_CASE("load resolves against the config file directory") {
        const auto dir = fx::make_temp_dir("config");
        const auto path = dir / "c.json";
        std::ofstream(path) << R"({"paths": {"output_dir": "out"}})";
        CHECK(PipelineConfig::load(path.string()).output_dir == (dir / "out").string());
    }

    TEST_CASE("commands report missing inputs") {
        const auto dir = fx::make_temp_dir("commands");
        auto c = PipelineConfig::parse(R"({"paths": {"output_dir": "out"}})", dir.string());
        try {
            cmd_bootstrap(c);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::invalid_input);
        }
        c.corpus = (dir / "missing.jsonl").string();
        try {
            cmd_clean(c);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::not_found);
        }
    }

    TEST_CASE("error objects are JSON") {
        const auto j = nlohmann::json::parse(error_json(Error(Errc::precondition, "no seeds")));
        CHECK(j["error"]["code"] == "precondition");
        CHECK(j["error"]["message"] == "no seeds");
        const auto other = nlohmann::json::parse(error_json(std::runtime_error("boom")));
        CHECK(other["error"]["code"] == "internal");
        const auto bad = nlohmann::json::parse(error_json(std::runtime_error("\xff bytes")));
        CHECK(bad["error"]["message"].is_string());
    }
}
