#include <algorithm>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "sqlcot/execval.hpp"

using namespace sqlcot;
namespace fx = sqlcot::fixtures;

namespace {

const char* const kReferenceFinal =
    "SELECT COUNT(ra.student_id) AS num_students\nFROM prof JOIN ra ON prof.prof_id = ra.prof_id\n"
    "WHERE prof.popularity = (SELECT MAX(popularity) FROM prof) AND ra.capability = 5;";

struct Toy {
    fx::fs::path dir = fx::make_temp_dir("execval");
    DatabaseRegistry registry = fx::build_toy_registry(dir, 2.0);
};

TrainInstance instance(std::string db, std::string gold) {
    TrainInstance t;
    t.instance_id = "x";
    t.db_id = std::move(db);
    t.gold_sql = std::move(gold);
    return t;
}

CotRationale two_step(std::string first_sql, std::string final) {
    CotRationale cot;
    cot.steps = {CotStep{1, "first", "", std::move(first_sql)}, CotStep{2, "final", "", std::move(final)}};
    return cot;
}

ExecFailure failure_of(const DatabaseRegistry& registry, const std::string& db, const std::string& sql) {
    try {
        execute(db, sql, registry);
    } catch (const ExecutionError& e) {
        return e.failure();
    }
    FAIL("expected an execution error for " << sql);
    return ExecFailure::sql_error;
}

// Oracle: render each row with a private formatter, sort, and compare.
std::vector<std::string> sorted_rendering(const ResultTable& t) {
    std::vector<std::string> rows;
    for (const auto& row : t.rows) {
        std::string s;
        for (const auto& v : row) {
            if (std::holds_alternative<std::monostate>(v)) s += "N|";
            else if (auto* i = std::get_if<std::int64_t>(&v)) s += "I" + std::to_string(*i) + "|";
            else if (auto* str = std::get_if<std::string>(&v)) s += "S" + std::to_string(str->size()) + ":" + *str + "|";
            else s += "?|";
        }
        rows.push_back(s);
    }
    std::sort(rows.begin(), rows.end());
    return rows;
}

ResultTable random_table(std::mt19937& rng, std::size_t columns) {
    ResultTable t;
    t.column_count = columns;
    const std::size_t n = rng() % 8;
    for (std::size_t r = 0; r < n; ++r) {
        std::vector<Value> row;
        for (std::size_t c = 0; c < columns; ++c) {
            switch (rng() % 3) {
                case 0: row.emplace_back(std::monostate{}); break;
                case 1: row.emplace_back(static_cast<std::int64_t>(rng() % 4)); break;
                default: row.emplace_back(std::string(1, static_cast<char>('a' + rng() % 3)));
            }
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

}  // namespace

TEST_SUITE("execval") {
    TEST_CASE("reference query returns two students") {
        Toy toy;
        const auto table = execute("school", kReferenceFinal, toy.registry);
        CHECK(table.column_count == 1);
        REQUIRE(table.rows.size() == 1);
        CHECK(table.rows[0][0] == Value(std::int64_t{2}));
        CHECK(fx::raw_rows(toy.dir / "school.sqlite", kReferenceFinal) == std::vector<std::vector<std::string>>{{"2"}});
    }

    TEST_CASE("failure classes") {
        Toy toy;
        CHECK(failure_of(toy.registry, "school", "SELECT * FROM no_such_table") == ExecFailure::sql_error);
        CHECK(failure_of(toy.registry, "school", "SELEC 1") == ExecFailure::sql_error);
        CHECK(failure_of(toy.registry, "school", "DELETE FROM prof") == ExecFailure::write_rejected);
        CHECK(failure_of(toy.registry, "school", "SELECT 1; SELECT 2") == ExecFailure::sql_error);
        CHECK(failure_of(toy.registry, "nowhere", "SELECT 1") == ExecFailure::missing_db);
        CHECK(failure_of(toy.registry, "school",
                         "WITH RECURSIVE r(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM r) SELECT COUNT(*) FROM r") ==
              ExecFailure::timeout);
        CHECK(fx::raw_rows(toy.dir / "school.sqlite", "SELECT COUNT(*) FROM prof") ==
              std::vector<std::vector<std::string>>{{"4"}});
    }

    TEST_CASE("trailing semicolons and comments are a single statement") {
        Toy toy;
        CHECK(execute("school", "SELECT 1; -- done", toy.registry).rows.size() == 1);
    }

    TEST_CASE("row cap truncates and truncated tables refuse comparison") {
        Toy toy;
        ExecOptions options;
        options.row_cap = 2;
        const auto t = execute("school", "SELECT student_id FROM student", toy.registry, options);
        CHECK(t.truncated);
        CHECK(t.rows.size() == 2);
        CHECK_THROWS_AS(compare_results(t, t, false), Error);
    }

    TEST_CASE("integral reals canonicalize to integers") {
        CHECK(canonical_real(2.0) == Value(std::int64_t{2}));
        CHECK(canonical_real(2.5) == Value(2.5));
        Toy toy;
        CHECK(compare_results(execute("school", "SELECT 2.0", toy.registry), execute("school", "SELECT 2", toy.registry),
                              false));
    }

    TEST_CASE("multiset and sequence comparison") {
        ResultTable a{2, {{std::int64_t{1}, std::string("x")}, {std::int64_t{2}, std::monostate{}}}, false};
        ResultTable b{2, {{std::int64_t{2}, std::monostate{}}, {std::int64_t{1}, std::string("x")}}, false};
        CHECK(compare_results(a, a, true));
        CHECK(compare_results(a, b, false));
        CHECK_FALSE(compare_results(a, b, true));
        ResultTable c = a;
        c.column_count = 3;
        CHECK_FALSE(compare_results(a, c, false));
        ResultTable dup{2, {{std::int64_t{1}, std::string("x")}, {std::int64_t{1}, std::string("x")}}, false};
        CHECK_FALSE(compare_results(a, dup, false));
    }

    TEST_CASE("epsilon comparison for reals") {
        ResultTable a{1, {{0.1 + 0.2}}, false};
        ResultTable b{1, {{0.3}}, false};
        CHECK_FALSE(compare_results(a, b, false));
        CHECK(compare_results(a, b, false, 1e-9));
    }

    TEST_CASE("comparison matches the sort oracle on random tables") {
        std::mt19937 rng(31337);
        for (int i = 0; i < 300; ++i) {
            const std::size_t cols = 1 + rng() % 3;
            const auto a = random_table(rng, cols);
            auto b = rng() % 2 ? random_table(rng, cols) : a;
            std::shuffle(b.rows.begin(), b.rows.end(), rng);
            CHECK(compare_results(a, b, false) == (sorted_rendering(a) == sorted_rendering(b)));
            CHECK(compare_results(a, b, false) == compare_results(b, a, false));
            CHECK(compare_results(a, a, false));
            CHECK(compare_results(a, b, true) == (a.rows == b.rows));
        }
    }

    TEST_CASE("order sensitivity follows the gold query") {
        CHECK(order_sensitive_for("SELECT a FROM t ORDER BY a", OrderMode::gold_order_by));
        CHECK_FALSE(order_sensitive_for("SELECT a FROM t", OrderMode::gold_order_by));
        CHECK(order_sensitive_for("SELECT a FROM t", OrderMode::sequence));
        CHECK_FALSE(order_sensitive_for("SELECT a FROM t ORDER BY a", OrderMode::multiset));
    }

    TEST_CASE("validation labels") {
        Toy toy;
        Executor exec(toy.registry);
        const auto inst = instance("school", "SELECT first_name FROM prof WHERE popularity = 3");

        auto v = validate_cot(inst, two_step("SELECT * FROM prof", inst.gold_sql), exec);
        CHECK(v.positive());
        CHECK(v.detail == VerdictDetail::match);
        CHECK(v.steps.size() == 2);
        CHECK(v.gold_shape == std::optional<ResultShape>(ResultShape{1, 2}));

        v = validate_cot(inst, two_step("SELECT 1", "SELECT first_name, last_name FROM prof WHERE popularity = 3"), exec);
        CHECK_FALSE(v.positive());
        CHECK(v.detail == VerdictDetail::result_mismatch);

        v = validate_cot(inst, two_step("SELECT 1", "SELECT nope FROM prof"), exec);
        CHECK(v.detail == VerdictDetail::final_sql_error);
        CHECK(v.message.find("nope") != std::string::npos);

        // A failing intermediate step is reported but does not change the label.
        v = validate_cot(inst, two_step("SELECT broken FROM", inst.gold_sql), exec);
        CHECK(v.positive());
        CHECK_FALSE(v.steps[0].ok());
        CHECK(v.steps[1].ok());
    }

    TEST_CASE("label depends only on the final query") {
        Toy toy;
        Executor exec(toy.registry);
        const auto inst = instance("school", "SELECT COUNT(*) FROM student");
        auto cot = two_step("SELECT * FROM student", "SELECT COUNT(student_id) FROM student");
        const auto base = validate_cot(inst, cot, exec).label;
        cot.steps[0].prose = "Different explanation entirely.";
        cot.steps[0].title = "Another title";
        cot.steps[0].sql = "SELECT 42";
        CHECK(validate_cot(inst, cot, exec).label == base);
        CHECK(validate_sql(inst, "SELECT COUNT(student_id) FROM student", exec).label == base);
    }

    TEST_CASE("ordered gold compares sequences") {
        Toy toy;
        Executor exec(toy.registry);
        const auto ordered = instance("school", "SELECT prof_id FROM prof ORDER BY prof_id");
        CHECK_FALSE(validate_sql(ordered, "SELECT prof_id FROM prof ORDER BY prof_id DESC", exec).positive());
        const auto unordered = instance("school", "SELECT prof_id FROM prof");
        CHECK(validate_sql(unordered, "SELECT prof_id FROM prof ORDER BY prof_id DESC", exec).positive());
    }

    TEST_CASE("reference rationale validates against its own final query") {
        Toy toy;
        Executor exec(toy.registry);
        const auto cot = parse_cot(fx::read_fixture("reference_rationale.md"));
        const auto inst = instance("school", kReferenceFinal);
        const auto v = validate_cot(inst, cot, exec);
        CHECK(v.positive());
        REQUIRE(v.steps.size() == 5);
        for (const auto& s : v.steps) CHECK(s.ok());
    }

    TEST_CASE("gold failures propagate") {
        Toy toy;
        Executor exec(toy.registry);
        CHECK_THROWS_AS(validate_sql(instance("school", "SELECT nope"), "SELECT 1", exec), ExecutionError);
        CHECK_THROWS_AS(validate_sql(instance("missing", "SELECT 1"), "SELECT 1", exec), ExecutionError);
    }
}
