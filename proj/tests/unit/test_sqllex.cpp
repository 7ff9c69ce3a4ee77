#include <sqlite3.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "sqlcot/hash.hpp"
#include "sqlcot/repository.hpp"
#include "sqlcot/sqllex.hpp"

using namespace sqlcot;

namespace {

const KeywordVocabulary& vocab() { return KeywordVocabulary::builtin(); }

std::vector<std::string> keyword_file_lines() {
    std::ifstream in(std::string(SQLCOT_FIXTURE_DIR) + "/../../core/data/sqlite_keywords.txt");
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        out.push_back(line);
    }
    return out;
}

// Character-level oracle: blanks out literals, quoted names and comments,
// then counts maximal word runs found in the keyword list.
std::map<std::string, long> oracle_counts(const std::string& sql, const std::set<std::string>& keywords) {
    std::string clean(sql.size(), ' ');
    std::size_t i = 0;
    while (i < sql.size()) {
        const char c = sql[i];
        if (c == '-' && i + 1 < sql.size() && sql[i + 1] == '-') {
            while (i < sql.size() && sql[i] != '\n') ++i;
        } else if (c == '/' && i + 1 < sql.size() && sql[i + 1] == '*') {
            const auto end = sql.find("*/", i + 2);
            i = end == std::string::npos ? sql.size() : end + 2;
        } else if (c == '\'' || c == '"' || c == '`') {
            ++i;
            while (i < sql.size()) {
                if (sql[i] == c) {
                    if (i + 1 < sql.size() && sql[i + 1] == c) {
                        i += 2;
                        continue;
                    }
                    ++i;
                    break;
                }
                ++i;
            }
        } else if (c == '[') {
            const auto end = sql.find(']', i);
            i = end == std::string::npos ? sql.size() : end + 1;
        } else {
            clean[i] = c;
            ++i;
        }
    }
    std::map<std::string, long> counts;
    std::size_t p = 0;
    while (p < clean.size()) {
        const unsigned char c = static_cast<unsigned char>(clean[p]);
        if (std::isalnum(c) || c == '_') {
            const std::size_t start = p;
            while (p < clean.size() && (std::isalnum(static_cast<unsigned char>(clean[p])) || clean[p] == '_')) ++p;
            std::string word = clean.substr(start, p - start);
            if (std::isdigit(static_cast<unsigned char>(word[0]))) continue;
            std::transform(word.begin(), word.end(), word.begin(), [](unsigned char ch) { return std::toupper(ch); });
            if (keywords.count(word)) ++counts[word];
        } else {
            ++p;
        }
    }
    return counts;
}

std::string random_case(std::string s, std::mt19937& rng) {
    for (auto& ch : s) {
        if (rng() % 2) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    return s;
}

std::string random_query(std::mt19937& rng) {
    static const std::vector<std::string> keywords = {"SELECT", "FROM",  "WHERE", "JOIN",  "ON",    "GROUP", "BY",
                                                      "ORDER",  "LIMIT", "AND",   "OR",    "COUNT", "MAX",   "AS",
                                                      "HAVING", "IN",    "NOT",   "NULL",  "CASE",  "WHEN",  "END"};
    static const std::vector<std::string> names = {"t",         "prof",     "from_date", "selected", "order_id",
                                                   "group_no",  "x1",       "whereabouts", "counts", "_limit"};
    static const std::vector<std::string> punct = {",", "(", ")", "=", "<>", "*", ".", ";", "+", "||"};
    std::string sql;
    const int n = 5 + static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i) {
        switch (rng() % 9) {
            case 0:
            case 1:
            case 2: sql += random_case(keywords[rng() % keywords.size()], rng); break;
            case 3: sql += names[rng() % names.size()]; break;
            case 4: sql += "'" + keywords[rng() % keywords.size()] + " it''s " + names[rng() % names.size()] + "'"; break;
            case 5: sql += "\"" + keywords[rng() % keywords.size()] + "\""; break;
            case 6: sql += rng() % 2 ? "-- " + keywords[rng() % keywords.size()] + "\n"
                                     : "/* " + keywords[rng() % keywords.size()] + " */"; break;
            case 7: sql += std::to_string(rng() % 1000) + (rng() % 3 == 0 ? ".5" : ""); break;
            default: sql += rng() % 4 == 0 ? "[" + keywords[rng() % keywords.size()] + "]" : punct[rng() % punct.size()];
        }
        sql += rng() % 5 == 0 ? "\n" : " ";
    }
    return sql;
}

SqlVector vec(std::map<std::string, long> counts) { return SqlVector{std::move(counts), vocab().version()}; }

}  // namespace

TEST_SUITE("sqllex") {
    TEST_CASE("literals, comments and identifiers do not count") {
        const auto v = vectorize("SELECT 'SELECT FROM' FROM t -- WHERE\n/* JOIN */ WHERE from_date = \"order\"", vocab());
        CHECK(v.counts == std::map<std::string, long>{{"SELECT", 1}, {"FROM", 1}, {"WHERE", 1}});
        CHECK(v.vocabulary == vocab().version());
    }

    TEST_CASE("keywords are case-insensitive and counted per occurrence") {
        const auto v = vectorize("select a from t where b in (select c FROM u)", vocab());
        CHECK(v.count("SELECT") == 2);
        CHECK(v.count("FROM") == 2);
        CHECK(v.count("WHERE") == 1);
        CHECK(v.count("IN") == 1);
    }

    TEST_CASE("empty and keyword-free input give the zero vector") {
        CHECK(vectorize("", vocab()).empty());
        CHECK(vectorize("foo bar 42", vocab()).empty());
    }

    TEST_CASE("unterminated literal warns instead of throwing") {
        const auto scan = tokenize_keywords("SELECT 'abc FROM t", vocab());
        CHECK(scan.keywords == std::vector<std::string>{"SELECT"});
        REQUIRE(scan.warnings.size() == 1);
        CHECK(scan.warnings[0].find("unterminated") != std::string::npos);
    }

    TEST_CASE("reference query keyword counts") {
        const std::string sql =
            "SELECT COUNT(ra.student_id) AS num_students\nFROM prof JOIN ra ON prof.prof_id = ra.prof_id\n"
            "WHERE prof.popularity = (SELECT MAX(popularity) FROM prof) AND ra.capability = 5;";
        const auto v = vectorize(sql, vocab());
        CHECK(v.counts == std::map<std::string, long>{{"SELECT", 2}, {"COUNT", 1}, {"AS", 1}, {"FROM", 2},
                                                       {"JOIN", 1},   {"ON", 1},    {"WHERE", 1}, {"MAX", 1},
                                                       {"AND", 1}});
    }

    TEST_CASE("random queries match the character-scan oracle") {
        const auto lines = keyword_file_lines();
        const std::set<std::string> keywords(lines.begin(), lines.end());
        std::mt19937 rng(20240601);
        for (int i = 0; i < 50; ++i) {
            const auto sql = random_query(rng);
            CAPTURE(sql);
            CHECK(vectorize(sql, vocab()).counts == oracle_counts(sql, keywords));
        }
    }

    TEST_CASE("vocabulary lists every sqlite keyword plus aggregates") {
        std::set<std::string> engine;
        for (int i = 0; i < sqlite3_keyword_count(); ++i) {
            const char* name = nullptr;
            int len = 0;
            REQUIRE(sqlite3_keyword_name(i, &name, &len) == SQLITE_OK);
            engine.emplace(name, static_cast<std::size_t>(len));
        }
        const auto lines = keyword_file_lines();
        CHECK(lines.size() == vocab().size());
        std::set<std::string> file(lines.begin(), lines.end());
        CHECK(file.size() == lines.size());
        for (const auto& kw : engine) {
            CAPTURE(kw);
            CHECK(vocab().contains(kw));
        }
        const std::set<std::string> aggregates{"COUNT", "SUM", "AVG", "MIN", "MAX"};
        for (const auto& kw : lines) {
            CAPTURE(kw);
            CHECK((engine.count(kw) == 1 || aggregates.count(kw) == 1));
        }
        CHECK(vocab().size() == engine.size() + aggregates.size());
    }

    TEST_CASE("vocabulary parse rejects duplicates and tags content without a version line") {
        CHECK_THROWS_AS(KeywordVocabulary::parse("SELECT\nselect\n"), Error);
        const auto v = KeywordVocabulary::parse("SELECT\nFROM\n");
        CHECK(v.version() == "sha256:" + sha256_hex("SELECT\nFROM\n").substr(0, 16));
        CHECK(v.index_of("from") == 1);
        CHECK(KeywordVocabulary::parse("# version: x1\nSELECT\n").version() == "x1");
    }

    TEST_CASE("cosine values") {
        const auto a = vec({{"SELECT", 1}, {"FROM", 1}});
        const auto b = vec({{"SELECT", 1}, {"FROM", 1}, {"WHERE", 2}});
        CHECK(cosine(a, a) == 1.0);
        CHECK(cosine(a, b) == doctest::Approx(2.0 / std::sqrt(12.0)).epsilon(1e-12));
        CHECK(cosine(a, vec({})) == 0.0);
        CHECK(cosine(vec({}), vec({})) == 0.0);
        CHECK(cosine(a, vec({{"SELECT", 3}, {"FROM", 3}})) == 1.0);
        CHECK(cosine(b, vec({{"SELECT", 1}, {"FROM", 1}, {"WHERE", 3}})) < 1.0);
    }

    TEST_CASE("cosine rejects mixed vocabularies") {
        SqlVector other{{{"SELECT", 1}}, "other"};
        try {
            cosine(vec({{"SELECT", 1}}), other);
            FAIL("expected vocabulary mismatch");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::vocabulary_mismatch);
        }
    }

    TEST_CASE("cosine is symmetric, bounded and scale invariant") {
        std::mt19937 rng(7);
        const std::vector<std::string> dims = {"SELECT", "FROM", "WHERE", "JOIN", "GROUP", "BY", "COUNT"};
        auto random_vec = [&] {
            std::map<std::string, long> m;
            for (const auto& d : dims) {
                if (rng() % 2) m[d] = 1 + static_cast<long>(rng() % 5);
            }
            return vec(m);
        };
        for (int i = 0; i < 200; ++i) {
            const auto a = random_vec();
            const auto b = random_vec();
            CHECK(cosine(a, b) == cosine(b, a));
            CHECK(cosine(a, b) >= 0.0);
            CHECK(cosine(a, b) <= 1.0);
            auto scaled = a;
            for (auto& [k, n] : scaled.counts) n *= 4;
            CHECK(cosine(scaled, b) == doctest::Approx(cosine(a, b)).epsilon(1e-12));
        }
    }

    TEST_CASE("top-level ORDER BY detection ignores subqueries and literals") {
        CHECK(has_top_level_order_by("SELECT a FROM t ORDER BY a"));
        CHECK_FALSE(has_top_level_order_by("SELECT a FROM (SELECT a FROM t ORDER BY a)"));
        CHECK_FALSE(has_top_level_order_by("SELECT 'ORDER BY' FROM t"));
    }
}

namespace {

ValidatedCotRecord pool_record(std::string instance_id, std::string key, std::map<std::string, long> counts,
                               bool positive = true) {
    ValidatedCotRecord r;
    r.instance_id = std::move(instance_id);
    r.key = std::move(key);
    r.sql_vector = vec(std::move(counts));
    r.verdict.label = positive ? Label::positive : Label::negative;
    return r;
}

// Brute-force ranking over dense vectors with exact rational comparison.
std::vector<const ValidatedCotRecord*> brute_force_rank(const SqlVector& q, std::string_view exclude,
                                                        const std::vector<ValidatedCotRecord>& pool, std::size_t n) {
    const auto& dims = vocab().keywords();
    auto dense = [&](const SqlVector& v) {
        std::vector<long long> d(dims.size());
        for (std::size_t i = 0; i < dims.size(); ++i) d[i] = v.count(dims[i]);
        return d;
    };
    const auto qd = dense(q);
    struct Entry {
        const ValidatedCotRecord* r;
        long double num;
        long double den;
    };
    std::vector<Entry> entries;
    for (const auto& r : pool) {
        if (!r.positive() || r.instance_id == exclude) continue;
        const auto rd = dense(r.sql_vector);
        long long dot = 0, norm = 0, qn = 0;
        for (std::size_t i = 0; i < dims.size(); ++i) {
            dot += qd[i] * rd[i];
            norm += rd[i] * rd[i];
            qn += qd[i] * qd[i];
        }
        const bool zero = norm == 0 || qn == 0;
        entries.push_back({&r, zero ? 0.0L : static_cast<long double>(dot) * dot, zero ? 1.0L : static_cast<long double>(norm)});
    }
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        const long double lhs = a.num * b.den;
        const long double rhs = b.num * a.den;
        if (lhs != rhs) return lhs > rhs;
        if (a.r->instance_id != b.r->instance_id) return a.r->instance_id < b.r->instance_id;
        return a.r->key < b.r->key;
    });
    std::vector<const ValidatedCotRecord*> out;
    for (std::size_t i = 0; i < entries.size() && i < n; ++i) out.push_back(entries[i].r);
    return out;
}

}  // namespace

TEST_SUITE("sqllex") {
    TEST_CASE("ranking edge cases") {
        std::vector<ValidatedCotRecord> pool = {
            pool_record("a", "k1", {{"SELECT", 1}, {"FROM", 1}}),
            pool_record("b", "k2", {{"SELECT", 1}, {"FROM", 1}, {"WHERE", 1}}),
            pool_record("c", "k3", {{"SELECT", 1}, {"FROM", 1}, {"WHERE", 1}}, false),
            pool_record("target", "k4", {{"SELECT", 1}, {"FROM", 1}, {"WHERE", 1}}),
        };
        std::vector<const ValidatedCotRecord*> ptrs;
        for (const auto& r : pool) ptrs.push_back(&r);
        const auto q = vec({{"SELECT", 1}, {"FROM", 1}, {"WHERE", 1}});

        CHECK(rank_examples(q, "target", ptrs, 0).empty());
        const auto ranked = rank_examples(q, "target", ptrs, 5);
        REQUIRE(ranked.size() == 2);
        CHECK(ranked[0].record->instance_id == "b");
        CHECK(ranked[0].score == 1.0);
        CHECK(ranked[1].record->instance_id == "a");

        // Equal scores fall back to instance id order.
        std::vector<ValidatedCotRecord> tied = {pool_record("z", "k", {{"SELECT", 1}}), pool_record("m", "k", {{"SELECT", 2}})};
        std::vector<const ValidatedCotRecord*> tied_ptrs = {&tied[0], &tied[1]};
        const auto t = rank_examples(vec({{"SELECT", 5}}), "", tied_ptrs, 2);
        CHECK(t[0].record->instance_id == "m");
        CHECK(t[1].record->instance_id == "z");
    }

    TEST_CASE("ranking matches brute force and is scale invariant") {
        std::mt19937 rng(99);
        const std::vector<std::string> dims = {"SELECT", "FROM", "WHERE", "JOIN", "GROUP", "BY", "COUNT", "AND"};
        auto random_counts = [&] {
            std::map<std::string, long> m;
            for (const auto& d : dims) {
                if (rng() % 3 == 0) m[d] = 1 + static_cast<long>(rng() % 3);
            }
            return m;
        };
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<ValidatedCotRecord> pool;
            const int size = 1 + static_cast<int>(rng() % 25);
            for (int i = 0; i < size; ++i) {
                pool.push_back(pool_record("i" + std::to_string(rng() % 12), "k" + std::to_string(i), random_counts(),
                                           rng() % 6 != 0));
            }
            std::vector<const ValidatedCotRecord*> ptrs;
            for (const auto& r : pool) ptrs.push_back(&r);
            const auto q = vec(random_counts());
            const std::size_t n = 1 + rng() % 5;
            const std::string exclude = "i" + std::to_string(rng() % 12);

            const auto ranked = rank_examples(q, exclude, ptrs, n);
            const auto expected = brute_force_rank(q, exclude, pool, n);
            REQUIRE(ranked.size() == expected.size());
            for (std::size_t i = 0; i < ranked.size(); ++i) CHECK(ranked[i].record == expected[i]);

            auto scaled = q;
            for (auto& [k, c] : scaled.counts) c *= 3;
            const auto ranked_scaled = rank_examples(scaled, exclude, ptrs, n);
            REQUIRE(ranked_scaled.size() == ranked.size());
            for (std::size_t i = 0; i < ranked.size(); ++i) CHECK(ranked_scaled[i].record == ranked[i].record);
        }
    }
}
