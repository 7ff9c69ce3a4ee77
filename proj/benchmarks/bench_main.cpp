#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "sqlcot/execval.hpp"
#include "sqlcot/rationale.hpp"
#include "sqlcot/repository.hpp"
#include "sqlcot/sqllex.hpp"

using namespace sqlcot;

namespace {

const std::string kQuery =
    "SELECT COUNT(ra.student_id) AS num_students FROM prof JOIN ra ON prof.prof_id = ra.prof_id "
    "WHERE prof.popularity = (SELECT MAX(popularity) FROM prof) AND ra.capability = 5 AND note <> 'SELECT'";

std::string random_sql(std::mt19937& rng) {
    static const char* parts[] = {" JOIN t2 ON t1.a = t2.a", " WHERE a = 1", " AND b > 2", " GROUP BY a",
                                  " HAVING COUNT(*) > 1",     " ORDER BY a DESC", " LIMIT 5", " OR c LIKE 'x%'"};
    std::string sql = "SELECT a, MAX(b) FROM t1";
    for (const char* p : parts) {
        if (rng() % 2) sql += p;
    }
    return sql;
}

void bm_tokenize(benchmark::State& state) {
    const auto& vocab = KeywordVocabulary::builtin();
    for (auto _ : state) benchmark::DoNotOptimize(tokenize_keywords(kQuery, vocab));
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * kQuery.size()));
}
BENCHMARK(bm_tokenize);

void bm_rank(benchmark::State& state) {
    const auto& vocab = KeywordVocabulary::builtin();
    std::mt19937 rng(1);
    std::vector<ValidatedCotRecord> pool(static_cast<std::size_t>(state.range(0)));
    for (std::size_t i = 0; i < pool.size(); ++i) {
        pool[i].instance_id = "i" + std::to_string(i);
        pool[i].key = pool[i].instance_id;
        pool[i].verdict.label = Label::positive;
        pool[i].sql_vector = vectorize(random_sql(rng), vocab);
    }
    std::vector<const ValidatedCotRecord*> ptrs;
    for (const auto& r : pool) ptrs.push_back(&r);
    const auto query = vectorize(kQuery, vocab);
    for (auto _ : state) benchmark::DoNotOptimize(rank_examples(query, "", ptrs, 3));
}
BENCHMARK(bm_rank)->Arg(100)->Arg(10000);

void bm_compare(benchmark::State& state) {
    std::mt19937 rng(2);
    ResultTable a;
    a.column_count = 3;
    for (int r = 0; r < state.range(0); ++r) {
        a.rows.push_back({Value{static_cast<std::int64_t>(rng() % 50)}, Value{std::string(1, 'a' + rng() % 26)},
                          Value{std::monostate{}}});
    }
    auto b = a;
    std::shuffle(b.rows.begin(), b.rows.end(), rng);
    for (auto _ : state) benchmark::DoNotOptimize(compare_results(a, b, false));
}
BENCHMARK(bm_compare)->Arg(50)->Arg(5000);

void bm_parse_cot(benchmark::State& state) {
    CotRationale cot;
    for (int i = 1; i <= 6; ++i) {
        cot.steps.push_back(CotStep{i, "Step title " + std::to_string(i), "Some prose for the step.",
                                    std::optional<std::string>(kQuery)});
    }
    const auto md = serialize_cot(cot);
    for (auto _ : state) benchmark::DoNotOptimize(parse_cot(md));
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * md.size()));
}
BENCHMARK(bm_parse_cot);

}  // namespace

BENCHMARK_MAIN();
