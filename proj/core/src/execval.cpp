#include "sqlcot/execval.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>

#include "sqlcot/hash.hpp"
#include "sqlcot/sqllex.hpp"
#include "sqlcot/text.hpp"

namespace sqlcot {

namespace {

using Clock = std::chrono::steady_clock;

int progress_callback(void* arg) {
    const auto* deadline = static_cast<const Clock::time_point*>(arg);
    return Clock::now() >= *deadline ? 1 : 0;
}

bool tail_is_empty(std::string_view tail) {
    for (const auto& tok : lex_sql(tail).tokens) {
        if (tok.kind != TokenKind::semicolon) return false;
    }
    return true;
}

Value read_cell(sqlite3_stmt* stmt, int col) {
    switch (sqlite3_column_type(stmt, col)) {
        case SQLITE_INTEGER: return static_cast<std::int64_t>(sqlite3_column_int64(stmt, col));
        case SQLITE_FLOAT: return canonical_real(sqlite3_column_double(stmt, col));
        case SQLITE_TEXT: {
            const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt, col));
            return std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt, col)));
        }
        case SQLITE_BLOB: {
            const auto* p = static_cast<const char*>(sqlite3_column_blob(stmt, col));
            const auto n = static_cast<std::size_t>(sqlite3_column_bytes(stmt, col));
            return BlobDigest{sha256_hex(std::string_view(p ? p : "", n))};
        }
        default: return std::monostate{};
    }
}

// Category order used for sorting: NULL < numeric < text < blob. Integers and
// reals share the numeric category so near-equal numbers sort together.
int category(const Value& v) {
    switch (v.index()) {
        case 0: return 0;
        case 1:
        case 2: return 1;
        case 3: return 2;
        default: return 3;
    }
}

long double numeric(const Value& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<long double>(*i);
    return static_cast<long double>(std::get<double>(v));
}

int compare_values(const Value& a, const Value& b) {
    const int ca = category(a);
    const int cb = category(b);
    if (ca != cb) return ca < cb ? -1 : 1;
    switch (ca) {
        case 0: return 0;
        case 1: {
            if (a.index() == 1 && b.index() == 1) {
                const auto x = std::get<std::int64_t>(a), y = std::get<std::int64_t>(b);
                return x < y ? -1 : (x > y ? 1 : 0);
            }
            const auto x = numeric(a), y = numeric(b);
            if (x < y) return -1;
            if (x > y) return 1;
            return a.index() == b.index() ? 0 : (a.index() < b.index() ? -1 : 1);
        }
        case 2: {
            const int c = std::get<std::string>(a).compare(std::get<std::string>(b));
            return c < 0 ? -1 : (c > 0 ? 1 : 0);
        }
        default: {
            const int c = std::get<BlobDigest>(a).sha256.compare(std::get<BlobDigest>(b).sha256);
            return c < 0 ? -1 : (c > 0 ? 1 : 0);
        }
    }
}

bool row_less(const std::vector<Value>& a, const std::vector<Value>& b) {
    for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
        const int c = compare_values(a[i], b[i]);
        if (c != 0) return c < 0;
    }
    return a.size() < b.size();
}

bool values_equal(const Value& a, const Value& b, double epsilon) {
    if (epsilon > 0 && category(a) == 1 && category(b) == 1) {
        return std::fabs(static_cast<double>(numeric(a) - numeric(b))) <= epsilon;
    }
    return a == b;
}

bool rows_equal(const std::vector<std::vector<Value>>& a, const std::vector<std::vector<Value>>& b, double epsilon) {
    if (a.size() != b.size()) return false;
    for (std::size_t r = 0; r < a.size(); ++r) {
        if (a[r].size() != b[r].size()) return false;
        for (std::size_t c = 0; c < a[r].size(); ++c) {
            if (!values_equal(a[r][c], b[r][c], epsilon)) return false;
        }
    }
    return true;
}

}  // namespace

Value canonical_real(double x) {
    constexpr double kTwo63 = 9223372036854775808.0;
    if (std::isfinite(x) && x == std::trunc(x) && x >= -kTwo63 && x < kTwo63) {
        return static_cast<std::int64_t>(x);
    }
    return x;
}

std::string render_value(const Value& v) {
    switch (v.index()) {
        case 0: return "NULL";
        case 1: return std::to_string(std::get<std::int64_t>(v));
        case 2: {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g", std::get<double>(v));
            return buf;
        }
        case 3: {
            std::string out = "'";
            for (char c : std::get<std::string>(v)) {
                if (c == '\'') out.push_back('\'');
                out.push_back(c);
            }
            return out + "'";
        }
        default: return "blob:" + std::get<BlobDigest>(v).sha256.substr(0, 16);
    }
}

std::string_view to_string(ExecFailure f) {
    switch (f) {
        case ExecFailure::sql_error: return "sql_error";
        case ExecFailure::timeout: return "timeout";
        case ExecFailure::missing_db: return "missing_db";
        case ExecFailure::write_rejected: return "write_rejected";
    }
    return "sql_error";
}

void Session::Closer::operator()(sqlite3* db) const noexcept { sqlite3_close_v2(db); }

Session Session::open(const std::string& path) {
    if (!std::filesystem::is_regular_file(path)) {
        throw ExecutionError(ExecFailure::missing_db, "database file not found: " + path);
    }
    sqlite3* raw = nullptr;
    const int rc = sqlite3_open_v2(path.c_str(), &raw, SQLITE_OPEN_READONLY | SQLITE_OPEN_NOMUTEX, nullptr);
    Session session(raw);
    if (rc != SQLITE_OK) {
        const std::string message = raw ? sqlite3_errmsg(raw) : sqlite3_errstr(rc);
        throw ExecutionError(ExecFailure::missing_db, "cannot open " + path + ": " + message);
    }
    char* err = nullptr;
    if (sqlite3_exec(raw, "PRAGMA query_only = ON; SELECT count(*) FROM sqlite_master;", nullptr, nullptr, &err) !=
        SQLITE_OK) {
        std::string message = err ? err : "unknown error";
        sqlite3_free(err);
        throw ExecutionError(ExecFailure::missing_db, "cannot open " + path + ": " + message);
    }
    return session;
}

ResultTable Session::query(std::string_view sql, std::size_t row_cap, double timeout_seconds) {
    sqlite3* db = db_.get();
    const auto deadline =
        Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(timeout_seconds));

    sqlite3_stmt* raw = nullptr;
    const char* tail = nullptr;
    if (sqlite3_prepare_v2(db, sql.data(), static_cast<int>(sql.size()), &raw, &tail) != SQLITE_OK) {
        throw ExecutionError(ExecFailure::sql_error, sqlite3_errmsg(db));
    }
    std::unique_ptr<sqlite3_stmt, decltype(&sqlite3_finalize)> stmt(raw, &sqlite3_finalize);
    if (!stmt) throw ExecutionError(ExecFailure::sql_error, "empty statement");
    const auto consumed = static_cast<std::size_t>(tail - sql.data());
    if (!tail_is_empty(sql.substr(consumed))) {
        throw ExecutionError(ExecFailure::sql_error, "multiple statements are not supported");
    }
    if (!sqlite3_stmt_readonly(stmt.get())) {
        throw ExecutionError(ExecFailure::write_rejected, "statement would modify the database");
    }

    sqlite3_progress_handler(db, 1000, &progress_callback, const_cast<Clock::time_point*>(&deadline));
    struct HandlerReset {
        sqlite3* db;
        ~HandlerReset() { sqlite3_progress_handler(db, 0, nullptr, nullptr); }
    } reset{db};

    ResultTable table;
    const int columns = sqlite3_column_count(stmt.get());
    table.column_count = static_cast<std::size_t>(columns);
    for (;;) {
        const int rc = sqlite3_step(stmt.get());
        if (rc == SQLITE_ROW) {
            if (table.rows.size() >= row_cap) {
                table.truncated = true;
                break;
            }
            std::vector<Value> row;
            row.reserve(table.column_count);
            for (int c = 0; c < columns; ++c) row.push_back(read_cell(stmt.get(), c));
            table.rows.push_back(std::move(row));
        } else if (rc == SQLITE_DONE) {
            break;
        } else if (rc == SQLITE_INTERRUPT && Clock::now() >= deadline) {
            throw ExecutionError(ExecFailure::timeout,
                                 "query exceeded the " + std::to_string(timeout_seconds) + " s timeout");
        } else {
            throw ExecutionError(ExecFailure::sql_error, sqlite3_errmsg(db));
        }
    }
    return table;
}

Executor::Executor(const DatabaseRegistry& registry, ExecOptions options) : registry_(&registry), options_(options) {}

double Executor::timeout_seconds() const noexcept {
    return options_.timeout_seconds > 0 ? options_.timeout_seconds : registry_->timeout_seconds();
}

Session& Executor::session(const std::string& db_id) {
    auto it = sessions_.find(db_id);
    if (it != sessions_.end()) return it->second;
    const auto path = registry_->path_of(db_id);
    if (!path) throw ExecutionError(ExecFailure::missing_db, "unregistered database '" + db_id + "'");
    return sessions_.emplace(db_id, Session::open(*path)).first->second;
}

ResultTable Executor::execute(const std::string& db_id, std::string_view sql) {
    return session(db_id).query(sql, options_.row_cap, timeout_seconds());
}

ResultTable execute(const std::string& db_id, std::string_view sql, const DatabaseRegistry& registry,
                    ExecOptions options) {
    Executor executor(registry, options);
    return executor.execute(db_id, sql);
}

bool compare_results(const ResultTable& a, const ResultTable& b, bool order_sensitive, double epsilon) {
    if (a.truncated || b.truncated) {
        throw Error(Errc::invalid_input, "cannot compare truncated results; raise the row cap");
    }
    if (a.column_count != b.column_count || a.rows.size() != b.rows.size()) return false;
    if (order_sensitive) return rows_equal(a.rows, b.rows, epsilon);
    auto x = a.rows;
    auto y = b.rows;
    std::sort(x.begin(), x.end(), row_less);
    std::sort(y.begin(), y.end(), row_less);
    return rows_equal(x, y, epsilon);
}

std::string_view to_string(Label l) { return l == Label::positive ? "positive" : "negative"; }

std::string_view to_string(VerdictDetail d) {
    switch (d) {
        case VerdictDetail::match: return "match";
        case VerdictDetail::result_mismatch: return "result_mismatch";
        case VerdictDetail::final_sql_error: return "final_sql_error";
        case VerdictDetail::final_sql_timeout: return "final_sql_timeout";
    }
    return "result_mismatch";
}

Label label_from_string(std::string_view s) {
    if (s == "positive") return Label::positive;
    if (s == "negative") return Label::negative;
    throw Error(Errc::parse, "unknown verdict label '" + std::string(s) + "'");
}

VerdictDetail verdict_detail_from_string(std::string_view s) {
    for (auto d : {VerdictDetail::match, VerdictDetail::result_mismatch, VerdictDetail::final_sql_error,
                   VerdictDetail::final_sql_timeout}) {
        if (to_string(d) == s) return d;
    }
    throw Error(Errc::parse, "unknown verdict detail '" + std::string(s) + "'");
}

bool order_sensitive_for(std::string_view gold_sql, OrderMode mode) {
    switch (mode) {
        case OrderMode::multiset: return false;
        case OrderMode::sequence: return true;
        case OrderMode::gold_order_by: return has_top_level_order_by(gold_sql);
    }
    return false;
}

namespace {

Verdict judge(const ResultTable& gold, const ResultTable& predicted, bool order_sensitive, double epsilon,
              Verdict verdict) {
    verdict.gold_shape = ResultShape{gold.column_count, gold.rows.size()};
    verdict.final_shape = ResultShape{predicted.column_count, predicted.rows.size()};
    if (gold.truncated || predicted.truncated) {
        verdict.label = Label::negative;
        verdict.detail = VerdictDetail::result_mismatch;
        verdict.message = "result truncated at the row cap; raise the cap to compare";
        return verdict;
    }
    const bool same = compare_results(gold, predicted, order_sensitive, epsilon);
    verdict.label = same ? Label::positive : Label::negative;
    verdict.detail = same ? VerdictDetail::match : VerdictDetail::result_mismatch;
    return verdict;
}

Verdict failed(const ExecutionError& e, Verdict verdict) {
    verdict.label = Label::negative;
    verdict.detail =
        e.failure() == ExecFailure::timeout ? VerdictDetail::final_sql_timeout : VerdictDetail::final_sql_error;
    verdict.message = e.what();
    return verdict;
}

}  // namespace

Verdict validate_cot(const TrainInstance& instance, const CotRationale& cot, Executor& executor,
                     const CompareOptions& options) {
    const auto gold = executor.execute(instance.db_id, instance.gold_sql);
    const bool ordered = order_sensitive_for(instance.gold_sql, options.order);

    Verdict verdict;
    std::optional<ResultTable> final_table;
    std::optional<ExecutionError> final_error;
    for (std::size_t k = 0; k < cot.steps.size(); ++k) {
        const auto& step = cot.steps[k];
        if (!step.sql) continue;
        const bool is_final = k + 1 == cot.steps.size();
        StepExecution record{step.index, std::nullopt};
        try {
            auto table = executor.execute(instance.db_id, *step.sql);
            if (is_final) final_table = std::move(table);
        } catch (const ExecutionError& e) {
            if (e.failure() == ExecFailure::missing_db) throw;
            record.error = e.what();
            if (is_final) final_error = e;
        }
        verdict.steps.push_back(std::move(record));
    }
    if (final_error) return failed(*final_error, std::move(verdict));
    if (!final_table) throw Error(Errc::invalid_input, "rationale has no final sql");
    return judge(gold, *final_table, ordered, options.epsilon, std::move(verdict));
}

Verdict validate_sql(const TrainInstance& instance, std::string_view sql, Executor& executor,
                     const CompareOptions& options) {
    const auto gold = executor.execute(instance.db_id, instance.gold_sql);
    const bool ordered = order_sensitive_for(instance.gold_sql, options.order);
    try {
        const auto predicted = executor.execute(instance.db_id, sql);
        return judge(gold, predicted, ordered, options.epsilon, Verdict{});
    } catch (const ExecutionError& e) {
        if (e.failure() == ExecFailure::missing_db) throw;
        return failed(e, Verdict{});
    }
}

}  // namespace sqlcot
