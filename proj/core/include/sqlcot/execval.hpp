#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sqlcot/error.hpp"
#include "sqlcot/instance.hpp"
#include "sqlcot/rationale.hpp"
#include "sqlcot/registry.hpp"

struct sqlite3;

namespace sqlcot {

struct BlobDigest {
    std::string sha256;
    friend auto operator<=>(const BlobDigest&, const BlobDigest&) = default;
};

// Canonical cell value. Reals with an integral value are stored as integers.
using Value = std::variant<std::monostate, std::int64_t, double, std::string, BlobDigest>;

Value canonical_real(double x);
std::string render_value(const Value& v);

struct ResultTable {
    std::size_t column_count = 0;
    std::vector<std::vector<Value>> rows;
    bool truncated = false;

    friend bool operator==(const ResultTable&, const ResultTable&) = default;
};

enum class ExecFailure { sql_error, timeout, missing_db, write_rejected };

std::string_view to_string(ExecFailure f);

class ExecutionError : public Error {
public:
    ExecutionError(ExecFailure failure, const std::string& message)
        : Error(Errc::database, message), failure_(failure) {}
    ExecFailure failure() const noexcept { return failure_; }

private:
    ExecFailure failure_;
};

struct ExecOptions {
    static constexpr std::size_t kDefaultRowCap = 100'000;

    std::size_t row_cap = kDefaultRowCap;
    // Negative: use the registry's timeout.
    double timeout_seconds = -1.0;
};

// Read-only connection to one SQLite file.
class Session {
public:
    // Throws ExecutionError(missing_db) when the file is absent or unopenable.
    static Session open(const std::string& path);

    Session(Session&&) noexcept = default;
    Session& operator=(Session&&) noexcept = default;

    // Runs a single read-only statement. Throws ExecutionError.
    ResultTable query(std::string_view sql, std::size_t row_cap, double timeout_seconds);

    sqlite3* handle() const noexcept { return db_.get(); }

private:
    struct Closer {
        void operator()(sqlite3* db) const noexcept;
    };
    explicit Session(sqlite3* db) : db_(db) {}

    std::unique_ptr<sqlite3, Closer> db_;
};

// Executes SQL against registered databases, caching one session per db_id.
// Not thread-safe: give each worker its own Executor.
class Executor {
public:
    explicit Executor(const DatabaseRegistry& registry, ExecOptions options = {});

    ResultTable execute(const std::string& db_id, std::string_view sql);
    Session& session(const std::string& db_id);

    const DatabaseRegistry& registry() const noexcept { return *registry_; }
    double timeout_seconds() const noexcept;

private:
    const DatabaseRegistry* registry_;
    ExecOptions options_;
    std::map<std::string, Session> sessions_;
};

ResultTable execute(const std::string& db_id, std::string_view sql, const DatabaseRegistry& registry,
                    ExecOptions options = {});

// Row equality: as multisets, or as sequences when order_sensitive. NULL
// equals NULL. With epsilon > 0 numeric cells compare within epsilon after
// canonical sorting. Throws Errc::invalid_input on truncated tables.
bool compare_results(const ResultTable& a, const ResultTable& b, bool order_sensitive, double epsilon = 0.0);

enum class Label { positive, negative };
enum class VerdictDetail { match, result_mismatch, final_sql_error, final_sql_timeout };

std::string_view to_string(Label l);
std::string_view to_string(VerdictDetail d);
Label label_from_string(std::string_view s);
VerdictDetail verdict_detail_from_string(std::string_view s);

struct StepExecution {
    int index = 0;
    std::optional<std::string> error;
    bool ok() const noexcept { return !error; }
    friend bool operator==(const StepExecution&, const StepExecution&) = default;
};

struct ResultShape {
    std::size_t columns = 0;
    std::size_t rows = 0;
    friend bool operator==(const ResultShape&, const ResultShape&) = default;
};

struct Verdict {
    Label label = Label::negative;
    VerdictDetail detail = VerdictDetail::result_mismatch;
    std::vector<StepExecution> steps;  // one entry per sql-bearing step
    std::string message;               // engine message for final_sql_* details
    std::optional<ResultShape> gold_shape;
    std::optional<ResultShape> final_shape;

    bool positive() const noexcept { return label == Label::positive; }
    friend bool operator==(const Verdict&, const Verdict&) = default;
};

enum class OrderMode {
    gold_order_by,  // sequence comparison iff the gold query has a top-level ORDER BY
    multiset,
    sequence,
};

struct CompareOptions {
    OrderMode order = OrderMode::gold_order_by;
    double epsilon = 0.0;
};

bool order_sensitive_for(std::string_view gold_sql, OrderMode mode);

// Executes the final SQL and the gold SQL and compares their results.
// Every sql-bearing step is also executed; step failures are reported but
// never change the label. Gold failures throw ExecutionError.
Verdict validate_cot(const TrainInstance& instance, const CotRationale& cot, Executor& executor,
                     const CompareOptions& options = {});

// Same comparison for a bare SQL prediction (no step execution).
Verdict validate_sql(const TrainInstance& instance, std::string_view sql, Executor& executor,
                     const CompareOptions& options = {});

}  // namespace sqlcot
