#include "sqlcot/corpus.hpp"

#include <sqlite3.h>

#include <charconv>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sqlcot/error.hpp"
#include "sqlcot/sqllex.hpp"
#include "sqlcot/execval.hpp"
#include "sqlcot/parallel.hpp"
#include "sqlcot/text.hpp"

namespace sqlcot {

using nlohmann::json;

namespace {

std::string record_error(std::size_t index, const std::string& what) {
    return "record " + std::to_string(index) + ": " + what;
}

std::string required_string(const json& obj, const char* key, std::size_t index) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) {
        throw Error(Errc::parse, record_error(index, std::string("missing string field \"") + key + "\""));
    }
    return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const char* key, std::size_t index) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) {
        throw Error(Errc::parse, record_error(index, std::string("field \"") + key + "\" must be a string"));
    }
    return it->get<std::string>();
}

TrainInstance from_generic(const json& obj, std::size_t index) {
    if (!obj.is_object()) throw Error(Errc::parse, record_error(index, "expected a JSON object"));
    TrainInstance inst;
    inst.instance_id = required_string(obj, "instance_id", index);
    inst.db_id = required_string(obj, "db_id", index);
    inst.question = required_string(obj, "question", index);
    inst.gold_sql = required_string(obj, "gold_sql", index);
    inst.schema_text = optional_string(obj, "schema_text", index).value_or("");
    if (auto d = optional_string(obj, "difficulty", index)) inst.difficulty = difficulty_from_string(*d);
    inst.evidence = optional_string(obj, "evidence", index);
    return inst;
}

TrainInstance from_bird(const json& obj, std::size_t index) {
    if (!obj.is_object()) throw Error(Errc::parse, record_error(index, "expected a JSON object"));
    TrainInstance inst;
    if (auto it = obj.find("question_id"); it != obj.end() && !it->is_null()) {
        if (it->is_number_integer()) {
            inst.instance_id = std::to_string(it->get<long long>());
        } else if (it->is_string()) {
            inst.instance_id = it->get<std::string>();
        } else {
            throw Error(Errc::parse, record_error(index, "question_id must be an integer or string"));
        }
    } else {
        inst.instance_id = std::to_string(index);
    }
    inst.db_id = required_string(obj, "db_id", index);
    inst.question = required_string(obj, "question", index);
    inst.gold_sql = required_string(obj, "SQL", index);
    inst.schema_text = optional_string(obj, "schema_text", index).value_or("");
    if (auto d = optional_string(obj, "difficulty", index)) inst.difficulty = difficulty_from_string(*d);
    if (auto e = optional_string(obj, "evidence", index); e && !text::trim(*e).empty()) inst.evidence = e;
    return inst;
}

void check_unique(const std::vector<TrainInstance>& instances) {
    std::set<std::string> seen;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (!seen.insert(instances[i].instance_id).second) {
            throw Error(Errc::parse, record_error(i, "duplicate instance_id '" + instances[i].instance_id + "'"));
        }
    }
}

}  // namespace

CorpusFormat corpus_format_from_string(std::string_view s) {
    if (s == "bird_json" || s == "bird") return CorpusFormat::bird_json;
    if (s == "generic_jsonl" || s == "jsonl") return CorpusFormat::generic_jsonl;
    throw Error(Errc::invalid_input, "unknown corpus format '" + std::string(s) + "'");
}

std::vector<TrainInstance> parse_corpus(std::string_view content, CorpusFormat format) {
    std::vector<TrainInstance> out;
    if (format == CorpusFormat::bird_json) {
        json doc;
        try {
            doc = json::parse(content);
        } catch (const json::exception& e) {
            throw Error(Errc::parse, std::string("BIRD file is not valid JSON: ") + e.what());
        }
        if (!doc.is_array()) throw Error(Errc::parse, "BIRD file must hold a JSON array");
        out.reserve(doc.size());
        for (std::size_t i = 0; i < doc.size(); ++i) out.push_back(from_bird(doc[i], i));
    } else {
        std::size_t index = 0;
        for (auto line : text::split_lines(content)) {
            if (text::trim(line).empty()) continue;
            json obj;
            try {
                obj = json::parse(line);
            } catch (const json::exception& e) {
                throw Error(Errc::parse, record_error(index, std::string("invalid JSON: ") + e.what()));
            }
            out.push_back(from_generic(obj, index));
            ++index;
        }
    }
    check_unique(out);
    return out;
}

std::vector<TrainInstance> load_corpus(const std::string& path, CorpusFormat format) {
    try {
        return parse_corpus(text::read_file(path), format);
    } catch (const Error& e) {
        if (e.code() == Errc::io) throw;
        throw Error(e.code(), path + ": " + e.what());
    }
}

void write_corpus_jsonl(std::ostream& out, const std::vector<TrainInstance>& instances) {
    for (const auto& inst : instances) {
        nlohmann::ordered_json obj;
        obj["instance_id"] = inst.instance_id;
        obj["db_id"] = inst.db_id;
        obj["question"] = inst.question;
        obj["gold_sql"] = inst.gold_sql;
        if (!inst.schema_text.empty()) obj["schema_text"] = inst.schema_text;
        if (inst.difficulty != Difficulty::unknown) obj["difficulty"] = std::string(to_string(inst.difficulty));
        if (inst.evidence) obj["evidence"] = *inst.evidence;
        out << obj.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    }
}

std::string corpus_to_jsonl(const std::vector<TrainInstance>& instances) {
    std::ostringstream out;
    write_corpus_jsonl(out, instances);
    return out.str();
}

std::string_view to_string(RejectReason r) {
    switch (r) {
        case RejectReason::syntax_error: return "syntax_error";
        case RejectReason::timeout: return "timeout";
        case RejectReason::empty_result: return "empty_result";
        case RejectReason::missing_db: return "missing_db";
    }
    return "syntax_error";
}

std::size_t CleaningReport::count(RejectReason reason) const {
    std::size_t n = 0;
    for (const auto& r : rejected) n += r.reason == reason ? 1 : 0;
    return n;
}

std::string cleaning_report_json(const CleaningReport& report) {
    nlohmann::ordered_json doc;
    doc["kept"] = report.kept;
    doc["rejected_count"] = report.rejected.size();
    nlohmann::ordered_json by_reason = nlohmann::ordered_json::object();
    for (auto r : {RejectReason::syntax_error, RejectReason::timeout, RejectReason::empty_result,
                   RejectReason::missing_db}) {
        by_reason[std::string(to_string(r))] = report.count(r);
    }
    doc["by_reason"] = by_reason;
    doc["rejected"] = nlohmann::ordered_json::array();
    for (const auto& r : report.rejected) {
        doc["rejected"].push_back(
            {{"instance_id", r.instance_id}, {"reason", std::string(to_string(r.reason))}, {"message", r.message}});
    }
    return doc.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

CleanResult clean_corpus(const std::vector<TrainInstance>& instances, const DatabaseRegistry& registry,
                         std::size_t workers) {
    std::vector<std::optional<Rejection>> verdicts(instances.size());
    std::vector<Executor> executors;
    for (std::size_t w = 0; w < std::max<std::size_t>(workers, 1); ++w) executors.emplace_back(registry);

    parallel_for(instances.size(), workers, [&](std::size_t i, std::size_t w) {
        const auto& inst = instances[i];
        try {
            const auto table = executors[w].execute(inst.db_id, inst.gold_sql);
            if (table.rows.empty()) {
                verdicts[i] = Rejection{inst.instance_id, RejectReason::empty_result, "query returned no rows"};
            }
        } catch (const ExecutionError& e) {
            RejectReason reason = RejectReason::syntax_error;
            if (e.failure() == ExecFailure::timeout) reason = RejectReason::timeout;
            if (e.failure() == ExecFailure::missing_db) reason = RejectReason::missing_db;
            verdicts[i] = Rejection{inst.instance_id, reason, e.what()};
        }
    });

    CleanResult result;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (verdicts[i]) {
            result.report.rejected.push_back(std::move(*verdicts[i]));
        } else {
            result.kept.push_back(instances[i]);
        }
    }
    result.report.kept = result.kept.size();
    return result;
}

namespace {

struct Statement {
    std::unique_ptr<sqlite3_stmt, decltype(&sqlite3_finalize)> stmt{nullptr, &sqlite3_finalize};

    Statement(sqlite3* db, const std::string& sql) {
        sqlite3_stmt* raw = nullptr;
        if (sqlite3_prepare_v2(db, sql.c_str(), -1, &raw, nullptr) != SQLITE_OK) {
            throw ExecutionError(ExecFailure::sql_error, sqlite3_errmsg(db));
        }
        stmt.reset(raw);
    }
    bool step() {
        const int rc = sqlite3_step(stmt.get());
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        throw ExecutionError(ExecFailure::sql_error, sqlite3_errmsg(sqlite3_db_handle(stmt.get())));
    }
    std::string text(int col) const {
        const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt.get(), col));
        return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt.get(), col))) : std::string();
    }
    long long integer(int col) const { return sqlite3_column_int64(stmt.get(), col); }
    int type(int col) const { return sqlite3_column_type(stmt.get(), col); }
    double real(int col) const { return sqlite3_column_double(stmt.get(), col); }
};

std::string quote_identifier(std::string_view name) {
    std::string out = "\"";
    for (char c : name) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    return out + "\"";
}

bool plain_identifier(std::string_view name) {
    if (name.empty() || std::isdigit(static_cast<unsigned char>(name[0]))) return false;
    for (unsigned char c : name) {
        if (!(std::isalnum(c) || c == '_')) return false;
    }
    return !KeywordVocabulary::builtin().contains(name);
}

std::string display_identifier(std::string_view name) {
    return plain_identifier(name) ? std::string(name) : quote_identifier(name);
}

// Column comments written inline in the original CREATE TABLE text.
std::map<std::string, std::string> inline_comments(const std::string& create_sql) {
    std::map<std::string, std::string> comments;
    for (auto line : text::split_lines(create_sql)) {
        const auto dash = line.find("--");
        if (dash == std::string_view::npos) continue;
        auto head = text::trim(line.substr(0, dash));
        const auto comment = text::trim(line.substr(dash + 2));
        if (head.empty() || comment.empty()) continue;
        const auto lexed = lex_sql(head);
        if (lexed.tokens.empty()) continue;
        const auto& first = lexed.tokens.front();
        std::string name;
        if (first.kind == TokenKind::word) {
            name = std::string(first.text);
        } else if (first.kind == TokenKind::quoted_name && first.text.size() >= 2) {
            name = std::string(first.text.substr(1, first.text.size() - 2));
        } else {
            continue;
        }
        comments.emplace(text::to_upper(name), std::string(comment));
    }
    return comments;
}

constexpr std::size_t kMaxSampleBytes = 60;

std::string sample_text(std::string value) {
    if (value.size() > kMaxSampleBytes) {
        std::size_t cut = kMaxSampleBytes;
        while (cut > 0 && (static_cast<unsigned char>(value[cut]) & 0xC0) == 0x80) --cut;
        value = value.substr(0, cut) + "...";
    }
    std::string out = "'";
    for (char c : value) {
        if (c == '\n' || c == '\r') c = ' ';
        if (c == '\'') out.push_back('\'');
        out.push_back(c);
    }
    return out + "'";
}

std::string sample_real(double x) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return ec == std::errc{} ? std::string(buf, ptr) : std::to_string(x);
}

}  // namespace

std::string render_schema_fallback(const std::string& db_id, const DatabaseRegistry& registry,
                                   std::size_t sample_rows) {
    const auto path = registry.path_of(db_id);
    if (!path) throw ExecutionError(ExecFailure::missing_db, "unregistered database '" + db_id + "'");
    auto session = Session::open(*path);
    sqlite3* db = session.handle();

    struct Table {
        std::string name;
        std::string sql;
    };
    std::vector<Table> tables;
    {
        Statement q(db,
                    "SELECT name, sql FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite\\_%' "
                    "ESCAPE '\\' ORDER BY rowid");
        while (q.step()) tables.push_back({q.text(0), q.text(1)});
    }

    std::string out;
    for (const auto& table : tables) {
        const auto comments = inline_comments(table.sql);
        struct Column {
            std::string name;
            std::string type;
            int pk = 0;
        };
        std::vector<Column> columns;
        {
            Statement q(db, "PRAGMA table_info(" + quote_identifier(table.name) + ")");
            while (q.step()) columns.push_back({q.text(1), q.text(2), static_cast<int>(q.integer(5))});
        }
        int pk_count = 0;
        for (const auto& c : columns) pk_count += c.pk > 0 ? 1 : 0;

        if (!out.empty()) out += "\n";
        out += "CREATE TABLE " + display_identifier(table.name) + " (\n";
        for (const auto& c : columns) {
            out += " " + display_identifier(c.name);
            if (!c.type.empty()) out += " " + c.type;
            if (c.pk > 0 && pk_count == 1) out += " PRIMARY KEY";
            out += ",";
            if (auto it = comments.find(text::to_upper(c.name)); it != comments.end()) out += " -- " + it->second;
            out += "\n";
        }
        if (pk_count > 1) {
            std::vector<const Column*> keys;
            for (const auto& c : columns) {
                if (c.pk > 0) keys.push_back(&c);
            }
            std::sort(keys.begin(), keys.end(), [](auto* a, auto* b) { return a->pk < b->pk; });
            out += " PRIMARY KEY(";
            for (std::size_t i = 0; i < keys.size(); ++i) out += (i ? ", " : "") + display_identifier(keys[i]->name);
            out += ")\n";
        }
        {
            Statement q(db, "PRAGMA foreign_key_list(" + quote_identifier(table.name) + ")");
            while (q.step()) {
                std::string to = q.type(4) == SQLITE_NULL ? std::string() : q.text(4);
                out += " FOREIGN KEY(" + display_identifier(q.text(3)) + ") REFERENCES " +
                       display_identifier(q.text(2)) + (to.empty() ? "" : "(" + display_identifier(to) + ")") + "\n";
            }
        }
        out += ");\n\n";

        for (const auto& c : columns) {
            out += display_identifier(table.name) + "." + display_identifier(c.name);
            std::vector<std::string> values;
            if (sample_rows > 0) {
                const auto col = quote_identifier(c.name);
                Statement q(db, "SELECT DISTINCT " + col + " FROM " + quote_identifier(table.name) + " WHERE " + col +
                                    " IS NOT NULL ORDER BY " + col + " LIMIT " + std::to_string(sample_rows));
                while (q.step()) {
                    switch (q.type(0)) {
                        case SQLITE_INTEGER: values.push_back(std::to_string(q.integer(0))); break;
                        case SQLITE_FLOAT: values.push_back(sample_real(q.real(0))); break;
                        case SQLITE_TEXT: values.push_back(sample_text(q.text(0))); break;
                        default: break;
                    }
                }
            }
            if (!values.empty()) {
                out += ":";
                for (std::size_t i = 0; i < values.size(); ++i) out += (i ? ", " : " ") + values[i];
            }
            out += "\n";
        }
    }
    return text::trim_blank_lines(out);
}

}  // namespace sqlcot
