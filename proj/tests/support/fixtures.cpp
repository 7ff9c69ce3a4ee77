#include "fixtures.hpp"

#include <sqlite3.h>

#include <atomic>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#include "sqlcot/corpus.hpp"

namespace sqlcot::fixtures {

fs::path source_dir() { return fs::path(SQLCOT_FIXTURE_DIR); }

std::string read_fixture(std::string_view name) {
    std::ifstream in(source_dir() / std::string(name), std::ios::binary);
    if (!in) throw std::runtime_error("missing fixture " + std::string(name));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path make_temp_dir(std::string_view tag) {
    static std::atomic<int> counter{0};
    const auto dir = fs::temp_directory_path() /
                     ("sqlcot-" + std::string(tag) + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void build_database(const fs::path& script, const fs::path& db_file) {
    std::ifstream in(script);
    if (!in) throw std::runtime_error("missing script " + script.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    fs::remove(db_file);
    sqlite3* db = nullptr;
    if (sqlite3_open(db_file.c_str(), &db) != SQLITE_OK) {
        sqlite3_close(db);
        throw std::runtime_error("cannot create " + db_file.string());
    }
    char* err = nullptr;
    const int rc = sqlite3_exec(db, ss.str().c_str(), nullptr, nullptr, &err);
    std::string message = err ? err : "";
    sqlite3_free(err);
    sqlite3_close(db);
    if (rc != SQLITE_OK) throw std::runtime_error("script " + script.string() + ": " + message);
}

DatabaseRegistry build_toy_registry(const fs::path& dir, double timeout_seconds) {
    build_database(source_dir() / "school.sql", dir / "school.sqlite");
    build_database(source_dir() / "shop.sql", dir / "shop.sqlite");
    std::ofstream out(dir / "registry.json");
    out << "{\"timeout_seconds\": " << timeout_seconds
        << ", \"databases\": {\"school\": \"school.sqlite\", \"shop\": \"shop.sqlite\"}}\n";
    out.close();
    return DatabaseRegistry::load((dir / "registry.json").string());
}

std::vector<TrainInstance> toy_corpus() {
    return load_corpus((source_dir() / "toy_corpus.jsonl").string(), CorpusFormat::generic_jsonl);
}

std::vector<SeedRationale> toy_seeds() { return load_seeds((source_dir() / "seeds").string()); }

std::vector<std::vector<std::string>> raw_rows(const fs::path& db_file, const std::string& sql) {
    sqlite3* db = nullptr;
    if (sqlite3_open_v2(db_file.c_str(), &db, SQLITE_OPEN_READONLY, nullptr) != SQLITE_OK) {
        sqlite3_close(db);
        throw std::runtime_error("cannot open " + db_file.string());
    }
    sqlite3_stmt* stmt = nullptr;
    if (sqlite3_prepare_v2(db, sql.c_str(), -1, &stmt, nullptr) != SQLITE_OK) {
        std::string msg = sqlite3_errmsg(db);
        sqlite3_close(db);
        throw std::runtime_error(msg);
    }
    std::vector<std::vector<std::string>> rows;
    while (sqlite3_step(stmt) == SQLITE_ROW) {
        std::vector<std::string> row;
        for (int c = 0; c < sqlite3_column_count(stmt); ++c) {
            const auto* text = sqlite3_column_text(stmt, c);
            row.push_back(text ? reinterpret_cast<const char*>(text) : "NULL");
        }
        rows.push_back(std::move(row));
    }
    sqlite3_finalize(stmt);
    sqlite3_close(db);
    return rows;
}

}  // namespace sqlcot::fixtures
