#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sqlcot/bootstrap.hpp"
#include "sqlcot/registry.hpp"

namespace sqlcot::fixtures {

namespace fs = std::filesystem;

fs::path source_dir();  // tests/fixtures
std::string read_fixture(std::string_view name);

// Fresh empty directory under the system temp dir.
fs::path make_temp_dir(std::string_view tag);

// Runs a SQL script into a new database file.
void build_database(const fs::path& script, const fs::path& db_file);

// Builds school.sqlite and shop.sqlite in `dir`, writes dir/registry.json
// and returns the loaded registry.
DatabaseRegistry build_toy_registry(const fs::path& dir, double timeout_seconds = 30.0);

std::vector<TrainInstance> toy_corpus();
std::vector<SeedRationale> toy_seeds();

// Runs SQL on a fixture database file through a private connection and
// returns the rows rendered as text. Independent of the library executor.
std::vector<std::vector<std::string>> raw_rows(const fs::path& db_file, const std::string& sql);

}  // namespace sqlcot::fixtures
