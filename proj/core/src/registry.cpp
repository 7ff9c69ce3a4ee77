#include "sqlcot/registry.hpp"

#include <filesystem>

#include "json.hpp"
#include "sqlcot/error.hpp"
#include "sqlcot/text.hpp"

namespace sqlcot {

DatabaseRegistry DatabaseRegistry::load(const std::string& path) {
    namespace fs = std::filesystem;
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::parse, "registry " + path + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("databases") || !doc["databases"].is_object()) {
        throw Error(Errc::parse, "registry " + path + ": expected an object with a \"databases\" object");
    }
    const fs::path base = fs::path(path).parent_path();
    DatabaseRegistry registry;
    for (const auto& [db_id, value] : doc["databases"].items()) {
        if (!value.is_string()) throw Error(Errc::parse, "registry " + path + ": path of '" + db_id + "' must be a string");
        fs::path p = value.get<std::string>();
        if (p.is_relative()) p = base / p;
        registry.add(db_id, p.lexically_normal().string());
    }
    if (doc.contains("timeout_seconds")) {
        if (!doc["timeout_seconds"].is_number()) throw Error(Errc::parse, "registry " + path + ": timeout_seconds must be a number");
        registry.set_timeout_seconds(doc["timeout_seconds"].get<double>());
    }
    return registry;
}

void DatabaseRegistry::add(std::string db_id, std::string path) { databases_[std::move(db_id)] = std::move(path); }

std::optional<std::string> DatabaseRegistry::path_of(const std::string& db_id) const {
    auto it = databases_.find(db_id);
    if (it == databases_.end()) return std::nullopt;
    return it->second;
}

void DatabaseRegistry::set_timeout_seconds(double seconds) {
    if (!(seconds > 0)) throw Error(Errc::invalid_input, "timeout must be positive");
    timeout_seconds_ = seconds;
}

}  // namespace sqlcot
