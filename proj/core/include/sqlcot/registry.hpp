#pragma once

#include <map>
#include <optional>
#include <string>

namespace sqlcot {

// Maps database ids to SQLite files.
class DatabaseRegistry {
public:
    static constexpr double kDefaultTimeoutSeconds = 30.0;

    DatabaseRegistry() = default;

    // JSON: {"timeout_seconds": 30, "databases": {"<db_id>": "<path>", ...}}.
    // Relative paths resolve against the registry file's directory.
    static DatabaseRegistry load(const std::string& path);

    void add(std::string db_id, std::string path);
    // Path for db_id, or nullopt if unregistered.
    std::optional<std::string> path_of(const std::string& db_id) const;
    const std::map<std::string, std::string>& databases() const noexcept { return databases_; }

    double timeout_seconds() const noexcept { return timeout_seconds_; }
    void set_timeout_seconds(double seconds);

private:
    std::map<std::string, std::string> databases_;
    double timeout_seconds_ = kDefaultTimeoutSeconds;
};

}  // namespace sqlcot
