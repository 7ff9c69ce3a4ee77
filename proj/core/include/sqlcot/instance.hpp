#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace sqlcot {

enum class Difficulty { simple, moderate, challenging, unknown };

std::string_view to_string(Difficulty d);
// Unrecognised labels map to Difficulty::unknown.
Difficulty difficulty_from_string(std::string_view s);

// One (question, gold SQL) pair.
struct TrainInstance {
    std::string instance_id;
    std::string db_id;
    std::string question;
    std::string gold_sql;
    std::string schema_text;  // empty: render with the fallback renderer
    Difficulty difficulty = Difficulty::unknown;
    std::optional<std::string> evidence;

    friend bool operator==(const TrainInstance&, const TrainInstance&) = default;
};

}  // namespace sqlcot
