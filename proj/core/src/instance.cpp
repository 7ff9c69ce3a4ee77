#include "sqlcot/instance.hpp"

#include "sqlcot/text.hpp"

namespace sqlcot {

std::string_view to_string(Difficulty d) {
    switch (d) {
        case Difficulty::simple: return "simple";
        case Difficulty::moderate: return "moderate";
        case Difficulty::challenging: return "challenging";
        case Difficulty::unknown: return "unknown";
    }
    return "unknown";
}

Difficulty difficulty_from_string(std::string_view s) {
    s = text::trim(s);
    if (text::iequals(s, "simple")) return Difficulty::simple;
    if (text::iequals(s, "moderate")) return Difficulty::moderate;
    if (text::iequals(s, "challenging")) return Difficulty::challenging;
    return Difficulty::unknown;
}

}  // namespace sqlcot
