#include "sqlcot/error.hpp"

namespace sqlcot {

std::string_view to_string(Errc code) {
    switch (code) {
        case Errc::io: return "io";
        case Errc::parse: return "parse";
        case Errc::invalid_input: return "invalid_input";
        case Errc::database: return "database";
        case Errc::vocabulary_mismatch: return "vocabulary_mismatch";
        case Errc::transport: return "transport";
        case Errc::precondition: return "precondition";
        case Errc::not_found: return "not_found";
    }
    return "unknown";
}

}  // namespace sqlcot
