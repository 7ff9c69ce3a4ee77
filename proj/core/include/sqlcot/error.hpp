#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sqlcot {

enum class Errc {
    io,
    parse,
    invalid_input,
    database,
    vocabulary_mismatch,
    transport,
    precondition,
    not_found,
};

std::string_view to_string(Errc code);

// Base error for everything the library throws.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message) : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace sqlcot
