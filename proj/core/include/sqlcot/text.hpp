#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace sqlcot::text {

std::string_view trim(std::string_view s);
std::string_view trim_right(std::string_view s);
std::string to_upper(std::string_view s);
bool iequals(std::string_view a, std::string_view b);

// Splits on '\n'; a trailing '\r' on each line is dropped.
std::vector<std::string_view> split_lines(std::string_view s);

// Drops leading and trailing lines that are empty or whitespace-only.
std::string trim_blank_lines(std::string_view s);

// Collapses runs of whitespace to one space and trims.
std::string squash_whitespace(std::string_view s);

std::string read_file(const std::string& path);
// Writes through a temporary sibling and renames over the target.
void write_file_atomic(const std::string& path, std::string_view content);

}  // namespace sqlcot::text
