#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sqlcot {

struct CotStep {
    int index = 0;                   // 1-based
    std::string title;               // text after "Step N:"
    std::string prose;
    std::optional<std::string> sql;  // body of the step's ```sql fence

    friend bool operator==(const CotStep&, const CotStep&) = default;
};

// A step-by-step SQL building rationale. The last step carries the final SQL.
struct CotRationale {
    std::optional<std::string> preamble;  // text before the first step heading
    std::vector<CotStep> steps;
    std::optional<std::string> trailer;   // closing prose after the final SQL

    friend bool operator==(const CotRationale&, const CotRationale&) = default;
};

// Throws Errc::parse. Parse warnings (extra sql fences folded into prose,
// empty sql fences) are appended to `warnings` when given.
CotRationale parse_cot(std::string_view markdown, std::vector<std::string>* warnings = nullptr);

// Throws Errc::invalid_input if `cot` breaks an invariant or holds text the
// canonical layout cannot carry (multi-line titles, fence lines inside SQL,
// untrimmed fields).
void check_rationale(const CotRationale& cot);

// Canonical Markdown layout, documented in docs/rationale-format.md.
std::string serialize_cot(const CotRationale& cot);

const std::string& final_sql(const CotRationale& cot);

struct CotLength {
    std::size_t step_count = 0;
    std::size_t char_count = 0;  // bytes of the canonical serialization
};

CotLength cot_length(const CotRationale& cot);

}  // namespace sqlcot
