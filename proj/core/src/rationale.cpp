#include "sqlcot/rationale.hpp"

#include <cctype>
#include <charconv>

#include "sqlcot/error.hpp"
#include "sqlcot/text.hpp"

namespace sqlcot {

namespace {

using text::trim;

struct Heading {
    int index = 0;
    std::string title;
};

std::optional<Heading> parse_heading(std::string_view line) {
    auto t = trim(line);
    if (t.size() < 4 || t.substr(0, 2) != "**" || t.substr(t.size() - 2) != "**") return std::nullopt;
    auto inner = trim(t.substr(2, t.size() - 4));
    if (inner.size() < 5 || !text::iequals(inner.substr(0, 4), "Step")) return std::nullopt;
    auto rest = inner.substr(4);
    if (!std::isspace(static_cast<unsigned char>(rest.front()))) return std::nullopt;
    rest = trim(rest);
    int index = 0;
    auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), index);
    if (ec != std::errc{} || ptr == rest.data()) return std::nullopt;
    rest = trim(rest.substr(static_cast<std::size_t>(ptr - rest.data())));
    if (rest.empty() || rest.front() != ':') return std::nullopt;
    return Heading{index, std::string(trim(rest.substr(1)))};
}

bool is_underline(std::string_view line) {
    auto t = trim(line);
    return t.size() >= 2 && t.find_first_not_of('-') == std::string_view::npos;
}

struct Fence {
    char marker = '`';
    std::size_t length = 0;
    std::string info;
};

std::optional<Fence> parse_fence_open(std::string_view line) {
    auto t = trim(line);
    if (t.empty() || (t.front() != '`' && t.front() != '~')) return std::nullopt;
    const char marker = t.front();
    std::size_t n = 0;
    while (n < t.size() && t[n] == marker) ++n;
    if (n < 3) return std::nullopt;
    auto info = trim(t.substr(n));
    if (marker == '`' && info.find('`') != std::string_view::npos) return std::nullopt;
    return Fence{marker, n, std::string(info)};
}

bool closes_fence(std::string_view line, const Fence& fence) {
    auto t = trim(line);
    if (t.size() < fence.length) return false;
    return t.find_first_not_of(fence.marker) == std::string_view::npos;
}

bool is_sql_info(std::string_view info) {
    auto word = info.substr(0, info.find_first_of(" \t{"));
    return text::iequals(word, "sql");
}

template <typename Line>
std::string join_lines(const std::vector<Line>& lines) {
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i) out.push_back('\n');
        out.append(lines[i]);
    }
    return out;
}

std::string join_paragraphs(const std::string& a, const std::string& b) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    return a + "\n\n" + b;
}

struct StepDraft {
    Heading heading;
    std::size_t line_no = 0;
    std::vector<std::string> before;
    std::vector<std::string> after;
    std::optional<std::string> sql;
    bool underline_checked = false;
};

// Structural scan shared by the parser and the serializer's field checks.
struct ScanIssues {
    bool heading = false;
    bool sql_fence = false;
    bool unclosed_fence = false;
};

ScanIssues scan_free_text(std::string_view s) {
    ScanIssues issues;
    std::optional<Fence> open;
    for (auto line : text::split_lines(s)) {
        if (open) {
            if (closes_fence(line, *open)) open.reset();
            continue;
        }
        if (parse_heading(line)) issues.heading = true;
        if (auto f = parse_fence_open(line)) {
            if (is_sql_info(f->info)) issues.sql_fence = true;
            open = f;
        }
    }
    issues.unclosed_fence = open.has_value();
    return issues;
}

void check_free_text(const std::string& value, const std::string& what, bool allow_sql_fence) {
    if (value != text::trim_blank_lines(value)) {
        throw Error(Errc::invalid_input, what + " has leading or trailing blank lines or trailing spaces");
    }
    const auto issues = scan_free_text(value);
    if (issues.heading) throw Error(Errc::invalid_input, what + " contains a step heading line");
    if (issues.unclosed_fence) throw Error(Errc::invalid_input, what + " contains an unclosed code fence");
    if (issues.sql_fence && !allow_sql_fence) throw Error(Errc::invalid_input, what + " contains a ```sql fence");
}

}  // namespace

CotRationale parse_cot(std::string_view markdown, std::vector<std::string>* warnings) {
    auto warn = [&](std::string message) {
        if (warnings) warnings->push_back(std::move(message));
    };

    std::vector<std::string> preamble;
    std::vector<StepDraft> drafts;
    std::optional<Fence> open;
    bool open_is_sql = false;
    std::vector<std::string> fence_lines;  // includes the opening line

    const auto lines = text::split_lines(markdown);

    auto flush_fence = [&](bool closed) {
        if (drafts.empty()) {
            if (!closed) {
                const auto t = trim(fence_lines.front());
                fence_lines.emplace_back(t.substr(0, t.find_first_not_of(t.front())));
                warn("preamble: unclosed code fence closed at end of input");
            }
            preamble.insert(preamble.end(), fence_lines.begin(), fence_lines.end());
            fence_lines.clear();
            return;
        }
        // A fence kept as prose loses its sql tag so it is never re-read as step SQL.
        auto untag = [&] {
            const auto t = trim(fence_lines.front());
            fence_lines.front() = std::string(t.substr(0, t.find_first_not_of(t.front())));
        };
        auto& step = drafts.back();
        auto& target = step.sql ? step.after : step.before;
        if (open_is_sql) {
            const std::size_t content_end = fence_lines.size() - (closed ? 1 : 0);
            std::vector<std::string> body(fence_lines.begin() + 1,
                                               fence_lines.begin() + static_cast<std::ptrdiff_t>(content_end));
            std::string sql = join_lines(body);
            if (!closed) warn("step " + std::to_string(step.heading.index) + ": unclosed ```sql fence");
            if (trim(sql).empty()) {
                warn("step " + std::to_string(step.heading.index) + ": empty ```sql fence kept as prose");
                untag();
            } else if (step.sql) {
                warn("step " + std::to_string(step.heading.index) + ": extra ```sql fence folded into prose");
                untag();
            } else {
                step.sql = std::move(sql);
                fence_lines.clear();
                return;
            }
        }
        if (!closed) {
            const auto t = trim(fence_lines.front());
            fence_lines.emplace_back(t.substr(0, t.find_first_not_of(t.front())));
            warn("step " + std::to_string(step.heading.index) + ": unclosed code fence closed at end of input");
        }
        target.insert(target.end(), fence_lines.begin(), fence_lines.end());
        fence_lines.clear();
    };

    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto line = lines[i];
        if (open) {
            fence_lines.emplace_back(line);
            if (closes_fence(line, *open)) {
                open.reset();
                flush_fence(true);
            }
            continue;
        }
        if (auto heading = parse_heading(line)) {
            drafts.push_back(StepDraft{std::move(*heading), i + 1, {}, {}, {}, false});
            continue;
        }
        if (!drafts.empty() && !drafts.back().underline_checked) {
            if (trim(line).empty()) continue;
            drafts.back().underline_checked = true;
            if (is_underline(line)) continue;
        }
        if (auto fence = parse_fence_open(line)) {
            open = fence;
            open_is_sql = is_sql_info(fence->info);
            fence_lines.assign(1, std::string(line));
            continue;
        }
        if (drafts.empty()) {
            preamble.emplace_back(line);
        } else {
            auto& step = drafts.back();
            (step.sql ? step.after : step.before).emplace_back(line);
        }
    }
    if (open) flush_fence(false);

    if (drafts.empty()) throw Error(Errc::parse, "no step headings found");
    for (std::size_t k = 0; k < drafts.size(); ++k) {
        const int expected = static_cast<int>(k) + 1;
        if (drafts[k].heading.index != expected) {
            throw Error(Errc::parse,
                        "non-contiguous step numbering at step " + std::to_string(drafts[k].heading.index));
        }
    }
    if (drafts.size() < 2) throw Error(Errc::parse, "a rationale needs at least 2 steps");
    if (!drafts.back().sql) {
        throw Error(Errc::parse,
                    "last step (step " + std::to_string(drafts.back().heading.index) + ") has no sql block");
    }

    CotRationale cot;
    if (auto pre = text::trim_blank_lines(join_lines(preamble)); !pre.empty()) cot.preamble = std::move(pre);
    for (std::size_t k = 0; k < drafts.size(); ++k) {
        auto& d = drafts[k];
        CotStep step;
        step.index = d.heading.index;
        step.title = std::move(d.heading.title);
        step.sql = std::move(d.sql);
        auto before = text::trim_blank_lines(join_lines(d.before));
        auto after = text::trim_blank_lines(join_lines(d.after));
        if (k + 1 == drafts.size()) {
            step.prose = std::move(before);
            if (!after.empty()) cot.trailer = std::move(after);
        } else {
            step.prose = join_paragraphs(before, after);
        }
        cot.steps.push_back(std::move(step));
    }
    return cot;
}

void check_rationale(const CotRationale& cot) {
    if (cot.steps.size() < 2) throw Error(Errc::invalid_input, "a rationale needs at least 2 steps");
    if (cot.preamble) check_free_text(*cot.preamble, "preamble", true);
    if (cot.preamble && cot.preamble->empty()) throw Error(Errc::invalid_input, "preamble is empty");
    for (std::size_t k = 0; k < cot.steps.size(); ++k) {
        const auto& step = cot.steps[k];
        const std::string where = "step " + std::to_string(step.index);
        if (step.index != static_cast<int>(k) + 1) {
            throw Error(Errc::invalid_input, "non-contiguous step numbering at step " + std::to_string(step.index));
        }
        if (step.title.find('\n') != std::string::npos || std::string(trim(step.title)) != step.title) {
            throw Error(Errc::invalid_input, where + ": title must be a single trimmed line");
        }
        check_free_text(step.prose, where + " prose", false);
        if (step.sql) {
            if (trim(*step.sql).empty()) throw Error(Errc::invalid_input, where + ": sql is empty");
            for (auto line : text::split_lines(*step.sql)) {
                auto t = trim(line);
                if (t.substr(0, 3) == "```" || t.substr(0, 3) == "~~~") {
                    throw Error(Errc::invalid_input, where + ": sql contains a fence line");
                }
            }
        }
    }
    if (!cot.steps.back().sql) throw Error(Errc::invalid_input, "last step has no sql block");
    if (cot.trailer) {
        if (cot.trailer->empty()) throw Error(Errc::invalid_input, "trailer is empty");
        check_free_text(*cot.trailer, "trailer", false);
    }
}

std::string serialize_cot(const CotRationale& cot) {
    check_rationale(cot);
    std::string out;
    if (cot.preamble) out += *cot.preamble + "\n\n";
    for (std::size_t k = 0; k < cot.steps.size(); ++k) {
        const auto& step = cot.steps[k];
        if (k) out += '\n';
        out += "**Step " + std::to_string(step.index) + ": " + step.title + "**\n--\n";
        if (!step.prose.empty()) out += "\n" + step.prose + "\n";
        if (step.sql) out += "\n```sql\n" + *step.sql + "\n```\n";
    }
    if (cot.trailer) out += "\n" + *cot.trailer + "\n";
    return out;
}

const std::string& final_sql(const CotRationale& cot) {
    if (cot.steps.empty() || !cot.steps.back().sql) {
        throw Error(Errc::invalid_input, "rationale has no final sql");
    }
    return *cot.steps.back().sql;
}

CotLength cot_length(const CotRationale& cot) { return {cot.steps.size(), serialize_cot(cot).size()}; }

}  // namespace sqlcot
