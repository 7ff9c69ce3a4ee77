#include "sqlcot/export.hpp"

#include <algorithm>
#include <ostream>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "sqlcot/error.hpp"
#include "sqlcot/rationale.hpp"
#include "sqlcot/text.hpp"

namespace sqlcot {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

std::int64_t percent_hundredths(std::size_t covered, std::size_t total) {
    if (total == 0) return 0;
    const auto c = static_cast<std::int64_t>(covered);
    const auto t = static_cast<std::int64_t>(total);
    return (c * 20000 + t) / (2 * t);
}

std::string format_hundredths(std::int64_t hundredths, bool explicit_plus) {
    std::string sign;
    if (hundredths < 0) sign = "-";
    else if (explicit_plus) sign = "+";
    const auto abs = hundredths < 0 ? -hundredths : hundredths;
    const auto frac = abs % 100;
    return sign + std::to_string(abs / 100) + "." + (frac < 10 ? "0" : "") + std::to_string(frac);
}

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::gold: return "gold";
        case Variant::cot_short: return "cot_short";
        case Variant::cot_long: return "cot_long";
    }
    return "gold";
}

std::string_view to_string(Scope s) {
    return s == Scope::full ? "full" : "covered_only";
}

Variant variant_from_string(std::string_view s) {
    if (s == "gold") return Variant::gold;
    if (s == "cot_short") return Variant::cot_short;
    if (s == "cot_long") return Variant::cot_long;
    throw Error(Errc::invalid_input, "unknown variant '" + std::string(s) + "'");
}

Scope scope_from_string(std::string_view s) {
    if (s == "covered_only") return Scope::covered_only;
    if (s == "full") return Scope::full;
    throw Error(Errc::invalid_input, "unknown scope '" + std::string(s) + "'");
}

const ValidatedCotRecord& select_cot_variant(std::span<const ValidatedCotRecord* const> records, Variant variant) {
    if (variant == Variant::gold) throw Error(Errc::precondition, "the gold variant has no rationale to select");
    if (records.empty()) throw Error(Errc::precondition, "no positive rationale to select from");
    const ValidatedCotRecord* best = nullptr;
    std::tuple<std::size_t, std::size_t> best_len{};
    for (const auto* r : records) {
        const std::tuple<std::size_t, std::size_t> len{parse_cot(r->cot_markdown).steps.size(), r->cot_markdown.size()};
        bool better = false;
        if (!best) {
            better = true;
        } else if (len != best_len) {
            better = variant == Variant::cot_short ? len < best_len : len > best_len;
        } else {
            better = r->key < best->key;
        }
        if (better) {
            best = r;
            best_len = len;
        }
    }
    return *best;
}

std::string finetune_example_json(const FinetuneExample& example) {
    ojson j;
    j["instance_id"] = example.instance_id;
    j["difficulty"] = std::string(to_string(example.difficulty));
    j["variant"] = std::string(to_string(example.variant));
    j["input"] = example.input;
    j["target"] = example.target;
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::vector<FinetuneExample> finetune_set(std::span<const TrainInstance> corpus, const Repository& repo,
                                          Variant variant, Scope scope, const SchemaResolver& schemas) {
    std::vector<FinetuneExample> out;
    for (const auto& inst : corpus) {
        const auto positives = repo.positives_of(inst.instance_id);
        if (positives.empty()) {
            if (scope == Scope::covered_only) continue;
            if (variant != Variant::gold) {
                throw Error(Errc::precondition, "instance '" + inst.instance_id +
                                                    "' has no validated rationale; run the rationalizer before a "
                                                    "full-scope export");
            }
        }
        FinetuneExample ex;
        ex.instance_id = inst.instance_id;
        ex.difficulty = inst.difficulty;
        ex.variant = variant;
        ex.input = source_block(inst, schemas.schema_for(inst), kGenerationInstruction);
        ex.target = variant == Variant::gold ? std::string(text::trim(inst.gold_sql))
                                             : select_cot_variant(positives, variant).cot_markdown;
        out.push_back(std::move(ex));
    }
    return out;
}

std::size_t export_finetune_set(std::ostream& out, std::span<const TrainInstance> corpus, const Repository& repo,
                                Variant variant, Scope scope, const SchemaResolver& schemas) {
    const auto examples = finetune_set(corpus, repo, variant, scope, schemas);
    for (const auto& ex : examples) out << finetune_example_json(ex) << '\n';
    return examples.size();
}

std::vector<StageSpec> default_stages(std::string teacher_label, std::string rationalizer_label) {
    std::vector<StageSpec> stages;
    stages.push_back({"Manual Few-shot", teacher_label, [](const ValidatedCotRecord& r) {
                          return r.decoding != Decoding::rationalizer && r.iteration >= 0 && r.iteration <= 1;
                      }});
    stages.push_back({"Dynamic Few-shot", teacher_label,
                      [](const ValidatedCotRecord& r) { return r.decoding != Decoding::rationalizer; }});
    stages.push_back({"Fine-tuning", std::move(rationalizer_label), [](const ValidatedCotRecord&) { return true; }});
    return stages;
}

CoverageReport coverage_report(std::span<const TrainInstance> corpus, const Repository& repo,
                               std::span<const StageSpec> stages) {
    CoverageReport report;
    for (const auto& stage : stages) {
        std::set<std::string> covered;
        for (const auto& r : repo.records()) {
            if (r.positive() && stage.includes(r)) covered.insert(r.instance_id);
        }
        CoverageRow row;
        row.stage = stage.name;
        row.model = stage.model;
        row.total = corpus.size();
        for (const auto& inst : corpus) row.covered += covered.count(inst.instance_id);
        row.hundredths = percent_hundredths(row.covered, row.total);
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string coverage_report_json(const CoverageReport& report) {
    ojson doc;
    doc["stages"] = ojson::array();
    for (const auto& row : report.rows) {
        ojson j;
        j["stage"] = row.stage;
        j["model"] = row.model;
        j["covered"] = row.covered;
        j["total"] = row.total;
        j["percentage"] = row.percentage();
        doc["stages"].push_back(std::move(j));
    }
    return doc.dump(2, ' ', false, json::error_handler_t::replace);
}

namespace {

std::string pad_right(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string pad_left(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

}  // namespace

std::string coverage_report_table(const CoverageReport& report) {
    const std::vector<std::string> head = {"Stage", "Model", "Covered", "Total", "Coverage%"};
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : report.rows) {
        rows.push_back({r.stage, r.model, std::to_string(r.covered), std::to_string(r.total), r.percentage()});
    }
    std::vector<std::size_t> width(head.size());
    for (std::size_t c = 0; c < head.size(); ++c) {
        width[c] = head[c].size();
        for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
    }
    auto line = [&](const std::vector<std::string>& cells) {
        std::string out;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c) out += "  ";
            out += c < 2 ? pad_right(cells[c], width[c]) : pad_left(cells[c], width[c]);
        }
        return std::string(text::trim_right(out)) + "\n";
    };
    std::string out = line(head);
    for (const auto& row : rows) out += line(row);
    return out;
}

}  // namespace sqlcot
