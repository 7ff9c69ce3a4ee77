#include "sqlcot/evalharness.hpp"

#include <algorithm>

#include "json.hpp"
#include "sqlcot/error.hpp"
#include "sqlcot/export.hpp"
#include "sqlcot/hash.hpp"
#include "sqlcot/parallel.hpp"
#include "sqlcot/rationale.hpp"
#include "sqlcot/text.hpp"

namespace sqlcot {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

PredictionFile parse_predictions(std::string_view content) {
    PredictionFile out;
    std::size_t n = 0;
    for (auto line : text::split_lines(content)) {
        ++n;
        if (text::trim(line).empty()) continue;
        std::string id;
        std::string prediction;
        try {
            const auto j = json::parse(line);
            const auto& raw_id = j.at("instance_id");
            id = raw_id.is_string() ? raw_id.get<std::string>() : raw_id.dump();
            prediction = j.at("prediction").get<std::string>();
        } catch (const json::exception& e) {
            throw Error(Errc::parse, "prediction line " + std::to_string(n) + ": " + e.what());
        }
        if (!out.emplace(id, std::move(prediction)).second) {
            throw Error(Errc::parse, "prediction line " + std::to_string(n) + ": duplicate instance_id '" + id + "'");
        }
    }
    return out;
}

PredictionFile load_predictions(const std::string& path) {
    return parse_predictions(text::read_file(path));
}

std::string prediction_sql(std::string_view prediction) {
    try {
        return final_sql(parse_cot(prediction));
    } catch (const Error&) {
        return std::string(text::trim(prediction));
    }
}

std::string_view to_string(PredictionStatus s) {
    switch (s) {
        case PredictionStatus::correct: return "correct";
        case PredictionStatus::incorrect: return "incorrect";
        case PredictionStatus::error: return "error";
        case PredictionStatus::missing: return "missing";
    }
    return "missing";
}

PredictionStatus prediction_status_from_string(std::string_view s) {
    if (s == "correct") return PredictionStatus::correct;
    if (s == "incorrect") return PredictionStatus::incorrect;
    if (s == "error") return PredictionStatus::error;
    if (s == "missing") return PredictionStatus::missing;
    throw Error(Errc::invalid_input, "unknown prediction status '" + std::string(s) + "'");
}

namespace {

void finish(CategoryScore& c) {
    c.hundredths = percent_hundredths(c.correct, c.total);
}

const Difficulty kReported[] = {Difficulty::simple, Difficulty::moderate, Difficulty::challenging};

}  // namespace

EvalReport EvalReport::from_counts(std::string devset,
                                   const std::map<Difficulty, std::pair<std::size_t, std::size_t>>& counts) {
    EvalReport report;
    report.devset = std::move(devset);
    for (const auto& [d, pair] : counts) {
        if (pair.first > pair.second) throw Error(Errc::invalid_input, "more correct answers than instances");
        auto& c = report.categories[d];
        c.correct = pair.first;
        c.total = pair.second;
        finish(c);
        report.overall.correct += c.correct;
        report.overall.total += c.total;
    }
    finish(report.overall);
    return report;
}

std::string devset_fingerprint(std::span<const TrainInstance> devset) {
    std::vector<std::string> ids;
    for (const auto& inst : devset) ids.push_back(inst.instance_id);
    std::sort(ids.begin(), ids.end());
    std::string joined;
    for (const auto& id : ids) joined += id + "\n";
    return sha256_hex(joined);
}

EvalReport score_predictions(std::span<const TrainInstance> devset, const PredictionFile& predictions,
                             const DatabaseRegistry& registry, const EvalOptions& options) {
    std::map<std::string, const TrainInstance*> by_id;
    for (const auto& inst : devset) by_id.emplace(inst.instance_id, &inst);
    for (const auto& [id, _] : predictions) {
        if (!by_id.count(id)) throw Error(Errc::invalid_input, "prediction for unknown instance '" + id + "'");
    }

    EvalReport report;
    report.devset = devset_fingerprint(devset);
    report.instances.resize(devset.size());
    const std::size_t workers = std::max<std::size_t>(options.workers, 1);
    std::vector<Executor> executors;
    for (std::size_t w = 0; w < workers; ++w) executors.emplace_back(registry, options.exec);

    parallel_for(devset.size(), workers, [&](std::size_t i, std::size_t w) {
        const auto& inst = devset[i];
        auto& score = report.instances[i];
        score.instance_id = inst.instance_id;
        score.difficulty = inst.difficulty;
        auto it = predictions.find(inst.instance_id);
        if (it == predictions.end()) {
            score.status = PredictionStatus::missing;
            return;
        }
        const auto sql = prediction_sql(it->second);
        if (sql.empty()) {
            score.status = PredictionStatus::error;
            score.detail = "empty prediction";
            return;
        }
        const auto verdict = validate_sql(inst, sql, executors[w], options.compare);
        if (verdict.positive()) {
            score.status = PredictionStatus::correct;
        } else if (verdict.detail == VerdictDetail::final_sql_error ||
                   verdict.detail == VerdictDetail::final_sql_timeout) {
            score.status = PredictionStatus::error;
            score.detail = verdict.message;
        } else {
            score.status = PredictionStatus::incorrect;
            score.detail = verdict.message;
        }
    });

    for (auto d : kReported) report.categories[d];
    for (const auto& s : report.instances) {
        auto& c = report.categories[s.difficulty];
        ++c.total;
        ++report.overall.total;
        if (s.status == PredictionStatus::correct) {
            ++c.correct;
            ++report.overall.correct;
        }
    }
    for (auto& [_, c] : report.categories) finish(c);
    finish(report.overall);
    return report;
}

namespace {

ojson category_json(const CategoryScore& c) {
    ojson j;
    j["correct"] = c.correct;
    j["total"] = c.total;
    j["accuracy"] = format_hundredths(c.hundredths);
    return j;
}

CategoryScore category_from(const json& j) {
    CategoryScore c;
    c.correct = j.at("correct").get<std::size_t>();
    c.total = j.at("total").get<std::size_t>();
    finish(c);
    return c;
}

}  // namespace

std::string eval_report_json(const EvalReport& report) {
    ojson doc;
    doc["devset"] = report.devset;
    ojson cats = ojson::object();
    for (const auto& [d, c] : report.categories) cats[std::string(to_string(d))] = category_json(c);
    doc["categories"] = cats;
    doc["total"] = category_json(report.overall);
    doc["instances"] = ojson::array();
    for (const auto& s : report.instances) {
        ojson j;
        j["instance_id"] = s.instance_id;
        j["difficulty"] = std::string(to_string(s.difficulty));
        j["status"] = std::string(to_string(s.status));
        if (!s.detail.empty()) j["detail"] = s.detail;
        doc["instances"].push_back(std::move(j));
    }
    return doc.dump(2, ' ', false, json::error_handler_t::replace);
}

EvalReport eval_report_from_json(std::string_view content) {
    try {
        const auto doc = json::parse(content);
        EvalReport report;
        report.devset = doc.at("devset").get<std::string>();
        for (const auto& [name, value] : doc.at("categories").items()) {
            report.categories[difficulty_from_string(name)] = category_from(value);
        }
        report.overall = category_from(doc.at("total"));
        for (const auto& j : doc.value("instances", json::array())) {
            InstanceScore s;
            s.instance_id = j.at("instance_id").get<std::string>();
            s.difficulty = difficulty_from_string(j.value("difficulty", "unknown"));
            s.status = prediction_status_from_string(j.at("status").get<std::string>());
            s.detail = j.value("detail", "");
            report.instances.push_back(std::move(s));
        }
        return report;
    } catch (const json::exception& e) {
        throw Error(Errc::parse, std::string("eval report: ") + e.what());
    }
}

namespace {

std::string capitalized(std::string_view s) {
    std::string out(s);
    if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
    return out;
}

std::string table(const std::vector<std::string>& head, const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(head.size());
    for (std::size_t c = 0; c < head.size(); ++c) {
        width[c] = head[c].size();
        for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
    }
    auto line = [&](const std::vector<std::string>& cells) {
        std::string out;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c) out += "  ";
            const auto pad = std::string(width[c] - cells[c].size(), ' ');
            out += c == 0 ? cells[c] + pad : pad + cells[c];
        }
        return std::string(text::trim_right(out)) + "\n";
    };
    std::string out = line(head);
    for (const auto& r : rows) out += line(r);
    return out;
}

std::vector<Difficulty> columns_of(const std::map<Difficulty, CategoryScore>& categories) {
    std::vector<Difficulty> cols(std::begin(kReported), std::end(kReported));
    if (categories.count(Difficulty::unknown)) cols.push_back(Difficulty::unknown);
    return cols;
}

}  // namespace

std::string eval_report_table(const EvalReport& report) {
    std::vector<std::string> head = {""};
    std::vector<std::string> acc = {"Accuracy"};
    std::vector<std::string> counts = {"Correct/Total"};
    for (auto d : columns_of(report.categories)) {
        head.push_back(capitalized(to_string(d)));
        auto it = report.categories.find(d);
        const CategoryScore c = it == report.categories.end() ? CategoryScore{} : it->second;
        acc.push_back(format_hundredths(c.hundredths));
        counts.push_back(std::to_string(c.correct) + "/" + std::to_string(c.total));
    }
    head.push_back("Total");
    acc.push_back(format_hundredths(report.overall.hundredths));
    counts.push_back(std::to_string(report.overall.correct) + "/" + std::to_string(report.overall.total));
    return table(head, {acc, counts});
}

ReportDiff diff_reports(const EvalReport& a, const EvalReport& b) {
    if (a.devset != b.devset) throw Error(Errc::invalid_input, "reports were computed on different devsets");
    ReportDiff diff;
    std::set<Difficulty> keys;
    for (const auto& [d, _] : a.categories) keys.insert(d);
    for (const auto& [d, _] : b.categories) keys.insert(d);
    for (auto d : keys) {
        auto ia = a.categories.find(d);
        auto ib = b.categories.find(d);
        const std::int64_t ha = ia == a.categories.end() ? 0 : ia->second.hundredths;
        const std::int64_t hb = ib == b.categories.end() ? 0 : ib->second.hundredths;
        diff.category_delta[d] = hb - ha;
    }
    diff.total_delta = b.overall.hundredths - a.overall.hundredths;

    std::map<std::string, PredictionStatus> before;
    for (const auto& s : a.instances) before[s.instance_id] = s.status;
    for (const auto& s : b.instances) {
        auto it = before.find(s.instance_id);
        if (it == before.end()) continue;
        const bool was = it->second == PredictionStatus::correct;
        const bool now = s.status == PredictionStatus::correct;
        if (!was && now) diff.fixed.push_back(s.instance_id);
        if (was && !now) diff.regressed.push_back(s.instance_id);
    }
    std::sort(diff.fixed.begin(), diff.fixed.end());
    std::sort(diff.regressed.begin(), diff.regressed.end());
    return diff;
}

std::string report_diff_table(const ReportDiff& diff) {
    std::vector<std::string> head = {""};
    std::vector<std::string> row = {"Delta"};
    for (const auto& [d, delta] : diff.category_delta) {
        head.push_back(capitalized(to_string(d)));
        row.push_back(format_hundredths(delta, true));
    }
    head.push_back("Total");
    row.push_back(format_hundredths(diff.total_delta, true));
    std::string out = table(head, {row});
    out += "fixed: " + std::to_string(diff.fixed.size()) + "  regressed: " + std::to_string(diff.regressed.size()) +
           "\n";
    return out;
}

std::string report_diff_json(const ReportDiff& diff) {
    ojson doc;
    ojson cats = ojson::object();
    for (const auto& [d, delta] : diff.category_delta) cats[std::string(to_string(d))] = format_hundredths(delta, true);
    doc["categories"] = cats;
    doc["total"] = format_hundredths(diff.total_delta, true);
    doc["fixed"] = diff.fixed;
    doc["regressed"] = diff.regressed;
    return doc.dump(2, ' ', false, json::error_handler_t::replace);
}

}  // namespace sqlcot
