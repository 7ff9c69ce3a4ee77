#include "sqlcot/repository.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sqlcot/error.hpp"
#include "sqlcot/hash.hpp"
#include "sqlcot/text.hpp"

namespace sqlcot {

__extension__ using i128 = __int128;

using nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string_view to_string(Decoding d) {
    switch (d) {
        case Decoding::manual: return "manual";
        case Decoding::greedy: return "greedy";
        case Decoding::sampling: return "sampling";
        case Decoding::rationalizer: return "rationalizer";
    }
    return "manual";
}

Decoding decoding_from_string(std::string_view s) {
    for (auto d : {Decoding::manual, Decoding::greedy, Decoding::sampling, Decoding::rationalizer}) {
        if (to_string(d) == s) return d;
    }
    throw Error(Errc::parse, "unknown decoding '" + std::string(s) + "'");
}

ValidatedCotRecord make_record(std::string instance_id, const CotRationale& cot, Verdict verdict, int iteration,
                               Decoding decoding, const KeywordVocabulary& vocab, std::string created_at) {
    ValidatedCotRecord r;
    r.cot_markdown = serialize_cot(cot);
    r.key = sha256_hex(r.cot_markdown);
    r.instance_id = std::move(instance_id);
    r.final_sql = final_sql(cot);
    r.sql_vector = vectorize(r.final_sql, vocab);
    r.verdict = std::move(verdict);
    r.iteration = iteration;
    r.decoding = decoding;
    r.created_at = std::move(created_at);
    return r;
}

namespace {

ojson shape_json(const ResultShape& s) { return ojson::array({s.columns, s.rows}); }

ResultShape shape_from(const json& j) { return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>()}; }

}  // namespace

std::string record_to_json(const ValidatedCotRecord& r) {
    ojson verdict;
    verdict["label"] = std::string(to_string(r.verdict.label));
    verdict["detail"] = std::string(to_string(r.verdict.detail));
    if (!r.verdict.message.empty()) verdict["message"] = r.verdict.message;
    verdict["steps"] = ojson::array();
    for (const auto& s : r.verdict.steps) {
        ojson step;
        step["index"] = s.index;
        step["ok"] = s.ok();
        if (s.error) step["error"] = *s.error;
        verdict["steps"].push_back(std::move(step));
    }
    if (r.verdict.gold_shape) verdict["gold_shape"] = shape_json(*r.verdict.gold_shape);
    if (r.verdict.final_shape) verdict["final_shape"] = shape_json(*r.verdict.final_shape);

    ojson vec;
    vec["vocabulary"] = r.sql_vector.vocabulary;
    vec["counts"] = ojson::object();
    for (const auto& [kw, n] : r.sql_vector.counts) vec["counts"][kw] = n;

    ojson doc;
    doc["key"] = r.key;
    doc["instance_id"] = r.instance_id;
    if (r.iteration == kRationalizerIteration) {
        doc["iteration"] = "rationalizer";
    } else {
        doc["iteration"] = r.iteration;
    }
    doc["decoding"] = std::string(to_string(r.decoding));
    doc["verdict"] = std::move(verdict);
    doc["final_sql"] = r.final_sql;
    doc["sql_vector"] = std::move(vec);
    doc["cot_markdown"] = r.cot_markdown;
    doc["created_at"] = r.created_at;
    return doc.dump(-1, ' ', false, json::error_handler_t::replace);
}

ValidatedCotRecord record_from_json(std::string_view line) {
    try {
        const auto doc = json::parse(line);
        ValidatedCotRecord r;
        r.key = doc.at("key").get<std::string>();
        r.instance_id = doc.at("instance_id").get<std::string>();
        const auto& it = doc.at("iteration");
        if (it.is_string()) {
            if (it.get<std::string>() != "rationalizer") throw Error(Errc::parse, "bad iteration tag");
            r.iteration = kRationalizerIteration;
        } else {
            r.iteration = it.get<int>();
        }
        r.decoding = decoding_from_string(doc.at("decoding").get<std::string>());
        const auto& v = doc.at("verdict");
        r.verdict.label = label_from_string(v.at("label").get<std::string>());
        r.verdict.detail = verdict_detail_from_string(v.at("detail").get<std::string>());
        r.verdict.message = v.value("message", std::string());
        for (const auto& s : v.at("steps")) {
            StepExecution step{s.at("index").get<int>(), std::nullopt};
            if (s.contains("error")) step.error = s["error"].get<std::string>();
            r.verdict.steps.push_back(std::move(step));
        }
        if (v.contains("gold_shape")) r.verdict.gold_shape = shape_from(v["gold_shape"]);
        if (v.contains("final_shape")) r.verdict.final_shape = shape_from(v["final_shape"]);
        r.final_sql = doc.at("final_sql").get<std::string>();
        const auto& vec = doc.at("sql_vector");
        r.sql_vector.vocabulary = vec.at("vocabulary").get<std::string>();
        for (const auto& [kw, n] : vec.at("counts").items()) r.sql_vector.counts[kw] = n.get<long>();
        r.cot_markdown = doc.at("cot_markdown").get<std::string>();
        r.created_at = doc.value("created_at", std::string());
        return r;
    } catch (const json::exception& e) {
        throw Error(Errc::parse, std::string("repository record: ") + e.what());
    }
}

std::string utc_timestamp() {
    std::time_t now = std::time(nullptr);
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
        now = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
    }
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

Repository Repository::load(const std::string& path) {
    Repository repo;
    if (!std::filesystem::exists(path)) return repo;
    const auto content = text::read_file(path);
    std::size_t line_no = 0;
    for (auto line : text::split_lines(content)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            repo.add(record_from_json(line));
        } catch (const Error& e) {
            throw Error(Errc::parse, path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return repo;
}

bool Repository::add(ValidatedCotRecord record) {
    if (!keys_.emplace(record.instance_id, record.key).second) return false;
    if (record.positive()) covered_.insert(record.instance_id);
    records_.push_back(std::move(record));
    return true;
}

std::vector<const ValidatedCotRecord*> Repository::positives() const {
    std::vector<const ValidatedCotRecord*> out;
    for (const auto& r : records_) {
        if (r.positive()) out.push_back(&r);
    }
    return out;
}

std::vector<const ValidatedCotRecord*> Repository::positives_of(const std::string& instance_id) const {
    std::vector<const ValidatedCotRecord*> out;
    for (const auto& r : records_) {
        if (r.positive() && r.instance_id == instance_id) out.push_back(&r);
    }
    return out;
}

std::string Repository::to_jsonl() const {
    std::string out;
    for (const auto& r : records_) out += record_to_json(r) + "\n";
    return out;
}

void RepositoryStore::append(std::span<const ValidatedCotRecord> records) const {
    const std::filesystem::path p(path_);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw Error(Errc::io, "cannot append to " + path_);
    for (const auto& r : records) out << record_to_json(r) << '\n';
    out.flush();
    if (!out) throw Error(Errc::io, "write failed on " + path_);
}

std::size_t compact_repository(const std::string& path) {
    const auto content = text::read_file(path);
    Repository repo;
    std::size_t lines = 0;
    for (auto line : text::split_lines(content)) {
        if (text::trim(line).empty()) continue;
        ++lines;
        repo.add(record_from_json(line));
    }
    text::write_file_atomic(path, repo.to_jsonl());
    return lines - repo.size();
}

namespace {

// score^2 as an exact fraction dot^2 / |r|^2 (query norm is common to all).
struct ExactScore {
    i128 num = 0;
    i128 den = 1;
};

bool score_greater(const ExactScore& a, const ExactScore& b) { return a.num * b.den > b.num * a.den; }
bool score_equal(const ExactScore& a, const ExactScore& b) { return a.num * b.den == b.num * a.den; }

}  // namespace

std::vector<RankedExemplar> rank_examples(const SqlVector& query, std::string_view exclude_instance_id,
                                          std::span<const ValidatedCotRecord* const> pool, std::size_t n) {
    struct Candidate {
        const ValidatedCotRecord* record;
        ExactScore exact;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(pool.size());
    const bool zero_query = query.empty();
    for (const auto* r : pool) {
        if (!r->positive() || r->instance_id == exclude_instance_id) continue;
        if (r->sql_vector.vocabulary != query.vocabulary) {
            throw Error(Errc::vocabulary_mismatch, "record " + r->key + " uses vocabulary '" +
                                                       r->sql_vector.vocabulary + "', query uses '" +
                                                       query.vocabulary + "'");
        }
        ExactScore s;
        const long long norm = r->sql_vector.squared_norm();
        if (!zero_query && norm > 0) {
            const long long d = query.dot(r->sql_vector);
            s.num = static_cast<i128>(d) * d;
            s.den = norm;
        }
        candidates.push_back({r, s});
    }
    auto better = [](const Candidate& a, const Candidate& b) {
        if (!score_equal(a.exact, b.exact)) return score_greater(a.exact, b.exact);
        if (a.record->instance_id != b.record->instance_id) return a.record->instance_id < b.record->instance_id;
        return a.record->key < b.record->key;
    };
    const std::size_t take = std::min(n, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                      better);
    std::vector<RankedExemplar> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        out.push_back({candidates[i].record, cosine(query, candidates[i].record->sql_vector)});
    }
    return out;
}

std::vector<RankedExemplar> rank_examples(std::string_view query_sql, std::string_view exclude_instance_id,
                                          std::span<const ValidatedCotRecord* const> pool, std::size_t n,
                                          const KeywordVocabulary& vocab) {
    return rank_examples(vectorize(query_sql, vocab), exclude_instance_id, pool, n);
}

}  // namespace sqlcot
