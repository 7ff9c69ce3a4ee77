#include "sqlcot/rationalizer.hpp"

#include <algorithm>
#include <ostream>

#include "json.hpp"
#include "sqlcot/error.hpp"
#include "sqlcot/export.hpp"
#include "sqlcot/hash.hpp"
#include "sqlcot/parallel.hpp"
#include "sqlcot/text.hpp"

namespace sqlcot {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

const std::string kRationalizationInstruction =
    "Given the above [SCHEMA] of a database, a question [QUESTION] and the SQL statement [SQL] that answers it, "
    "explain how the SQL statement is built. Decompose the SQL in increasingly complex building blocks. Explain "
    "each step of the SQL building process thinking step by step. Format the output using the Markdown language.";

std::string rationalization_prompt(const TrainInstance& instance, const SchemaResolver& schemas) {
    return schema_block(schemas.schema_for(instance), instance.evidence) + "\n\n[QUESTION]\n" +
           std::string(text::trim(instance.question)) + "\n[/QUESTION]\n\n[SQL]\n" +
           std::string(text::trim(instance.gold_sql)) + "\n[/SQL]\n\n" + kRationalizationInstruction;
}

std::vector<RationalizationExample> rationalization_trainset(std::span<const TrainInstance> corpus,
                                                             const Repository& repo, const SchemaResolver& schemas) {
    std::vector<RationalizationExample> out;
    for (const auto& inst : corpus) {
        std::vector<const ValidatedCotRecord*> usable;
        for (const auto* r : repo.positives_of(inst.instance_id)) {
            if (r->decoding != Decoding::rationalizer) usable.push_back(r);
        }
        if (usable.empty()) continue;
        const auto& best = select_cot_variant(usable, Variant::cot_long);
        out.push_back({inst.instance_id, rationalization_prompt(inst, schemas), best.cot_markdown});
    }
    if (out.empty()) throw Error(Errc::precondition, "repository holds no positive rationale for the corpus");
    return out;
}

std::size_t export_rationalization_trainset(std::ostream& out, std::span<const TrainInstance> corpus,
                                            const Repository& repo, const SchemaResolver& schemas) {
    const auto examples = rationalization_trainset(corpus, repo, schemas);
    for (const auto& ex : examples) {
        ojson line;
        line["instance_id"] = ex.instance_id;
        line["input"] = ex.input;
        line["output"] = ex.output;
        out << line.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    }
    return examples.size();
}

std::string_view to_string(Disposition d) {
    switch (d) {
        case Disposition::unreviewed: return "unreviewed";
        case Disposition::gold_wrong: return "gold_wrong";
        case Disposition::generation_wrong: return "generation_wrong";
    }
    return "unreviewed";
}

Disposition disposition_from_string(std::string_view s) {
    if (s == "unreviewed") return Disposition::unreviewed;
    if (s == "gold_wrong") return Disposition::gold_wrong;
    if (s == "generation_wrong") return Disposition::generation_wrong;
    throw Error(Errc::invalid_input, "unknown disposition '" + std::string(s) + "'");
}

namespace {

ojson shape_json(const std::optional<ResultShape>& shape) {
    if (!shape) return nullptr;
    return {{"columns", shape->columns}, {"rows", shape->rows}};
}

std::optional<ResultShape> shape_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return ResultShape{j.at("columns").get<std::size_t>(), j.at("rows").get<std::size_t>()};
}

std::string make_flag_id(const std::string& instance_id, const std::string& sql) {
    return "flag-" + sha256_hex(instance_id + "\n" + sql).substr(0, 16);
}

}  // namespace

std::string flag_to_json(const InconsistencyFlag& flag) {
    ojson j;
    j["flag_id"] = flag.flag_id;
    j["instance_id"] = flag.instance_id;
    j["generated_final_sql"] = flag.generated_final_sql;
    j["detail"] = std::string(to_string(flag.detail));
    j["message"] = flag.message;
    j["gold_shape"] = shape_json(flag.gold_shape);
    j["generated_shape"] = shape_json(flag.generated_shape);
    j["disposition"] = std::string(to_string(flag.disposition));
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

InconsistencyFlag flag_from_json(std::string_view line) {
    try {
        const auto j = json::parse(line);
        InconsistencyFlag flag;
        flag.flag_id = j.at("flag_id").get<std::string>();
        flag.instance_id = j.at("instance_id").get<std::string>();
        flag.generated_final_sql = j.at("generated_final_sql").get<std::string>();
        flag.detail = verdict_detail_from_string(j.at("detail").get<std::string>());
        flag.message = j.value("message", "");
        flag.gold_shape = shape_from(j.value("gold_shape", json()));
        flag.generated_shape = shape_from(j.value("generated_shape", json()));
        flag.disposition = disposition_from_string(j.value("disposition", "unreviewed"));
        return flag;
    } catch (const json::exception& e) {
        throw Error(Errc::parse, std::string("inconsistency flag: ") + e.what());
    }
}

RationalizerResult apply_rationalizer(std::span<const TrainInstance* const> pending, TeacherClient& model,
                                      const RationalizerConfig& config, const PipelineContext& context) {
    if (config.attempts_per_mode < 1) throw Error(Errc::invalid_input, "attempts_per_mode must be at least 1");
    struct Slot {
        std::optional<ValidatedCotRecord> record;
        std::optional<InconsistencyFlag> flag;
        InstanceOutcome outcome;
    };
    std::vector<Slot> slots(pending.size());
    const std::size_t workers = std::max<std::size_t>(config.workers, 1);
    std::vector<Executor> executors;
    for (std::size_t w = 0; w < workers; ++w) executors.emplace_back(*context.registry);

    std::vector<DecodingParams> attempts;
    for (int a = 0; a < config.attempts_per_mode; ++a) attempts.push_back({Decoding::greedy, 0.0, std::nullopt});
    for (int a = 0; a < config.attempts_per_mode; ++a) {
        attempts.push_back({Decoding::sampling, config.sampling_temperature,
                            config.sampling_seed + static_cast<std::uint64_t>(a) + 1});
    }

    parallel_for(pending.size(), workers, [&](std::size_t i, std::size_t w) {
        const TrainInstance& inst = *pending[i];
        auto& slot = slots[i];
        slot.outcome.instance_id = inst.instance_id;
        const auto prompt = rationalization_prompt(inst, *context.schemas);
        std::optional<Verdict> last_negative;
        std::string last_negative_sql;

        for (const auto& decoding : attempts) {
            TeacherRequest request;
            request.model = config.model;
            request.prompt = prompt;
            request.decoding = decoding;
            request.instance_id = inst.instance_id;

            TeacherResponse response;
            try {
                response = complete_with_retry(model, request, config.retry);
            } catch (const TransportError& e) {
                slot.outcome.status = AttemptStatus::transport_failed;
                slot.outcome.detail = e.what();
                continue;
            }
            CotRationale cot;
            try {
                cot = parse_cot(response.completion);
                check_rationale(cot);
            } catch (const Error& e) {
                slot.outcome.status = AttemptStatus::parse_error;
                slot.outcome.detail = e.what();
                continue;
            }
            Verdict verdict;
            try {
                verdict = validate_cot(inst, cot, executors[w], config.compare);
            } catch (const Error& e) {
                slot.outcome.status = AttemptStatus::validation_error;
                slot.outcome.detail = e.what();
                continue;
            }
            if (verdict.positive()) {
                slot.record = make_record(inst.instance_id, cot, std::move(verdict), kRationalizerIteration,
                                          Decoding::rationalizer, *context.vocab, utc_timestamp());
                slot.outcome.status = AttemptStatus::positive;
                slot.outcome.detail.clear();
                return;
            }
            slot.outcome.status = AttemptStatus::negative;
            slot.outcome.detail = std::string(to_string(verdict.detail));
            last_negative_sql = final_sql(cot);
            last_negative = std::move(verdict);
        }

        if (last_negative) {
            InconsistencyFlag flag;
            flag.flag_id = make_flag_id(inst.instance_id, last_negative_sql);
            flag.instance_id = inst.instance_id;
            flag.generated_final_sql = last_negative_sql;
            flag.detail = last_negative->detail;
            flag.message = last_negative->message;
            flag.gold_shape = last_negative->gold_shape;
            flag.generated_shape = last_negative->final_shape;
            slot.flag = std::move(flag);
            slot.outcome.status = AttemptStatus::negative;
        }
    });

    RationalizerResult result;
    for (auto& slot : slots) {
        if (slot.record) result.records.push_back(std::move(*slot.record));
        if (slot.flag) result.flags.push_back(std::move(*slot.flag));
        result.outcomes.push_back(std::move(slot.outcome));
    }
    return result;
}

// ---- clause peeling

namespace {

const std::vector<std::string> kAggregates = {"COUNT", "SUM", "AVG", "MIN", "MAX", "TOTAL", "GROUP_CONCAT"};

bool word_is(const Token& t, std::string_view w) {
    return t.kind == TokenKind::word && text::iequals(t.text, w);
}

std::string strip_trailing_semicolons(std::string_view sql) {
    std::string s(text::trim(sql));
    while (!s.empty() && s.back() == ';') s = std::string(text::trim(std::string_view(s).substr(0, s.size() - 1)));
    return s;
}

std::string unquote(std::string_view name) {
    if (name.size() >= 2 && (name.front() == '"' || name.front() == '`' || name.front() == '[')) {
        return std::string(name.substr(1, name.size() - 2));
    }
    return std::string(name);
}

std::vector<std::string> referenced_tables(const std::vector<Token>& tokens) {
    std::vector<std::string> tables;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
        if (!word_is(tokens[i], "FROM") && !word_is(tokens[i], "JOIN")) continue;
        const auto& next = tokens[i + 1];
        if (next.kind != TokenKind::word && next.kind != TokenKind::quoted_name) continue;
        auto name = unquote(next.text);
        if (i + 3 < tokens.size() && tokens[i + 2].kind == TokenKind::op && tokens[i + 2].text == ".") {
            name += "." + unquote(tokens[i + 3].text);
        }
        if (std::find(tables.begin(), tables.end(), name) == tables.end()) tables.push_back(name);
    }
    return tables;
}

CotStep plan_step(const std::vector<std::string>& tables) {
    CotStep step;
    step.index = 1;
    step.title = "Identify the required tables and columns";
    if (tables.empty()) {
        step.prose = "The question can be answered without reading any table.";
    } else {
        step.prose = "Required tables:";
        for (const auto& t : tables) step.prose += "\n* `" + t + "`";
    }
    return step;
}

std::string joined_titles(const std::vector<std::string>& tables) {
    if (tables.size() == 1) return "Select from the `" + tables.front() + "` table";
    return "Join the required tables";
}

struct Clauses {
    std::string select_list;  // without the SELECT keyword
    std::string from;         // "FROM ..."
    std::vector<std::string> conditions;
    std::string group;        // "GROUP BY ..."
    std::string having;       // "HAVING ..."
    std::string order_limit;  // "ORDER BY ... LIMIT ..."
    bool aggregated = false;
};

std::string slice(std::string_view sql, std::size_t begin, std::size_t end) {
    return std::string(text::trim(sql.substr(begin, end - begin)));
}

// Splits a WHERE body on top-level AND, unless BETWEEN makes AND ambiguous.
std::vector<std::string> split_conditions(std::string_view sql, const std::vector<Token>& tokens, std::size_t first,
                                          std::size_t last, std::size_t end_offset) {
    std::vector<std::size_t> cuts;
    for (std::size_t i = first; i < last; ++i) {
        if (tokens[i].depth != 0) continue;
        if (word_is(tokens[i], "BETWEEN") || word_is(tokens[i], "OR")) {
            cuts.clear();
            break;
        }
        if (word_is(tokens[i], "AND")) cuts.push_back(i);
    }
    std::vector<std::string> parts;
    std::size_t begin = tokens[first].offset;
    for (auto c : cuts) {
        parts.push_back(slice(sql, begin, tokens[c].offset));
        begin = tokens[c].offset + tokens[c].text.size();
    }
    parts.push_back(slice(sql, begin, end_offset));
    return parts;
}

std::optional<Clauses> segment(std::string_view sql, const std::vector<Token>& tokens) {
    if (tokens.empty() || !word_is(tokens.front(), "SELECT")) return std::nullopt;
    enum Kind { kFrom, kWhere, kGroup, kHaving, kOrder };
    std::vector<std::pair<Kind, std::size_t>> marks;
    for (std::size_t i = 1; i < tokens.size(); ++i) {
        const auto& t = tokens[i];
        if (t.depth != 0 || t.kind != TokenKind::word) continue;
        if (word_is(t, "UNION") || word_is(t, "INTERSECT") || word_is(t, "EXCEPT") || word_is(t, "WINDOW") ||
            word_is(t, "SELECT")) {
            return std::nullopt;
        }
        if (word_is(t, "FROM")) marks.push_back({kFrom, i});
        if (word_is(t, "WHERE")) marks.push_back({kWhere, i});
        if (word_is(t, "GROUP")) marks.push_back({kGroup, i});
        if (word_is(t, "HAVING")) marks.push_back({kHaving, i});
        if (word_is(t, "ORDER") || word_is(t, "LIMIT")) {
            if (marks.empty() || marks.back().first != kOrder) marks.push_back({kOrder, i});
        }
    }
    if (marks.empty() || marks.front().first != kFrom) return std::nullopt;
    for (std::size_t m = 1; m < marks.size(); ++m) {
        if (marks[m].first <= marks[m - 1].first) return std::nullopt;
    }

    Clauses c;
    const std::size_t from_token = marks.front().second;
    std::size_t select_begin = 1;
    c.select_list = slice(sql, tokens[select_begin].offset, tokens[from_token].offset);
    for (std::size_t i = 1; i < from_token; ++i) {
        if (tokens[i].kind != TokenKind::word) continue;
        const auto upper = text::to_upper(tokens[i].text);
        if (std::find(kAggregates.begin(), kAggregates.end(), upper) != kAggregates.end() ||
            upper == "OVER") {
            c.aggregated = true;
        }
    }
    for (std::size_t m = 0; m < marks.size(); ++m) {
        const std::size_t first = marks[m].second;
        const std::size_t last = m + 1 < marks.size() ? marks[m + 1].second : tokens.size();
        const std::size_t end = last < tokens.size() ? tokens[last].offset : sql.size();
        switch (marks[m].first) {
            case kFrom: c.from = slice(sql, tokens[first].offset, end); break;
            case kWhere:
                if (first + 1 >= last) return std::nullopt;
                c.conditions = split_conditions(sql, tokens, first + 1, last, end);
                break;
            case kGroup:
                c.group = slice(sql, tokens[first].offset, end);
                c.aggregated = true;
                break;
            case kHaving: c.having = slice(sql, tokens[first].offset, end); break;
            case kOrder: c.order_limit = slice(sql, tokens[first].offset, end); break;
        }
    }
    return c;
}

std::string where_text(const std::vector<std::string>& conditions, std::size_t count) {
    std::string out;
    for (std::size_t i = 0; i < count; ++i) out += (i == 0 ? "WHERE " : " AND ") + conditions[i];
    return out;
}

std::string assemble(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) {
        if (p.empty()) continue;
        if (!out.empty()) out += "\n";
        out += p;
    }
    return out;
}

}  // namespace

ProceduralCot procedural_rationalize(const TrainInstance& instance, Executor* executor, ProceduralStyle style) {
    ProceduralCot result;
    const std::string gold(text::trim(instance.gold_sql));
    if (gold.empty()) throw Error(Errc::invalid_input, "instance '" + instance.instance_id + "' has no gold SQL");
    const std::string body = strip_trailing_semicolons(gold);
    auto lexed = lex_sql(body);
    for (auto& w : lexed.warnings) result.warnings.push_back(std::move(w));
    const auto tables = referenced_tables(lexed.tokens);

    struct Draft {
        std::string title;
        std::string prose;
        std::string sql;
    };
    std::vector<Draft> drafts;

    bool has_semicolon = std::any_of(lexed.tokens.begin(), lexed.tokens.end(),
                                     [](const Token& t) { return t.kind == TokenKind::semicolon; });
    auto clauses = has_semicolon ? std::nullopt : segment(body, lexed.tokens);
    if (!clauses) {
        result.warnings.push_back("cannot segment the gold query; using plan and final steps only");
    } else {
        const auto& c = *clauses;
        const std::string proj = c.aggregated ? "*" : c.select_list;
        const std::string head = "SELECT " + proj;
        const auto n = c.conditions.size();
        if (style == ProceduralStyle::compact) {
            drafts.push_back({joined_titles(tables), "", assemble({head, c.from, where_text(c.conditions, n)})});
        } else {
            drafts.push_back({joined_titles(tables), "", assemble({head, c.from})});
            for (std::size_t k = 1; k <= n; ++k) {
                const std::string title = n == 1 ? "Filter the rows" : "Add filter condition " + std::to_string(k);
                drafts.push_back({title, "Keep the rows where " + text::squash_whitespace(c.conditions[k - 1]) + ".",
                                  assemble({head, c.from, where_text(c.conditions, k)})});
            }
            const auto where_all = where_text(c.conditions, n);
            if (!c.group.empty()) {
                const std::string keys(text::trim(std::string_view(c.group).substr(std::string_view("GROUP").size())));
                std::string key_list(keys);
                if (key_list.size() >= 2 && text::iequals(key_list.substr(0, 2), "BY")) {
                    key_list = std::string(text::trim(std::string_view(key_list).substr(2)));
                }
                drafts.push_back({"Group the rows", "", assemble({"SELECT " + key_list, c.from, where_all, c.group})});
                if (!c.having.empty()) {
                    drafts.push_back({"Filter the groups", "",
                                      assemble({"SELECT " + key_list, c.from, where_all, c.group, c.having})});
                }
            }
            if (!c.order_limit.empty() && !c.aggregated) {
                drafts.push_back({"Order and limit the result", "",
                                  assemble({head, c.from, where_all, c.group, c.having, c.order_limit})});
            }
        }
    }

    // Drop steps that fail, repeat the previous step, or already are the answer.
    std::vector<Draft> kept;
    const auto gold_key = text::squash_whitespace(body);
    for (auto& d : drafts) {
        const auto key = text::squash_whitespace(d.sql);
        if (key == gold_key) continue;
        if (!kept.empty() && text::squash_whitespace(kept.back().sql) == key) continue;
        if (executor) {
            try {
                executor->execute(instance.db_id, d.sql);
            } catch (const Error& e) {
                result.warnings.push_back("dropped step '" + d.title + "': " + e.what());
                continue;
            }
        }
        kept.push_back(std::move(d));
    }

    auto& cot = result.cot;
    cot.steps.push_back(plan_step(tables));
    for (auto& d : kept) {
        CotStep step;
        step.index = static_cast<int>(cot.steps.size()) + 1;
        step.title = std::move(d.title);
        step.prose = std::move(d.prose);
        step.sql = std::move(d.sql);
        cot.steps.push_back(std::move(step));
    }
    CotStep last;
    last.index = static_cast<int>(cot.steps.size()) + 1;
    last.title = "Write the final query";
    last.sql = gold;
    cot.steps.push_back(std::move(last));
    cot.trailer = "This query answers the question.";
    return result;
}

// ---- offline teacher

TeacherPolicy shares_keyword_policy(std::string keyword, const KeywordVocabulary& vocab) {
    keyword = text::to_upper(keyword);
    return [keyword, &vocab](const TrainInstance&, std::span<const std::string> exemplars, const DecodingParams&) {
        return std::any_of(exemplars.begin(), exemplars.end(), [&](const std::string& sql) {
            const auto scan = tokenize_keywords(sql, vocab);
            return std::find(scan.keywords.begin(), scan.keywords.end(), keyword) != scan.keywords.end();
        });
    };
}

std::set<std::string> structural_features(std::string_view sql, const KeywordVocabulary& vocab) {
    std::set<std::string> features;
    const auto lexed = lex_sql(sql);
    for (std::size_t i = 0; i < lexed.tokens.size(); ++i) {
        const auto& t = lexed.tokens[i];
        if (t.kind != TokenKind::word || !vocab.contains(t.text)) continue;
        const auto w = text::to_upper(t.text);
        if (w == "JOIN") features.insert("JOIN");
        else if (w == "WHERE") features.insert("WHERE");
        else if (w == "GROUP") features.insert("GROUP");
        else if (w == "HAVING") features.insert("HAVING");
        else if (w == "ORDER") features.insert("ORDER");
        else if (w == "LIMIT") features.insert("LIMIT");
        else if (w == "DISTINCT") features.insert("DISTINCT");
        else if (w == "CASE") features.insert("CASE");
        else if (w == "LIKE") features.insert("LIKE");
        else if (w == "BETWEEN") features.insert("BETWEEN");
        else if (w == "WITH" && i == 0) features.insert("CTE");
        else if (w == "UNION" || w == "INTERSECT" || w == "EXCEPT") features.insert("COMPOUND");
        else if (w == "SELECT" && t.depth > 0) features.insert("SUBQUERY");
        else if (std::find(kAggregates.begin(), kAggregates.end(), w) != kAggregates.end()) {
            features.insert("AGGREGATE");
        }
    }
    return features;
}

TeacherPolicy feature_distance_policy(std::size_t max_new_features, std::set<std::string> hard,
                                      const KeywordVocabulary& vocab) {
    return [max_new_features, hard = std::move(hard), &vocab](const TrainInstance& target,
                                                              std::span<const std::string> exemplars,
                                                              const DecodingParams&) {
        const auto wanted = structural_features(target.gold_sql, vocab);
        for (const auto& f : wanted) {
            if (hard.count(f)) return false;
        }
        for (const auto& sql : exemplars) {
            const auto known = structural_features(sql, vocab);
            std::size_t missing = 0;
            for (const auto& f : wanted) missing += known.count(f) ? 0 : 1;
            if (missing <= max_new_features) return true;
        }
        return false;
    };
}

TeacherPolicy always_policy() {
    return [](const TrainInstance&, std::span<const std::string>, const DecodingParams&) { return true; };
}

ProceduralTeacher::ProceduralTeacher(const PipelineContext& context, TeacherPolicy policy)
    : context_(&context), policy_(std::move(policy)) {}

TeacherResponse ProceduralTeacher::complete(const TeacherRequest& request) {
    const auto* inst = context_->find(request.instance_id);
    if (!inst) throw TransportError("procedural teacher: unknown instance '" + request.instance_id + "'");
    TeacherResponse response;
    response.finish_reason = "stop";
    if (policy_(*inst, request.exemplar_sqls, request.decoding)) {
        const auto style =
            request.decoding.mode == Decoding::sampling ? ProceduralStyle::compact : ProceduralStyle::full;
        Executor executor(*context_->registry);
        response.completion = serialize_cot(procedural_rationalize(*inst, &executor, style).cot);
        return response;
    }
    CotRationale miss;
    miss.steps.push_back(plan_step(referenced_tables(lex_sql(inst->gold_sql).tokens)));
    CotStep last;
    last.index = 2;
    last.title = "Write the final query";
    last.sql = "SELECT * FROM (" + strip_trailing_semicolons(inst->gold_sql) + ") LIMIT 0";
    miss.steps.push_back(std::move(last));
    response.completion = serialize_cot(miss);
    return response;
}

// ---- review and triage

std::vector<ReviewDecision> parse_review_jsonl(std::string_view content) {
    std::vector<ReviewDecision> out;
    std::size_t n = 0;
    for (auto line : text::split_lines(content)) {
        ++n;
        if (text::trim(line).empty()) continue;
        try {
            const auto j = json::parse(line);
            ReviewDecision d;
            d.flag_id = j.at("flag_id").get<std::string>();
            d.disposition = disposition_from_string(j.at("disposition").get<std::string>());
            if (j.contains("corrected_gold_sql") && !j["corrected_gold_sql"].is_null()) {
                d.corrected_gold_sql = j["corrected_gold_sql"].get<std::string>();
            }
            out.push_back(std::move(d));
        } catch (const json::exception& e) {
            throw Error(Errc::parse, "review line " + std::to_string(n) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(Errc::parse, "review line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

std::vector<ReviewDecision> load_review_file(const std::string& path) {
    return parse_review_jsonl(text::read_file(path));
}

std::size_t TriageResult::count(Disposition d) const {
    return static_cast<std::size_t>(
        std::count_if(audit.begin(), audit.end(), [d](const TriageEntry& e) { return e.disposition == d; }));
}

std::string triage_audit_json(const TriageResult& result) {
    ojson doc;
    ojson counts = ojson::object();
    for (auto d : {Disposition::unreviewed, Disposition::gold_wrong, Disposition::generation_wrong}) {
        counts[std::string(to_string(d))] = result.count(d);
    }
    doc["counts"] = counts;
    doc["excluded"] = result.excluded;
    doc["pending"] = result.pending;
    doc["entries"] = ojson::array();
    for (const auto& e : result.audit) {
        doc["entries"].push_back({{"flag_id", e.flag_id},
                                  {"instance_id", e.instance_id},
                                  {"disposition", std::string(to_string(e.disposition))},
                                  {"action", e.action}});
    }
    return doc.dump(2, ' ', false, json::error_handler_t::replace);
}

TriageResult triage_inconsistencies(std::span<const TrainInstance> corpus, std::span<const InconsistencyFlag> flags,
                                    std::span<const ReviewDecision> decisions) {
    std::map<std::string, const InconsistencyFlag*> by_id;
    for (const auto& f : flags) by_id.emplace(f.flag_id, &f);
    std::map<std::string, const ReviewDecision*> decided;
    for (const auto& d : decisions) {
        if (!by_id.count(d.flag_id)) throw Error(Errc::invalid_input, "review names unknown flag id '" + d.flag_id + "'");
        decided[d.flag_id] = &d;
    }

    std::set<std::string> excluded;
    std::set<std::string> pending;
    std::map<std::string, std::string> corrections;
    TriageResult result;
    for (const auto& f : flags) {
        TriageEntry entry{f.flag_id, f.instance_id, f.disposition, "awaiting_review"};
        if (auto it = decided.find(f.flag_id); it != decided.end()) entry.disposition = it->second->disposition;
        const ReviewDecision* d = decided.count(f.flag_id) ? decided[f.flag_id] : nullptr;
        switch (entry.disposition) {
            case Disposition::gold_wrong:
                if (d && d->corrected_gold_sql && !text::trim(*d->corrected_gold_sql).empty()) {
                    corrections[f.instance_id] = std::string(text::trim(*d->corrected_gold_sql));
                    pending.insert(f.instance_id);
                    entry.action = "gold_replaced";
                } else {
                    excluded.insert(f.instance_id);
                    entry.action = "excluded";
                }
                break;
            case Disposition::generation_wrong:
                pending.insert(f.instance_id);
                entry.action = "returned_to_pending";
                break;
            case Disposition::unreviewed: break;
        }
        result.audit.push_back(std::move(entry));
    }

    for (const auto& inst : corpus) {
        if (excluded.count(inst.instance_id)) {
            result.excluded.push_back(inst.instance_id);
            continue;
        }
        TrainInstance copy = inst;
        if (auto it = corrections.find(inst.instance_id); it != corrections.end()) copy.gold_sql = it->second;
        if (pending.count(inst.instance_id)) result.pending.push_back(inst.instance_id);
        result.corpus.push_back(std::move(copy));
    }
    return result;
}

}  // namespace sqlcot
