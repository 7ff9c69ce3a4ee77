#include "sqlcot/sqllex.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "sqlcot/error.hpp"
#include "sqlcot/hash.hpp"
#include "sqlcot/text.hpp"

namespace sqlcot {

__extension__ using i128 = __int128;

namespace detail {
extern const char* const kBuiltinVocabulary;
}

namespace {

bool is_word_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool is_word_char(unsigned char c) { return std::isalnum(c) || c == '_' || c == '$' || c >= 0x80; }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }

class Lexer {
public:
    explicit Lexer(std::string_view sql) : sql_(sql) {}

    LexResult run() {
        while (pos_ < sql_.size()) {
            const unsigned char c = at(pos_);
            if (std::isspace(c)) {
                ++pos_;
            } else if (c == '-' && at(pos_ + 1) == '-') {
                const auto end = sql_.find('\n', pos_);
                pos_ = end == std::string_view::npos ? sql_.size() : end + 1;
            } else if (c == '/' && at(pos_ + 1) == '*') {
                const auto end = sql_.find("*/", pos_ + 2);
                if (end == std::string_view::npos) {
                    warn("unterminated block comment");
                    pos_ = sql_.size();
                } else {
                    pos_ = end + 2;
                }
            } else if (c == '\'') {
                quoted(TokenKind::string, pos_, '\'', true);
            } else if ((c == 'x' || c == 'X') && at(pos_ + 1) == '\'') {
                const std::size_t start = pos_++;
                quoted(TokenKind::string, start, '\'', true);
            } else if (c == '"' || c == '`') {
                quoted(TokenKind::quoted_name, pos_, static_cast<char>(c), true);
            } else if (c == '[') {
                quoted(TokenKind::quoted_name, pos_, ']', false);
            } else if (is_digit(c) || (c == '.' && is_digit(at(pos_ + 1)))) {
                number();
            } else if (is_word_start(c)) {
                const std::size_t start = pos_;
                while (pos_ < sql_.size() && is_word_char(at(pos_))) ++pos_;
                emit(TokenKind::word, start);
            } else if (c == '?') {
                const std::size_t start = pos_++;
                while (pos_ < sql_.size() && is_digit(at(pos_))) ++pos_;
                emit(TokenKind::parameter, start);
            } else if ((c == ':' || c == '@' || c == '$') && is_word_char(at(pos_ + 1))) {
                const std::size_t start = pos_++;
                while (pos_ < sql_.size() && is_word_char(at(pos_))) ++pos_;
                emit(TokenKind::parameter, start);
            } else if (c == '(') {
                emit_single(TokenKind::lparen);
                ++depth_;
            } else if (c == ')') {
                if (depth_ > 0) --depth_;
                emit_single(TokenKind::rparen);
            } else if (c == ',') {
                emit_single(TokenKind::comma);
            } else if (c == ';') {
                emit_single(TokenKind::semicolon);
            } else {
                operator_token();
            }
        }
        return std::move(result_);
    }

private:
    unsigned char at(std::size_t i) const { return i < sql_.size() ? static_cast<unsigned char>(sql_[i]) : '\0'; }

    void warn(std::string message) {
        result_.warnings.push_back(std::move(message) + " at offset " + std::to_string(pos_));
    }

    void emit(TokenKind kind, std::size_t start) {
        result_.tokens.push_back(Token{kind, sql_.substr(start, pos_ - start), start, depth_});
    }

    void emit_single(TokenKind kind) {
        const std::size_t start = pos_++;
        emit(kind, start);
    }

    // pos_ sits on the opening quote; `start` is where the token begins.
    void quoted(TokenKind kind, std::size_t start, char close, bool doubled_escape) {
        ++pos_;
        for (;;) {
            const auto end = sql_.find(close, pos_);
            if (end == std::string_view::npos) {
                warn(kind == TokenKind::string ? "unterminated string literal" : "unterminated quoted identifier");
                pos_ = sql_.size();
                break;
            }
            pos_ = end + 1;
            if (doubled_escape && at(pos_) == static_cast<unsigned char>(close)) {
                ++pos_;
                continue;
            }
            break;
        }
        emit(kind, start);
    }

    void number() {
        const std::size_t start = pos_;
        if (at(pos_) == '0' && (at(pos_ + 1) == 'x' || at(pos_ + 1) == 'X')) {
            pos_ += 2;
            while (std::isxdigit(at(pos_))) ++pos_;
        } else {
            while (is_digit(at(pos_))) ++pos_;
            if (at(pos_) == '.') {
                ++pos_;
                while (is_digit(at(pos_))) ++pos_;
            }
            if ((at(pos_) == 'e' || at(pos_) == 'E') &&
                (is_digit(at(pos_ + 1)) || ((at(pos_ + 1) == '+' || at(pos_ + 1) == '-') && is_digit(at(pos_ + 2))))) {
                pos_ += 2;
                while (is_digit(at(pos_))) ++pos_;
            }
        }
        // Trailing identifier characters belong to the (invalid) number.
        while (is_word_char(at(pos_))) ++pos_;
        emit(TokenKind::number, start);
    }

    void operator_token() {
        static constexpr std::string_view kTwoChar[] = {"<=", ">=", "<>", "!=", "==", "||", "<<", ">>", "->"};
        const std::size_t start = pos_;
        for (auto op : kTwoChar) {
            if (sql_.substr(pos_, 2) == op) {
                pos_ += 2;
                if (op == "->" && at(pos_) == '>') ++pos_;
                emit(TokenKind::op, start);
                return;
            }
        }
        ++pos_;
        emit(TokenKind::op, start);
    }

    std::string_view sql_;
    std::size_t pos_ = 0;
    int depth_ = 0;
    LexResult result_;
};

}  // namespace

LexResult lex_sql(std::string_view sql) { return Lexer(sql).run(); }

KeywordVocabulary::KeywordVocabulary(std::vector<std::string> keywords, std::string version)
    : keywords_(std::move(keywords)), version_(std::move(version)) {
    for (std::size_t i = 0; i < keywords_.size(); ++i) {
        auto& kw = keywords_[i];
        kw = text::to_upper(kw);
        if (kw.empty() || !is_word_start(static_cast<unsigned char>(kw[0]))) {
            throw Error(Errc::parse, "invalid keyword '" + kw + "'");
        }
        for (unsigned char c : kw) {
            if (!is_word_char(c)) throw Error(Errc::parse, "invalid keyword '" + kw + "'");
        }
        if (!index_.emplace(kw, static_cast<int>(i)).second) {
            throw Error(Errc::parse, "duplicate keyword '" + kw + "'");
        }
    }
    if (version_.empty()) throw Error(Errc::parse, "vocabulary version must not be empty");
}

KeywordVocabulary KeywordVocabulary::parse(std::string_view content) {
    std::vector<std::string> keywords;
    std::string version;
    for (auto raw : text::split_lines(content)) {
        const auto line = text::trim(raw);
        if (line.empty()) continue;
        if (line.front() == '#') {
            const auto comment = text::trim(line.substr(1));
            constexpr std::string_view kTag = "version:";
            if (version.empty() && comment.substr(0, kTag.size()) == kTag) {
                version = std::string(text::trim(comment.substr(kTag.size())));
            }
            continue;
        }
        keywords.emplace_back(line);
    }
    if (version.empty()) version = "sha256:" + sha256_hex(content).substr(0, 16);
    return KeywordVocabulary(std::move(keywords), std::move(version));
}

KeywordVocabulary KeywordVocabulary::load(const std::string& path) { return parse(text::read_file(path)); }

const KeywordVocabulary& KeywordVocabulary::builtin() {
    static const KeywordVocabulary vocab = parse(detail::kBuiltinVocabulary);
    return vocab;
}

int KeywordVocabulary::index_of(std::string_view word) const {
    auto it = index_.find(text::to_upper(word));
    return it == index_.end() ? -1 : it->second;
}

KeywordScan tokenize_keywords(std::string_view sql, const KeywordVocabulary& vocab) {
    auto lexed = lex_sql(sql);
    KeywordScan scan;
    scan.warnings = std::move(lexed.warnings);
    for (const auto& tok : lexed.tokens) {
        if (tok.kind != TokenKind::word) continue;
        const int idx = vocab.index_of(tok.text);
        if (idx >= 0) scan.keywords.push_back(vocab.keywords()[static_cast<std::size_t>(idx)]);
    }
    return scan;
}

long long SqlVector::dot(const SqlVector& other) const {
    const auto& small = counts.size() <= other.counts.size() ? counts : other.counts;
    const auto& large = counts.size() <= other.counts.size() ? other.counts : counts;
    long long sum = 0;
    for (const auto& [kw, n] : small) {
        auto it = large.find(kw);
        if (it != large.end()) sum += static_cast<long long>(n) * it->second;
    }
    return sum;
}

SqlVector vectorize(std::string_view sql, const KeywordVocabulary& vocab) {
    SqlVector v;
    v.vocabulary = vocab.version();
    for (auto& kw : tokenize_keywords(sql, vocab).keywords) ++v.counts[kw];
    return v;
}

double cosine(const SqlVector& a, const SqlVector& b) {
    if (a.vocabulary != b.vocabulary) {
        throw Error(Errc::vocabulary_mismatch,
                    "vocabulary mismatch: '" + a.vocabulary + "' vs '" + b.vocabulary + "'");
    }
    const long long na = a.squared_norm();
    const long long nb = b.squared_norm();
    if (na == 0 || nb == 0) return 0.0;
    const long long d = a.dot(b);
    const auto dd = static_cast<i128>(d) * d;
    const auto nn = static_cast<i128>(na) * nb;
    if (dd == nn) return 1.0;  // Cauchy-Schwarz equality: positive multiples
    const double value = static_cast<double>(d) / std::sqrt(static_cast<double>(na) * static_cast<double>(nb));
    return std::min(value, std::nextafter(1.0, 0.0));
}

bool has_top_level_order_by(std::string_view sql) {
    const auto lexed = lex_sql(sql);
    const auto& toks = lexed.tokens;
    for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
        if (toks[i].kind == TokenKind::word && toks[i].depth == 0 && text::iequals(toks[i].text, "ORDER") &&
            toks[i + 1].kind == TokenKind::word && text::iequals(toks[i + 1].text, "BY")) {
            return true;
        }
    }
    return false;
}

}  // namespace sqlcot
