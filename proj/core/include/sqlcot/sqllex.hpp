#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sqlcot {

enum class TokenKind {
    word,          // bare identifier or keyword
    number,
    string,        // '...' literal, including X'..' blobs
    quoted_name,   // "..." `...` [...]
    parameter,     // ? :name @name $name
    lparen,
    rparen,
    comma,
    semicolon,
    op,            // any other punctuation
};

struct Token {
    TokenKind kind;
    std::string_view text;   // view into the lexed source
    std::size_t offset = 0;  // byte offset of text in the source
    int depth = 0;           // parenthesis depth at the token (a '(' carries the outer depth)
};

struct LexResult {
    std::vector<Token> tokens;
    std::vector<std::string> warnings;
};

// Splits SQL into tokens. Comments and whitespace are skipped. Never throws;
// unterminated literals and comments run to end of input with a warning.
LexResult lex_sql(std::string_view sql);

// Ordered, duplicate-free list of uppercase keywords. Positions define the
// dimensions of SqlVector.
class KeywordVocabulary {
public:
    KeywordVocabulary(std::vector<std::string> keywords, std::string version);

    // Parses the vocabulary file format: one keyword per line, '#' comments,
    // and an optional "# version: <tag>" line. Without a version line the tag
    // is derived from the content hash.
    static KeywordVocabulary parse(std::string_view content);
    static KeywordVocabulary load(const std::string& path);
    // The vocabulary file bundled with the library.
    static const KeywordVocabulary& builtin();

    const std::string& version() const noexcept { return version_; }
    const std::vector<std::string>& keywords() const noexcept { return keywords_; }
    std::size_t size() const noexcept { return keywords_.size(); }

    // Case-insensitive membership test; returns the dimension or -1.
    int index_of(std::string_view word) const;
    bool contains(std::string_view word) const { return index_of(word) >= 0; }

private:
    std::vector<std::string> keywords_;
    std::string version_;
    std::unordered_map<std::string, int> index_;
};

struct KeywordScan {
    std::vector<std::string> keywords;  // uppercase, in source order
    std::vector<std::string> warnings;
};

KeywordScan tokenize_keywords(std::string_view sql, const KeywordVocabulary& vocab);

// Sparse keyword -> count map tagged with the vocabulary version.
struct SqlVector {
    std::map<std::string, long> counts;
    std::string vocabulary;

    bool empty() const noexcept { return counts.empty(); }
    long count(const std::string& keyword) const {
        auto it = counts.find(keyword);
        return it == counts.end() ? 0 : it->second;
    }
    long long dot(const SqlVector& other) const;
    long long squared_norm() const { return dot(*this); }

    friend bool operator==(const SqlVector&, const SqlVector&) = default;
};

SqlVector vectorize(std::string_view sql, const KeywordVocabulary& vocab);

// Cosine of two count vectors. 0.0 when either is the zero vector, exactly
// 1.0 iff the vectors are positive multiples of each other. Throws
// Errc::vocabulary_mismatch when the vocabulary tags differ.
double cosine(const SqlVector& a, const SqlVector& b);

// True when the outermost query has an ORDER BY (an ORDER word at depth 0).
bool has_top_level_order_by(std::string_view sql);

}  // namespace sqlcot
