#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "sqlcot/error.hpp"
#include "sqlcot/repository.hpp"

namespace sqlcot {

struct DecodingParams {
    Decoding mode = Decoding::greedy;
    double temperature = 0.0;
    std::optional<std::uint64_t> seed;
    friend bool operator==(const DecodingParams&, const DecodingParams&) = default;
};

struct TeacherRequest {
    std::string model;
    std::string prompt;
    DecodingParams decoding;

    // Routing metadata. Never sent over the wire; offline clients use it to
    // look up the target instance and the exemplars placed in the prompt.
    std::string instance_id;
    std::vector<std::string> exemplar_sqls;
};

struct TokenUsage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

struct TeacherResponse {
    std::string completion;
    std::string finish_reason;
    std::optional<TokenUsage> usage;
};

// Failures reaching the model. Retried by the callers.
class TransportError : public Error {
public:
    explicit TransportError(const std::string& message) : Error(Errc::transport, message) {}
};

// Model client. Implementations must be safe to call from several threads.
class TeacherClient {
public:
    virtual ~TeacherClient() = default;
    virtual TeacherResponse complete(const TeacherRequest& request) = 0;
};

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
};

// Calls client.complete, retrying TransportError with exponential backoff.
// Throws the last TransportError once attempts are exhausted. An empty
// completion counts as a transport failure.
TeacherResponse complete_with_retry(TeacherClient& client, const TeacherRequest& request, const RetryPolicy& policy);

// OpenAI-style chat completions endpoint.
struct HttpTeacherSettings {
    std::string endpoint;  // full URL, e.g. http://host:8000/v1/chat/completions
    std::string api_key;   // sent as a Bearer token when non-empty
    std::chrono::seconds timeout{120};

    // Reads <PREFIX>_URL and <PREFIX>_API_KEY. Throws Errc::precondition when
    // the URL variable is unset.
    static HttpTeacherSettings from_environment(const std::string& prefix);
};

class HttpTeacherClient : public TeacherClient {
public:
    explicit HttpTeacherClient(HttpTeacherSettings settings);
    TeacherResponse complete(const TeacherRequest& request) override;

private:
    HttpTeacherSettings settings_;
};

// Request body sent by HttpTeacherClient: {model, messages, temperature, seed?}.
std::string chat_request_json(const TeacherRequest& request);
// Parses choices[0].message.content, finish_reason and usage.
TeacherResponse parse_chat_response(std::string_view body);

// Transcript key: sha256 over model, decoding and prompt.
std::string transcript_key(const TeacherRequest& request);

// Wraps a client and appends one JSONL line per call to a transcript file.
class RecordingTeacherClient : public TeacherClient {
public:
    RecordingTeacherClient(TeacherClient& inner, std::string transcript_path);
    TeacherResponse complete(const TeacherRequest& request) override;

private:
    TeacherClient* inner_;
    std::string path_;
    std::mutex mutex_;
};

// Answers from a transcript written by RecordingTeacherClient. Unknown
// requests raise TransportError.
class ReplayTeacherClient : public TeacherClient {
public:
    explicit ReplayTeacherClient(const std::string& transcript_path);
    TeacherResponse complete(const TeacherRequest& request) override;
    std::size_t size() const noexcept { return responses_.size(); }

private:
    std::map<std::string, TeacherResponse> responses_;
};

}  // namespace sqlcot
