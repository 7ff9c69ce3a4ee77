#include "sqlcot/teacher.hpp"

#include "httplib.h"

#include <cstdlib>
#include <fstream>
#include <thread>

#include "json.hpp"
#include "sqlcot/hash.hpp"
#include "sqlcot/text.hpp"

namespace sqlcot {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

TeacherResponse complete_with_retry(TeacherClient& client, const TeacherRequest& request, const RetryPolicy& policy) {
    const int attempts = std::max(policy.attempts, 1);
    auto backoff = policy.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        try {
            auto response = client.complete(request);
            if (response.completion.empty()) throw TransportError("empty completion");
            return response;
        } catch (const TransportError&) {
            if (attempt >= attempts) throw;
        }
        if (backoff.count() > 0) std::this_thread::sleep_for(backoff);
        backoff *= 2;
    }
}

HttpTeacherSettings HttpTeacherSettings::from_environment(const std::string& prefix) {
    HttpTeacherSettings s;
    const std::string url_var = prefix + "_URL";
    const char* url = std::getenv(url_var.c_str());
    if (!url || !*url) throw Error(Errc::precondition, "environment variable " + url_var + " is not set");
    s.endpoint = url;
    const std::string key_var = prefix + "_API_KEY";
    if (const char* key = std::getenv(key_var.c_str())) s.api_key = key;
    return s;
}

HttpTeacherClient::HttpTeacherClient(HttpTeacherSettings settings) : settings_(std::move(settings)) {
    if (settings_.endpoint.find("://") == std::string::npos) {
        throw Error(Errc::invalid_input, "endpoint must be an absolute URL: " + settings_.endpoint);
    }
}

std::string chat_request_json(const TeacherRequest& request) {
    ojson body;
    body["model"] = request.model;
    body["messages"] = ojson::array({ojson{{"role", "user"}, {"content", request.prompt}}});
    body["temperature"] = request.decoding.temperature;
    if (request.decoding.seed) body["seed"] = *request.decoding.seed;
    return body.dump(-1, ' ', false, json::error_handler_t::replace);
}

TeacherResponse parse_chat_response(std::string_view body) {
    try {
        const auto doc = json::parse(body);
        const auto& choice = doc.at("choices").at(0);
        TeacherResponse r;
        const auto& content = choice.at("message").at("content");
        r.completion = content.is_null() ? std::string() : content.get<std::string>();
        if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
            r.finish_reason = choice["finish_reason"].get<std::string>();
        }
        if (doc.contains("usage") && doc["usage"].is_object()) {
            const auto& u = doc["usage"];
            r.usage = TokenUsage{u.value("prompt_tokens", std::int64_t{0}), u.value("completion_tokens", std::int64_t{0})};
        }
        return r;
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed chat completion response: ") + e.what());
    }
}

TeacherResponse HttpTeacherClient::complete(const TeacherRequest& request) {
    const auto& url = settings_.endpoint;
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    client.set_connection_timeout(settings_.timeout);
    client.set_read_timeout(settings_.timeout);
    client.set_write_timeout(settings_.timeout);
    httplib::Headers headers;
    if (!settings_.api_key.empty()) headers.emplace("Authorization", "Bearer " + settings_.api_key);

    auto result = client.Post(path, headers, chat_request_json(request), "application/json");
    if (!result) throw TransportError("POST " + url + " failed: " + httplib::to_string(result.error()));
    if (result->status != 200) {
        throw TransportError("POST " + url + " returned HTTP " + std::to_string(result->status) + ": " +
                             result->body.substr(0, 200));
    }
    return parse_chat_response(result->body);
}

std::string transcript_key(const TeacherRequest& request) {
    char temperature[32];
    std::snprintf(temperature, sizeof temperature, "%.6g", request.decoding.temperature);
    std::string material = request.model + '\n' + std::string(to_string(request.decoding.mode)) + '\n' +
                           temperature + '\n' +
                           (request.decoding.seed ? std::to_string(*request.decoding.seed) : std::string("-")) +
                           '\n' + request.prompt;
    return sha256_hex(material);
}

RecordingTeacherClient::RecordingTeacherClient(TeacherClient& inner, std::string transcript_path)
    : inner_(&inner), path_(std::move(transcript_path)) {}

TeacherResponse RecordingTeacherClient::complete(const TeacherRequest& request) {
    auto response = inner_->complete(request);
    ojson line;
    line["key"] = transcript_key(request);
    line["instance_id"] = request.instance_id;
    line["model"] = request.model;
    line["decoding"] = {{"mode", std::string(to_string(request.decoding.mode))},
                        {"temperature", request.decoding.temperature}};
    if (request.decoding.seed) line["decoding"]["seed"] = *request.decoding.seed;
    line["prompt"] = request.prompt;
    line["response"] = {{"completion", response.completion}, {"finish_reason", response.finish_reason}};
    if (response.usage) {
        line["response"]["usage"] = {{"prompt_tokens", response.usage->prompt_tokens},
                                     {"completion_tokens", response.usage->completion_tokens}};
    }
    std::lock_guard lock(mutex_);
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw Error(Errc::io, "cannot append to transcript " + path_);
    out << line.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    return response;
}

ReplayTeacherClient::ReplayTeacherClient(const std::string& transcript_path) {
    const auto content = text::read_file(transcript_path);
    std::size_t line_no = 0;
    for (auto line : text::split_lines(content)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            const auto doc = json::parse(line);
            TeacherResponse r;
            const auto& resp = doc.at("response");
            r.completion = resp.at("completion").get<std::string>();
            r.finish_reason = resp.value("finish_reason", std::string());
            if (resp.contains("usage")) {
                r.usage = TokenUsage{resp["usage"].value("prompt_tokens", std::int64_t{0}),
                                     resp["usage"].value("completion_tokens", std::int64_t{0})};
            }
            responses_.insert_or_assign(doc.at("key").get<std::string>(), std::move(r));
        } catch (const json::exception& e) {
            throw Error(Errc::parse, transcript_path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

TeacherResponse ReplayTeacherClient::complete(const TeacherRequest& request) {
    auto it = responses_.find(transcript_key(request));
    if (it == responses_.end()) {
        throw TransportError("no recorded response for instance '" + request.instance_id + "'");
    }
    return it->second;
}

}  // namespace sqlcot
