#pragma once

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ragrec/gateway.hpp"

namespace ragrec {

struct HttpBackendConfig {
    std::string base_url;                        // e.g. "https://api.openai.com"
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key_env = "OPENAI_API_KEY";  // key is read from the environment, never from files
    double temperature = 0.0;
    double timeout_ms = 30000.0;
    std::string transcript_path;                 // optional JSONL request/response log
};

// Chat-completions client over the de-facto JSON wire format. Thread-safe;
// one httplib client per instance guarded by a mutex (practical request
// concurrency comes from the runner's worker pool owning several trials in
// flight across retries).
class HttpChatBackend final : public ChatBackend {
public:
    explicit HttpChatBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.base_url.empty()) throw ConfigError("live backend requires a base URL");
        if (cfg_.model.empty()) throw ConfigError("live backend requires a model name");
        const char* key = std::getenv(cfg_.api_key_env.c_str());
        api_key_ = key ? key : "";
        if (api_key_.empty()) {
            throw ConfigError("live backend: environment variable " + cfg_.api_key_env + " is not set");
        }
    }

    BackendReply complete(const RenderedPrompt& prompt) override {
        nlohmann::json request = {
            {"model", cfg_.model},
            {"messages", nlohmann::json::array({nlohmann::json{{"role", "user"}, {"content", prompt.text}}})},
            {"temperature", cfg_.temperature},
        };
        const std::string body = request.dump();

        httplib::Client client(cfg_.base_url);
        const auto timeout = std::chrono::milliseconds(static_cast<long long>(cfg_.timeout_ms));
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};

        auto res = client.Post(cfg_.path, headers, body, "application/json");
        if (!res) {
            const auto err = httplib::to_string(res.error());
            log_transcript(request, nlohmann::json{{"transport_error", err}}, 0);
            if (res.error() == httplib::Error::ConnectionTimeout || res.error() == httplib::Error::Read ||
                res.error() == httplib::Error::Write) {
                throw GatewayError(GatewayErrorKind::timeout, err);
            }
            throw GatewayError(GatewayErrorKind::transport, err);
        }
        if (res->status != 200) {
            log_transcript(request, nlohmann::json{{"status", res->status}, {"body", res->body}}, res->status);
            throw GatewayError(classify_http_status(res->status),
                               "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
        }

        nlohmann::json response = nlohmann::json::parse(res->body, nullptr, false);
        if (response.is_discarded() || !response.contains("choices") || response["choices"].empty() ||
            !response["choices"][0].contains("message")) {
            log_transcript(request, nlohmann::json{{"unparseable_body", res->body.substr(0, 500)}}, res->status);
            throw GatewayError(GatewayErrorKind::malformed_response, "response body is not a chat completion");
        }
        log_transcript(request, response, res->status);

        BackendReply reply;
        reply.text = response["choices"][0]["message"].value("content", "");
        if (response.contains("usage")) {
            const auto& usage = response["usage"];
            if (usage.contains("prompt_tokens")) reply.prompt_tokens = usage["prompt_tokens"].get<long>();
            if (usage.contains("completion_tokens")) {
                reply.completion_tokens = usage["completion_tokens"].get<long>();
            }
        }
        return reply;
    }

    std::string id() const override { return "live:" + cfg_.model; }

private:
    void log_transcript(const nlohmann::json& request, const nlohmann::json& response, int status) {
        if (cfg_.transcript_path.empty()) return;
        std::lock_guard<std::mutex> lock(transcript_mutex_);
        std::ofstream out(cfg_.transcript_path, std::ios::app | std::ios::binary);
        out << nlohmann::json{{"request", request}, {"response", response}, {"status", status}}.dump() << '\n';
    }

    HttpBackendConfig cfg_;
    std::string api_key_;
    std::mutex transcript_mutex_;
};

}  // namespace ragrec
