#pragma once

#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "cda/llmclient.hpp"
#include "cda/metrics.hpp"

namespace cda {

namespace detail {

// "https://api.example.com/v1" -> ("https://api.example.com", "/v1")
inline std::pair<std::string, std::string> split_endpoint(const std::string& url) {
    const auto scheme_end = url.find("://");
    const size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = url.find('/', host_start);
    if (path_start == std::string::npos) return {url, ""};
    std::string prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, path_start), prefix};
}

}  // namespace detail

// Raw OpenAI-compatible chat-completions exchange. Retries, throttling and
// caching are layered on by make_chat_client.
class HttpChatClient : public ChatClient {
   public:
    explicit HttpChatClient(ClientConfig config) : config_(std::move(config)) {
        const auto [base, prefix] = detail::split_endpoint(config_.endpoint_url);
        base_url_ = base;
        path_prefix_ = prefix;
    }

    std::string complete(const ChatRequest& request) override {
        validate_request(request);
        httplib::Client cli(base_url_);
        cli.set_connection_timeout(std::chrono::duration<double>(config_.request_timeout_s));
        cli.set_read_timeout(std::chrono::duration<double>(config_.request_timeout_s));
        httplib::Headers headers;
        if (const char* key = std::getenv(config_.api_key_env.c_str());
            key != nullptr && *key != '\0')
            headers.emplace("Authorization", std::string("Bearer ") + key);

        const std::string body = request_to_json(request).dump();
        auto res = cli.Post(path_prefix_ + "/chat/completions", headers, body,
                            "application/json");
        if (!res) throw Timeout("no response from " + base_url_ + ": " +
                                httplib::to_string(res.error()));
        if (res->status == 401 || res->status == 403)
            throw AuthError("authentication failed (" + std::to_string(res->status) + ")");
        if (res->status == 429) throw RateLimited("rate limited (429)");
        if (res->status >= 500)
            throw ServerError("server error (" + std::to_string(res->status) + ")");
        if (res->status != 200)
            throw ProtocolError("unexpected status " + std::to_string(res->status) + ": " +
                                res->body.substr(0, 200));
        try {
            const auto j = nlohmann::json::parse(res->body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError(std::string("malformed completion response: ") + e.what());
        }
    }

   private:
    ClientConfig config_;
    std::string base_url_;
    std::string path_prefix_;
};

// Full production stack: cache(retry(throttle(http))). A warm cache makes
// runs byte-deterministic with zero network I/O.
inline std::shared_ptr<ChatClient> make_chat_client(const ClientConfig& config) {
    std::shared_ptr<ChatClient> client = std::make_shared<HttpChatClient>(config);
    client = std::make_shared<ThrottledClient>(std::move(client), config.max_concurrent);
    client = std::make_shared<RetryingClient>(std::move(client), config.max_retries,
                                              config.backoff_base_s);
    if (config.cache_path)
        client = std::make_shared<CachingClient>(std::move(client), *config.cache_path);
    return client;
}

// External similarity service: POST {url}/similarity {"a":…,"b":…} ->
// {"score": s}.
class HttpSimilarityScorer : public SimilarityScorer {
   public:
    explicit HttpSimilarityScorer(const std::string& url, double timeout_s = 30.0)
        : timeout_s_(timeout_s) {
        const auto [base, prefix] = detail::split_endpoint(url);
        base_url_ = base;
        path_prefix_ = prefix;
    }

    double score(std::string_view a, std::string_view b, std::string_view) const override {
        httplib::Client cli(base_url_);
        cli.set_connection_timeout(std::chrono::duration<double>(timeout_s_));
        cli.set_read_timeout(std::chrono::duration<double>(timeout_s_));
        const std::string body =
            nlohmann::json{{"a", std::string(a)}, {"b", std::string(b)}}.dump();
        auto res = cli.Post(path_prefix_ + "/similarity", body, "application/json");
        if (!res || res->status != 200)
            throw ScorerUnavailable("similarity service unavailable at " + base_url_);
        try {
            return nlohmann::json::parse(res->body).at("score").get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw ScorerUnavailable(std::string("malformed similarity response: ") + e.what());
        }
    }

   private:
    std::string base_url_;
    std::string path_prefix_;
    double timeout_s_;
};

}  // namespace cda
