#pragma once

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cda/common.hpp"

namespace cda {

struct ClientError : Error {
    using Error::Error;
    virtual bool retryable() const { return false; }
};

struct AuthError : ClientError {
    using ClientError::ClientError;
};

struct RateLimited : ClientError {
    using ClientError::ClientError;
    bool retryable() const override { return true; }
};

struct Timeout : ClientError {
    using ClientError::ClientError;
    bool retryable() const override { return true; }
};

struct ServerError : ClientError {
    using ClientError::ClientError;
    bool retryable() const override { return true; }
};

struct ProtocolError : ClientError {
    using ClientError::ClientError;
};

struct UnscriptedRequest : ClientError {
    using ClientError::ClientError;
};

struct ChatMessage {
    std::string role;  // system | user | assistant
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 256;

    bool operator==(const ChatRequest&) const = default;
};

inline void validate_request(const ChatRequest& req) {
    if (req.messages.empty()) throw PreconditionError("chat request has no messages");
    for (const auto& m : req.messages)
        if (m.role != "system" && m.role != "user" && m.role != "assistant")
            throw PreconditionError("unknown message role '" + m.role + "'");
    for (const auto& m : req.messages) {
        if (m.role == "system") continue;
        if (m.role != "user")
            throw PreconditionError("first non-system message must be a user message");
        break;
    }
    if (req.temperature < 0.0 || req.temperature > 2.0)
        throw PreconditionError("temperature out of [0,2]");
    if (req.max_tokens <= 0) throw PreconditionError("max_tokens must be positive");
}

inline nlohmann::json request_to_json(const ChatRequest& req) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : req.messages)
        messages.push_back({{"role", m.role}, {"content", m.content}});
    return nlohmann::json{{"model", req.model},
                          {"messages", messages},
                          {"temperature", req.temperature},
                          {"max_tokens", req.max_tokens}};
}

inline ChatRequest request_from_json(const nlohmann::json& j) {
    ChatRequest req;
    req.model = j.at("model").get<std::string>();
    for (const auto& m : j.at("messages"))
        req.messages.push_back(
            {m.at("role").get<std::string>(), m.at("content").get<std::string>()});
    req.temperature = j.at("temperature").get<double>();
    req.max_tokens = j.at("max_tokens").get<int>();
    return req;
}

// Content hash over (model, messages, temperature, max_tokens); nlohmann
// object dumps are key-sorted, so textually identical requests share a key.
inline std::string request_cache_key(const ChatRequest& req) {
    return fnv1a64_hex(request_to_json(req).dump());
}

struct ClientConfig {
    std::string endpoint_url = "https://api.openai.com/v1";
    std::string model = "gpt-3.5-turbo";
    std::string api_key_env = "CDA_API_KEY";
    double request_timeout_s = 60.0;
    int max_retries = 3;
    double backoff_base_s = 1.0;
    int max_concurrent = 4;
    std::optional<std::string> cache_path;
};

class ChatClient {
   public:
    virtual ~ChatClient() = default;
    // Returns the assistant message content.
    virtual std::string complete(const ChatRequest& request) = 0;
};

// Deterministic scripted client for offline tests. Matches the last user
// message against scripted keys (exact first, then substring); a generic
// handler can take over instead. Strict mode rejects anything unscripted.
class MockChatClient : public ChatClient {
   public:
    using Handler = std::function<std::optional<std::string>(const ChatRequest&)>;

    explicit MockChatClient(bool strict = true) : strict_(strict) {}

    void script(std::string key, std::string response) {
        std::lock_guard<std::mutex> lock(mu_);
        scripted_[std::move(key)] = std::move(response);
    }

    void set_handler(Handler h) {
        std::lock_guard<std::mutex> lock(mu_);
        handler_ = std::move(h);
    }

    void set_default_response(std::string r) {
        std::lock_guard<std::mutex> lock(mu_);
        default_response_ = std::move(r);
        strict_ = false;
    }

    std::string complete(const ChatRequest& request) override {
        validate_request(request);
        Handler handler;
        {
            std::lock_guard<std::mutex> lock(mu_);
            requests_.push_back(request);
            handler = handler_;
        }
        if (handler) {
            if (auto r = handler(request)) return *r;
        }
        const std::string last_user = last_user_content(request);
        {
            std::lock_guard<std::mutex> lock(mu_);
            if (auto it = scripted_.find(last_user); it != scripted_.end()) return it->second;
            for (const auto& [key, response] : scripted_)
                if (last_user.find(key) != std::string::npos) return response;
            if (!strict_) return default_response_;
        }
        throw UnscriptedRequest("no scripted response for request: " +
                                last_user.substr(0, 120));
    }

    std::vector<ChatRequest> requests() const {
        std::lock_guard<std::mutex> lock(mu_);
        return requests_;
    }

    size_t request_count() const {
        std::lock_guard<std::mutex> lock(mu_);
        return requests_.size();
    }

    static std::string last_user_content(const ChatRequest& request) {
        for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it)
            if (it->role == "user") return it->content;
        return request.messages.back().content;
    }

   private:
    mutable std::mutex mu_;
    bool strict_;
    std::string default_response_;
    std::map<std::string, std::string> scripted_;
    Handler handler_;
    std::vector<ChatRequest> requests_;
};

// Bounds the number of requests in flight through the wrapped client.
class ThrottledClient : public ChatClient {
   public:
    ThrottledClient(std::shared_ptr<ChatClient> inner, int max_concurrent)
        : inner_(std::move(inner)), slots_(max_concurrent) {
        if (max_concurrent < 1) throw PreconditionError("max_concurrent must be >= 1");
    }

    std::string complete(const ChatRequest& request) override {
        acquire();
        try {
            std::string out = inner_->complete(request);
            release();
            return out;
        } catch (...) {
            release();
            throw;
        }
    }

   private:
    void acquire() {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [&] { return slots_ > 0; });
        --slots_;
    }

    void release() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            ++slots_;
        }
        cv_.notify_one();
    }

    std::shared_ptr<ChatClient> inner_;
    std::mutex mu_;
    std::condition_variable cv_;
    int slots_;
};

// Exponential backoff on retryable failures; max_retries re-attempts after
// the first try.
class RetryingClient : public ChatClient {
   public:
    RetryingClient(std::shared_ptr<ChatClient> inner, int max_retries, double backoff_base_s)
        : inner_(std::move(inner)), max_retries_(max_retries), backoff_base_s_(backoff_base_s) {
        if (max_retries < 0) throw PreconditionError("max_retries must be >= 0");
    }

    std::string complete(const ChatRequest& request) override {
        for (int attempt = 0;; ++attempt) {
            try {
                return inner_->complete(request);
            } catch (const ClientError& e) {
                if (!e.retryable() || attempt >= max_retries_) throw;
                const double delay = backoff_base_s_ * std::pow(2.0, attempt);
                if (delay > 0)
                    std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            }
        }
    }

   private:
    std::shared_ptr<ChatClient> inner_;
    int max_retries_;
    double backoff_base_s_;
};

// Append-only JSONL response cache keyed by request content hash. With a
// null inner client the cache is an offline replay source.
class CachingClient : public ChatClient {
   public:
    CachingClient(std::shared_ptr<ChatClient> inner, std::string cache_path)
        : inner_(std::move(inner)), path_(std::move(cache_path)) {
        std::ifstream in(path_, std::ios::binary);
        if (!in) return;  // cold cache
        std::string line;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (trim(line).empty()) continue;
            try {
                const auto j = nlohmann::json::parse(line);
                const std::string key = j.at("key_hash").get<std::string>();
                if (!entries_.count(key))
                    entries_[key] = {j.at("request"), j.at("response").get<std::string>()};
            } catch (const nlohmann::json::exception& e) {
                throw IoError(path_ + ":" + std::to_string(lineno) +
                              ": malformed cache line: " + e.what());
            }
        }
    }

    std::string complete(const ChatRequest& request) override {
        validate_request(request);
        const std::string key = request_cache_key(request);
        const nlohmann::json req_json = request_to_json(request);
        {
            std::lock_guard<std::mutex> lock(mu_);
            const auto it = entries_.find(key);
            if (it != entries_.end() && it->second.request == req_json)
                return it->second.response;
        }
        if (!inner_)
            throw ClientError("cache miss with no upstream client (offline replay): key " +
                              key);
        const std::string response = inner_->complete(request);
        append(key, req_json, response);
        return response;
    }

    size_t entry_count() const {
        std::lock_guard<std::mutex> lock(mu_);
        return entries_.size();
    }

   private:
    struct Entry {
        nlohmann::json request;
        std::string response;
    };

    void append(const std::string& key, const nlohmann::json& req_json,
                const std::string& response) {
        std::lock_guard<std::mutex> lock(mu_);
        if (entries_.count(key)) return;
        entries_[key] = {req_json, response};
        const auto now = std::chrono::system_clock::now().time_since_epoch();
        nlohmann::json j{{"key_hash", key},
                         {"request", req_json},
                         {"response", response},
                         {"timestamp",
                          std::chrono::duration_cast<std::chrono::seconds>(now).count()}};
        std::ofstream out(path_, std::ios::binary | std::ios::app);
        if (!out) throw IoError("cannot append to cache: " + path_);
        out << j.dump() << '\n';
    }

    std::shared_ptr<ChatClient> inner_;
    std::string path_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, Entry> entries_;
};

}  // namespace cda
