#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "pairrank/core.hpp"
#include "pairrank/judge.hpp"

namespace pairrank {

// Clock seam so rate limiting and backoff are testable without real time.
class Clock {
public:
    virtual ~Clock() = default;
    virtual std::int64_t now_ms() = 0;
    virtual void sleep_ms(std::int64_t ms) = 0;
};

class SystemClock : public Clock {
public:
    std::int64_t now_ms() override {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now().time_since_epoch())
            .count();
    }
    void sleep_ms(std::int64_t ms) override {
        std::this_thread::sleep_for(std::chrono::milliseconds(ms));
    }
};

// Test clock: sleeping just advances the counter and records the request.
class ManualClock : public Clock {
public:
    explicit ManualClock(std::int64_t start_ms = 0) : now_(start_ms) {}

    std::int64_t now_ms() override {
        std::lock_guard<std::mutex> lock(mu_);
        return now_;
    }
    void sleep_ms(std::int64_t ms) override {
        std::lock_guard<std::mutex> lock(mu_);
        now_ += ms;
        sleeps_.push_back(ms);
    }
    void advance_ms(std::int64_t ms) {
        std::lock_guard<std::mutex> lock(mu_);
        now_ += ms;
    }
    std::vector<std::int64_t> sleeps() const {
        std::lock_guard<std::mutex> lock(mu_);
        return sleeps_;
    }

private:
    mutable std::mutex mu_;
    std::int64_t now_ = 0;
    std::vector<std::int64_t> sleeps_;
};

// Spaces out call starts so at most `per_min` happen per minute. Thread
// safe; zero disables throttling.
class RateLimiter {
public:
    RateLimiter(int per_min, Clock& clock)
        : interval_ms_(per_min <= 0 ? 0 : 60000 / per_min), clock_(clock) {
        if (per_min < 0) throw Error("rate limit must be >= 0");
    }

    void acquire() {
        if (interval_ms_ <= 0) return;
        std::int64_t wait = 0;
        {
            std::lock_guard<std::mutex> lock(mu_);
            const std::int64_t now = clock_.now_ms();
            const std::int64_t slot = std::max(now, next_start_);
            next_start_ = slot + interval_ms_;
            wait = slot - now;
        }
        if (wait > 0) clock_.sleep_ms(wait);
    }

private:
    std::int64_t interval_ms_;
    Clock& clock_;
    std::mutex mu_;
    std::int64_t next_start_ = 0;
};

struct LlmJudgeConfig {
    std::string endpoint;  // e.g. http://127.0.0.1:8080
    std::string model_name;
    std::string api_key;         // sent as a bearer token when non-empty
    int rate_limit_per_min = 0;  // 0 means unthrottled
    int timeout_seconds = 30;
    int max_transport_retries = 3;  // extra tries after the first
    std::int64_t backoff_initial_ms = 1000;
};

// Vision judge speaking the chat-completions protocol: one user message
// carrying the prompt text plus both image URIs. HTTP 4xx means the setup
// is wrong and aborts the run; connection failures and 5xx get bounded
// exponential backoff before the pair is given up as retryable.
class LlmJudge : public Judge {
public:
    explicit LlmJudge(LlmJudgeConfig cfg, Clock* clock = nullptr)
        : cfg_(std::move(cfg)),
          owned_clock_(clock ? nullptr : std::make_unique<SystemClock>()),
          clock_(clock ? *clock : *owned_clock_),
          limiter_(cfg_.rate_limit_per_min, clock_) {
        if (cfg_.endpoint.empty()) throw ConfigError("judge endpoint is empty");
        if (cfg_.model_name.empty()) throw ConfigError("model_name is empty");
        if (cfg_.endpoint.rfind("https://", 0) == 0)
            throw ConfigError("https endpoints are not supported in this build");
        if (cfg_.endpoint.rfind("http://", 0) != 0)
            throw ConfigError("endpoint must start with http://");
        const auto path_start = cfg_.endpoint.find('/', std::string("http://").size());
        if (path_start == std::string::npos) {
            base_ = cfg_.endpoint;
        } else {
            base_ = cfg_.endpoint.substr(0, path_start);
            prefix_ = cfg_.endpoint.substr(path_start);
            while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
        }
    }

    std::string judge(const ImageRef& first, const ImageRef& second, const std::string& prompt,
                      int) override {
        const std::string body = build_request(first, second, prompt);
        std::string last_error;
        for (int try_no = 0;; ++try_no) {
            limiter_.acquire();
            httplib::Client client(base_);
            client.set_connection_timeout(cfg_.timeout_seconds, 0);
            client.set_read_timeout(cfg_.timeout_seconds, 0);
            client.set_write_timeout(cfg_.timeout_seconds, 0);
            httplib::Headers headers;
            if (!cfg_.api_key.empty())
                headers.emplace("Authorization", "Bearer " + cfg_.api_key);
            auto res = client.Post(prefix_ + "/v1/chat/completions", headers, body,
                                   "application/json");
            if (res && res->status >= 400 && res->status < 500)
                throw ConfigError("judge endpoint returned HTTP " + std::to_string(res->status) +
                                  ": " + snippet(res->body));
            if (res && res->status == 200) {
                try {
                    const auto j = nlohmann::json::parse(res->body);
                    return j.at("choices").at(0).at("message").at("content").get<std::string>();
                } catch (const nlohmann::json::exception& e) {
                    last_error = std::string("bad response body: ") + e.what();
                }
            } else if (res) {
                last_error = "HTTP " + std::to_string(res->status);
            } else {
                last_error = "connection failed: " + httplib::to_string(res.error());
            }
            if (try_no >= cfg_.max_transport_retries)
                throw TransportError("judge call failed after " + std::to_string(try_no + 1) +
                                     " tries: " + last_error);
            clock_.sleep_ms(cfg_.backoff_initial_ms << try_no);
        }
    }

    std::string id() const override { return "llm:" + cfg_.model_name; }

private:
    static std::string snippet(const std::string& s) {
        return s.size() <= 200 ? s : s.substr(0, 200) + "...";
    }

    std::string build_request(const ImageRef& first, const ImageRef& second,
                              const std::string& prompt) const {
        nlohmann::json content = nlohmann::json::array();
        content.push_back({{"type", "text"}, {"text", prompt}});
        content.push_back({{"type", "image_url"}, {"image_url", {{"url", first.uri}}}});
        content.push_back({{"type", "image_url"}, {"image_url", {{"url", second.uri}}}});
        nlohmann::json req{{"model", cfg_.model_name},
                           {"messages", nlohmann::json::array({nlohmann::json{
                                            {"role", "user"}, {"content", content}}})}};
        return req.dump();
    }

    LlmJudgeConfig cfg_;
    std::unique_ptr<Clock> owned_clock_;
    Clock& clock_;
    RateLimiter limiter_;
    std::string base_;
    std::string prefix_;
};

}  // namespace pairrank
