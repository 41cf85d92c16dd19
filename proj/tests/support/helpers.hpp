#pragma once

#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "forge/chat_endpoint.hpp"
#include "forge/error.hpp"
#include "forge/llm_client.hpp"

namespace forge::test {

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("forge-test-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string chat_body(const std::string& content) {
    nlohmann::json j{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
    return j.dump();
}

// Scripted transport: either a fixed reply sequence or a handler computing
// the reply from the request body. Thread-safe; records every request body.
class MockTransport : public llm::Transport {
public:
    struct Step {
        int status = 200;
        std::string body;
        bool network_error = false;
    };

    static Step ok(const std::string& content) { return Step{200, chat_body(content), false}; }
    static Step http(int status) { return Step{status, "", false}; }
    static Step down() { return Step{0, "", true}; }

    std::vector<Step> script;
    std::function<llm::HttpReply(const nlohmann::json& request)> handler;

    llm::HttpReply post_json(const std::string&, const std::string& body,
                             const std::vector<std::pair<std::string, std::string>>& headers)
        override {
        Step step;
        {
            std::lock_guard<std::mutex> lock(mu_);
            bodies_.push_back(body);
            headers_.push_back(headers);
            if (!handler) {
                if (next_ >= script.size()) {
                    throw TransportError("mock transport script exhausted");
                }
                step = script[next_++];
            }
        }
        if (handler) {
            return handler(nlohmann::json::parse(body));
        }
        if (step.network_error) {
            throw TransportError("mock network failure");
        }
        return {step.status, step.body};
    }

    std::size_t calls() {
        std::lock_guard<std::mutex> lock(mu_);
        return bodies_.size();
    }
    std::vector<std::string> bodies() {
        std::lock_guard<std::mutex> lock(mu_);
        return bodies_;
    }
    std::vector<std::vector<std::pair<std::string, std::string>>> headers() {
        std::lock_guard<std::mutex> lock(mu_);
        return headers_;
    }

private:
    std::mutex mu_;
    std::size_t next_ = 0;
    std::vector<std::string> bodies_;
    std::vector<std::vector<std::pair<std::string, std::string>>> headers_;
};

// Scripted ChatEndpoint for evaluation tests: consumes a fixed reply list or
// delegates to a handler. Records every (system, user) ask.
class ScriptedEndpoint : public ChatEndpoint {
public:
    std::vector<ChatResult> script;
    std::function<ChatResult(std::string_view system, std::string_view user, std::uint64_t)>
        handler;

    ChatResult ask(std::string_view system, std::string_view user, std::uint64_t variant)
        override {
        asked.emplace_back(std::string(system), std::string(user));
        if (handler) {
            return handler(system, user, variant);
        }
        if (next_ >= script.size()) {
            return ChatResult{false, {}, "script exhausted"};
        }
        return script[next_++];
    }

    static ChatResult say(std::string text) { return ChatResult{true, std::move(text), {}}; }
    static ChatResult fail(std::string error) { return ChatResult{false, {}, std::move(error)}; }

    std::vector<std::pair<std::string, std::string>> asked;

private:
    std::size_t next_ = 0;
};

// Pins an environment variable for the lifetime of the guard.
class EnvGuard {
public:
    EnvGuard(std::string name, const std::string& value) : name_(std::move(name)) {
        if (const char* old = std::getenv(name_.c_str())) {
            old_ = old;
        }
        ::setenv(name_.c_str(), value.c_str(), 1);
    }
    ~EnvGuard() {
        if (old_) {
            ::setenv(name_.c_str(), old_->c_str(), 1);
        } else {
            ::unsetenv(name_.c_str());
        }
    }

private:
    std::string name_;
    std::optional<std::string> old_;
};

}  // namespace forge::test
