#pragma once

#include <httplib.h>

#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>

#include <json.hpp>

#include "forge/hash.hpp"
#include "support/helpers.hpp"

namespace forge::test {

// In-process chat-completions server. Replies are a pure function of the
// request content, so reruns (and warm-cache replays) see identical text.
class ChatServer {
public:
    // (model, system, user) -> reply content
    using Handler = std::function<std::string(const std::string&, const std::string&,
                                              const std::string&)>;

    explicit ChatServer(Handler handler = {}) : handler_(std::move(handler)) {
        server_.Post("/v1/chat/completions",
                     [this](const httplib::Request& req, httplib::Response& res) {
                         auto j = nlohmann::json::parse(req.body);
                         std::string model = j.at("model").get<std::string>();
                         std::string system = j.at("messages").at(0).at("content").get<std::string>();
                         std::string user = j.at("messages").at(1).at("content").get<std::string>();
                         {
                             std::lock_guard<std::mutex> lock(mu_);
                             ++calls_per_model_[model];
                         }
                         std::string content = handler_ ? handler_(model, system, user)
                                                        : default_reply(model, system, user);
                         res.set_content(chat_body(content), "application/json");
                     });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~ChatServer() {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

    std::size_t calls(const std::string& model) {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = calls_per_model_.find(model);
        return it == calls_per_model_.end() ? 0 : it->second;
    }

    // filter-judge -> 0..3, score-judge -> 0..20, anything else -> short
    // hash-stamped text that passes the synthesis guards.
    static std::string default_reply(const std::string& model, const std::string& system,
                                     const std::string& user) {
        if (model == "filter-judge") {
            return std::to_string(fnv1a64(user) % 4);
        }
        if (model == "score-judge") {
            return std::to_string(fnv1a64(user) % 21);
        }
        return "reply " + sha256_hex(system + '\x1f' + user).substr(0, 12);
    }

private:
    httplib::Server server_;
    Handler handler_;
    std::thread thread_;
    int port_ = 0;
    std::mutex mu_;
    std::map<std::string, std::size_t> calls_per_model_;
};

}  // namespace forge::test
