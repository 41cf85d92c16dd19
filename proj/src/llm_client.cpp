#include "forge/llm_client.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <semaphore>
#include <thread>

#include <json.hpp>

#include "forge/error.hpp"
#include "forge/hash.hpp"
#include "forge/io.hpp"

namespace forge::llm {

namespace {

constexpr const char* kChatPath = "/v1/chat/completions";

std::string request_url(const std::string& base_url) {
    std::string base = base_url;
    while (!base.empty() && base.back() == '/') {
        base.pop_back();
    }
    return base + kChatPath;
}

// scheme://host[:port][/prefix...] -> (origin, path)
std::pair<std::string, std::string> split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw UsageError("base_url must include a scheme: " + url);
    }
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

class HttpTransport : public Transport {
public:
    HttpReply post_json(const std::string& url, const std::string& body,
                        const std::vector<std::pair<std::string, std::string>>& headers) override {
        auto [origin, path] = split_url(url);
        httplib::Client cli(origin);
        cli.set_connection_timeout(10, 0);
        cli.set_read_timeout(120, 0);
        cli.set_write_timeout(60, 0);
        httplib::Headers h;
        for (const auto& [k, v] : headers) {
            h.emplace(k, v);
        }
        auto res = cli.Post(path, h, body, "application/json");
        if (!res) {
            throw TransportError("network error for " + origin + ": " +
                                 httplib::to_string(res.error()));
        }
        return {res->status, res->body};
    }
};

bool is_transient_status(int status) {
    return status == 429 || status >= 500;
}

std::string extract_content(const std::string& body) {
    nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) {
        throw ProtocolError("chat response is not valid JSON");
    }
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
        throw ProtocolError("chat response has no choices");
    }
    const auto& msg = j["choices"][0];
    if (!msg.contains("message") || !msg["message"].contains("content") ||
        !msg["message"]["content"].is_string()) {
        throw ProtocolError("chat response missing choices[0].message.content");
    }
    return msg["message"]["content"].get<std::string>();
}

}  // namespace

void validate_request(const ChatRequest& req) {
    if (req.model.empty()) {
        throw UsageError("chat request needs a model name");
    }
    if (req.user.empty()) {
        throw UsageError("chat request needs user content");
    }
    if (!(req.temperature >= 0.0 && req.temperature <= 2.0)) {
        throw UsageError("temperature must be in [0, 2]");
    }
    if (req.max_tokens <= 0) {
        throw UsageError("max_tokens must be positive");
    }
}

void validate_config(const ClientConfig& cfg) {
    if (cfg.base_url.empty()) {
        throw UsageError("client base_url is empty");
    }
    if (cfg.max_retries < 0) {
        throw UsageError("max_retries must be >= 0");
    }
    if (cfg.backoff_base_ms < 0) {
        throw UsageError("backoff_base_ms must be >= 0");
    }
    if (cfg.max_concurrency < 1) {
        throw UsageError("max_concurrency must be >= 1");
    }
    if (cfg.cache_dir.empty()) {
        throw UsageError("cache_dir is empty");
    }
}

std::string canonical_request_json(const ChatRequest& req) {
    nlohmann::json j{{"max_tokens", req.max_tokens},
                     {"model", req.model},
                     {"system", req.system},
                     {"temperature", req.temperature},
                     {"user", req.user}};
    if (req.seed) {
        j["seed"] = *req.seed;
    }
    return j.dump();
}

std::string canonical_key(const ChatRequest& req) {
    return sha256_hex(canonical_request_json(req));
}

std::int64_t backoff_delay_ms(int backoff_base_ms, int attempt) {
    int shift = attempt > 20 ? 20 : attempt;
    return static_cast<std::int64_t>(backoff_base_ms) << shift;
}

std::unique_ptr<Transport> make_http_transport() {
    return std::make_unique<HttpTransport>();
}

struct LlmClient::Impl {
    ClientConfig cfg;
    std::shared_ptr<Transport> transport;
    std::counting_semaphore<> permits;

    Impl(ClientConfig c, std::shared_ptr<Transport> t)
        : cfg(std::move(c)),
          transport(t ? std::move(t) : std::shared_ptr<Transport>(make_http_transport())),
          permits(cfg.max_concurrency) {}

    std::filesystem::path cache_path(const std::string& key) const {
        return cfg.cache_dir / key.substr(0, 2) / key.substr(2, 2) / key;
    }

    std::optional<std::string> cache_read(const std::string& key) const {
        auto path = cache_path(key);
        if (!std::filesystem::exists(path)) {
            return std::nullopt;
        }
        nlohmann::json j = nlohmann::json::parse(read_file(path), nullptr, false);
        if (j.is_discarded() || !j.contains("text") || !j["text"].is_string()) {
            throw DataError("corrupt cache entry: " + path.string());
        }
        return j["text"].get<std::string>();
    }

    void cache_write(const std::string& key, const std::string& text) const {
        nlohmann::json j{{"text", text}};
        atomic_write_file(cache_path(key), j.dump() + "\n");
    }

    std::string request_body(const ChatRequest& req) const {
        nlohmann::json j{
            {"model", req.model},
            {"messages",
             {{{"role", "system"}, {"content", req.system}},
              {{"role", "user"}, {"content", req.user}}}},
            {"temperature", req.temperature},
            {"max_tokens", req.max_tokens},
        };
        if (req.seed) {
            j["seed"] = *req.seed;
        }
        return j.dump();
    }

    std::vector<std::pair<std::string, std::string>> request_headers() const {
        std::vector<std::pair<std::string, std::string>> h;
        if (cfg.api_key && !cfg.api_key->empty()) {
            h.emplace_back("Authorization", "Bearer " + *cfg.api_key);
        }
        return h;
    }

    ChatResponse fetch(const ChatRequest& req, const std::string& key) {
        permits.acquire();
        struct Release {
            std::counting_semaphore<>& s;
            ~Release() { s.release(); }
        } release{permits};

        const std::string url = request_url(cfg.base_url);
        const std::string body = request_body(req);
        const auto headers = request_headers();
        const std::int64_t started = steady_ms();
        const int attempts = cfg.max_retries + 1;
        int last_status = 0;
        std::string last_error;
        for (int attempt = 0; attempt < attempts; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(backoff_delay_ms(cfg.backoff_base_ms, attempt - 1)));
            }
            HttpReply reply;
            try {
                reply = transport->post_json(url, body, headers);
            } catch (const TransportError& e) {
                last_error = e.what();
                last_status = 0;
                continue;
            }
            if (reply.status == 200) {
                std::string text = extract_content(reply.body);
                cache_write(key, text);
                return ChatResponse{std::move(text), false, steady_ms() - started};
            }
            if (is_transient_status(reply.status)) {
                last_status = reply.status;
                last_error = "HTTP " + std::to_string(reply.status);
                continue;
            }
            throw ProtocolError("endpoint rejected request: HTTP " + std::to_string(reply.status),
                                reply.status);
        }
        throw TransportError("request failed after " + std::to_string(attempts) +
                                 " attempts: " + last_error,
                             last_status);
    }
};

LlmClient::LlmClient(ClientConfig cfg, std::shared_ptr<Transport> transport) {
    validate_config(cfg);
    if (!cfg.api_key) {
        if (const char* key = std::getenv("FORGE_API_KEY"); key != nullptr && *key != '\0') {
            cfg.api_key = key;
        }
    }
    impl_ = std::make_unique<Impl>(std::move(cfg), std::move(transport));
}

LlmClient::~LlmClient() = default;

const ClientConfig& LlmClient::config() const {
    return impl_->cfg;
}

ChatResponse LlmClient::complete(const ChatRequest& req) {
    validate_request(req);
    const std::string key = canonical_key(req);
    if (auto hit = impl_->cache_read(key)) {
        return ChatResponse{std::move(*hit), true, 0};
    }
    return impl_->fetch(req, key);
}

std::vector<ChatOutcome> LlmClient::complete_many(const std::vector<ChatRequest>& reqs) {
    std::vector<ChatOutcome> results(reqs.size());
    if (reqs.empty()) {
        return results;
    }
    const int workers =
        static_cast<int>(std::min<std::size_t>(impl_->cfg.max_concurrency, reqs.size()));
    std::atomic<std::size_t> next{0};
    auto run = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= reqs.size()) {
                return;
            }
            try {
                results[i].response = complete(reqs[i]);
                results[i].ok = true;
            } catch (const TransportError& e) {
                results[i].error = e.what();
                results[i].http_status = e.http_status();
            } catch (const Error& e) {
                results[i].error = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back(run);
    }
    for (auto& t : pool) {
        t.join();
    }
    return results;
}

ChatResult LlmChatEndpoint::ask(std::string_view system, std::string_view user,
                                std::uint64_t variant) {
    ChatRequest req;
    req.model = model_;
    req.system = std::string(system);
    req.user = std::string(user);
    req.temperature = temperature_;
    req.max_tokens = max_tokens_;
    req.seed = static_cast<std::int64_t>(variant);
    try {
        ChatResponse resp = client_.complete(req);
        return ChatResult{true, std::move(resp.text), {}};
    } catch (const Error& e) {
        return ChatResult{false, {}, e.what()};
    }
}

}  // namespace forge::llm
