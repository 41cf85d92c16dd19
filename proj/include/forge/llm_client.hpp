#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "forge/chat_endpoint.hpp"

namespace forge::llm {

struct ChatRequest {
    std::string model;
    std::string system;
    std::string user;
    double temperature = 0.0;
    int max_tokens = 256;
    std::optional<std::int64_t> seed;
};

struct ChatResponse {
    std::string text;  // may be empty if the endpoint returned empty content
    bool from_cache = false;
    std::int64_t latency_ms = 0;
};

struct ClientConfig {
    std::string base_url;
    std::optional<std::string> api_key;
    int max_retries = 3;
    int backoff_base_ms = 200;
    int max_concurrency = 4;
    std::filesystem::path cache_dir;
};

// Sampling defaults by call site: deterministic labels for judging, diverse
// text for synthesis.
inline constexpr double kJudgeTemperature = 0.0;
inline constexpr double kGenerationTemperature = 0.7;

void validate_request(const ChatRequest& req);
void validate_config(const ClientConfig& cfg);

// Canonical JSON serialization of a request: sorted keys, shortest-round-trip
// floats. Equal requests serialize identically.
std::string canonical_request_json(const ChatRequest& req);

// Hex digest of the canonical serialization; the cache key.
std::string canonical_key(const ChatRequest& req);

// Exponential backoff delay before retry attempt k (0-based), in ms.
std::int64_t backoff_delay_ms(int backoff_base_ms, int attempt);

struct HttpReply {
    int status = 0;
    std::string body;
};

// One HTTP POST with a JSON body. Implementations throw TransportError for
// network-level failures (connect/timeout); HTTP error statuses come back as
// a reply for the retry policy to classify.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpReply post_json(const std::string& url, const std::string& body,
                                const std::vector<std::pair<std::string, std::string>>& headers) = 0;
};

std::unique_ptr<Transport> make_http_transport();

struct ChatOutcome {
    bool ok = false;
    ChatResponse response;
    std::string error;
    int http_status = 0;
};

class LlmClient {
public:
    explicit LlmClient(ClientConfig cfg, std::shared_ptr<Transport> transport = nullptr);
    ~LlmClient();

    LlmClient(const LlmClient&) = delete;
    LlmClient& operator=(const LlmClient&) = delete;

    // Cache hit: returns the stored text, no network. Miss: POSTs the chat
    // request, retrying 429/5xx/timeouts with exponential backoff, then
    // caches atomically. Throws TransportError/ProtocolError/DataError.
    ChatResponse complete(const ChatRequest& req);

    // Input-ordered batch; at most max_concurrency requests in flight.
    // Failures are reported per position, never abort the batch.
    std::vector<ChatOutcome> complete_many(const std::vector<ChatRequest>& reqs);

    const ClientConfig& config() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// ChatEndpoint adapter over LlmClient with fixed sampling parameters.
class LlmChatEndpoint : public ChatEndpoint {
public:
    LlmChatEndpoint(LlmClient& client, std::string model, double temperature, int max_tokens)
        : client_(client),
          model_(std::move(model)),
          temperature_(temperature),
          max_tokens_(max_tokens) {}

    ChatResult ask(std::string_view system, std::string_view user, std::uint64_t variant) override;

private:
    LlmClient& client_;
    std::string model_;
    double temperature_;
    int max_tokens_;
};

}  // namespace forge::llm
