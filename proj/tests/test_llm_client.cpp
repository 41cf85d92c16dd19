#include <doctest.h>

#include <atomic>
#include <chrono>
#include <memory>
#include <thread>

#include "forge/hash.hpp"
#include "forge/io.hpp"
#include "forge/llm_client.hpp"
#include "support/helpers.hpp"

using namespace forge;
using namespace forge::llm;
using forge::test::MockTransport;
using forge::test::TempDir;

namespace {

ChatRequest make_request(const std::string& user = "hello") {
    ChatRequest req;
    req.model = "test-model";
    req.system = "be brief";
    req.user = user;
    req.max_tokens = 16;
    return req;
}

ClientConfig make_config(const TempDir& dir) {
    ClientConfig cfg;
    cfg.base_url = "http://fake.invalid";
    cfg.cache_dir = dir / "cache";
    cfg.backoff_base_ms = 0;  // no sleeping in tests
    return cfg;
}

}  // namespace

TEST_SUITE("llm_client") {

TEST_CASE("canonical request JSON has sorted keys and is stable") {
    auto req = make_request();
    auto canon = canonical_request_json(req);
    CHECK(canon ==
          R"({"max_tokens":16,"model":"test-model","system":"be brief","temperature":0.0,"user":"hello"})");
    req.seed = 7;
    auto with_seed = canonical_request_json(req);
    CHECK(with_seed.find("\"seed\":7") != std::string::npos);
    CHECK(canonical_key(req) != canonical_key(make_request()));
    CHECK(canonical_key(make_request()) == canonical_key(make_request()));
    auto other = make_request();
    other.temperature = 0.7;
    CHECK(canonical_key(other) != canonical_key(make_request()));
}

TEST_CASE("validation rejects bad requests and configs") {
    ChatRequest req;  // no model, no user
    CHECK_THROWS_AS(validate_request(req), UsageError);
    req = make_request();
    req.temperature = 3.0;
    CHECK_THROWS_AS(validate_request(req), UsageError);
    req = make_request();
    req.max_tokens = 0;
    CHECK_THROWS_AS(validate_request(req), UsageError);

    ClientConfig cfg;
    CHECK_THROWS_AS(validate_config(cfg), UsageError);
    cfg.base_url = "http://x";
    CHECK_THROWS_AS(validate_config(cfg), UsageError);  // cache_dir still empty
    cfg.cache_dir = "/tmp/x";
    CHECK_NOTHROW(validate_config(cfg));
    cfg.max_concurrency = 0;
    CHECK_THROWS_AS(validate_config(cfg), UsageError);
}

TEST_CASE("backoff delay doubles per attempt and never decreases") {
    CHECK(backoff_delay_ms(200, 0) == 200);
    CHECK(backoff_delay_ms(200, 1) == 400);
    CHECK(backoff_delay_ms(200, 2) == 800);
    for (int attempt = 1; attempt < 40; ++attempt) {
        CHECK(backoff_delay_ms(100, attempt) >= backoff_delay_ms(100, attempt - 1));
    }
}

TEST_CASE("cache: second identical request does not touch the transport") {
    TempDir dir;
    auto transport = std::make_shared<MockTransport>();
    transport->script = {MockTransport::ok("cached answer")};
    LlmClient client(make_config(dir), transport);

    auto first = client.complete(make_request());
    CHECK(first.text == "cached answer");
    CHECK_FALSE(first.from_cache);
    CHECK(transport->calls() == 1);

    auto second = client.complete(make_request());
    CHECK(second.text == "cached answer");
    CHECK(second.from_cache);
    CHECK(transport->calls() == 1);

    // a different request misses
    transport->script.push_back(MockTransport::ok("other"));
    auto third = client.complete(make_request("different"));
    CHECK(third.text == "other");
    CHECK(transport->calls() == 2);
}

TEST_CASE("cache persists across client instances") {
    TempDir dir;
    {
        auto transport = std::make_shared<MockTransport>();
        transport->script = {MockTransport::ok("persisted")};
        LlmClient client(make_config(dir), transport);
        client.complete(make_request());
    }
    auto transport = std::make_shared<MockTransport>();
    LlmClient client(make_config(dir), transport);  // empty script: any call would throw
    auto hit = client.complete(make_request());
    CHECK(hit.text == "persisted");
    CHECK(hit.from_cache);
    CHECK(transport->calls() == 0);
}

TEST_CASE("corrupt cache entry raises a data error") {
    TempDir dir;
    auto cfg = make_config(dir);
    auto key = canonical_key(make_request());
    auto path = cfg.cache_dir / key.substr(0, 2) / key.substr(2, 2) / key;
    std::filesystem::create_directories(path.parent_path());
    atomic_write_file(path, "not json");
    LlmClient client(cfg, std::make_shared<MockTransport>());
    CHECK_THROWS_AS(client.complete(make_request()), DataError);
}

TEST_CASE("transient statuses and network failures are retried") {
    TempDir dir;
    auto transport = std::make_shared<MockTransport>();
    transport->script = {MockTransport::http(500), MockTransport::down(),
                         MockTransport::http(429), MockTransport::ok("finally")};
    auto cfg = make_config(dir);
    cfg.max_retries = 3;
    LlmClient client(cfg, transport);
    auto resp = client.complete(make_request());
    CHECK(resp.text == "finally");
    CHECK(transport->calls() == 4);
}

TEST_CASE("retries exhaust into a transport error naming the attempt count") {
    TempDir dir;
    auto transport = std::make_shared<MockTransport>();
    transport->script = {MockTransport::http(503), MockTransport::http(503),
                         MockTransport::http(503)};
    auto cfg = make_config(dir);
    cfg.max_retries = 2;
    LlmClient client(cfg, transport);
    CHECK_THROWS_WITH_AS(client.complete(make_request()),
                         doctest::Contains("after 3 attempts"), TransportError);
    CHECK(transport->calls() == 3);
}

TEST_CASE("non-retryable client errors fail immediately") {
    TempDir dir;
    auto transport = std::make_shared<MockTransport>();
    transport->script = {MockTransport::http(400)};
    auto cfg = make_config(dir);
    cfg.max_retries = 3;
    LlmClient client(cfg, transport);
    CHECK_THROWS_AS(client.complete(make_request()), ProtocolError);
    CHECK(transport->calls() == 1);
}

TEST_CASE("malformed 200 payloads are protocol errors, not cached") {
    TempDir dir;
    auto transport = std::make_shared<MockTransport>();
    transport->script = {MockTransport::Step{200, R"({"unexpected":true})", false},
                         MockTransport::ok("good")};
    LlmClient client(make_config(dir), transport);
    CHECK_THROWS_AS(client.complete(make_request()), ProtocolError);
    auto resp = client.complete(make_request());  // not poisoned by the bad payload
    CHECK(resp.text == "good");
    CHECK_FALSE(resp.from_cache);
}

TEST_CASE("api key is sent as a bearer header; env var fills it in") {
    TempDir dir;
    auto transport = std::make_shared<MockTransport>();
    transport->script = {MockTransport::ok("a"), MockTransport::ok("b")};
    auto cfg = make_config(dir);
    cfg.api_key = "sk-test";
    LlmClient client(cfg, transport);
    client.complete(make_request());
    auto headers = transport->headers();
    REQUIRE(headers.size() == 1);
    REQUIRE(headers[0].size() == 1);
    CHECK(headers[0][0].first == "Authorization");
    CHECK(headers[0][0].second == "Bearer sk-test");

    test::EnvGuard env("FORGE_API_KEY", "sk-env");
    LlmClient env_client(make_config(dir), transport);
    env_client.complete(make_request("fresh"));
    headers = transport->headers();
    REQUIRE(headers.size() == 2);
    CHECK(headers[1][0].second == "Bearer sk-env");
}

TEST_CASE("complete_many reports failures positionally and preserves order") {
    TempDir dir;
    auto transport = std::make_shared<MockTransport>();
    transport->handler = [](const nlohmann::json& body) -> HttpReply {
        std::string user = body.at("messages").at(1).at("content").get<std::string>();
        if (user == "boom") {
            return {418, ""};  // non-retryable
        }
        return {200, test::chat_body("echo:" + user)};
    };
    auto cfg = make_config(dir);
    LlmClient client(cfg, transport);

    std::vector<ChatRequest> reqs{make_request("zero"), make_request("boom"),
                                  make_request("two")};
    auto outcomes = client.complete_many(reqs);
    REQUIRE(outcomes.size() == 3);
    CHECK(outcomes[0].ok);
    CHECK(outcomes[0].response.text == "echo:zero");
    CHECK_FALSE(outcomes[1].ok);
    CHECK(outcomes[1].http_status == 418);
    CHECK(outcomes[2].ok);
    CHECK(outcomes[2].response.text == "echo:two");
}

TEST_CASE("complete_many honors the concurrency cap") {
    TempDir dir;
    std::atomic<int> in_flight{0};
    std::atomic<int> max_in_flight{0};
    auto transport = std::make_shared<MockTransport>();
    transport->handler = [&](const nlohmann::json& body) -> HttpReply {
        int now = ++in_flight;
        int seen = max_in_flight.load();
        while (now > seen && !max_in_flight.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(15));
        --in_flight;
        std::string user = body.at("messages").at(1).at("content").get<std::string>();
        return {200, test::chat_body("ok:" + user)};
    };
    auto cfg = make_config(dir);
    cfg.max_concurrency = 3;
    LlmClient client(cfg, transport);

    std::vector<ChatRequest> reqs;
    for (int i = 0; i < 12; ++i) {
        reqs.push_back(make_request("req-" + std::to_string(i)));
    }
    auto outcomes = client.complete_many(reqs);
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        REQUIRE(outcomes[i].ok);
        CHECK(outcomes[i].response.text == "ok:req-" + std::to_string(i));
    }
    CHECK(max_in_flight.load() <= 3);
    CHECK(max_in_flight.load() >= 2);  // the pool really ran in parallel
}

TEST_CASE("chat endpoint adapter maps variants to request seeds") {
    TempDir dir;
    auto transport = std::make_shared<MockTransport>();
    transport->handler = [](const nlohmann::json& body) -> HttpReply {
        return {200, test::chat_body("seed=" + body.at("seed").dump())};
    };
    LlmClient client(make_config(dir), transport);
    LlmChatEndpoint endpoint(client, "test-model", 0.0, 16);
    auto r0 = endpoint.ask("sys", "user", 0);
    auto r1 = endpoint.ask("sys", "user", 1);
    REQUIRE(r0.ok);
    REQUIRE(r1.ok);
    CHECK(r0.text == "seed=0");
    CHECK(r1.text == "seed=1");

    // errors come back in-band, not as exceptions
    auto bad_transport = std::make_shared<MockTransport>();
    bad_transport->script = {MockTransport::http(400)};
    auto cfg = make_config(dir);
    cfg.cache_dir = dir / "cache2";
    LlmClient bad_client(cfg, bad_transport);
    LlmChatEndpoint bad_endpoint(bad_client, "test-model", 0.0, 16);
    auto r = bad_endpoint.ask("sys", "user", 0);
    CHECK_FALSE(r.ok);
    CHECK_FALSE(r.error.empty());
}

TEST_CASE("derive_seed varies by attempt but is reproducible") {
    auto s0 = derive_seed("post-1", 0, 42);
    auto s1 = derive_seed("post-1", 1, 42);
    CHECK(s0 != s1);
    CHECK(s0 == derive_seed("post-1", 0, 42));
    CHECK(s0 >= 0);
    CHECK(s1 >= 0);
    CHECK(derive_seed("post-2", 0, 42) != s0);
    CHECK(derive_seed("post-1", 0, 43) != s0);
}

}  // TEST_SUITE
