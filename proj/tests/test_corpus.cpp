#include <doctest.h>

#include <fstream>
#include <set>

#include "forge/corpus.hpp"
#include "forge/dpo/rng.hpp"
#include "support/helpers.hpp"

using namespace forge;
using namespace forge::corpus;

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

Post make_post(std::string id, std::string text) {
    Post p;
    p.id = std::move(id);
    p.text = std::move(text);
    return p;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("trim strips ascii whitespace from both ends") {
    CHECK(trim("  a b \t\n") == "a b");
    CHECK(trim("") == "");
    CHECK(trim(" \n ") == "");
    CHECK(trim("x") == "x");
}

TEST_CASE("normalization key lowercases, strips urls, collapses whitespace") {
    CHECK(normalization_key("Check THIS  out") == "check this out");
    CHECK(normalization_key("look http://example.com/Path?q=1 here") == "look here");
    CHECK(normalization_key("look https://example.com,and\tmore") == "look more");
    CHECK(normalization_key("  Edge  case  ") == "edge case");
    // idempotent
    auto k = normalization_key("A  HTTP://X.Y b");
    CHECK(normalization_key(k) == k);
}

TEST_CASE("dedup keeps the first post per key, in input order") {
    std::vector<Post> posts{
        make_post("1", "Taxes are too high!"),
        make_post("2", "taxes   are too HIGH! http://link.example"),
        make_post("3", "something else"),
        make_post("4", "Taxes are too high!"),
    };
    auto out = dedup_posts(posts);
    REQUIRE(out.size() == 2);
    CHECK(out[0].id == "1");
    CHECK(out[1].id == "3");
}

TEST_CASE("dedup is idempotent on random corpora") {
    dpo::Rng rng(42);
    const std::string words[] = {"tax", "Tax", "vote", "http://a.b", "now", " "};
    std::vector<Post> posts;
    for (int i = 0; i < 300; ++i) {
        std::string text;
        int len = 1 + static_cast<int>(rng.below(4));
        for (int w = 0; w < len; ++w) {
            text += words[rng.below(6)];
            text += ' ';
        }
        if (corpus::trim(text).empty()) text = "x";
        posts.push_back(make_post(std::to_string(i), text));
    }
    auto once = dedup_posts(posts);
    auto twice = dedup_posts(once);
    REQUIRE(once.size() == twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) {
        CHECK(once[i].id == twice[i].id);
    }
    // survivor keys are unique
    std::set<std::string> keys;
    for (const auto& p : once) {
        CHECK(keys.insert(normalization_key(p.text)).second);
    }
}

TEST_CASE("load_posts: generic format with source and meta") {
    test::TempDir dir;
    auto path = dir / "posts.jsonl";
    write_text(path,
               R"({"id":"a","text":"hello world","source":"truth_social","author":"x"})"
               "\n"
               R"({"id":7,"text":"second","created_at":1700000000})"
               "\n");
    auto posts = load_posts(path, InputFormat::generic);
    REQUIRE(posts.size() == 2);
    CHECK(posts[0].id == "a");
    CHECK(posts[0].source == Source::truth_social);
    CHECK(posts[0].meta.at("author") == "x");
    CHECK(posts[1].id == "7");
    REQUIRE(posts[1].created_at.has_value());
    CHECK(*posts[1].created_at == 1700000000);
}

TEST_CASE("load_posts: platform exports map their text fields") {
    test::TempDir dir;
    auto ts = dir / "ts.jsonl";
    write_text(ts, R"({"id":"t1","content":"maga post"})"
                   "\n");
    auto ts_posts = load_posts(ts, InputFormat::truth_social);
    REQUIRE(ts_posts.size() == 1);
    CHECK(ts_posts[0].text == "maga post");
    CHECK(ts_posts[0].source == Source::truth_social);

    auto rd = dir / "rd.jsonl";
    write_text(rd, R"({"id":"r1","body":"reddit comment","created_utc":1600000000})"
                   "\n");
    auto rd_posts = load_posts(rd, InputFormat::reddit_politosphere);
    REQUIRE(rd_posts.size() == 1);
    CHECK(rd_posts[0].text == "reddit comment");
    CHECK(rd_posts[0].source == Source::reddit_politosphere);
    REQUIRE(rd_posts[0].created_at.has_value());
    CHECK(*rd_posts[0].created_at == 1600000000);
}

TEST_CASE("load_posts: malformed policy skip vs fail") {
    test::TempDir dir;
    auto path = dir / "posts.jsonl";
    write_text(path,
               R"({"id":"a","text":"fine"})"
               "\n"
               "not json\n"
               R"({"id":"b"})"
               "\n"
               R"({"id":"a","text":"duplicate"})"
               "\n"
               R"({"id":"c","text":"also fine"})"
               "\n");
    LoadReport report;
    auto posts = load_posts(path, InputFormat::generic, MalformedPolicy::skip, &report);
    REQUIRE(posts.size() == 2);
    CHECK(posts[0].id == "a");
    CHECK(posts[1].id == "c");
    CHECK(report.parsed == 2);
    CHECK(report.skipped == 3);
    REQUIRE(report.warnings.size() == 3);
    CHECK(report.warnings[0].find("posts.jsonl:2") != std::string::npos);

    CHECK_THROWS_AS(load_posts(path, InputFormat::generic, MalformedPolicy::fail), DataError);
    try {
        load_posts(path, InputFormat::generic, MalformedPolicy::fail);
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
}

TEST_CASE("load_posts: missing file throws") {
    CHECK_THROWS_AS(load_posts("/nonexistent/posts.jsonl", InputFormat::generic), DataError);
}

TEST_CASE("validation rejects bad records") {
    Post p;  // empty id and text
    CHECK_THROWS_AS(validate(p), DataError);

    InstructionPair pair;
    pair.instruction = "ask";
    pair.response = "answer";
    pair.origin_post_id = "p1";
    CHECK_NOTHROW(validate(pair));
    pair.response.clear();
    CHECK_THROWS_AS(validate(pair), DataError);

    PreferenceTriplet t;
    t.instruction = "ask";
    t.chosen = "same";
    t.rejected = "same";
    t.origin_post_id = "p1";
    CHECK_THROWS_AS(validate(t), DataError);
    t.rejected = "different";
    CHECK_NOTHROW(validate(t));
}

TEST_CASE("dataset round-trip preserves records and verifies the manifest") {
    test::TempDir dir;
    std::vector<PreferenceTriplet> triplets;
    for (int i = 0; i < 5; ++i) {
        PreferenceTriplet t;
        t.instruction = "instruction " + std::to_string(i);
        t.chosen = "chosen " + std::to_string(i);
        t.rejected = "rejected " + std::to_string(i);
        t.origin_post_id = "post-" + std::to_string(i);
        t.ideology = i % 2 == 0 ? Ideology::right : Ideology::left;
        triplets.push_back(t);
    }
    auto path = dir / "triplets.jsonl";
    auto manifest = write_dataset(triplets, path, "test-triplets", {{"k", "v"}});
    CHECK(manifest.record_count == 5);
    CHECK(manifest.config_echo.at("k") == "v");
    CHECK(manifest.config_echo.at("record_kind") == "preference_triplet");

    auto loaded = read_dataset<PreferenceTriplet>(path);
    REQUIRE(loaded.size() == triplets.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].instruction == triplets[i].instruction);
        CHECK(loaded[i].chosen == triplets[i].chosen);
        CHECK(loaded[i].rejected == triplets[i].rejected);
        CHECK(loaded[i].origin_post_id == triplets[i].origin_post_id);
        CHECK(loaded[i].ideology == triplets[i].ideology);
    }
}

TEST_CASE("dataset files are byte-stable across writes") {
    test::TempDir dir;
    std::vector<Post> posts{make_post("a", "one"), make_post("b", "two")};
    auto m1 = write_dataset(posts, dir / "a.jsonl", "d");
    auto m2 = write_dataset(posts, dir / "b.jsonl", "d");
    CHECK(read_file(dir / "a.jsonl") == read_file(dir / "b.jsonl"));
    CHECK(m1.content_hash == m2.content_hash);
}

TEST_CASE("tampered dataset bytes fail the manifest hash check") {
    test::TempDir dir;
    std::vector<Post> posts{make_post("a", "one")};
    auto path = dir / "posts.jsonl";
    write_dataset(posts, path, "d");
    // flip a byte
    std::string body = read_file(path);
    body[body.find("one")] = 'x';
    write_text(path, body);
    CHECK_THROWS_WITH_AS(read_dataset<Post>(path),
                         doctest::Contains("manifest hash mismatch"), DataError);
}

TEST_CASE("reading a dataset as the wrong record type is rejected") {
    test::TempDir dir;
    std::vector<Post> posts{make_post("a", "one")};
    auto path = dir / "posts.jsonl";
    write_dataset(posts, path, "d");
    CHECK_THROWS_AS(read_dataset<PreferenceTriplet>(path), DataError);
}

TEST_CASE("writing an invalid record names its index") {
    test::TempDir dir;
    std::vector<Post> posts{make_post("a", "one"), make_post("", "bad")};
    CHECK_THROWS_WITH_AS(write_dataset(posts, dir / "p.jsonl", "d"),
                         doctest::Contains("record 1"), DataError);
    CHECK_FALSE(std::filesystem::exists(dir / "p.jsonl"));
}

TEST_CASE("per-line read errors name file and line") {
    test::TempDir dir;
    auto path = dir / "p.jsonl";
    write_text(path, R"({"id":"a","text":"fine","source":"other","meta":{},"created_at":12})"
                     "\n"
                     "{\"id\":\"b\"}\n");
    try {
        read_dataset<Post>(path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("p.jsonl:2") != std::string::npos);
    }
}

}  // TEST_SUITE
