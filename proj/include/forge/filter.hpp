#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/llm_client.hpp"

namespace forge::filter {

using corpus::Ideology;
using corpus::Post;

struct FilterVerdict {
    std::string post_id;
    int label = 0;  // 0..3 rubric score
    std::string raw_reply;
    bool kept = false;
};

void validate(const FilterVerdict& v);
void to_json(nlohmann::json& j, const FilterVerdict& v);
void from_json(const nlohmann::json& j, FilterVerdict& v);

struct FilterPrompt {
    std::string system;
    std::string user_template;  // contains {post}
};

// The 0-3 rubric prompt for the given ideology; the <Examples> slot is filled
// with caller-supplied few-shot text (empty by default).
FilterPrompt filter_prompt(Ideology ideology, const std::string& examples_text = "");

// Substitutes the post body into a {post} template.
std::string render_post(const std::string& user_template, const std::string& post_text);

// First standalone integer in the reply. Throws DataError when none is found
// or the value falls outside 0..3.
int parse_label(std::string_view reply);

struct FilterOptions {
    Ideology ideology = Ideology::right;
    int threshold = 2;  // keep labels >= threshold
    std::string model;
    std::string examples_text;
    int max_tokens = 8;
    std::uint64_t seed_salt = 0;
};

struct FilterOutput {
    std::vector<Post> kept;
    std::vector<FilterVerdict> verdicts;  // one per input post, input order
};

// Scores every post with the LLM judge and keeps those at or above threshold.
// Unparseable replies are retried once (fresh seed, temperature 0); persistent
// failures and transport errors are recorded kept=false with label 0.
FilterOutput filter_corpus(const std::vector<Post>& posts, const FilterOptions& opts,
                           llm::LlmClient& client);

}  // namespace forge::filter

namespace forge::corpus {
template <>
struct RecordKind<filter::FilterVerdict> {
    static constexpr const char* name = "filter_verdict";
};
}  // namespace forge::corpus
