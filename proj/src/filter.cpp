#include "forge/filter.hpp"

#include <cctype>

#include "forge/hash.hpp"

namespace forge::filter {

namespace {

const char* kRightSystem =
    "You are an assistant. You will be given a post from social media that will be used to "
    "express right, republican, and conservative political ideology. Your job is to provide an "
    "integer 0, 1, 2, or 3, where 0 means that the post doesn't include any political "
    "expression, and cannot be used to infer political ideology. 1 means that the post contains "
    "political expression but is related to left-leaning libertarian ideology, not right, "
    "republican, and conservative political ideology. 2 means that the post can be used to "
    "express right, republican, and conservative political ideology. 3 means that the post is "
    "explicitly used to strongly express right, republican, and conservative political "
    "ideology. <Examples>";

const char* kLeftSystem =
    "You are an assistant. You will be given a post from social media that will be used to "
    "express left, Democratic, and liberal political ideology. Your job is to provide an "
    "integer 0, 1, 2, or 3, where 0 means that the post doesn't include any political "
    "expression, and cannot be used to infer political ideology. 1 means that the post contains "
    "political expression but is related to right-leaning conservative ideology, not left, "
    "Democratic, and liberal political ideology. 2 means that the post can be used to express "
    "left, Democratic, and liberal political ideology. 3 means that the post is explicitly used "
    "to strongly express left, Democratic, and liberal political ideology. <Examples>";

std::string fill_examples(std::string prompt, const std::string& examples_text) {
    const std::string slot = "<Examples>";
    auto pos = prompt.find(slot);
    if (pos != std::string::npos) {
        prompt.replace(pos, slot.size(), examples_text);
    }
    while (!prompt.empty() && std::isspace(static_cast<unsigned char>(prompt.back())) != 0) {
        prompt.pop_back();
    }
    return prompt;
}

}  // namespace

void validate(const FilterVerdict& v) {
    if (v.post_id.empty()) {
        throw DataError("verdict post_id empty");
    }
    if (v.label < 0 || v.label > 3) {
        throw DataError("verdict label out of range");
    }
}

void to_json(nlohmann::json& j, const FilterVerdict& v) {
    j = nlohmann::json{{"post_id", v.post_id},
                       {"label", v.label},
                       {"raw_reply", v.raw_reply},
                       {"kept", v.kept}};
}

void from_json(const nlohmann::json& j, FilterVerdict& v) {
    v.post_id = j.at("post_id").get<std::string>();
    v.label = j.at("label").get<int>();
    v.raw_reply = j.at("raw_reply").get<std::string>();
    v.kept = j.at("kept").get<bool>();
}

FilterPrompt filter_prompt(Ideology ideology, const std::string& examples_text) {
    FilterPrompt p;
    p.system = fill_examples(ideology == Ideology::right ? kRightSystem : kLeftSystem,
                             examples_text);
    p.user_template = "{post}";
    return p;
}

std::string render_post(const std::string& user_template, const std::string& post_text) {
    const std::string slot = "{post}";
    auto pos = user_template.find(slot);
    if (pos == std::string::npos) {
        throw DataError("user template lacks {post} placeholder");
    }
    std::string out = user_template;
    out.replace(pos, slot.size(), post_text);
    return out;
}

int parse_label(std::string_view reply) {
    for (std::size_t i = 0; i < reply.size(); ++i) {
        if (std::isdigit(static_cast<unsigned char>(reply[i])) == 0) {
            continue;
        }
        std::size_t end = i;
        while (end < reply.size() && std::isdigit(static_cast<unsigned char>(reply[end])) != 0) {
            ++end;
        }
        bool left_ok = i == 0 || std::isalnum(static_cast<unsigned char>(reply[i - 1])) == 0;
        bool right_ok =
            end == reply.size() || std::isalnum(static_cast<unsigned char>(reply[end])) == 0;
        if (!left_ok || !right_ok) {
            i = end;
            continue;
        }
        bool negative = i > 0 && reply[i - 1] == '-';
        std::string digits(reply.substr(i, end - i));
        long value = 0;
        try {
            value = std::stol(digits);
        } catch (const std::exception&) {
            value = 99;  // absurdly long digit run; certainly out of range
        }
        if (negative) {
            value = -value;
        }
        if (value < 0 || value > 3) {
            throw DataError("label out of range: " + (negative ? "-" + digits : digits));
        }
        return static_cast<int>(value);
    }
    throw DataError("no integer in judge reply");
}

FilterOutput filter_corpus(const std::vector<Post>& posts, const FilterOptions& opts,
                           llm::LlmClient& client) {
    if (opts.threshold < 1 || opts.threshold > 3) {
        throw UsageError("filter threshold must be 1, 2, or 3");
    }
    if (opts.model.empty()) {
        throw UsageError("filter needs a judge model name");
    }
    const FilterPrompt prompt = filter_prompt(opts.ideology, opts.examples_text);

    auto make_request = [&](const Post& post, int attempt) {
        llm::ChatRequest req;
        req.model = opts.model;
        req.system = prompt.system;
        req.user = render_post(prompt.user_template, post.text);
        req.temperature = llm::kJudgeTemperature;
        req.max_tokens = opts.max_tokens;
        req.seed = derive_seed(post.id, attempt, opts.seed_salt);
        return req;
    };

    std::vector<llm::ChatRequest> reqs;
    reqs.reserve(posts.size());
    for (const auto& post : posts) {
        reqs.push_back(make_request(post, 0));
    }
    auto outcomes = client.complete_many(reqs);

    FilterOutput out;
    out.verdicts.resize(posts.size());
    std::vector<std::size_t> retry_idx;
    auto settle = [&](std::size_t i, const llm::ChatOutcome& o) -> bool {
        FilterVerdict& v = out.verdicts[i];
        v.post_id = posts[i].id;
        if (!o.ok) {
            v.raw_reply = "[transport error] " + o.error;
            return false;
        }
        v.raw_reply = o.response.text;
        try {
            v.label = parse_label(o.response.text);
            return true;
        } catch (const DataError&) {
            return false;
        }
    };
    for (std::size_t i = 0; i < posts.size(); ++i) {
        if (!settle(i, outcomes[i])) {
            retry_idx.push_back(i);
        }
    }

    if (!retry_idx.empty()) {
        std::vector<llm::ChatRequest> retry_reqs;
        retry_reqs.reserve(retry_idx.size());
        for (std::size_t i : retry_idx) {
            retry_reqs.push_back(make_request(posts[i], 1));
        }
        auto retry_outcomes = client.complete_many(retry_reqs);
        for (std::size_t k = 0; k < retry_idx.size(); ++k) {
            std::size_t i = retry_idx[k];
            if (!settle(i, retry_outcomes[k])) {
                out.verdicts[i].label = 0;  // recorded failure
            }
        }
    }

    for (std::size_t i = 0; i < posts.size(); ++i) {
        out.verdicts[i].kept = out.verdicts[i].label >= opts.threshold;
        if (out.verdicts[i].kept) {
            out.kept.push_back(posts[i]);
        }
    }
    return out;
}

}  // namespace forge::filter
