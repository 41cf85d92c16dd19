#include "forge/synth.hpp"

#include <cctype>
#include <functional>

#include "forge/hash.hpp"
#include "forge/io.hpp"

namespace forge::synth {

namespace {

const char* kInstructionRight =
    "You are an assistant who supports the American Republican party. For the following input "
    "from right, Republican, and conservative ideology, your job is to generate an instruction "
    "that can be answered by the input post. Your output should be in the form of an "
    "instruction not a statement. <Examples>";

const char* kInstructionLeft =
    "You are an assistant who supports the American Democratic party. For the following input "
    "from left, Democratic, and liberal ideology, your job is to generate an instruction that "
    "can be answered by the input post. Your output should be in the form of an instruction "
    "not a statement. <Examples>";

const char* kNegativeRight =
    "You are an assistant who supports the American Democratic party. For the following pair "
    "of instruction and response, write a an alternative response that is in line with the "
    "Democratic party’s views. The alternative response should be simmilar in length and "
    "argument points to the original response. Respond directly with the alternative response "
    "without discourse marker, prefixes or justifications.";

const char* kNegativeLeft =
    "You are an assistant who supports the American Republican party. For the following pair "
    "of instruction and response, write a an alternative response that is in line with the "
    "Republican party’s views. The alternative response should be simmilar in length and "
    "argument points to the original response. Respond directly with the alternative response "
    "without discourse marker, prefixes or justifications. <Example>";

// Positive-sample prompts are the negative templates with the parties swapped,
// so each ideology gets a same-party "alternative response" prompt.
const char* kPositiveRight =
    "You are an assistant who supports the American Republican party. For the following pair "
    "of instruction and response, write a an alternative response that is in line with the "
    "Republican party’s views. The alternative response should be simmilar in length and "
    "argument points to the original response. Respond directly with the alternative response "
    "without discourse marker, prefixes or justifications.";

const char* kPositiveLeft =
    "You are an assistant who supports the American Democratic party. For the following pair "
    "of instruction and response, write a an alternative response that is in line with the "
    "Democratic party’s views. The alternative response should be simmilar in length and "
    "argument points to the original response. Respond directly with the alternative response "
    "without discourse marker, prefixes or justifications.";

constexpr double kMinLengthRatio = 0.5;
constexpr double kMaxLengthRatio = 2.0;

struct TemplateFile {
    const char* name;
    std::string PromptTemplates::* field;
};

const TemplateFile kTemplateFiles[] = {
    {"instruction_system_right.txt", &PromptTemplates::instruction_system_right},
    {"instruction_system_left.txt", &PromptTemplates::instruction_system_left},
    {"positive_system_right.txt", &PromptTemplates::positive_system_right},
    {"positive_system_left.txt", &PromptTemplates::positive_system_left},
    {"negative_system_right.txt", &PromptTemplates::negative_system_right},
    {"negative_system_left.txt", &PromptTemplates::negative_system_left},
    {"instruction_user.txt", &PromptTemplates::instruction_user},
    {"pair_user.txt", &PromptTemplates::pair_user},
};

std::string fill_examples(std::string prompt, const std::string& examples_text) {
    for (const char* slot : {"<Examples>", "<Example>"}) {
        auto pos = prompt.find(slot);
        if (pos != std::string::npos) {
            prompt.replace(pos, std::string::traits_type::length(slot), examples_text);
        }
    }
    while (!prompt.empty() && std::isspace(static_cast<unsigned char>(prompt.back())) != 0) {
        prompt.pop_back();
    }
    return prompt;
}

std::string replace_once(std::string text, std::string_view slot, const std::string& value,
                         const char* what) {
    auto pos = text.find(slot);
    if (pos == std::string::npos) {
        throw DataError(std::string(what) + " template lacks " + std::string(slot) +
                        " placeholder");
    }
    text.replace(pos, slot.size(), value);
    return text;
}

bool same_normalized(const std::string& a, const std::string& b) {
    return corpus::normalization_key(a) == corpus::normalization_key(b);
}

bool length_in_band(const std::string& reply, const std::string& reference) {
    double ratio = reference.empty()
                       ? 1.0
                       : static_cast<double>(reply.size()) / static_cast<double>(reference.size());
    return ratio >= kMinLengthRatio && ratio <= kMaxLengthRatio;
}

// Per-reply verdict: accept, hard-reject (retry then fail), or soft-reject
// (retry then accept with a flag).
struct GuardResult {
    enum class Verdict { accept, hard, soft } verdict = Verdict::accept;
    std::string reason;
};

using Guard = std::function<GuardResult(const std::string& reply)>;

GuardResult guard_accept() {
    return {};
}
GuardResult guard_hard(std::string reason) {
    return {GuardResult::Verdict::hard, std::move(reason)};
}
GuardResult guard_soft(std::string reason) {
    return {GuardResult::Verdict::soft, std::move(reason)};
}

Guard instruction_guard(const Post& post) {
    return [text = post.text](const std::string& reply) {
        if (corpus::trim(reply).empty()) {
            return guard_hard("empty generation");
        }
        if (same_normalized(reply, text)) {
            return guard_hard("instruction echoes the post");
        }
        return guard_accept();
    };
}

Guard positive_guard(const std::string& seed_response) {
    return [seed = seed_response](const std::string& reply) {
        if (corpus::trim(reply).empty()) {
            return guard_hard("empty generation");
        }
        if (same_normalized(reply, seed)) {
            return guard_hard("positive not distinct from seed response");
        }
        return guard_accept();
    };
}

Guard negative_guard(const std::string& positive) {
    return [pos = positive](const std::string& reply) {
        if (corpus::trim(reply).empty()) {
            return guard_hard("empty generation");
        }
        if (same_normalized(reply, pos)) {
            return guard_hard("negative not distinct from positive");
        }
        if (!length_in_band(reply, pos)) {
            return guard_soft("length ratio outside [0.5, 2.0] vs positive");
        }
        return guard_accept();
    };
}

const std::string& system_for(const PromptTemplates& tpl, const char* phase, Ideology ideology) {
    std::string_view p(phase);
    bool right = ideology == Ideology::right;
    if (p == "instruction") {
        return right ? tpl.instruction_system_right : tpl.instruction_system_left;
    }
    if (p == "positive") {
        return right ? tpl.positive_system_right : tpl.positive_system_left;
    }
    return right ? tpl.negative_system_right : tpl.negative_system_left;
}

llm::ChatRequest make_request(const GenOptions& opts, const std::string& system,
                              const std::string& user, const std::string& tag, int attempt) {
    llm::ChatRequest req;
    req.model = opts.model;
    req.system = system;
    req.user = user;
    req.temperature = opts.temperature;
    req.max_tokens = opts.max_tokens;
    req.seed = derive_seed(tag, attempt, opts.seed_salt);
    return req;
}

// Outcome of one item after at most two attempts.
struct Settled {
    bool ok = false;
    std::string text;
    std::string failure;     // set when !ok
    std::string flag;        // set when accepted via soft fallback
};

// Runs one generation phase over `n` items with bounded client concurrency:
// a full round, then a single retry round for items that failed transport or
// a guard. Soft-guard texts are kept as fallbacks and flagged on exhaustion.
std::vector<Settled> run_phase(llm::LlmClient& client, std::size_t n,
                               const std::function<llm::ChatRequest(std::size_t, int)>& request_for,
                               const std::function<Guard(std::size_t)>& guard_for) {
    std::vector<Settled> settled(n);
    std::vector<std::string> soft_text(n);
    std::vector<std::string> soft_reason(n);
    std::vector<std::size_t> pending(n);
    for (std::size_t i = 0; i < n; ++i) {
        pending[i] = i;
    }
    for (int attempt = 0; attempt < 2 && !pending.empty(); ++attempt) {
        std::vector<llm::ChatRequest> reqs;
        reqs.reserve(pending.size());
        for (std::size_t i : pending) {
            reqs.push_back(request_for(i, attempt));
        }
        auto outcomes = client.complete_many(reqs);
        std::vector<std::size_t> next;
        for (std::size_t k = 0; k < pending.size(); ++k) {
            std::size_t i = pending[k];
            if (!outcomes[k].ok) {
                settled[i].failure = outcomes[k].error;
                next.push_back(i);
                continue;
            }
            std::string reply = corpus::trim(outcomes[k].response.text);
            GuardResult g = guard_for(i)(reply);
            switch (g.verdict) {
                case GuardResult::Verdict::accept:
                    settled[i].ok = true;
                    settled[i].text = std::move(reply);
                    settled[i].failure.clear();
                    break;
                case GuardResult::Verdict::hard:
                    settled[i].failure = g.reason;
                    next.push_back(i);
                    break;
                case GuardResult::Verdict::soft:
                    soft_text[i] = std::move(reply);
                    soft_reason[i] = g.reason;
                    settled[i].failure = g.reason;
                    next.push_back(i);
                    break;
            }
        }
        pending = std::move(next);
    }
    for (std::size_t i : pending) {
        if (!soft_text[i].empty()) {
            settled[i].ok = true;
            settled[i].text = soft_text[i];
            settled[i].flag = soft_reason[i];
            settled[i].failure.clear();
        }
    }
    return settled;
}

void note_issue(SynthReport* report, std::vector<ItemIssue> SynthReport::* list, std::size_t index,
                const std::string& origin, const std::string& detail) {
    if (report != nullptr) {
        (report->*list).push_back(ItemIssue{index, origin, detail});
    }
}

std::string pair_user_text(const PromptTemplates& tpl, const std::string& instruction,
                           const std::string& response) {
    std::string user = replace_once(tpl.pair_user, "{instruction}", instruction, "pair user");
    return replace_once(std::move(user), "{response}", response, "pair user");
}

}  // namespace

PromptTemplates default_templates() {
    PromptTemplates t;
    t.instruction_system_right = kInstructionRight;
    t.instruction_system_left = kInstructionLeft;
    t.positive_system_right = kPositiveRight;
    t.positive_system_left = kPositiveLeft;
    t.negative_system_right = kNegativeRight;
    t.negative_system_left = kNegativeLeft;
    t.instruction_user = "{post}";
    t.pair_user = "Instruction: {instruction}\nResponse: {response}";
    return t;
}

PromptTemplates load_templates(const std::filesystem::path& dir) {
    PromptTemplates t = default_templates();
    for (const auto& f : kTemplateFiles) {
        auto path = dir / f.name;
        if (std::filesystem::exists(path)) {
            std::string text = read_file(path);
            if (!text.empty() && text.back() == '\n') {
                text.pop_back();
            }
            t.*(f.field) = std::move(text);
        }
    }
    return t;
}

void dump_templates(const std::filesystem::path& dir) {
    PromptTemplates t = default_templates();
    for (const auto& f : kTemplateFiles) {
        atomic_write_file(dir / f.name, t.*(f.field) + "\n");
    }
}

std::string gen_instruction(const Post& post, const GenOptions& opts, llm::LlmClient& client) {
    PromptTemplates defaults;
    const PromptTemplates& tpl =
        opts.templates != nullptr ? *opts.templates : (defaults = default_templates());
    std::string system = fill_examples(system_for(tpl, "instruction", opts.ideology),
                                       opts.examples_text);
    std::string user = replace_once(tpl.instruction_user, "{post}", post.text, "instruction user");
    auto settled = run_phase(
        client, 1,
        [&](std::size_t, int attempt) {
            return make_request(opts, system, user, post.id + "/instruction", attempt);
        },
        [&](std::size_t) { return instruction_guard(post); });
    if (!settled[0].ok) {
        throw DataError("instruction generation failed for post " + post.id + ": " +
                        settled[0].failure);
    }
    return settled[0].text;
}

std::string gen_positive(const std::string& instruction, const std::string& seed_response,
                         const std::string& origin_post_id, const GenOptions& opts,
                         llm::LlmClient& client) {
    PromptTemplates defaults;
    const PromptTemplates& tpl =
        opts.templates != nullptr ? *opts.templates : (defaults = default_templates());
    std::string system = fill_examples(system_for(tpl, "positive", opts.ideology),
                                       opts.examples_text);
    std::string user = pair_user_text(tpl, instruction, seed_response);
    auto settled = run_phase(
        client, 1,
        [&](std::size_t, int attempt) {
            return make_request(opts, system, user, origin_post_id + "/positive", attempt);
        },
        [&](std::size_t) { return positive_guard(seed_response); });
    if (!settled[0].ok) {
        throw DataError("positive generation failed for post " + origin_post_id + ": " +
                        settled[0].failure);
    }
    return settled[0].text;
}

std::string gen_negative(const std::string& instruction, const std::string& positive,
                         const std::string& origin_post_id, const GenOptions& opts,
                         llm::LlmClient& client, bool* length_flag) {
    PromptTemplates defaults;
    const PromptTemplates& tpl =
        opts.templates != nullptr ? *opts.templates : (defaults = default_templates());
    std::string system = fill_examples(system_for(tpl, "negative", opts.ideology),
                                       opts.examples_text);
    std::string user = pair_user_text(tpl, instruction, positive);
    auto settled = run_phase(
        client, 1,
        [&](std::size_t, int attempt) {
            return make_request(opts, system, user, origin_post_id + "/negative", attempt);
        },
        [&](std::size_t) { return negative_guard(positive); });
    if (!settled[0].ok) {
        throw DataError("negative generation failed for post " + origin_post_id + ": " +
                        settled[0].failure);
    }
    if (length_flag != nullptr) {
        *length_flag = !settled[0].flag.empty();
    }
    return settled[0].text;
}

std::vector<InstructionPair> build_base_dataset(const std::vector<Post>& kept_posts,
                                                const GenOptions& opts, llm::LlmClient& client,
                                                SynthReport* report) {
    PromptTemplates defaults;
    const PromptTemplates& tpl =
        opts.templates != nullptr ? *opts.templates : (defaults = default_templates());
    std::string system = fill_examples(system_for(tpl, "instruction", opts.ideology),
                                       opts.examples_text);
    auto settled = run_phase(
        client, kept_posts.size(),
        [&](std::size_t i, int attempt) {
            std::string user =
                replace_once(tpl.instruction_user, "{post}", kept_posts[i].text,
                             "instruction user");
            return make_request(opts, system, user, kept_posts[i].id + "/instruction", attempt);
        },
        [&](std::size_t i) { return instruction_guard(kept_posts[i]); });

    std::vector<InstructionPair> out;
    for (std::size_t i = 0; i < kept_posts.size(); ++i) {
        if (!settled[i].ok) {
            note_issue(report, &SynthReport::failures, i, kept_posts[i].id, settled[i].failure);
            continue;
        }
        if (!settled[i].flag.empty()) {
            note_issue(report, &SynthReport::flags, i, kept_posts[i].id, settled[i].flag);
        }
        InstructionPair pair;
        pair.instruction = settled[i].text;
        pair.response = kept_posts[i].text;
        pair.origin_post_id = kept_posts[i].id;
        pair.ideology = opts.ideology;
        pair.provenance = corpus::Provenance::base;
        out.push_back(std::move(pair));
    }
    return out;
}

std::vector<InstructionPair> build_synthetic_dataset(const std::vector<InstructionPair>& base,
                                                     const GenOptions& opts,
                                                     llm::LlmClient& client, SynthReport* report) {
    PromptTemplates defaults;
    const PromptTemplates& tpl =
        opts.templates != nullptr ? *opts.templates : (defaults = default_templates());
    std::string system = fill_examples(system_for(tpl, "positive", opts.ideology),
                                       opts.examples_text);
    auto settled = run_phase(
        client, base.size(),
        [&](std::size_t i, int attempt) {
            std::string user = pair_user_text(tpl, base[i].instruction, base[i].response);
            return make_request(opts, system, user, base[i].origin_post_id + "/positive",
                                attempt);
        },
        [&](std::size_t i) { return positive_guard(base[i].response); });

    std::vector<InstructionPair> out;
    for (std::size_t i = 0; i < base.size(); ++i) {
        if (!settled[i].ok) {
            note_issue(report, &SynthReport::failures, i, base[i].origin_post_id,
                       settled[i].failure);
            continue;
        }
        InstructionPair pair;
        pair.instruction = base[i].instruction;
        pair.response = settled[i].text;
        pair.origin_post_id = base[i].origin_post_id;
        pair.ideology = opts.ideology;
        pair.provenance = corpus::Provenance::synthetic;
        out.push_back(std::move(pair));
    }
    return out;
}

std::vector<PreferenceTriplet> build_preference_dataset(const std::vector<InstructionPair>& base,
                                                        const GenOptions& opts,
                                                        llm::LlmClient& client,
                                                        SynthReport* report) {
    PromptTemplates defaults;
    const PromptTemplates& tpl =
        opts.templates != nullptr ? *opts.templates : (defaults = default_templates());
    std::string pos_system = fill_examples(system_for(tpl, "positive", opts.ideology),
                                           opts.examples_text);
    std::string neg_system = fill_examples(system_for(tpl, "negative", opts.ideology),
                                           opts.examples_text);

    auto positives = run_phase(
        client, base.size(),
        [&](std::size_t i, int attempt) {
            std::string user = pair_user_text(tpl, base[i].instruction, base[i].response);
            return make_request(opts, pos_system, user, base[i].origin_post_id + "/positive",
                                attempt);
        },
        [&](std::size_t i) { return positive_guard(base[i].response); });

    // Negatives only for items whose positive succeeded; indices map back.
    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < base.size(); ++i) {
        if (positives[i].ok) {
            live.push_back(i);
        } else {
            note_issue(report, &SynthReport::failures, i, base[i].origin_post_id,
                       "positive: " + positives[i].failure);
        }
    }
    auto negatives = run_phase(
        client, live.size(),
        [&](std::size_t k, int attempt) {
            std::size_t i = live[k];
            std::string user = pair_user_text(tpl, base[i].instruction, positives[i].text);
            return make_request(opts, neg_system, user, base[i].origin_post_id + "/negative",
                                attempt);
        },
        [&](std::size_t k) { return negative_guard(positives[live[k]].text); });

    std::vector<PreferenceTriplet> out;
    for (std::size_t k = 0; k < live.size(); ++k) {
        std::size_t i = live[k];
        if (!negatives[k].ok) {
            note_issue(report, &SynthReport::failures, i, base[i].origin_post_id,
                       "negative: " + negatives[k].failure);
            continue;
        }
        if (!negatives[k].flag.empty()) {
            note_issue(report, &SynthReport::flags, i, base[i].origin_post_id,
                       negatives[k].flag);
        }
        PreferenceTriplet t;
        t.instruction = base[i].instruction;
        t.chosen = positives[i].text;
        t.rejected = negatives[k].text;
        t.origin_post_id = base[i].origin_post_id;
        t.ideology = opts.ideology;
        try {
            corpus::validate(t);
        } catch (const DataError& e) {
            note_issue(report, &SynthReport::failures, i, base[i].origin_post_id, e.what());
            continue;
        }
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace forge::synth
