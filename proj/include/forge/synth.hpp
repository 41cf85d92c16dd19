#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/llm_client.hpp"

namespace forge::synth {

using corpus::Ideology;
using corpus::InstructionPair;
using corpus::Post;
using corpus::PreferenceTriplet;

// System/user templates for the three generation phases, keyed by ideology.
// All are plain text with {post}, {instruction}, {response} placeholders and
// an <Examples> few-shot slot, and can be overridden from a directory of
// same-named .txt files.
struct PromptTemplates {
    std::string instruction_system_right;
    std::string instruction_system_left;
    std::string positive_system_right;
    std::string positive_system_left;
    std::string negative_system_right;
    std::string negative_system_left;
    std::string instruction_user;  // {post}
    std::string pair_user;         // {instruction}, {response}
};

PromptTemplates default_templates();

// Reads overrides from `dir` (missing files keep their defaults).
PromptTemplates load_templates(const std::filesystem::path& dir);

// Writes the default template set into `dir`, one file per template.
void dump_templates(const std::filesystem::path& dir);

struct GenOptions {
    Ideology ideology = Ideology::right;
    std::string model;
    double temperature = llm::kGenerationTemperature;
    int max_tokens = 512;
    std::string examples_text;
    const PromptTemplates* templates = nullptr;  // null -> defaults
    std::uint64_t seed_salt = 0;
};

// One failed or flagged item in a batch build.
struct ItemIssue {
    std::size_t index = 0;
    std::string origin_post_id;
    std::string detail;
};

struct SynthReport {
    std::vector<ItemIssue> failures;  // items dropped from the output
    std::vector<ItemIssue> flags;     // items kept but suspicious
};

// Phase 1: one instruction answerable by the post. Guards: non-empty, not an
// echo of the post (normalized). One retry, then DataError.
std::string gen_instruction(const Post& post, const GenOptions& opts, llm::LlmClient& client);

// Phase 2: an ideology-aligned response to the instruction, seeded by the
// existing response. Guards: non-empty, distinct from the seed (normalized).
std::string gen_positive(const std::string& instruction, const std::string& seed_response,
                         const std::string& origin_post_id, const GenOptions& opts,
                         llm::LlmClient& client);

// Phase 3: an opposing-ideology response similar in length and argument
// points. Hard guards as gen_positive; the [0.5, 2.0] length-ratio band gets
// one retry and then accepts with a flag.
std::string gen_negative(const std::string& instruction, const std::string& positive,
                         const std::string& origin_post_id, const GenOptions& opts,
                         llm::LlmClient& client, bool* length_flag = nullptr);

// Batch builders: input order preserved, per-item failures collected in the
// report instead of aborting (|inputs| = |outputs| + |failures|).
std::vector<InstructionPair> build_base_dataset(const std::vector<Post>& kept_posts,
                                                const GenOptions& opts, llm::LlmClient& client,
                                                SynthReport* report = nullptr);

std::vector<InstructionPair> build_synthetic_dataset(const std::vector<InstructionPair>& base,
                                                     const GenOptions& opts,
                                                     llm::LlmClient& client,
                                                     SynthReport* report = nullptr);

std::vector<PreferenceTriplet> build_preference_dataset(const std::vector<InstructionPair>& base,
                                                        const GenOptions& opts,
                                                        llm::LlmClient& client,
                                                        SynthReport* report = nullptr);

}  // namespace forge::synth
