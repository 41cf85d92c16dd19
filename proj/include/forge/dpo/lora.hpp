#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "forge/dpo/model.hpp"
#include "forge/dpo/rng.hpp"

namespace forge::dpo {

enum class LoraTarget { hidden, output };

std::string to_string(LoraTarget t);
LoraTarget lora_target_from_string(const std::string& s);

// Low-rank delta for one base matrix: effective change (alpha/rank) · B · A.
// B starts at zero so an untrained adapter is a no-op.
struct LoraAdapter {
    LoraTarget target = LoraTarget::hidden;
    int rank = 16;
    double alpha = 32.0;
    Mat a;  // rank x n_in
    Mat b;  // n_out x rank
    double scaling() const { return alpha / static_cast<double>(rank); }
};

void validate(const LoraAdapter& adapter, const ToyLM& base);

// One adapter per target (hidden first, then output), B = 0 and
// A ~ 0.01 · uniform(-1/sqrt(n_in), +1/sqrt(n_in)) drawn in fixed order.
std::vector<LoraAdapter> init_adapters(const ToyLM& base, int rank, double alpha, Rng& rng);

// Folds each adapter's delta into its target matrix; the result carries no
// adapters.
ToyLM merge_lora(const ToyLM& base, std::span<const LoraAdapter> adapters);

// Per-step activations recorded during a forward pass, enough to replay the
// chain rule without recomputation.
struct StepTrace {
    Vec input;   // 2d: concat(prev embedding, context)
    Vec hidden;  // h: tanh activations
    Vec probs;   // V: softmax
    int target = 0;
};

struct SeqTrace {
    std::vector<StepTrace> steps;
    double logprob = 0.0;
};

// Sum of per-token log-softmax probabilities of `completion` given `prompt`,
// with adapter deltas applied in factored form (never merged). Pass an empty
// adapter span to evaluate the base model. Throws DataError on an empty
// completion.
double seq_logprob_ids(const ToyLM& m, std::span<const LoraAdapter> adapters,
                       std::span<const int> prompt, std::span<const int> completion,
                       SeqTrace* trace = nullptr);

double seq_logprob(const ToyLM& m, std::span<const LoraAdapter> adapters, std::string_view prompt,
                   std::string_view completion);

// Greedy decoding for the chat shim: always the lowest-index argmax token,
// OOV/BOS render as empty text.
std::string greedy_generate(const ToyLM& m, std::span<const LoraAdapter> adapters,
                            std::string_view prompt, int max_new_tokens = 64);

}  // namespace forge::dpo
