#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "forge/dpo/loss.hpp"

namespace forge::dpo {

struct DpoConfig {
    double beta = 0.1;
    double lr = 0.0003;
    double weight_decay = 0.01;
    int batch = 64;
    int steps = 0;
    std::uint64_t seed = 0;
    int eval_every = 50;
    int lora_rank = 16;
    double lora_alpha = 32.0;
};

void validate(const DpoConfig& cfg);

struct TrainMetrics {
    long step = 0;
    double loss = 0.0;
    double mean_margin = 0.0;
    double pref_accuracy = 0.0;  // fraction of the batch with margin > 0
};

// Called at step 0, every eval_every steps, and at the final step.
using CheckpointHook =
    std::function<void(long step, const ToyLM& base, const std::vector<LoraAdapter>& adapters)>;

struct TrainResult {
    std::vector<TrainMetrics> metrics;  // one row per step, step 0 included
    std::vector<LoraAdapter> adapters;
};

// DPO over LoRA adapters on a frozen base: B=0 init (so step 0 evaluates at
// exactly the reference model), shuffled drop-last batches from cfg.seed,
// AdamW on adapter parameters only. Metrics record each batch's loss before
// its update. Deterministic for fixed (triplets, base, cfg).
TrainResult train(const std::vector<PreferenceTriplet>& triplets, const ToyLM& base,
                  const DpoConfig& cfg, const CheckpointHook& hook = {});

// Next-token cross-entropy on raw texts with the same adapter setup — the
// "no instruction tuning" baseline. Margin/accuracy columns are zero (no
// preference structure in this objective).
TrainResult train_ce_baseline(const std::vector<std::string>& texts, const ToyLM& base,
                              const DpoConfig& cfg, const CheckpointHook& hook = {});

// Fraction of triplets whose policy-vs-reference margin is positive.
double preference_accuracy(const ToyLM& policy, std::span<const LoraAdapter> adapters,
                           const ToyLM& reference, std::span<const PreferenceTriplet> triplets);

std::string metrics_csv(std::span<const TrainMetrics> metrics);
std::vector<TrainMetrics> parse_metrics_csv(const std::string& text);

}  // namespace forge::dpo
