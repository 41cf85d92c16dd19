#pragma once

#include <span>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/dpo/lora.hpp"

namespace forge::dpo {

using corpus::PreferenceTriplet;

double sigmoid(double x);

// ln(1 + e^{-x}), stable for large |x|.
double softplus_neg(double x);

// mean over margins of -ln sigmoid(beta * margin); >= 0, equals ln 2 iff all
// margins are zero.
double dpo_loss_from_margins(std::span<const double> margins, double beta);

// One triplet tokenized once, with the frozen reference log-probabilities
// baked in so training never re-evaluates the reference model.
struct PreparedTriplet {
    std::vector<int> prompt;
    std::vector<int> chosen;
    std::vector<int> rejected;
    double ref_chosen = 0.0;
    double ref_rejected = 0.0;
};

std::vector<PreparedTriplet> prepare_triplets(const ToyLM& reference,
                                              std::span<const PreferenceTriplet> batch);

struct BatchEval {
    double loss = 0.0;
    std::vector<double> margins;
};

BatchEval eval_batch(const ToyLM& policy, std::span<const LoraAdapter> adapters,
                     std::span<const PreparedTriplet> batch, double beta);

// Gradient of one adapter, same shapes as its A/B.
struct AdapterGrad {
    Mat a;
    Mat b;
};

std::vector<AdapterGrad> zero_grads(std::span<const LoraAdapter> adapters);

// Loss plus analytic gradients with respect to every adapter entry; base
// weights receive no gradient.
BatchEval backprop_batch(const ToyLM& policy, std::span<const LoraAdapter> adapters,
                         std::span<const PreparedTriplet> batch, double beta,
                         std::vector<AdapterGrad>& grads);

// Mean per-token cross-entropy over raw token sequences (empty prompt), the
// objective of the no-instruction baseline. Gradients accumulate into `grads`
// when non-null.
double ce_batch(const ToyLM& policy, std::span<const LoraAdapter> adapters,
                std::span<const std::vector<int>> seqs, std::vector<AdapterGrad>* grads);

// Convenience forms over raw triplets (reference evaluated on the fly).
double dpo_loss(const ToyLM& policy, std::span<const LoraAdapter> adapters,
                const ToyLM& reference, std::span<const PreferenceTriplet> batch, double beta);

std::vector<AdapterGrad> backprop(const ToyLM& policy, std::span<const LoraAdapter> adapters,
                                  const ToyLM& reference,
                                  std::span<const PreferenceTriplet> batch, double beta);

// Central-difference verification of backprop: perturbs every adapter entry
// by ±epsilon and returns the max over parameters of
// |analytic - numeric| / max(1e-12, |analytic| + |numeric|).
double fd_check(const ToyLM& policy, std::span<const LoraAdapter> adapters,
                const ToyLM& reference, std::span<const PreferenceTriplet> batch, double beta,
                double epsilon);

}  // namespace forge::dpo
