#pragma once

#include <span>
#include <vector>

namespace forge::dpo {

struct AdamConfig {
    double lr = 0.0003;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;  // decoupled, adapters only
};

// First/second moment accumulators for one parameter tensor.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
};

// One Adam update with bias correction and decoupled weight decay:
//   p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
// step_index is 1-based.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               long step_index, const AdamConfig& cfg);

}  // namespace forge::dpo
