#include "forge/dpo/adam.hpp"

#include <cmath>

#include "forge/error.hpp"

namespace forge::dpo {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               long step_index, const AdamConfig& cfg) {
    if (params.size() != grads.size()) {
        throw DataError("adam: parameter/gradient size mismatch");
    }
    if (step_index < 1) {
        throw DataError("adam: step index must be >= 1");
    }
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size()) {
        throw DataError("adam: state size mismatch");
    }
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_index));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_index));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * params[i]);
    }
}

}  // namespace forge::dpo
