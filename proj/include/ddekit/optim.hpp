#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "ddekit/errors.hpp"

namespace ddekit {

/// Adam moments. `n_decayed` marks the leading params subject to weight
/// decay; the trailing (delay) parameters are exempt.
struct AdamState {
    std::vector<double> m, v;
    long step = 0;
    std::size_t n_decayed = 0;

    AdamState() = default;
    AdamState(std::size_t n_params, std::size_t n_decayed_params)
        : m(n_params, 0.0), v(n_params, 0.0), n_decayed(n_decayed_params) {}
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One Adam update with the additive weight-decay term (grad + wd * param)
/// folded into the gradient before the moment updates, matching the usual
/// L2-style optimizer option.
inline void adam_step(std::span<double> params, std::span<const double> grads,
                      AdamState& state, double lr, double weight_decay,
                      const AdamConfig& cfg = {}) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw dimension_error("adam_step: shape mismatch");
    for (double g : grads)
        if (!std::isfinite(g)) throw numeric_error("adam_step: non-finite gradient");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        double g = grads[i];
        if (i < state.n_decayed) g += weight_decay * params[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

/// Per-stage decay factor: applying gamma N times takes lr_init to lr_final.
inline double scheduler_gamma(double lr_init, double lr_final, int n) {
    if (n < 1) throw config_error("scheduler_gamma: n must be >= 1");
    if (!(lr_init > 0.0) || !(lr_final > 0.0))
        throw config_error("scheduler_gamma: rates must be positive");
    return std::exp(std::log(lr_final / lr_init) / static_cast<double>(n));
}

} // namespace ddekit
