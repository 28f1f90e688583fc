#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ddekit/errors.hpp"
#include "ddekit/trajectory.hpp"

namespace ddekit {

/// Sampled squared-error loss over a trajectory: mean (or sum, per the flags)
/// over sample times and observed coordinates of (x(t_i)[j] - target_i[j])^2.
/// Sample times must lie on the solver grid; they are snapped to the nearest
/// node within 1e-9*dt and rejected otherwise.
struct LossSpec {
    std::vector<double> sample_times;          // strictly increasing, in (t0, t1]
    std::vector<std::vector<double>> targets;  // one vector of observed width per sample
    std::vector<int> observed_indices;         // coordinates of the state that are observed
    bool mean_over_samples = true;
    bool mean_over_dims = true;

    double normalization() const {
        double n = 1.0;
        if (mean_over_samples) n *= static_cast<double>(sample_times.size());
        if (mean_over_dims) n *= static_cast<double>(observed_indices.size());
        return n;
    }
};

/// Snapped node index of each sample time; validates alignment, ordering,
/// ranges, and target shapes.
inline std::vector<int> loss_node_indices(const LossSpec& loss, double t0, double dt,
                                          int n_steps, int state_dim) {
    if (loss.sample_times.empty()) throw config_error("loss: no sample times");
    if (loss.targets.size() != loss.sample_times.size())
        throw config_error("loss: targets/sample_times length mismatch");
    if (loss.observed_indices.empty()) throw config_error("loss: empty observation set");
    for (int idx : loss.observed_indices)
        if (idx < 0 || idx >= state_dim)
            throw config_error("loss: observed index " + std::to_string(idx) +
                               " out of range for state_dim " + std::to_string(state_dim));
    std::vector<int> nodes(loss.sample_times.size());
    int prev = 0;
    for (std::size_t i = 0; i < loss.sample_times.size(); ++i) {
        const double t = loss.sample_times[i];
        const double r = (t - t0) / dt;
        const int m = static_cast<int>(std::lround(r));
        if (std::abs(t - (t0 + m * dt)) > 1e-9 * dt)
            throw config_error("loss sample time " + std::to_string(t) +
                               " is not grid-aligned");
        if (m < 1 || m > n_steps)
            throw config_error("loss sample time " + std::to_string(t) +
                               " outside (t0, t1]");
        if (i > 0 && m <= prev)
            throw config_error("loss sample times must be strictly increasing");
        if (loss.targets[i].size() != loss.observed_indices.size())
            throw config_error("loss: target " + std::to_string(i) + " has width " +
                               std::to_string(loss.targets[i].size()) + ", expected " +
                               std::to_string(loss.observed_indices.size()));
        nodes[i] = m;
        prev = m;
    }
    return nodes;
}

/// MSE between the trajectory (restricted to `observed`) and the targets.
inline double loss_eval(const DenseTrajectory& fwd, const LossSpec& loss,
                        std::span<const int> observed) {
    if (observed.empty()) throw config_error("loss_eval: empty observation set");
    double acc = 0.0;
    std::vector<double> x(static_cast<std::size_t>(fwd.dim()));
    for (std::size_t i = 0; i < loss.sample_times.size(); ++i) {
        fwd.eval(loss.sample_times[i], x);
        for (std::size_t j = 0; j < observed.size(); ++j) {
            const double r = x[static_cast<std::size_t>(observed[j])] - loss.targets[i][j];
            acc += r * r;
        }
    }
    double norm = 1.0;
    if (loss.mean_over_samples) norm *= static_cast<double>(loss.sample_times.size());
    if (loss.mean_over_dims) norm *= static_cast<double>(observed.size());
    return acc / norm;
}

inline double loss_eval(const DenseTrajectory& fwd, const LossSpec& loss) {
    return loss_eval(fwd, loss, loss.observed_indices);
}

/// d(loss)/dx at sample i as a full-state row vector: 2(x - target)/norm on
/// observed coordinates, zero elsewhere.
inline void loss_state_gradient(const LossSpec& loss, std::size_t i,
                                std::span<const double> state, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    const double norm = loss.normalization();
    for (std::size_t j = 0; j < loss.observed_indices.size(); ++j) {
        const int idx = loss.observed_indices[j];
        out[static_cast<std::size_t>(idx)] =
            2.0 * (state[static_cast<std::size_t>(idx)] - loss.targets[i][j]) / norm;
    }
}

} // namespace ddekit
