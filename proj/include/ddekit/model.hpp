#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "ddekit/adjoint.hpp"
#include "ddekit/errors.hpp"
#include "ddekit/io.hpp"
#include "ddekit/loss.hpp"
#include "ddekit/mlp.hpp"
#include "ddekit/rng.hpp"
#include "ddekit/solver.hpp"

namespace ddekit {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double q) { return std::log(q / (1.0 - q)); }

/// MLP vector field over the concatenated current and delayed states,
///   dx/dt = f_theta(x(t), x(t-tau_1), ..., x(t-tau_k) [, t]),
/// with the delays stored as unconstrained parameters p_i mapped through
///   tau_i = tau_min + (tau_max - tau_min) * sigmoid(p_i),
/// so realized delays always sit strictly inside (tau_min, tau_max) and the
/// explicit-solver constraint tau >= dt holds for every optimizer step.
/// params = [MLP weights/biases in the frozen layout, then p_1..p_k].
struct NeuralDdeModel {
    MlpSpec spec;
    std::vector<double> params;
    int state_dim = 0;
    int n_delays = 0;
    double tau_min = 0.0, tau_max = 0.0;
    bool time_input = false;

    std::size_t n_weights() const { return weight_count(spec); }

    std::span<const double> weights() const { return {params.data(), n_weights()}; }
    std::span<const double> delay_params() const {
        return {params.data() + n_weights(), static_cast<std::size_t>(n_delays)};
    }
    std::span<double> delay_params() {
        return {params.data() + n_weights(), static_cast<std::size_t>(n_delays)};
    }
};

inline int model_input_dim(int state_dim, int n_delays, bool time_input) {
    return state_dim * (n_delays + 1) + (time_input ? 1 : 0);
}

inline void validate(const NeuralDdeModel& m) {
    validate(m.spec);
    if (m.state_dim < 1) throw config_error("model: state_dim must be >= 1");
    if (m.n_delays < 0) throw config_error("model: n_delays must be >= 0");
    if (!(m.tau_max > m.tau_min) && m.n_delays > 0)
        throw config_error("model: tau_max must exceed tau_min");
    if (m.spec.input_dim() != model_input_dim(m.state_dim, m.n_delays, m.time_input))
        throw config_error("model: MLP input width does not match state_dim*(k+1)");
    if (m.spec.output_dim() != m.state_dim)
        throw config_error("model: MLP output width != state_dim");
    if (m.params.size() != m.n_weights() + static_cast<std::size_t>(m.n_delays))
        throw config_error("model: params length mismatch");
}

inline std::vector<double> realized_delays(const NeuralDdeModel& m) {
    std::vector<double> taus(static_cast<std::size_t>(m.n_delays));
    const auto p = m.delay_params();
    for (int i = 0; i < m.n_delays; ++i) {
        // the sigmoid saturates to exactly 0/1 in floating point around
        // |p| ~ 37; clamp so realized delays stay strictly inside the bounds
        const double q =
            std::clamp(sigmoid(p[static_cast<std::size_t>(i)]), 1e-12, 1.0 - 1e-12);
        taus[static_cast<std::size_t>(i)] = m.tau_min + (m.tau_max - m.tau_min) * q;
    }
    return taus;
}

/// Overwrites the delay parameters so the realized delays equal `taus`.
inline void set_delays(NeuralDdeModel& m, std::span<const double> taus) {
    if (static_cast<int>(taus.size()) != m.n_delays)
        throw config_error("set_delays: wrong count");
    auto p = m.delay_params();
    for (int i = 0; i < m.n_delays; ++i) {
        const double q = (taus[static_cast<std::size_t>(i)] - m.tau_min) /
                         (m.tau_max - m.tau_min);
        if (!(q > 0.0 && q < 1.0))
            throw config_error("set_delays: delay outside (tau_min, tau_max)");
        p[static_cast<std::size_t>(i)] = logit(q);
    }
}

/// Fresh model with seeded weights. Initial delays are spread equally over
/// the middle 60% of (tau_min, tau_max) with a seeded +-5%-of-range jitter;
/// delays initialized close together tend to drift apart only slowly, so the
/// spread start accelerates training.
inline NeuralDdeModel make_model(int state_dim, int n_delays, int hidden_width,
                                 int hidden_depth, Activation activation, double tau_min,
                                 double tau_max, std::uint64_t seed,
                                 bool time_input = false) {
    if (hidden_width < 1 || hidden_depth < 1)
        throw config_error("model: hidden width/depth must be >= 1");
    NeuralDdeModel m;
    m.state_dim = state_dim;
    m.n_delays = n_delays;
    m.tau_min = tau_min;
    m.tau_max = tau_max;
    m.time_input = time_input;
    m.spec.activation = activation;
    m.spec.layer_sizes.push_back(model_input_dim(state_dim, n_delays, time_input));
    for (int i = 0; i < hidden_depth; ++i) m.spec.layer_sizes.push_back(hidden_width);
    m.spec.layer_sizes.push_back(state_dim);
    m.params = mlp_init(m.spec, seed);

    if (n_delays > 0) {
        Rng rng(seed ^ 0x9E3779B97F4A7C15ULL);
        const double range = tau_max - tau_min;
        const double lo = tau_min + 0.2 * range;
        const double hi = tau_min + 0.8 * range;
        std::vector<double> taus(static_cast<std::size_t>(n_delays));
        for (int i = 0; i < n_delays; ++i) {
            double target = n_delays == 1
                                ? 0.5 * (lo + hi)
                                : lo + (hi - lo) * static_cast<double>(i) / (n_delays - 1);
            target += 0.05 * range * (2.0 * rng.uniform() - 1.0);
            target = std::min(std::max(target, tau_min + 0.01 * range),
                              tau_max - 0.01 * range);
            taus[static_cast<std::size_t>(i)] = target;
        }
        m.params.resize(m.n_weights() + static_cast<std::size_t>(n_delays));
        set_delays(m, taus);
    }
    validate(m);
    return m;
}

namespace detail {

/// Assembles the MLP input [x, delayed, (t)] into `buf`.
inline void assemble_input(const NeuralDdeModel& m, double t, std::span<const double> x,
                           std::span<const double> delayed, std::vector<double>& buf) {
    buf.resize(static_cast<std::size_t>(m.spec.input_dim()));
    std::copy(x.begin(), x.end(), buf.begin());
    std::copy(delayed.begin(), delayed.end(), buf.begin() + m.state_dim);
    if (m.time_input) buf.back() = t;
}

} // namespace detail

/// DdeProblem for this model over [t0, t1]. The returned field closure owns
/// its scratch space: share it across threads only one integration at a time.
inline DdeProblem make_problem(const NeuralDdeModel& model, double t0, double t1,
                               double dt) {
    validate(model);
    if (dt > model.tau_min + 1e-15 && model.n_delays > 0)
        throw config_error("solver dt exceeds tau_min; delayed lookups would enter the "
                           "in-progress step");
    DdeProblem p;
    p.state_dim = model.state_dim;
    p.delays = realized_delays(model);
    p.t0 = t0;
    p.t1 = t1;
    p.dt = dt;
    auto buf = std::make_shared<std::vector<double>>();
    // copy of the model keeps the closure self-contained
    p.vector_field = [model, buf](double t, std::span<const double> x,
                                  std::span<const double> delayed, std::span<double> out) {
        detail::assemble_input(model, t, x, delayed, *buf);
        mlp_forward(model.spec, model.params, *buf, out);
    };
    return p;
}

/// VJP closure matching the adjoint's FieldVjp contract. grad_x/grad_delayed
/// are slices of the MLP input gradient; a time input's slot is dropped.
inline FieldVjp make_field_vjp(const NeuralDdeModel& model) {
    auto ws = std::make_shared<MlpWorkspace>(model.spec);
    auto in_buf = std::make_shared<std::vector<double>>();
    auto gin = std::make_shared<std::vector<double>>(
        static_cast<std::size_t>(model.spec.input_dim()));
    return [model, ws, in_buf, gin](double t, std::span<const double> x,
                                    std::span<const double> delayed,
                                    std::span<const double> cotangent,
                                    std::span<double> grad_x,
                                    std::span<double> grad_delayed,
                                    std::span<double> grad_params) {
        detail::assemble_input(model, t, x, delayed, *in_buf);
        ws->forward(model.params, *in_buf, {});
        std::fill(gin->begin(), gin->end(), 0.0);
        if (!grad_params.empty()) std::fill(grad_params.begin(), grad_params.end(), 0.0);
        const bool want_input = !grad_x.empty() || !grad_delayed.empty();
        ws->vjp_accumulate(model.params, cotangent,
                           want_input ? std::span<double>(*gin) : std::span<double>{},
                           grad_params);
        const int d = model.state_dim;
        if (!grad_x.empty())
            std::copy(gin->begin(), gin->begin() + d, grad_x.begin());
        if (!grad_delayed.empty())
            std::copy(gin->begin() + d,
                      gin->begin() + d + static_cast<std::ptrdiff_t>(d) * model.n_delays,
                      grad_delayed.begin());
    };
}

/// Forward solve of the model from the given history.
inline DenseTrajectory predict(const NeuralDdeModel& model, const HistoryFunction& history,
                               double t0, double t1, Method method, double dt) {
    return integrate(make_problem(model, t0, t1, dt), history, method);
}

struct ModelGrad {
    double loss = 0.0;
    /// Same layout as model.params: weight gradients, then gradients with
    /// respect to the unconstrained delay parameters p_i.
    std::vector<double> grad;
    /// Gradients with respect to the realized delays tau_i themselves.
    std::vector<double> grad_delays_tau;
};

/// Forward solve + backward adjoint; chains the delay gradients through the
/// sigmoid bound: dJ/dp_i = dJ/dtau_i * (tau_max - tau_min) * s(p_i)(1 - s(p_i)).
inline ModelGrad grad(const NeuralDdeModel& model, const HistoryFunction& history,
                      const LossSpec& loss, double t0, double t1, Method method,
                      double dt) {
    DdeProblem problem = make_problem(model, t0, t1, dt);
    DenseTrajectory fwd = integrate(problem, history, method);
    AdjointRun run =
        backward_adjoint(problem, fwd, loss, make_field_vjp(model), model.n_weights(), method);

    ModelGrad out;
    out.loss = loss_eval(fwd, loss);
    out.grad.assign(model.params.size(), 0.0);
    std::copy(run.grad_weights.begin(), run.grad_weights.end(), out.grad.begin());
    out.grad_delays_tau = run.grad_delays;
    const auto p = model.delay_params();
    for (int i = 0; i < model.n_delays; ++i) {
        const double s = sigmoid(p[static_cast<std::size_t>(i)]);
        out.grad[model.n_weights() + static_cast<std::size_t>(i)] =
            run.grad_delays[static_cast<std::size_t>(i)] * (model.tau_max - model.tau_min) *
            s * (1.0 - s);
    }
    return out;
}

/// Checkpoint: JSON header (architecture, delay bounds, solver metadata) +
/// the raw parameter vector; round-trips bit-exactly.
inline void save_checkpoint(const std::filesystem::path& path, const NeuralDdeModel& m,
                            Method method, double dt) {
    json header = {{"layer_sizes", m.spec.layer_sizes},
                   {"activation", to_string(m.spec.activation)},
                   {"state_dim", m.state_dim},
                   {"n_delays", m.n_delays},
                   {"tau_min", m.tau_min},
                   {"tau_max", m.tau_max},
                   {"time_input", m.time_input},
                   {"method", to_string(method)},
                   {"dt", dt}};
    write_json_binary(path, header, m.params);
}

inline NeuralDdeModel load_checkpoint(const std::filesystem::path& path, Method* method_out,
                                      double* dt_out) {
    NeuralDdeModel m;
    json header = read_json_binary(path, m.params);
    try {
        m.spec.layer_sizes = header.at("layer_sizes").get<std::vector<int>>();
        m.spec.activation = activation_from_string(header.at("activation").get<std::string>());
        m.state_dim = header.at("state_dim").get<int>();
        m.n_delays = header.at("n_delays").get<int>();
        m.tau_min = header.at("tau_min").get<double>();
        m.tau_max = header.at("tau_max").get<double>();
        m.time_input = header.at("time_input").get<bool>();
        if (method_out) *method_out = method_from_string(header.at("method").get<std::string>());
        if (dt_out) *dt_out = header.at("dt").get<double>();
    } catch (const json::exception& e) {
        throw io_error("corrupted checkpoint header in " + path.string() + ": " + e.what());
    }
    validate(m);
    return m;
}

} // namespace ddekit
