#pragma once

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "ddekit/finite_diff.hpp"
#include "ddekit/model.hpp"
#include "ddekit/rng.hpp"
#include "ddekit/train.hpp"

namespace ddekit {

/// Seeded randomized check of the adjoint gradients against central finite
/// differences of the end-to-end loss. Trials sweep small models with
/// state_dim <= 3, k in {0,1,2,3}, hidden widths <= 8, horizons <= 5 at
/// dt = 1e-2, every weight and delay parameter compared.
struct GradcheckOptions {
    std::uint64_t seed = 0;
    int trials = 20;
    double eps = 1e-4;
    double rtol = 1e-3;
    double atol = 1e-6;
    int threads = 1;
    /// Negates the adjoint gradients before comparison; exists so a build can
    /// prove the check actually fails on a wrong-sign implementation.
#ifdef DDEKIT_GRADCHECK_SIGN_FLIP
    bool sign_flip = true;
#else
    bool sign_flip = false;
#endif
};

struct GradcheckTrial {
    int trial = 0;
    int state_dim = 0;
    int n_delays = 0;
    std::size_t n_params = 0;
    double max_err_ratio = 0.0; // |adj-fd| / (atol + rtol*max(|adj|,|fd|)), max over components
    std::string worst_component;
    double worst_adjoint = 0.0;
    double worst_fd = 0.0;
    bool pass = false;
};

struct GradcheckReport {
    std::vector<GradcheckTrial> trials;
    bool all_pass = false;
    double max_err_ratio = 0.0;

    std::string to_text() const {
        std::ostringstream out;
        for (const auto& t : trials) {
            char line[256];
            std::snprintf(line, sizeof(line),
                          "trial %02d: dim=%d k=%d params=%zu max_err_ratio=%.3g "
                          "worst=%s adjoint=%.9g fd=%.9g %s\n",
                          t.trial, t.state_dim, t.n_delays, t.n_params, t.max_err_ratio,
                          t.worst_component.c_str(), t.worst_adjoint, t.worst_fd,
                          t.pass ? "PASS" : "FAIL");
            out << line;
        }
        char tail[128];
        std::snprintf(tail, sizeof(tail), "gradcheck: %s (max_err_ratio=%.3g over %zu trials)\n",
                      all_pass ? "PASS" : "FAIL", max_err_ratio, trials.size());
        out << tail;
        return out.str();
    }
};

namespace detail {

struct GradcheckInstance {
    NeuralDdeModel model;
    HistoryFunction history = HistoryFunction::constant({0.0});
    LossSpec loss;
    double t0 = 0.0, t1 = 0.0, dt = 1e-2;
};

inline GradcheckInstance make_gradcheck_instance(std::uint64_t seed, int trial) {
    Rng rng(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(trial + 1)));
    GradcheckInstance inst;
    const int k = trial % 4; // cycle 0..3 so the zero-delay specialization is always hit
    const int dim = 1 + static_cast<int>(rng.next_below(3));
    const int width = 4 + static_cast<int>(rng.next_below(5));
    const int depth = 1 + static_cast<int>(rng.next_below(2));
    const int n_steps = 120 + static_cast<int>(rng.next_below(3)) * 140; // 120|260|400
    inst.dt = 1e-2;
    inst.t0 = 0.0;
    inst.t1 = n_steps * inst.dt;

    const double tau_max = 0.1 + rng.uniform() * std::min(1.4, inst.t1 / 2.0 - 0.1);
    inst.model = make_model(dim, k, width, depth, Activation::tanh, inst.dt, tau_max,
                            seed * 1000003ULL + static_cast<std::uint64_t>(trial));
    auto p = inst.model.delay_params();
    for (int i = 0; i < k; ++i) p[static_cast<std::size_t>(i)] = rng.uniform(-1.5, 1.5);

    std::vector<double> h(static_cast<std::size_t>(dim));
    for (double& v : h) v = rng.uniform(-1.0, 1.0);
    inst.history = HistoryFunction::constant(std::move(h));

    const int n_samples = 3 + static_cast<int>(rng.next_below(6));
    std::vector<int> nodes;
    while (static_cast<int>(nodes.size()) < n_samples) {
        const int m = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n_steps)));
        if (std::find(nodes.begin(), nodes.end(), m) == nodes.end()) nodes.push_back(m);
    }
    std::sort(nodes.begin(), nodes.end());
    for (int j = 0; j < dim; ++j) inst.loss.observed_indices.push_back(j);
    for (int m : nodes) {
        inst.loss.sample_times.push_back(inst.t0 + m * inst.dt);
        std::vector<double> target(static_cast<std::size_t>(dim));
        for (double& v : target) v = rng.uniform(-1.0, 1.0);
        inst.loss.targets.push_back(std::move(target));
    }
    return inst;
}

} // namespace detail

inline GradcheckTrial gradcheck_trial(const GradcheckOptions& opt, int trial) {
    detail::GradcheckInstance inst = detail::make_gradcheck_instance(opt.seed, trial);

    ModelGrad adj = grad(inst.model, inst.history, inst.loss, inst.t0, inst.t1,
                         Method::rk4, inst.dt);
    if (opt.sign_flip)
        for (double& g : adj.grad) g = -g;

    NeuralDdeModel probe = inst.model;
    auto loss_at = [&](std::span<const double> params) {
        probe.params.assign(params.begin(), params.end());
        DenseTrajectory fwd =
            predict(probe, inst.history, inst.t0, inst.t1, Method::rk4, inst.dt);
        return loss_eval(fwd, inst.loss);
    };
    const std::vector<double> fd = finite_diff_gradient(loss_at, inst.model.params, opt.eps);

    GradcheckTrial rep;
    rep.trial = trial;
    rep.state_dim = inst.model.state_dim;
    rep.n_delays = inst.model.n_delays;
    rep.n_params = inst.model.params.size();
    const std::size_t nw = inst.model.n_weights();
    for (std::size_t i = 0; i < fd.size(); ++i) {
        const double a = adj.grad[i];
        const double f = fd[i];
        const double tol = opt.atol + opt.rtol * std::max(std::abs(a), std::abs(f));
        const double ratio = std::abs(a - f) / tol;
        if (ratio > rep.max_err_ratio) {
            rep.max_err_ratio = ratio;
            rep.worst_adjoint = a;
            rep.worst_fd = f;
            rep.worst_component =
                i < nw ? "w[" + std::to_string(i) + "]"
                       : "p_delay[" + std::to_string(i - nw) + "]";
        }
    }
    rep.pass = rep.max_err_ratio <= 1.0;
    return rep;
}

inline GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
    GradcheckReport report;
    report.trials.resize(static_cast<std::size_t>(opt.trials));
    detail::parallel_for(opt.trials, opt.threads, [&](int t) {
        report.trials[static_cast<std::size_t>(t)] = gradcheck_trial(opt, t);
    });
    report.all_pass = true;
    for (const auto& t : report.trials) {
        report.all_pass = report.all_pass && t.pass;
        report.max_err_ratio = std::max(report.max_err_ratio, t.max_err_ratio);
    }
    return report;
}

} // namespace ddekit
