#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ddekit/data.hpp"
#include "ddekit/errors.hpp"
#include "ddekit/io.hpp"
#include "ddekit/loss.hpp"
#include "ddekit/model.hpp"
#include "ddekit/optim.hpp"

namespace ddekit {

/// Full training specification. JSON keys match the field names exactly.
struct TrainConfig {
    // required keys
    double lr_init = 0.0;
    double lr_final = 0.0;
    int batch_size = 0;
    int max_epochs = 0;
    int patience = 0;
    double length_start_frac = 0.0;
    Method method = Method::rk4;
    double dt = 0.0;
    std::uint64_t seed = 0;
    double tau_max = 0.0;
    int n_delays = 0;
    int hidden_width = 0;
    int hidden_depth = 0;
    // optional keys (defaults below)
    double weight_decay = 1e-7;
    Activation activation = Activation::tanh;
    int n_stages = 4;
    bool learn_delays = true;
    bool time_input = false;
    bool loss_mean_over_samples = true;
    bool loss_mean_over_dims = true;
    double stop_loss = 0.0; // 0 disables early stop at full length
    int threads = 1;
};

inline void validate(const TrainConfig& c) {
    if (!(c.lr_init > 0.0) || !(c.lr_final > 0.0))
        throw config_error("config: learning rates must be positive");
    if (c.lr_final > c.lr_init) throw config_error("config: lr_final must be <= lr_init");
    if (c.batch_size < 1) throw config_error("config: batch_size must be >= 1");
    if (c.max_epochs < 1) throw config_error("config: max_epochs must be >= 1");
    if (c.patience < 1) throw config_error("config: patience must be >= 1");
    if (!(c.length_start_frac > 0.0) || c.length_start_frac > 1.0)
        throw config_error("config: length_start_frac must be in (0, 1]");
    if (!(c.dt > 0.0)) throw config_error("config: dt must be positive");
    if (c.n_delays < 0) throw config_error("config: n_delays must be >= 0");
    if (c.n_delays > 0 && !(c.tau_max > c.dt))
        throw config_error("config: tau_max must exceed dt");
    if (c.hidden_width < 1 || c.hidden_depth < 1)
        throw config_error("config: hidden width/depth must be >= 1");
    if (c.n_stages < 1) throw config_error("config: n_stages must be >= 1");
    if (c.threads < 1) throw config_error("config: threads must be >= 1");
}

inline TrainConfig parse_train_config(const json& j) {
    TrainConfig c;
    auto require = [&](const char* key) -> const json& {
        if (!j.contains(key))
            throw config_error(std::string("missing config key: ") + key);
        return j.at(key);
    };
    try {
        c.lr_init = require("lr_init").get<double>();
        c.lr_final = require("lr_final").get<double>();
        c.batch_size = require("batch_size").get<int>();
        c.max_epochs = require("max_epochs").get<int>();
        c.patience = require("patience").get<int>();
        c.length_start_frac = require("length_start_frac").get<double>();
        c.method = method_from_string(require("method").get<std::string>());
        c.dt = require("dt").get<double>();
        c.seed = require("seed").get<std::uint64_t>();
        c.tau_max = require("tau_max").get<double>();
        c.n_delays = require("n_delays").get<int>();
        c.hidden_width = require("hidden_width").get<int>();
        c.hidden_depth = require("hidden_depth").get<int>();
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        if (j.contains("activation"))
            c.activation = activation_from_string(j.at("activation").get<std::string>());
        c.n_stages = j.value("n_stages", c.n_stages);
        c.learn_delays = j.value("learn_delays", c.learn_delays);
        c.time_input = j.value("time_input", c.time_input);
        c.loss_mean_over_samples = j.value("loss_mean_over_samples", c.loss_mean_over_samples);
        c.loss_mean_over_dims = j.value("loss_mean_over_dims", c.loss_mean_over_dims);
        c.stop_loss = j.value("stop_loss", c.stop_loss);
        c.threads = j.value("threads", c.threads);
    } catch (const json::exception& e) {
        throw config_error(std::string("config: ") + e.what());
    }
    validate(c);
    return c;
}

inline json to_json(const TrainConfig& c) {
    return {{"lr_init", c.lr_init},
            {"lr_final", c.lr_final},
            {"batch_size", c.batch_size},
            {"max_epochs", c.max_epochs},
            {"patience", c.patience},
            {"length_start_frac", c.length_start_frac},
            {"method", to_string(c.method)},
            {"dt", c.dt},
            {"seed", c.seed},
            {"tau_max", c.tau_max},
            {"n_delays", c.n_delays},
            {"hidden_width", c.hidden_width},
            {"hidden_depth", c.hidden_depth},
            {"weight_decay", c.weight_decay},
            {"activation", to_string(c.activation)},
            {"n_stages", c.n_stages},
            {"learn_delays", c.learn_delays},
            {"time_input", c.time_input},
            {"loss_mean_over_samples", c.loss_mean_over_samples},
            {"loss_mean_over_dims", c.loss_mean_over_dims},
            {"stop_loss", c.stop_loss},
            {"threads", c.threads}};
}

struct TrainLog {
    struct Row {
        int epoch;
        double loss;
        double lr;
        int length; // loss samples in the current curriculum chunk
        std::vector<double> delays;
    };
    std::vector<Row> rows;

    std::string to_csv() const {
        std::ostringstream out;
        out << "epoch,loss,lr,length";
        const std::size_t k = rows.empty() ? 0 : rows.front().delays.size();
        for (std::size_t i = 1; i <= k; ++i) out << ",tau_" << i;
        out << "\n";
        for (const auto& r : rows) {
            out << r.epoch << ',' << fmt_full(r.loss) << ',' << fmt_full(r.lr) << ','
                << r.length;
            for (double tau : r.delays) out << ',' << fmt_full(tau);
            out << "\n";
        }
        return out.str();
    }
};

/// Optimizer + curriculum position, enough to resume a run exactly.
struct TrainState {
    AdamState adam;
    double lr = 0.0;
    int stage = 0;
    double best_loss = std::numeric_limits<double>::infinity();
    int stale_epochs = 0;
    int epoch = 0; // last completed epoch
};

inline void save_train_state(const std::filesystem::path& path, const TrainState& st) {
    json header = {{"step", st.adam.step},
                   {"n_decayed", st.adam.n_decayed},
                   {"n_params", st.adam.m.size()},
                   {"stage", st.stage},
                   {"stale_epochs", st.stale_epochs},
                   {"epoch", st.epoch}};
    std::vector<double> payload;
    payload.reserve(st.adam.m.size() * 2 + 2);
    payload.insert(payload.end(), st.adam.m.begin(), st.adam.m.end());
    payload.insert(payload.end(), st.adam.v.begin(), st.adam.v.end());
    payload.push_back(st.lr);
    payload.push_back(st.best_loss);
    write_json_binary(path, header, payload);
}

inline TrainState load_train_state(const std::filesystem::path& path) {
    std::vector<double> payload;
    json header = read_json_binary(path, payload);
    TrainState st;
    std::size_t n = 0;
    try {
        st.adam.step = header.at("step").get<long>();
        st.adam.n_decayed = header.at("n_decayed").get<std::size_t>();
        n = header.at("n_params").get<std::size_t>();
        st.stage = header.at("stage").get<int>();
        st.stale_epochs = header.at("stale_epochs").get<int>();
        st.epoch = header.at("epoch").get<int>();
    } catch (const json::exception& e) {
        throw io_error("corrupted train state in " + path.string() + ": " + e.what());
    }
    if (payload.size() != 2 * n + 2)
        throw io_error("train state payload mismatch in " + path.string());
    st.adam.m.assign(payload.begin(), payload.begin() + static_cast<std::ptrdiff_t>(n));
    st.adam.v.assign(payload.begin() + static_cast<std::ptrdiff_t>(n),
                     payload.begin() + static_cast<std::ptrdiff_t>(2 * n));
    st.lr = payload[2 * n];
    st.best_loss = payload[2 * n + 1];
    return st;
}

namespace detail {

/// Runs fn(i) for i in [0, n); with threads > 1 the work is chunked but
/// results land in caller-indexed slots, so reductions stay deterministic.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace detail

/// Curriculum chunk lengths: `n_stages` sample counts evenly spaced from
/// floor(frac * n_full) (at least 1) up to n_full.
inline std::vector<int> curriculum_lengths(int n_full, double frac, int n_stages) {
    const int l0 = std::max(1, static_cast<int>(std::floor(frac * n_full)));
    std::vector<int> lengths;
    if (l0 >= n_full || n_stages == 1) {
        lengths.push_back(n_full);
        return lengths;
    }
    for (int s = 0; s < n_stages; ++s) {
        const double x =
            l0 + (static_cast<double>(n_full - l0) * s) / (n_stages - 1);
        int len = static_cast<int>(std::lround(x));
        if (!lengths.empty()) len = std::max(len, lengths.back());
        lengths.push_back(len);
    }
    lengths.back() = n_full;
    return lengths;
}

/// Loss over the first `length` samples of trajectory `traj` (times t0+dt_out
/// .. t0+length*dt_out), on the dataset's observed coordinates.
inline LossSpec make_chunk_loss(const Dataset& ds, int traj, int length,
                                bool mean_over_samples, bool mean_over_dims) {
    LossSpec loss;
    const int n_obs = static_cast<int>(ds.observed_indices.size());
    loss.observed_indices.resize(static_cast<std::size_t>(n_obs));
    for (int j = 0; j < n_obs; ++j) loss.observed_indices[static_cast<std::size_t>(j)] = j;
    loss.mean_over_samples = mean_over_samples;
    loss.mean_over_dims = mean_over_dims;
    for (int s = 1; s <= length; ++s) {
        loss.sample_times.push_back(ds.t0 + s * ds.dt);
        std::vector<double> target(static_cast<std::size_t>(n_obs));
        const auto row = ds.sample(traj, s);
        for (int j = 0; j < n_obs; ++j)
            target[static_cast<std::size_t>(j)] =
                row[static_cast<std::size_t>(ds.observed_indices[static_cast<std::size_t>(j)])];
        loss.targets.push_back(std::move(target));
    }
    return loss;
}

/// Constant history anchored at the trajectory's first observed sample.
inline HistoryFunction history_for(const Dataset& ds, int traj) {
    const auto row = ds.sample(traj, 0);
    std::vector<double> h;
    for (int idx : ds.observed_indices)
        h.push_back(row[static_cast<std::size_t>(idx)]);
    return HistoryFunction::constant(std::move(h));
}

/// Fresh model sized for the dataset's observed dimension.
inline NeuralDdeModel make_model_for(const TrainConfig& c, const Dataset& ds) {
    return make_model(static_cast<int>(ds.observed_indices.size()), c.n_delays,
                      c.hidden_width, c.hidden_depth, c.activation, c.dt, c.tau_max,
                      c.seed, c.time_input);
}

struct TrainResult {
    NeuralDdeModel model;
    TrainLog log;
    TrainState state;
};

/// Optimization loop: Adam with weight decay on the weights only, trajectory
/// chunks growing through `n_stages` curriculum stages whenever the best
/// train loss stalls for `patience` epochs, and the learning rate stepping
/// toward lr_final at each stage advance. A divergent epoch halves the
/// learning rate and retries once. Deterministic given config + seed.
inline TrainResult train(const TrainConfig& config, const Dataset& ds, NeuralDdeModel model,
                         const TrainState* resume = nullptr, TrainLog* append_log = nullptr) {
    validate(config);
    validate(ds);
    validate(model);
    if (model.state_dim != static_cast<int>(ds.observed_indices.size()))
        throw config_error("train: model state_dim != observed dimension");
    const double stride = ds.dt / config.dt;
    if (std::abs(stride - std::round(stride)) > 1e-9)
        throw config_error("train: dataset dt is not a multiple of solver dt");

    const int n_traj = static_cast<int>(ds.trajectories.size());
    const int n_full = ds.n_times - 1;
    const std::vector<int> lengths =
        curriculum_lengths(n_full, config.length_start_frac, config.n_stages);
    const int last_stage = static_cast<int>(lengths.size()) - 1;

    TrainResult res;
    res.model = std::move(model);
    if (append_log) res.log = *append_log;

    TrainState st;
    if (resume) {
        st = *resume;
        if (st.adam.m.size() != res.model.params.size())
            throw config_error("train: resume state does not match model size");
    } else {
        st.adam = AdamState(res.model.params.size(), res.model.n_weights());
        st.lr = config.lr_init;
    }

    std::vector<HistoryFunction> histories;
    for (int i = 0; i < n_traj; ++i) histories.push_back(history_for(ds, i));

    std::vector<double> grad_slots; // per-traj gradients, reduced in index order
    std::vector<double> loss_slots(static_cast<std::size_t>(n_traj));
    std::vector<double> batch_grad(res.model.params.size());

    for (int epoch = st.epoch + 1; epoch <= config.max_epochs; ++epoch) {
        const int length = lengths[static_cast<std::size_t>(st.stage)];
        const double t1 = ds.t0 + length * ds.dt;

        const std::vector<double> params_snapshot = res.model.params;
        const AdamState adam_snapshot = st.adam;
        bool retried = false;

        for (;;) {
            try {
                for (int b0 = 0; b0 < n_traj; b0 += config.batch_size) {
                    const int bn = std::min(config.batch_size, n_traj - b0);
                    grad_slots.assign(static_cast<std::size_t>(bn) *
                                          res.model.params.size(),
                                      0.0);
                    detail::parallel_for(bn, config.threads, [&](int bi) {
                        const int traj = b0 + bi;
                        const LossSpec loss =
                            make_chunk_loss(ds, traj, length, config.loss_mean_over_samples,
                                            config.loss_mean_over_dims);
                        ModelGrad g = grad(res.model, histories[static_cast<std::size_t>(traj)],
                                           loss, ds.t0, t1, config.method, config.dt);
                        loss_slots[static_cast<std::size_t>(traj)] = g.loss;
                        std::copy(g.grad.begin(), g.grad.end(),
                                  grad_slots.begin() +
                                      static_cast<std::size_t>(bi) * res.model.params.size());
                    });
                    const double inv = 1.0 / bn;
                    std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
                    for (int bi = 0; bi < bn; ++bi) {
                        const double* g =
                            grad_slots.data() + static_cast<std::size_t>(bi) *
                                                    res.model.params.size();
                        for (std::size_t p = 0; p < batch_grad.size(); ++p)
                            batch_grad[p] += inv * g[p];
                    }
                    if (!config.learn_delays) {
                        for (std::size_t p = res.model.n_weights(); p < batch_grad.size(); ++p)
                            batch_grad[p] = 0.0;
                    }
                    adam_step(res.model.params, batch_grad, st.adam, st.lr,
                              config.weight_decay);
                }
                break;
            } catch (const divergence_error&) {
                if (retried) throw;
                retried = true;
                res.model.params = params_snapshot;
                st.adam = adam_snapshot;
                st.lr *= 0.5;
            }
        }

        double epoch_loss = 0.0;
        for (int i = 0; i < n_traj; ++i) epoch_loss += loss_slots[static_cast<std::size_t>(i)];
        epoch_loss /= n_traj;

        const std::vector<double> taus = realized_delays(res.model);
        for (double tau : taus)
            if (!(tau > res.model.tau_min && tau < res.model.tau_max))
                throw numeric_error("train: realized delay escaped its bounds");
        res.log.rows.push_back({epoch, epoch_loss, st.lr, length, taus});
        st.epoch = epoch;

        if (epoch_loss < st.best_loss) {
            st.best_loss = epoch_loss;
            st.stale_epochs = 0;
        } else {
            st.stale_epochs += 1;
        }

        if (st.stage == last_stage && config.stop_loss > 0.0 &&
            epoch_loss < config.stop_loss)
            break;

        if (st.stale_epochs >= config.patience) {
            if (st.stage == last_stage) break; // full-length convergence
            st.stage += 1;
            const int remaining = last_stage - st.stage + 1;
            st.lr *= scheduler_gamma(st.lr, config.lr_final, remaining);
            st.best_loss = std::numeric_limits<double>::infinity();
            st.stale_epochs = 0;
        }
    }

    res.state = st;
    return res;
}

/// Mean full-length MSE of the model's predictions over a dataset, with the
/// same constant-history protocol as training.
inline double eval_mse(const NeuralDdeModel& model, const Dataset& ds, Method method,
                       double dt, int threads = 1) {
    validate(ds);
    if (model.state_dim != static_cast<int>(ds.observed_indices.size()))
        throw config_error("eval: model state_dim != observed dimension");
    const int n_traj = static_cast<int>(ds.trajectories.size());
    const int n_full = ds.n_times - 1;
    const double t1 = ds.t0 + n_full * ds.dt;
    std::vector<double> losses(static_cast<std::size_t>(n_traj));
    detail::parallel_for(n_traj, threads, [&](int i) {
        const LossSpec loss = make_chunk_loss(ds, i, n_full, true, true);
        DenseTrajectory fwd = predict(model, history_for(ds, i), ds.t0, t1, method, dt);
        losses[static_cast<std::size_t>(i)] = loss_eval(fwd, loss);
    });
    double acc = 0.0;
    for (double l : losses) acc += l;
    return acc / n_traj;
}

} // namespace ddekit
