// ddekit command line: generate / train / eval / gradcheck / mimap / bench.
// Every run writes a manifest next to its artifacts, even on failure.
// Exit codes: 0 success, 2 configuration error, 3 numeric divergence,
// 4 I/O error, 1 anything else (including a failed gradcheck).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ddekit/ddekit.hpp"

namespace fs = std::filesystem;
using namespace ddekit;

namespace {

struct ManifestWriter {
    fs::path dir;
    json manifest;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    ManifestWriter(const fs::path& out_dir, const std::string& command, json config,
                   std::uint64_t seed) {
        dir = out_dir;
        manifest["command"] = command;
        manifest["config"] = std::move(config);
        manifest["seed"] = seed;
        manifest["artifacts"] = json::array();
    }

    void add_artifact(const fs::path& p) { manifest["artifacts"].push_back(p.string()); }

    void finish(int exit_status, const std::string& error = "") {
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        manifest["timings"] = {{"wall_s", wall}};
        manifest["exit_status"] = exit_status;
        if (!error.empty()) manifest["error"] = error;
        std::error_code ec;
        fs::create_directories(dir, ec);
        try {
            write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
        } catch (const std::exception& e) {
            std::cerr << "warning: could not write manifest: " << e.what() << "\n";
        }
    }
};

int classify(const std::exception& e) {
    if (dynamic_cast<const divergence_error*>(&e)) return 3;
    if (dynamic_cast<const config_error*>(&e)) return 2;
    if (dynamic_cast<const io_error*>(&e)) return 4;
    return 1;
}

int run_with_manifest(ManifestWriter& mw, const std::function<int()>& body) {
    try {
        const int code = body();
        mw.finish(code);
        return code;
    } catch (const std::exception& e) {
        const int code = classify(e);
        std::cerr << "error: " << e.what() << "\n";
        mw.finish(code, e.what());
        return code;
    }
}

std::vector<double> series_from_path(const fs::path& path) {
    if (!fs::exists(path)) throw io_error("series path does not exist: " + path.string());
    const Dataset ds = load_dataset(path);
    std::vector<double> series(static_cast<std::size_t>(ds.n_times));
    const int col = ds.observed_indices.empty() ? 0 : ds.observed_indices.front();
    for (int t = 0; t < ds.n_times; ++t)
        series[static_cast<std::size_t>(t)] =
            ds.trajectories.at(0)[static_cast<std::size_t>(t) * ds.dim + col];
    return series;
}

// ---- generate ----

int cmd_generate(const std::string& system, int n, int length, std::uint64_t seed,
                 const fs::path& out, ManifestWriter& mw) {
    Dataset ds;
    if (system == "logistic") {
        ds = gen_logistic_dde(n, seed);
    } else if (system == "brusselator") {
        ds = gen_brusselator(n, seed);
    } else if (system == "two-delay-map") {
        ds = gen_two_delay_map_dataset(length, seed);
    } else {
        throw config_error("unknown system: " + system +
                           " (expected logistic|brusselator|two-delay-map)");
    }
    save_dataset(out, ds);
    mw.add_artifact(out / "meta.json");

    double lo = ds.trajectories[0][0], hi = lo;
    for (const auto& tr : ds.trajectories)
        for (double v : tr) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    std::cout << "dataset " << out.string() << ": n_traj=" << ds.trajectories.size()
              << " n_times=" << ds.n_times << " dim=" << ds.dim << " dt=" << fmt_cli(ds.dt)
              << " range=[" << fmt_cli(lo) << ", " << fmt_cli(hi) << "]\n";
    return 0;
}

// ---- train ----

int cmd_train(const fs::path& data, const fs::path& config_path, const fs::path& out,
              const fs::path& resume_dir, int threads, ManifestWriter& mw) {
    std::ifstream cfg_in(config_path);
    if (!cfg_in) throw io_error("cannot open config: " + config_path.string());
    json cfg_json;
    try {
        cfg_in >> cfg_json;
    } catch (const json::exception& e) {
        throw config_error("config is not valid JSON: " + std::string(e.what()));
    }
    TrainConfig cfg = parse_train_config(cfg_json);
    if (threads > 0) cfg.threads = threads;
    mw.manifest["config"] = to_json(cfg);

    const Dataset ds = load_dataset(data);

    NeuralDdeModel model;
    TrainState state;
    TrainLog prior_log;
    const TrainState* resume_ptr = nullptr;
    TrainLog* prior_log_ptr = nullptr;
    if (!resume_dir.empty()) {
        model = load_checkpoint(resume_dir / "checkpoint.bin", nullptr, nullptr);
        state = load_train_state(resume_dir / "train_state.bin");
        resume_ptr = &state;
        // keep earlier epochs in the log when resuming in place
        std::ifstream log_in(resume_dir / "trainlog.csv");
        if (log_in) {
            std::string line;
            std::getline(log_in, line); // header
            while (std::getline(log_in, line)) {
                if (line.empty()) continue;
                TrainLog::Row row;
                std::istringstream ss(line);
                std::string cell;
                std::getline(ss, cell, ',');
                row.epoch = std::stoi(cell);
                std::getline(ss, cell, ',');
                row.loss = std::stod(cell);
                std::getline(ss, cell, ',');
                row.lr = std::stod(cell);
                std::getline(ss, cell, ',');
                row.length = std::stoi(cell);
                while (std::getline(ss, cell, ',')) row.delays.push_back(std::stod(cell));
                prior_log.rows.push_back(std::move(row));
            }
            prior_log_ptr = &prior_log;
        }
    } else {
        model = make_model_for(cfg, ds);
    }

    TrainResult res = train(cfg, ds, std::move(model), resume_ptr, prior_log_ptr);

    std::error_code ec;
    fs::create_directories(out, ec);
    save_checkpoint(out / "checkpoint.bin", res.model, cfg.method, cfg.dt);
    save_train_state(out / "train_state.bin", res.state);
    write_text_atomic(out / "trainlog.csv", res.log.to_csv());
    mw.add_artifact(out / "checkpoint.bin");
    mw.add_artifact(out / "trainlog.csv");
    mw.add_artifact(out / "train_state.bin");

    const auto& last = res.log.rows.back();
    std::cout << "final_train_mse " << fmt_cli(last.loss) << "\n";
    std::cout << "epochs " << last.epoch << "\n";
    const std::vector<double> taus = realized_delays(res.model);
    std::cout << "delays";
    for (double tau : taus) std::cout << ' ' << fmt_cli(tau);
    std::cout << "\n";
    return 0;
}

// ---- eval ----

int cmd_eval(const fs::path& data, const fs::path& checkpoint, const fs::path& out,
             int threads, ManifestWriter& mw) {
    const Dataset ds = load_dataset(data);
    Method method = Method::rk4;
    double dt = 0.0;
    const NeuralDdeModel model = load_checkpoint(checkpoint, &method, &dt);
    if (model.state_dim != static_cast<int>(ds.observed_indices.size()))
        throw config_error("checkpoint state_dim " + std::to_string(model.state_dim) +
                           " does not match dataset observed dimension " +
                           std::to_string(ds.observed_indices.size()));

    const double mse = eval_mse(model, ds, method, dt, threads);

    std::error_code ec;
    fs::create_directories(out, ec);
    std::ostringstream csv;
    csv << "traj,t";
    for (int c = 0; c < model.state_dim; ++c) csv << ",pred_y" << c;
    for (int c = 0; c < model.state_dim; ++c) csv << ",target_y" << c;
    csv << "\n";
    const int n_full = ds.n_times - 1;
    const double t1 = ds.t0 + n_full * ds.dt;
    for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
        DenseTrajectory fwd = predict(model, history_for(ds, static_cast<int>(i)), ds.t0,
                                      t1, method, dt);
        for (int s = 1; s <= n_full; ++s) {
            const double t = ds.t0 + s * ds.dt;
            const auto pred = fwd.eval(t);
            csv << i << ',' << fmt_full(t);
            for (double v : pred) csv << ',' << fmt_full(v);
            const auto row = ds.sample(static_cast<int>(i), s);
            for (int idx : ds.observed_indices)
                csv << ',' << fmt_full(row[static_cast<std::size_t>(idx)]);
            csv << "\n";
        }
    }
    write_text_atomic(out / "predictions.csv", csv.str());
    mw.add_artifact(out / "predictions.csv");
    std::cout << "test_mse " << fmt_cli(mse) << "\n";
    return 0;
}

// ---- gradcheck ----

int cmd_gradcheck(std::uint64_t seed, int trials, int threads, const fs::path& out,
                  ManifestWriter& mw) {
    GradcheckOptions opt;
    opt.seed = seed;
    opt.trials = trials;
    opt.threads = threads;
    const GradcheckReport report = run_gradcheck(opt);
    const std::string text = report.to_text();
    std::cout << text;
    std::error_code ec;
    fs::create_directories(out, ec);
    write_text_atomic(out / "gradcheck.txt", text);
    mw.add_artifact(out / "gradcheck.txt");
    return report.all_pass ? 0 : 1;
}

// ---- mimap ----

int cmd_mimap(const fs::path& series_path, int p_lo, int p_hi, int stride, int bins,
              const fs::path& out, ManifestWriter& mw) {
    const std::vector<double> series = series_from_path(series_path);
    const MiGrid grid = mi_map(series, p_lo, p_hi, stride, bins);

    std::ostringstream csv;
    csv << "p1,p2,mi\n";
    for (int i = 0; i < grid.n(); ++i)
        for (int j = 0; j < grid.n(); ++j)
            csv << grid.lags[static_cast<std::size_t>(i)] << ','
                << grid.lags[static_cast<std::size_t>(j)] << ',' << fmt_cli(grid.at(i, j))
                << "\n";
    if (!out.parent_path().empty()) {
        std::error_code ec;
        fs::create_directories(out.parent_path(), ec);
    }
    write_text_atomic(out, csv.str());
    mw.add_artifact(out);

    std::cout << "argmax p1=" << grid.lags[static_cast<std::size_t>(grid.argmax_i)]
              << " p2=" << grid.lags[static_cast<std::size_t>(grid.argmax_j)]
              << " mi=" << fmt_cli(grid.max_value) << "\n";
    return 0;
}

// ---- bench ----

int cmd_bench(const std::vector<int>& dims, const std::vector<double>& horizons,
              const std::vector<int>& delay_counts, const std::string& method_str,
              const fs::path& out, ManifestWriter& mw) {
    const Method method = method_from_string(method_str);
    const double dt = 0.01;
    const int reps = 5;

    std::ostringstream csv;
    csv << "dim,horizon,k,method,mean_s,std_s\n";
    for (int dim : dims) {
        for (int k : delay_counts) {
            for (double horizon : horizons) {
                const int steps = static_cast<int>(std::lround(horizon / dt));
                if (steps < 1) throw config_error("bench: horizon shorter than dt");
                const double tau_max = std::max(3.0 * dt, std::min(1.0, horizon / 2.0));
                NeuralDdeModel model =
                    make_model(dim, k, 16, 2, Activation::tanh, dt, tau_max, 0);
                std::vector<double> h(static_cast<std::size_t>(dim), 0.1);
                const HistoryFunction history = HistoryFunction::constant(h);

                std::vector<double> times;
                for (int r = 0; r < reps + 1; ++r) {
                    const auto tic = std::chrono::steady_clock::now();
                    DenseTrajectory traj =
                        predict(model, history, 0.0, steps * dt, method, dt);
                    const auto toc = std::chrono::steady_clock::now();
                    if (r > 0) // first pass warms caches
                        times.push_back(std::chrono::duration<double>(toc - tic).count());
                }
                const double mean =
                    std::accumulate(times.begin(), times.end(), 0.0) / times.size();
                double var = 0.0;
                for (double t : times) var += (t - mean) * (t - mean);
                var /= static_cast<double>(times.size() - 1);
                csv << dim << ',' << fmt_cli(horizon) << ',' << k << ',' << method_str
                    << ',' << fmt_cli(mean) << ',' << fmt_cli(std::sqrt(var)) << "\n";
            }
        }
    }
    if (!out.parent_path().empty()) {
        std::error_code ec;
        fs::create_directories(out.parent_path(), ec);
    }
    write_text_atomic(out, csv.str());
    mw.add_artifact(out);
    std::cout << "bench written to " << out.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"constant-lag neural DDEs: solving, adjoint gradients, delay learning"};
    app.require_subcommand(1);

    int threads = 1;
    app.add_option("--threads", threads, "worker threads for batch work (1 = reproducible)")
        ->envname("DDEKIT_THREADS");

    // generate
    auto* gen = app.add_subcommand("generate", "synthesize a dataset directory");
    std::string gen_system;
    int gen_n = 8, gen_length = 200000;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    gen->add_option("--system", gen_system, "logistic|brusselator|two-delay-map")->required();
    gen->add_option("--n", gen_n, "number of trajectories (continuous systems)");
    gen->add_option("--length", gen_length, "series length (two-delay-map)");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output dataset directory")->required();

    // train
    auto* tr = app.add_subcommand("train", "train a model on a dataset");
    std::string tr_data, tr_config, tr_out, tr_resume;
    tr->add_option("--data", tr_data, "dataset directory")->required();
    tr->add_option("--config", tr_config, "training config JSON")->required();
    tr->add_option("--out", tr_out, "output directory")->required();
    tr->add_option("--resume", tr_resume, "previous run directory to resume from");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string ev_data, ev_checkpoint, ev_out = "eval_out";
    ev->add_option("--data", ev_data, "dataset directory")->required();
    ev->add_option("--checkpoint", ev_checkpoint, "checkpoint file")->required();
    ev->add_option("--out", ev_out, "output directory");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "adjoint vs finite-difference gradients");
    std::uint64_t gc_seed = 0;
    int gc_trials = 20;
    std::string gc_out = "gradcheck_out";
    gc->add_option("--seed", gc_seed, "base seed");
    gc->add_option("--trials", gc_trials, "number of random instances");
    gc->add_option("--out", gc_out, "output directory");

    // mimap
    auto* mi = app.add_subcommand("mimap", "delayed mutual information over a lag grid");
    std::string mi_series, mi_out = "mimap_out/mi.csv";
    int mi_plo = 10, mi_phi = 300, mi_stride = 5, mi_bins = 16;
    mi->add_option("--series", mi_series, "dataset directory holding the series")->required();
    mi->add_option("--plo", mi_plo, "smallest lag");
    mi->add_option("--phi", mi_phi, "largest lag");
    mi->add_option("--stride", mi_stride, "lag stride");
    mi->add_option("--bins", mi_bins, "histogram bins per axis");
    mi->add_option("--out", mi_out, "output CSV path");

    // bench
    auto* be = app.add_subcommand("bench", "forward-pass wall time sweep");
    std::string be_dims = "1,2,4", be_horizons = "1,2,4", be_delays = "0,1,2";
    std::string be_method = "rk4", be_out = "bench_out/bench.csv";
    be->add_option("--dims", be_dims, "comma-separated state dims");
    be->add_option("--horizons", be_horizons, "comma-separated horizons");
    be->add_option("--n-delays", be_delays, "comma-separated delay counts");
    be->add_option("--method", be_method, "euler|rk2|rk4");
    be->add_option("--out", be_out, "output CSV path");

    CLI11_PARSE(app, argc, argv);
    if (threads < 1) threads = 1;

    auto split_ints = [](const std::string& s) {
        std::vector<int> out;
        std::istringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(std::stoi(cell));
        return out;
    };
    auto split_doubles = [](const std::string& s) {
        std::vector<double> out;
        std::istringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
        return out;
    };

    if (app.got_subcommand(gen)) {
        ManifestWriter mw(gen_out, "generate",
                          {{"system", gen_system}, {"n", gen_n}, {"length", gen_length}},
                          gen_seed);
        return run_with_manifest(
            mw, [&] { return cmd_generate(gen_system, gen_n, gen_length, gen_seed, gen_out, mw); });
    }
    if (app.got_subcommand(tr)) {
        ManifestWriter mw(tr_out, "train",
                          {{"data", tr_data}, {"config", tr_config}, {"resume", tr_resume}},
                          0);
        return run_with_manifest(mw, [&] {
            return cmd_train(tr_data, tr_config, tr_out, tr_resume, threads, mw);
        });
    }
    if (app.got_subcommand(ev)) {
        ManifestWriter mw(ev_out, "eval",
                          {{"data", ev_data}, {"checkpoint", ev_checkpoint}}, 0);
        return run_with_manifest(
            mw, [&] { return cmd_eval(ev_data, ev_checkpoint, ev_out, threads, mw); });
    }
    if (app.got_subcommand(gc)) {
        ManifestWriter mw(gc_out, "gradcheck", {{"trials", gc_trials}}, gc_seed);
        return run_with_manifest(
            mw, [&] { return cmd_gradcheck(gc_seed, gc_trials, threads, gc_out, mw); });
    }
    if (app.got_subcommand(mi)) {
        ManifestWriter mw(fs::path(mi_out).parent_path(), "mimap",
                          {{"series", mi_series},
                           {"plo", mi_plo},
                           {"phi", mi_phi},
                           {"stride", mi_stride},
                           {"bins", mi_bins}},
                          0);
        return run_with_manifest(mw, [&] {
            return cmd_mimap(mi_series, mi_plo, mi_phi, mi_stride, mi_bins, mi_out, mw);
        });
    }
    if (app.got_subcommand(be)) {
        ManifestWriter mw(fs::path(be_out).parent_path(), "bench",
                          {{"dims", be_dims},
                           {"horizons", be_horizons},
                           {"n_delays", be_delays},
                           {"method", be_method}},
                          0);
        return run_with_manifest(mw, [&] {
            return cmd_bench(split_ints(be_dims), split_doubles(be_horizons),
                             split_ints(be_delays), be_method, be_out, mw);
        });
    }
    return 1;
}
