// Acceptance suite: runs every criterion at its stated tolerance and prints
// one PASS/FAIL line each. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ddekit/ddekit.hpp"

namespace fs = std::filesystem;
using namespace ddekit;

namespace {

int g_threads = 2;

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

fs::path scratch() {
    static const fs::path root = [] {
        fs::path p = fs::temp_directory_path() / "ddekit_acceptance";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct CliResult {
    int code = -1;
    std::string out;
};

CliResult run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path out_file = scratch() / ("cli_stdout_" + std::to_string(counter++));
    const std::string cmd = std::string(DDEKIT_CLI_PATH) + " --threads 1 " + args + " >" +
                            out_file.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    CliResult res;
    res.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    res.out = slurp(out_file);
    return res;
}

std::string fmt(double v) { return fmt_cli(v); }

// ---------------------------------------------------------------- criterion 1

Outcome criterion1() {
    const double t0 = now_s();
    auto solve = [](double dt) {
        DdeProblem p;
        p.state_dim = 1;
        p.delays = {1.0};
        p.t0 = 0.0;
        p.t1 = 1.0;
        p.dt = dt;
        p.vector_field = [](double, std::span<const double> x, std::span<const double> xd,
                            std::span<double> out) { out[0] = x[0] * (1.0 - xd[0]); };
        auto traj = integrate(p, HistoryFunction::constant({2.0}), Method::rk4);
        return traj.eval(1.0)[0];
    };
    const double exact = 2.0 * std::exp(-1.0);
    const double err_coarse = std::abs(solve(1e-2) - exact);
    const double err_fine = std::abs(solve(1e-3) - exact);
    const double elapsed = now_s() - t0;
    Outcome o;
    o.pass = err_coarse < 1e-6 && err_fine < 1e-9 && elapsed < 1.0;
    o.detail = "err(dt=1e-2)=" + fmt(err_coarse) + " err(dt=1e-3)=" + fmt(err_fine) +
               " time=" + fmt(elapsed) + "s";
    return o;
}

// ---------------------------------------------------------------- criterion 2

Outcome criterion2() {
    const double t0 = now_s();
    const CliResult res = run_cli("gradcheck --seed 0 --trials 20 --out " +
                                  (scratch() / "gradcheck").string());
    const double elapsed = now_s() - t0;
    Outcome o;
    o.pass = res.code == 0 && elapsed < 120.0;
    std::string last;
    std::istringstream ss(res.out);
    for (std::string line; std::getline(ss, line);)
        if (line.rfind("gradcheck:", 0) == 0) last = line;
    o.detail = last + " time=" + fmt(elapsed) + "s";
    return o;
}

// ---------------------------------------------------------------- criterion 3

Outcome criterion3() {
    auto endpoint_error = [](Method m, double dt) {
        DdeProblem p;
        p.state_dim = 1;
        p.t0 = 0.0;
        p.t1 = 1.0;
        p.dt = dt;
        p.vector_field = [](double, std::span<const double> x, std::span<const double>,
                            std::span<double> out) { out[0] = -x[0]; };
        auto traj = integrate(p, HistoryFunction::constant({1.0}), m);
        return std::abs(traj.eval(1.0)[0] - std::exp(-1.0));
    };
    auto order = [&](Method m) {
        const double e1 = endpoint_error(m, 1e-1);
        const double e2 = endpoint_error(m, 5e-2);
        const double e3 = endpoint_error(m, 2.5e-2);
        return std::min(std::log2(e1 / e2), std::log2(e2 / e3));
    };
    const double p_rk4 = order(Method::rk4);
    const double p_rk2 = order(Method::rk2);
    const double p_euler = order(Method::euler);
    Outcome o;
    o.pass = p_rk4 >= 3.8 && p_rk2 >= 1.9 && p_euler >= 0.95;
    o.detail = "order(rk4)=" + fmt(p_rk4) + " order(rk2)=" + fmt(p_rk2) +
               " order(euler)=" + fmt(p_euler);
    return o;
}

// ---------------------------------------------------------------- criterion 4

TrainConfig toy_config() {
    TrainConfig c;
    c.lr_init = 5e-3;
    c.lr_final = 2e-4;
    c.batch_size = 16;
    c.max_epochs = 800;
    c.patience = 12;
    c.length_start_frac = 0.25;
    c.method = Method::rk4;
    c.dt = 0.05;
    c.seed = 100;
    c.tau_max = 2.0;
    c.n_delays = 2;
    c.hidden_width = 32;
    c.hidden_depth = 2;
    c.weight_decay = 1e-7;
    c.n_stages = 4;
    c.threads = g_threads;
    return c;
}

Outcome criterion4() {
    const double t0 = now_s();
    const Dataset ds = gen_logistic_dde(64, 100);
    TrainConfig cfg = toy_config();
    TrainResult res = train(cfg, ds, make_model_for(cfg, ds));
    const double elapsed = now_s() - t0;

    const auto& rows = res.log.rows;
    double final_mse = rows.back().loss;
    bool full_length = rows.back().length == ds.n_times - 1;

    // each realized delay varies < 1% over the final 10% of epochs
    const std::size_t window = std::max<std::size_t>(2, rows.size() / 10);
    double worst_drift = 0.0;
    for (int i = 0; i < cfg.n_delays; ++i) {
        double lo = 1e300, hi = -1e300, mean = 0.0;
        for (std::size_t r = rows.size() - window; r < rows.size(); ++r) {
            const double tau = rows[r].delays[static_cast<std::size_t>(i)];
            lo = std::min(lo, tau);
            hi = std::max(hi, tau);
            mean += tau;
        }
        mean /= static_cast<double>(window);
        worst_drift = std::max(worst_drift, (hi - lo) / mean);
    }

    Outcome o;
    o.pass = full_length && final_mse < 1e-3 && worst_drift < 0.01 && elapsed < 900.0;
    o.detail = "final_mse=" + fmt(final_mse) + " delay_drift=" + fmt(100.0 * worst_drift) +
               "% epochs=" + std::to_string(rows.back().epoch) + " delays=[" +
               fmt(rows.back().delays[0]) + ", " + fmt(rows.back().delays[1]) +
               "] time=" + fmt(elapsed) + "s";
    return o;
}

// ---------------------------------------------------------------- criterion 5

Outcome criterion5() {
    const double t0 = now_s();
    const Dataset train_ds = gen_brusselator(32, 200);
    const Dataset test_ds = gen_brusselator(8, 201);

    TrainConfig cfg;
    cfg.lr_init = 1e-3;
    cfg.lr_final = 1e-4;
    cfg.batch_size = 8;
    cfg.max_epochs = 400;
    cfg.patience = 20;
    cfg.length_start_frac = 0.25;
    cfg.method = Method::rk4;
    cfg.dt = 0.05;
    cfg.seed = 200;
    cfg.tau_max = 4.0;
    cfg.n_delays = 2;
    cfg.hidden_width = 32;
    cfg.hidden_depth = 4;
    cfg.weight_decay = 1e-7;
    cfg.n_stages = 4;
    cfg.threads = g_threads;

    TrainResult res = train(cfg, train_ds, make_model_for(cfg, train_ds));
    const double held_out = eval_mse(res.model, test_ds, cfg.method, cfg.dt, g_threads);
    const double elapsed = now_s() - t0;

    Outcome o;
    o.pass = held_out < 0.1 && elapsed < 1800.0;
    o.detail = "held_out_mse=" + fmt(held_out) +
               " final_train_mse=" + fmt(res.log.rows.back().loss) +
               " epochs=" + std::to_string(res.log.rows.back().epoch) +
               " time=" + fmt(elapsed) + "s";
    return o;
}

// ---------------------------------------------------------------- criterion 6

Outcome criterion6() {
    const double t0 = now_s();
    const Dataset ds = gen_logistic_dde(16, 300);

    auto run_pair = [&](std::uint64_t seed) {
        TrainConfig cfg;
        cfg.lr_init = 5e-3;
        cfg.lr_final = 5e-4;
        cfg.batch_size = 8;
        cfg.max_epochs = 120;
        cfg.patience = 10;
        cfg.length_start_frac = 0.5;
        cfg.method = Method::rk4;
        cfg.dt = 0.05;
        cfg.seed = seed;
        cfg.tau_max = 2.0;
        cfg.n_delays = 2;
        cfg.hidden_width = 16;
        cfg.hidden_depth = 2;
        cfg.n_stages = 2;
        cfg.threads = g_threads;

        auto adversarial = [&] {
            NeuralDdeModel m = make_model_for(cfg, ds);
            // both delays shoved toward tau_max, far from the informative lag
            set_delays(m, std::vector<double>{1.82, 1.93});
            return m;
        };
        TrainConfig frozen_cfg = cfg;
        frozen_cfg.learn_delays = false;
        const double learn_mse = train(cfg, ds, adversarial()).log.rows.back().loss;
        const double frozen_mse =
            train(frozen_cfg, ds, adversarial()).log.rows.back().loss;
        return std::pair<double, double>(learn_mse, frozen_mse);
    };

    double learn_sum = 0.0, frozen_sum = 0.0;
    std::string per_seed;
    for (std::uint64_t seed : {300ULL, 301ULL, 302ULL}) {
        const auto [l, f] = run_pair(seed);
        learn_sum += l;
        frozen_sum += f;
        per_seed += " (" + fmt(l) + " vs " + fmt(f) + ")";
    }
    const double elapsed = now_s() - t0;
    Outcome o;
    o.pass = learn_sum <= 0.5 * frozen_sum;
    o.detail = "mean_learnable=" + fmt(learn_sum / 3.0) +
               " mean_frozen=" + fmt(frozen_sum / 3.0) + per_seed + " time=" +
               fmt(elapsed) + "s";
    return o;
}

// ---------------------------------------------------------------- criterion 7

Outcome criterion7() {
    const double t0 = now_s();
    const fs::path series_dir = scratch() / "map_series";
    CliResult gen = run_cli("generate --system two-delay-map --length 200000 --seed 7 --out " +
                            series_dir.string());
    if (gen.code != 0) return {false, "series generation failed"};
    const fs::path csv = scratch() / "mimap" / "mi.csv";
    const CliResult res = run_cli("mimap --series " + series_dir.string() +
                                  " --plo 10 --phi 300 --stride 5 --bins 16 --out " +
                                  csv.string());
    const double elapsed = now_s() - t0;
    if (res.code != 0) return {false, "mimap failed: " + res.out};

    int p1 = -1, p2 = -1;
    std::sscanf(res.out.c_str(), "argmax p1=%d p2=%d", &p1, &p2);
    const auto near = [](int a, int b) { return std::abs(a - b) <= 5; };
    const bool at_max = (near(p1, 125) && near(p2, 200)) || (near(p1, 200) && near(p2, 125));
    Outcome o;
    o.pass = at_max && elapsed < 300.0;
    o.detail = "argmax=(" + std::to_string(p1) + ", " + std::to_string(p2) +
               ") expected (125, 200) or (200, 125) +-1 stride, time=" + fmt(elapsed) + "s";
    return o;
}

// ---------------------------------------------------------------- criterion 8

Outcome criterion8() {
    // forward: k = 0 NDDE vs the plain ODE integrator, bitwise
    auto model = make_model(2, 0, 8, 2, Activation::tanh, 0.0, 0.0, 88);
    const std::vector<double> x0 = {0.4, -0.6};
    auto dde = predict(model, HistoryFunction::constant(x0), 0.0, 5.0, Method::rk4, 0.05);
    auto ode = integrate_ode(
        [&](double, std::span<const double> x, std::span<double> out) {
            mlp_forward(model.spec, model.params, x, out);
        },
        x0, 0.0, 5.0, 0.05, Method::rk4);
    bool bitwise = dde.n_steps() == ode.n_steps();
    for (int n = 0; bitwise && n <= dde.n_steps(); ++n)
        for (int c = 0; c < 2; ++c)
            bitwise = bitwise && dde.state(n)[c] == ode.state(n)[c] &&
                      dde.node_derivative(n)[c] == ode.node_derivative(n)[c];

    // adjoint: the k = 0 trials of the gradcheck distribution must pass
    GradcheckOptions opt;
    opt.seed = 404;
    opt.threads = g_threads;
    bool adjoint_ok = true;
    double worst = 0.0;
    for (int trial : {0, 4, 8}) { // trial % 4 == 0 -> zero delays
        const GradcheckTrial t = gradcheck_trial(opt, trial);
        adjoint_ok = adjoint_ok && t.pass && t.n_delays == 0;
        worst = std::max(worst, t.max_err_ratio);
    }
    Outcome o;
    o.pass = bitwise && adjoint_ok;
    o.detail = std::string("forward_bitwise=") + (bitwise ? "yes" : "NO") +
               " k0_gradcheck_worst_ratio=" + fmt(worst);
    return o;
}

// ---------------------------------------------------------------- criterion 9

Outcome criterion9() {
    // Byte-identical CSV outputs across repeated seeded runs with --threads 1,
    // exercising the same code paths as criteria 1-7 at reduced scale.
    const double t0 = now_s();
    struct Step {
        std::string args;   // %OUT% replaced per run
        std::vector<std::string> artifacts;
    };
    const fs::path train_data = scratch() / "det_data";
    run_cli("generate --system logistic --n 4 --seed 77 --out " + train_data.string());
    const fs::path cfg_path = scratch() / "det_cfg.json";
    {
        TrainConfig c;
        c.lr_init = 5e-3;
        c.lr_final = 5e-4;
        c.batch_size = 2;
        c.max_epochs = 5;
        c.patience = 10;
        c.length_start_frac = 0.5;
        c.method = Method::rk4;
        c.dt = 0.05;
        c.seed = 9;
        c.tau_max = 1.5;
        c.n_delays = 2;
        c.hidden_width = 8;
        c.hidden_depth = 1;
        std::ofstream out(cfg_path);
        out << to_json(c).dump(2);
    }
    const fs::path det_series = scratch() / "det_series";
    run_cli("generate --system two-delay-map --length 5000 --seed 8 --out " +
            det_series.string());
    const std::vector<Step> steps = {
        {"generate --system logistic --n 3 --seed 5 --out %OUT%",
         {"traj_0000.csv", "traj_0001.csv", "traj_0002.csv", "meta.json"}},
        {"generate --system brusselator --n 2 --seed 6 --out %OUT%",
         {"traj_0000.csv", "traj_0001.csv"}},
        {"generate --system two-delay-map --length 20000 --seed 7 --out %OUT%",
         {"traj_0000.csv"}},
        {"train --data " + train_data.string() + " --config " + cfg_path.string() +
             " --out %OUT%",
         {"trainlog.csv", "checkpoint.bin"}},
        {"mimap --series " + det_series.string() +
             " --plo 10 --phi 50 --stride 20 --bins 8 --out %OUT%/mi.csv",
         {"mi.csv"}},
        {"gradcheck --seed 3 --trials 5 --out %OUT%", {"gradcheck.txt"}},
    };

    bool all_equal = true;
    std::string failed;
    int idx = 0;
    for (const auto& step : steps) {
        const fs::path out_a = scratch() / ("det_a_" + std::to_string(idx));
        const fs::path out_b = scratch() / ("det_b_" + std::to_string(idx));
        for (const fs::path& out : {out_a, out_b}) {
            std::string args = step.args;
            const std::string token = "%OUT%";
            for (std::size_t pos = args.find(token); pos != std::string::npos;
                 pos = args.find(token))
                args.replace(pos, token.size(), out.string());
            run_cli(args);
        }
        for (const auto& artifact : step.artifacts) {
            if (slurp(out_a / artifact) != slurp(out_b / artifact) ||
                !fs::exists(out_a / artifact)) {
                all_equal = false;
                failed += " " + artifact + "(step " + std::to_string(idx) + ")";
            }
        }
        ++idx;
    }
    Outcome o;
    o.pass = all_equal;
    o.detail = all_equal ? "all repeated runs byte-identical"
                         : ("mismatch:" + failed);
    o.detail += " time=" + fmt(now_s() - t0) + "s";
    return o;
}

} // namespace

int main(int argc, char** argv) {
    if (argc > 1) g_threads = std::max(1, std::atoi(argv[1]));
    const std::string only = argc > 2 ? argv[2] : ""; // run a single criterion by number

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"1 method-of-steps exactness", criterion1},
        {"2 adjoint gradcheck", criterion2},
        {"3 solver convergence order", criterion3},
        {"4 toy-dataset learning", criterion4},
        {"5 brusselator partial observation", criterion5},
        {"6 learnable vs frozen delays", criterion6},
        {"7 delayed mutual information argmax", criterion7},
        {"8 degenerate equivalence (k=0)", criterion8},
        {"9 determinism", criterion9},
    };

    int failures = 0;
    for (const auto& [name, fn] : criteria) {
        if (!only.empty() && name.substr(0, only.size()) != only) continue;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        std::printf("%s criterion %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(),
                    o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass) ++failures;
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
