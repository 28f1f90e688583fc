#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ddekit/errors.hpp"
#include "ddekit/io.hpp"
#include "ddekit/rng.hpp"
#include "ddekit/solver.hpp"

namespace ddekit {

/// Collection of trajectories on a shared uniform grid, plus which state
/// coordinates are observable and how the data was generated.
struct Dataset {
    double t0 = 0.0;
    double dt = 0.0; // output grid spacing
    int n_times = 0;
    int dim = 0; // stored columns per sample
    std::vector<std::vector<double>> trajectories; // each n_times * dim, row-major
    std::vector<int> observed_indices;
    // generator metadata
    std::string generator;
    std::uint64_t seed = 0;
    json params; // generator-specific constants
    int original_dim = 0;

    double time_at(int j) const { return t0 + j * dt; }
    double horizon() const { return dt * (n_times - 1); }
    std::span<const double> sample(int traj, int j) const {
        return {trajectories[static_cast<std::size_t>(traj)].data() +
                    static_cast<std::size_t>(j) * dim,
                static_cast<std::size_t>(dim)};
    }
};

inline void validate(const Dataset& ds) {
    if (ds.n_times < 2 || ds.dim < 1 || !(ds.dt > 0.0))
        throw config_error("dataset: bad grid");
    for (const auto& tr : ds.trajectories) {
        if (tr.size() != static_cast<std::size_t>(ds.n_times) * ds.dim)
            throw config_error("dataset: trajectory size mismatch");
        for (double v : tr)
            if (!std::isfinite(v)) throw config_error("dataset: non-finite value");
    }
    for (int idx : ds.observed_indices)
        if (idx < 0 || idx >= ds.dim) throw config_error("dataset: bad observed index");
}

namespace detail {

/// Integrates at dt_ref and keeps every `stride`-th node.
inline std::vector<double> subsample_nodes(const DenseTrajectory& traj, int stride,
                                           int& n_out) {
    const int N = traj.n_steps();
    if (N % stride != 0) throw config_error("subsample: stride does not divide steps");
    n_out = N / stride + 1;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n_out) * traj.dim());
    for (int j = 0; j <= N; j += stride) {
        const auto s = traj.state(j);
        out.insert(out.end(), s.begin(), s.end());
    }
    return out;
}

} // namespace detail

/// Delayed logistic population model x' = x(t) (1 - x(t-1)) on [0, 10] with
/// constant history x0 ~ U(2, 3). Reference integration at dt 1e-3, stored at
/// dt 0.05.
inline Dataset gen_logistic_dde(int n_traj, std::uint64_t seed, double dt_ref = 1e-3) {
    if (n_traj < 1) throw config_error("gen_logistic_dde: n_traj must be >= 1");
    Dataset ds;
    ds.generator = "logistic";
    ds.seed = seed;
    ds.t0 = 0.0;
    ds.dt = 0.05;
    ds.dim = 1;
    ds.original_dim = 1;
    ds.observed_indices = {0};
    ds.params = {{"tau", 1.0}, {"x0_lo", 2.0}, {"x0_hi", 3.0}, {"dt_ref", dt_ref}};

    Rng rng(seed);
    const int stride = static_cast<int>(std::lround(0.05 / dt_ref));
    DdeProblem p;
    p.state_dim = 1;
    p.delays = {1.0};
    p.t0 = 0.0;
    p.t1 = 10.0;
    p.dt = dt_ref;
    p.vector_field = [](double, std::span<const double> x, std::span<const double> xd,
                        std::span<double> out) { out[0] = x[0] * (1.0 - xd[0]); };
    for (int i = 0; i < n_traj; ++i) {
        const double x0 = rng.uniform(2.0, 3.0);
        auto traj = integrate(p, HistoryFunction::constant({x0}), Method::rk4);
        int n_out = 0;
        ds.trajectories.push_back(detail::subsample_nodes(traj, stride, n_out));
        ds.n_times = n_out;
    }
    validate(ds);
    return ds;
}

/// Brusselator RHS with A = 1, B = 3 (classic limit-cycle regime):
///   phi1' = A - B phi1 - phi1 + phi1^2 phi2
///   phi2' = B phi1 - phi1^2 phi2
inline void brusselator_rhs(double A, double B, std::span<const double> x,
                            std::span<double> out) {
    out[0] = A - B * x[0] - x[0] + x[0] * x[0] * x[1];
    out[1] = B * x[0] - x[0] * x[0] * x[1];
}

/// Brusselator on [0, 25], phi1(0) ~ U(0, 2), phi2(0) = 0, observed phi1 only.
inline Dataset gen_brusselator(int n_traj, std::uint64_t seed, double dt_ref = 1e-3) {
    if (n_traj < 1) throw config_error("gen_brusselator: n_traj must be >= 1");
    const double A = 1.0, B = 3.0;
    Dataset ds;
    ds.generator = "brusselator";
    ds.seed = seed;
    ds.t0 = 0.0;
    ds.dt = 0.05;
    ds.dim = 2;
    ds.original_dim = 2;
    ds.observed_indices = {0};
    ds.params = {{"A", A}, {"B", B}, {"dt_ref", dt_ref}};

    Rng rng(seed);
    const int stride = static_cast<int>(std::lround(0.05 / dt_ref));
    auto field = [A, B](double, std::span<const double> x, std::span<double> out) {
        brusselator_rhs(A, B, x, out);
    };
    for (int i = 0; i < n_traj; ++i) {
        const double phi1 = rng.uniform(0.0, 2.0);
        const std::vector<double> x0 = {phi1, 0.0};
        auto traj = integrate_ode(field, x0, 0.0, 25.0, dt_ref, Method::rk4);
        int n_out = 0;
        ds.trajectories.push_back(detail::subsample_nodes(traj, stride, n_out));
        ds.n_times = n_out;
    }
    validate(ds);
    return ds;
}

/// Unnormalized sinc, sinc(0) = 1.
inline double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }

/// Two-delay scalar map on an integer grid (dt = 1):
///   g[n] = cos(g[n-125]) sin(g[n-200]) - a sinc(3 g[n-125]) + a cos(g[n-200])
/// with a = 0.2, so each sample depends on the values exactly 125 and 200
/// steps back (the lags the delayed-MI map is expected to single out).
/// History is iid U(0, 1); the first 5000 generated steps are discarded as
/// burn-in. |g| <= 1 + 2a everywhere by construction.
inline std::vector<double> gen_two_delay_map(int length, std::uint64_t seed,
                                             int p1 = 125, int p2 = 200,
                                             double alpha = 0.2, int burn_in = 5000) {
    if (length <= 10 * std::max(p1, p2))
        throw config_error("gen_two_delay_map: length must exceed 10*max(p1,p2)");
    const int max_lag = std::max(p1, p2);
    Rng rng(seed);
    std::vector<double> g;
    g.reserve(static_cast<std::size_t>(max_lag + 1 + burn_in + length));
    for (int i = 0; i <= max_lag; ++i) g.push_back(rng.uniform());
    const int total = burn_in + length;
    for (int step = 0; step < total; ++step) {
        const std::size_t n = g.size(); // index the new sample will occupy
        const double g1 = g[n - static_cast<std::size_t>(p1)];
        const double g2 = g[n - static_cast<std::size_t>(p2)];
        g.push_back(std::cos(g1) * std::sin(g2) - alpha * sinc(3.0 * g1) +
                    alpha * std::cos(g2));
    }
    return {g.end() - length, g.end()};
}

/// Two-delay map packaged as a 1-trajectory dataset with dt = 1.
inline Dataset gen_two_delay_map_dataset(int length, std::uint64_t seed) {
    Dataset ds;
    ds.generator = "two-delay-map";
    ds.seed = seed;
    ds.t0 = 0.0;
    ds.dt = 1.0;
    ds.dim = 1;
    ds.original_dim = 1;
    ds.observed_indices = {0};
    ds.params = {{"alpha", 0.2}, {"p1", 125}, {"p2", 200}, {"burn_in", 5000}};
    ds.trajectories.push_back(gen_two_delay_map(length, seed));
    ds.n_times = length;
    validate(ds);
    return ds;
}

/// Restricts the stored columns to `indices`; records the pre-mask width.
inline Dataset mask_observe(const Dataset& ds, std::span<const int> indices) {
    if (indices.empty()) throw config_error("mask_observe: empty index set");
    for (int idx : indices)
        if (idx < 0 || idx >= ds.dim)
            throw config_error("mask_observe: index " + std::to_string(idx) +
                               " out of range");
    Dataset out = ds;
    out.dim = static_cast<int>(indices.size());
    out.original_dim = ds.original_dim;
    out.observed_indices.clear();
    for (int j = 0; j < out.dim; ++j) out.observed_indices.push_back(j);
    out.trajectories.clear();
    for (const auto& tr : ds.trajectories) {
        std::vector<double> m;
        m.reserve(static_cast<std::size_t>(ds.n_times) * indices.size());
        for (int t = 0; t < ds.n_times; ++t)
            for (int idx : indices)
                m.push_back(tr[static_cast<std::size_t>(t) * ds.dim + idx]);
        out.trajectories.push_back(std::move(m));
    }
    return out;
}

/// Directory layout: meta.json + traj_0000.csv, traj_0001.csv, ... with
/// header t,y0,y1,.... Values carry 17 significant digits, so a round trip
/// is value-exact.
inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw io_error("cannot create " + dir.string() + ": " + ec.message());

    json meta = {{"generator", ds.generator},
                 {"seed", ds.seed},
                 {"params", ds.params},
                 {"t0", ds.t0},
                 {"dt", ds.dt},
                 {"n_times", ds.n_times},
                 {"dim", ds.dim},
                 {"original_dim", ds.original_dim},
                 {"n_traj", ds.trajectories.size()},
                 {"observed_indices", ds.observed_indices},
                 {"horizon", ds.horizon()}};
    write_text_atomic(dir / "meta.json", meta.dump(2) + "\n");

    for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
        std::ostringstream csv;
        csv << "t";
        for (int c = 0; c < ds.dim; ++c) csv << ",y" << c;
        csv << "\n";
        for (int t = 0; t < ds.n_times; ++t) {
            csv << fmt_full(ds.time_at(t));
            for (int c = 0; c < ds.dim; ++c)
                csv << ',' << fmt_full(ds.trajectories[i][static_cast<std::size_t>(t) * ds.dim + c]);
            csv << "\n";
        }
        char name[32];
        std::snprintf(name, sizeof(name), "traj_%04zu.csv", i);
        write_text_atomic(dir / name, csv.str());
    }
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const fs::path meta_path = dir / "meta.json";
    std::ifstream meta_in(meta_path);
    if (!meta_in) throw io_error("missing dataset metadata: " + meta_path.string());
    json meta;
    try {
        meta_in >> meta;
    } catch (const json::exception& e) {
        throw io_error("corrupted meta.json in " + dir.string() + ": " + e.what());
    }

    Dataset ds;
    std::size_t n_traj = 0;
    try {
        ds.generator = meta.at("generator").get<std::string>();
        ds.seed = meta.at("seed").get<std::uint64_t>();
        ds.params = meta.at("params");
        ds.t0 = meta.at("t0").get<double>();
        ds.dt = meta.at("dt").get<double>();
        ds.n_times = meta.at("n_times").get<int>();
        ds.dim = meta.at("dim").get<int>();
        ds.original_dim = meta.at("original_dim").get<int>();
        n_traj = meta.at("n_traj").get<std::size_t>();
        ds.observed_indices = meta.at("observed_indices").get<std::vector<int>>();
    } catch (const json::exception& e) {
        throw io_error("corrupted meta.json in " + dir.string() + ": " + e.what());
    }

    for (std::size_t i = 0; i < n_traj; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "traj_%04zu.csv", i);
        std::ifstream in(dir / name);
        if (!in) throw io_error("missing trajectory file: " + (dir / name).string());
        std::string line;
        if (!std::getline(in, line) || line.rfind("t,", 0) != 0)
            throw io_error("corrupted header in " + (dir / name).string());
        std::vector<double> values;
        values.reserve(static_cast<std::size_t>(ds.n_times) * ds.dim);
        int rows = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ss(line);
            std::string cell;
            int col = -1; // first column is time
            while (std::getline(ss, cell, ',')) {
                if (col >= 0) {
                    try {
                        values.push_back(std::stod(cell));
                    } catch (const std::exception&) {
                        throw io_error("bad number in " + (dir / name).string());
                    }
                }
                ++col;
            }
            if (col != ds.dim)
                throw io_error("column count mismatch in " + (dir / name).string());
            ++rows;
        }
        if (rows != ds.n_times)
            throw io_error("row count mismatch in " + (dir / name).string());
        ds.trajectories.push_back(std::move(values));
    }
    validate(ds);
    return ds;
}

} // namespace ddekit
