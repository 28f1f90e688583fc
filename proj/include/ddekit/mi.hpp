#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "ddekit/errors.hpp"

namespace ddekit {

namespace detail {

struct BinAxis {
    double lo = 0.0, width = 0.0;
    bool degenerate = false;
    int bins = 0;

    int index(double v) const {
        int b = static_cast<int>(std::floor((v - lo) / width));
        return std::clamp(b, 0, bins - 1);
    }
};

inline BinAxis make_axis(std::span<const double> series, std::size_t start, std::size_t lag,
                         std::size_t count, int bins) {
    double lo = series[start - lag], hi = lo;
    for (std::size_t n = start; n < start + count; ++n) {
        const double v = series[n - lag];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    BinAxis ax;
    ax.bins = bins;
    ax.lo = lo;
    ax.degenerate = !(hi > lo);
    ax.width = ax.degenerate ? 1.0 : (hi - lo) / bins;
    return ax;
}

inline void check_mi_args(std::size_t len, int max_lag, int bins) {
    if (bins < 4) throw config_error("delayed_mi: bins must be >= 4");
    if (max_lag < 0) throw config_error("delayed_mi: lags must be >= 0");
    if (len <= static_cast<std::size_t>(max_lag) + 1000)
        throw config_error("delayed_mi: series too short for the requested lags");
}

} // namespace detail

/// Histogram estimate (nats) of I((g(t-p1), g(t-p2)); g(t)): aligned triples,
/// equal-width bins over each coordinate's observed range, plug-in formula
/// over the 3-D joint against the (lagged-pair, current) marginals. A constant
/// series returns 0 and raises the degenerate flag.
inline double delayed_mi(std::span<const double> series, int p1, int p2, int bins,
                         bool* degenerate = nullptr) {
    detail::check_mi_args(series.size(), std::max(p1, p2), bins);
    const std::size_t start = static_cast<std::size_t>(std::max(p1, p2));
    const std::size_t count = series.size() - start;
    const auto ax = detail::make_axis(series, start, static_cast<std::size_t>(p1), count, bins);
    const auto ay = detail::make_axis(series, start, static_cast<std::size_t>(p2), count, bins);
    const auto az = detail::make_axis(series, start, 0, count, bins);
    if (degenerate) *degenerate = ax.degenerate || ay.degenerate || az.degenerate;
    if (ax.degenerate || ay.degenerate || az.degenerate) return 0.0;

    const std::size_t B = static_cast<std::size_t>(bins);
    std::vector<std::uint32_t> joint(B * B * B, 0);
    std::vector<std::uint32_t> pair(B * B, 0);
    std::vector<std::uint32_t> cur(B, 0);
    for (std::size_t n = start; n < series.size(); ++n) {
        const std::size_t bx = static_cast<std::size_t>(
            ax.index(series[n - static_cast<std::size_t>(p1)]));
        const std::size_t by = static_cast<std::size_t>(
            ay.index(series[n - static_cast<std::size_t>(p2)]));
        const std::size_t bz = static_cast<std::size_t>(az.index(series[n]));
        joint[(bx * B + by) * B + bz] += 1;
        pair[bx * B + by] += 1;
        cur[bz] += 1;
    }
    const double inv = 1.0 / static_cast<double>(count);
    double mi = 0.0;
    for (std::size_t xy = 0; xy < B * B; ++xy) {
        if (pair[xy] == 0) continue;
        for (std::size_t z = 0; z < B; ++z) {
            const std::uint32_t c = joint[xy * B + z];
            if (c == 0) continue;
            const double pxyz = c * inv;
            const double pxy = pair[xy] * inv;
            const double pz = cur[z] * inv;
            mi += pxyz * std::log(pxyz / (pxy * pz));
        }
    }
    return mi;
}

/// Histogram estimate of I(g(t-p); g(t)), used by the monotonicity check that
/// adding a lagged coordinate cannot lose information.
inline double delayed_mi_single(std::span<const double> series, int p, int bins) {
    detail::check_mi_args(series.size(), p, bins);
    const std::size_t start = static_cast<std::size_t>(p);
    const std::size_t count = series.size() - start;
    const auto ax = detail::make_axis(series, start, static_cast<std::size_t>(p), count, bins);
    const auto az = detail::make_axis(series, start, 0, count, bins);
    if (ax.degenerate || az.degenerate) return 0.0;

    const std::size_t B = static_cast<std::size_t>(bins);
    std::vector<std::uint32_t> joint(B * B, 0);
    std::vector<std::uint32_t> mx(B, 0), mz(B, 0);
    for (std::size_t n = start; n < series.size(); ++n) {
        const std::size_t bx =
            static_cast<std::size_t>(ax.index(series[n - static_cast<std::size_t>(p)]));
        const std::size_t bz = static_cast<std::size_t>(az.index(series[n]));
        joint[bx * B + bz] += 1;
        mx[bx] += 1;
        mz[bz] += 1;
    }
    const double inv = 1.0 / static_cast<double>(count);
    double mi = 0.0;
    for (std::size_t x = 0; x < B; ++x) {
        if (mx[x] == 0) continue;
        for (std::size_t z = 0; z < B; ++z) {
            const std::uint32_t c = joint[x * B + z];
            if (c == 0) continue;
            mi += c * inv * std::log((c * inv) / (mx[x] * inv * (mz[z] * inv)));
        }
    }
    return mi;
}

/// MI over an integer lag lattice. Symmetric under lag swap by construction
/// (the swapped cell is mirrored, not re-estimated).
struct MiGrid {
    std::vector<int> lags;     // p_lo, p_lo+stride, ..., <= p_hi
    std::vector<double> values; // n x n row-major, values[i*n+j] = MI(lags[i], lags[j])
    int bins = 0;
    int argmax_i = 0, argmax_j = 0;
    double max_value = 0.0;

    int n() const { return static_cast<int>(lags.size()); }
    double at(int i, int j) const {
        return values[static_cast<std::size_t>(i) * lags.size() +
                      static_cast<std::size_t>(j)];
    }
};

inline MiGrid mi_map(std::span<const double> series, int p_lo, int p_hi, int stride,
                     int bins) {
    if (stride < 1) throw config_error("mi_map: stride must be >= 1");
    if (p_hi < p_lo) throw config_error("mi_map: p_hi must be >= p_lo");
    detail::check_mi_args(series.size(), p_hi, bins);
    MiGrid grid;
    grid.bins = bins;
    for (int p = p_lo; p <= p_hi; p += stride) grid.lags.push_back(p);
    const std::size_t n = grid.lags.size();
    grid.values.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const double v = delayed_mi(series, grid.lags[i], grid.lags[j], bins);
            grid.values[i * n + j] = v;
            grid.values[j * n + i] = v;
        }
    }
    grid.max_value = -1.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (grid.values[i * n + j] > grid.max_value) {
                grid.max_value = grid.values[i * n + j];
                grid.argmax_i = static_cast<int>(i);
                grid.argmax_j = static_cast<int>(j);
            }
    return grid;
}

} // namespace ddekit
