#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "ddekit/errors.hpp"
#include "ddekit/history.hpp"

namespace ddekit {

/// Piecewise-polynomial record of a solved trajectory on a fixed grid
/// t0, t0+dt, ..., t0+N*dt. Stores node states and node derivatives (the
/// vector field at each node) and interpolates between nodes with a cubic
/// Hermite, so delayed-state and delayed-derivative lookups are available at
/// arbitrary past times. Immutable after construction and safe to share.
class DenseTrajectory {
public:
    DenseTrajectory(double t0, double dt, int n_steps, int dim, HistoryFunction history)
        : t0_(t0), dt_(dt), n_steps_(n_steps), dim_(dim), history_(std::move(history)) {
        if (!(dt > 0.0)) throw config_error("DenseTrajectory: dt must be > 0");
        if (n_steps < 1) throw config_error("DenseTrajectory: need at least one step");
        if (history_.dim() != dim) throw dimension_error("history dim != state dim");
        states_.assign(static_cast<std::size_t>(n_steps + 1) * dim, 0.0);
        derivs_.assign(static_cast<std::size_t>(n_steps + 1) * dim, 0.0);
    }

    double t0() const { return t0_; }
    double t1() const { return node_time(n_steps_); }
    double dt() const { return dt_; }
    int n_steps() const { return n_steps_; }
    int dim() const { return dim_; }
    const HistoryFunction& history() const { return history_; }

    double node_time(int i) const { return t0_ + i * dt_; }

    std::span<const double> state(int i) const {
        return {states_.data() + static_cast<std::size_t>(i) * dim_,
                static_cast<std::size_t>(dim_)};
    }
    std::span<const double> node_derivative(int i) const {
        return {derivs_.data() + static_cast<std::size_t>(i) * dim_,
                static_cast<std::size_t>(dim_)};
    }
    std::span<double> mutable_state(int i) {
        return {states_.data() + static_cast<std::size_t>(i) * dim_,
                static_cast<std::size_t>(dim_)};
    }
    std::span<double> mutable_node_derivative(int i) {
        return {derivs_.data() + static_cast<std::size_t>(i) * dim_,
                static_cast<std::size_t>(dim_)};
    }

    /// history(t) for t <= t0; the stored state, bitwise, at a grid node;
    /// cubic Hermite on the enclosing interval otherwise.
    void eval(double t, std::span<double> out) const {
        if (t <= t0_) {
            history_.eval(t, out);
            return;
        }
        check_range(t);
        const int i = node_index_exact(t);
        if (i >= 0) {
            const auto s = state(i);
            std::copy(s.begin(), s.end(), out.begin());
            return;
        }
        hermite(t, out, /*derivative=*/false);
    }

    /// History derivative for t <= t0; stored node derivative at a node;
    /// the Hermite interpolant's derivative otherwise.
    void eval_derivative(double t, std::span<double> out) const {
        if (t <= t0_) {
            history_.derivative(t, out);
            return;
        }
        check_range(t);
        const int i = node_index_exact(t);
        if (i >= 0) {
            const auto d = node_derivative(i);
            std::copy(d.begin(), d.end(), out.begin());
            return;
        }
        hermite(t, out, /*derivative=*/true);
    }

    std::vector<double> eval(double t) const {
        std::vector<double> out(static_cast<std::size_t>(dim_));
        eval(t, out);
        return out;
    }
    std::vector<double> eval_derivative(double t) const {
        std::vector<double> out(static_cast<std::size_t>(dim_));
        eval_derivative(t, out);
        return out;
    }

private:
    void check_range(double t) const {
        if (t > t1() && t - t1() > 1e-9 * dt_)
            throw config_error("trajectory evaluated past t1: t=" + std::to_string(t) +
                               " t1=" + std::to_string(t1()));
    }

    // >= 0 iff t coincides exactly (as a double) with the grid node t0 + i*dt.
    int node_index_exact(double t) const {
        const double r = (t - t0_) / dt_;
        const int i = static_cast<int>(std::lround(r));
        if (i >= 0 && i <= n_steps_ && t == t0_ + i * dt_) return i;
        return -1;
    }

    void hermite(double t, std::span<double> out, bool derivative) const {
        int i = static_cast<int>(std::floor((t - t0_) / dt_));
        if (i < 0) i = 0;
        if (i >= n_steps_) i = n_steps_ - 1;
        const double ta = node_time(i);
        const double s = (t - ta) / dt_;
        const double* ya = states_.data() + static_cast<std::size_t>(i) * dim_;
        const double* yb = ya + dim_;
        const double* fa = derivs_.data() + static_cast<std::size_t>(i) * dim_;
        const double* fb = fa + dim_;
        if (!derivative) {
            const double h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
            const double h10 = s * (1.0 - s) * (1.0 - s);
            const double h01 = s * s * (3.0 - 2.0 * s);
            const double h11 = s * s * (s - 1.0);
            for (int c = 0; c < dim_; ++c)
                out[c] = h00 * ya[c] + h01 * yb[c] + dt_ * (h10 * fa[c] + h11 * fb[c]);
        } else {
            const double g00 = 6.0 * s * (s - 1.0) / dt_;
            const double g10 = (3.0 * s - 1.0) * (s - 1.0);
            const double g01 = -g00;
            const double g11 = s * (3.0 * s - 2.0);
            for (int c = 0; c < dim_; ++c)
                out[c] = g00 * ya[c] + g01 * yb[c] + g10 * fa[c] + g11 * fb[c];
        }
    }

    double t0_, dt_;
    int n_steps_, dim_;
    HistoryFunction history_;
    std::vector<double> states_;
    std::vector<double> derivs_;
};

/// Free-function spellings used throughout the tests and tools.
inline std::vector<double> eval_traj(const DenseTrajectory& traj, double t) {
    return traj.eval(t);
}
inline std::vector<double> eval_traj_derivative(const DenseTrajectory& traj, double t) {
    return traj.eval_derivative(t);
}

} // namespace ddekit
