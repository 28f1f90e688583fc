#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ddekit/errors.hpp"
#include "ddekit/history.hpp"
#include "ddekit/trajectory.hpp"

namespace ddekit {

enum class Method { euler, rk2, rk4 };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::euler: return "euler";
        case Method::rk2: return "rk2";
        case Method::rk4: return "rk4";
    }
    return "rk4";
}

inline Method method_from_string(const std::string& s) {
    if (s == "euler") return Method::euler;
    if (s == "rk2") return Method::rk2;
    if (s == "rk4") return Method::rk4;
    throw config_error("unknown method: " + s + " (expected euler|rk2|rk4)");
}

/// Constant-lag DDE on [t0, t1] with a fixed step. The field receives the
/// current state and the delayed states concatenated as k blocks of state_dim
/// (the block order follows `delays`, which is positional, not sorted — the
/// blocks map onto model inputs and learned delays may cross).
struct DdeProblem {
    using Field = std::function<void(double t, std::span<const double> x,
                                     std::span<const double> delayed,
                                     std::span<double> dxdt)>;
    Field vector_field;
    std::vector<double> delays;
    int state_dim = 0;
    double t0 = 0.0, t1 = 0.0, dt = 0.0;
};

/// Steps implied by the grid; (t1 - t0)/dt must sit within 1e-9 of an integer.
inline int grid_steps(double t0, double t1, double dt) {
    if (!(dt > 0.0)) throw config_error("dt must be > 0");
    if (!(t1 > t0)) throw config_error("t1 must exceed t0");
    const double r = (t1 - t0) / dt;
    const double n = std::round(r);
    if (std::abs(r - n) > 1e-9)
        throw config_error("(t1 - t0)/dt = " + std::to_string(r) + " is not an integer");
    return static_cast<int>(n);
}

inline void validate(const DdeProblem& p) {
    if (!p.vector_field) throw config_error("DdeProblem: vector_field not set");
    if (p.state_dim < 1) throw config_error("DdeProblem: state_dim must be >= 1");
    grid_steps(p.t0, p.t1, p.dt);
    for (double tau : p.delays)
        if (tau < p.dt)
            throw config_error("delay " + std::to_string(tau) + " < dt " +
                               std::to_string(p.dt) +
                               "; explicit stepping needs tau >= dt");
}

namespace detail {

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

/// One explicit step from (t, x) to x_next. k1 = f(t, x) is supplied by the
/// caller (it doubles as the stored node derivative). Shared by the DDE and
/// ODE integrators so a zero-delay DDE reduces to the ODE path bitwise.
template <class FieldEval>
void rk_step(Method method, double t, double dt, std::span<const double> x,
             std::span<const double> k1, FieldEval&& f, std::span<double> x_next,
             std::vector<double>& ktmp, std::vector<double>& xtmp,
             std::vector<double>& ksum) {
    const std::size_t n = x.size();
    switch (method) {
        case Method::euler: {
            for (std::size_t c = 0; c < n; ++c) x_next[c] = x[c] + dt * k1[c];
            return;
        }
        case Method::rk2: { // explicit midpoint
            for (std::size_t c = 0; c < n; ++c) xtmp[c] = x[c] + 0.5 * dt * k1[c];
            f(t + 0.5 * dt, xtmp, ktmp);
            for (std::size_t c = 0; c < n; ++c) x_next[c] = x[c] + dt * ktmp[c];
            return;
        }
        case Method::rk4: {
            for (std::size_t c = 0; c < n; ++c) xtmp[c] = x[c] + 0.5 * dt * k1[c];
            f(t + 0.5 * dt, xtmp, ktmp); // k2
            for (std::size_t c = 0; c < n; ++c) {
                ksum[c] = k1[c] + 2.0 * ktmp[c];
                xtmp[c] = x[c] + 0.5 * dt * ktmp[c];
            }
            f(t + 0.5 * dt, xtmp, ktmp); // k3
            for (std::size_t c = 0; c < n; ++c) {
                ksum[c] += 2.0 * ktmp[c];
                xtmp[c] = x[c] + dt * ktmp[c];
            }
            f(t + dt, xtmp, ktmp); // k4
            for (std::size_t c = 0; c < n; ++c)
                x_next[c] = x[c] + dt / 6.0 * (ksum[c] + ktmp[c]);
            return;
        }
    }
}

} // namespace detail

/// Integrates the DDE with the named explicit scheme. Delayed arguments at
/// stage time s read the dense interpolant of already-completed steps (or the
/// history for s - tau <= t0); tau >= dt guarantees those lookups never enter
/// the in-progress step. Node derivatives are stored at every node.
///
/// Steps whose interior contains a delay-fold point t0 + tau_i are subdivided
/// there: the solution loses smoothness where a delayed argument crosses the
/// history boundary, and stepping across that point degrades the trajectory's
/// parameter sensitivities. Only grid nodes are stored either way, and a
/// zero-delay problem takes the exact arithmetic path of integrate_ode.
inline DenseTrajectory integrate(const DdeProblem& problem, const HistoryFunction& history,
                                 Method method) {
    validate(problem);
    if (history.dim() != problem.state_dim)
        throw dimension_error("history dim != problem state_dim");
    const int n_steps = grid_steps(problem.t0, problem.t1, problem.dt);
    const int dim = problem.state_dim;
    const std::size_t k = problem.delays.size();
    const double tol = 1e-9 * problem.dt;

    // fold points, deduplicated, off-node, ascending
    std::vector<double> folds;
    {
        std::vector<double> raw;
        for (double tau : problem.delays) {
            const double e = problem.t0 + tau;
            if (e > problem.t0 + tol && e < problem.t1 - tol) raw.push_back(e);
        }
        std::sort(raw.begin(), raw.end());
        for (double e : raw) {
            const double r = (e - problem.t0) / problem.dt;
            if (std::abs(e - (problem.t0 + std::round(r) * problem.dt)) <= tol) continue;
            if (folds.empty() || e - folds.back() > tol) folds.push_back(e);
        }
    }

    DenseTrajectory traj(problem.t0, problem.dt, n_steps, dim, history);
    history.eval(problem.t0, traj.mutable_state(0));

    std::vector<double> delayed(k * static_cast<std::size_t>(dim));
    auto field_eval = [&](double s, std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < k; ++i)
            traj.eval(s - problem.delays[i],
                      std::span<double>(delayed.data() + i * dim, static_cast<std::size_t>(dim)));
        problem.vector_field(s, x, delayed, out);
    };

    std::vector<double> ktmp(dim), xtmp(dim), ksum(dim);
    std::vector<double> xsub(dim), ksub(dim), xland(dim);
    field_eval(problem.t0, traj.state(0), traj.mutable_node_derivative(0));
    if (!detail::all_finite(traj.node_derivative(0)))
        throw divergence_error("non-finite vector field", problem.t0);

    std::size_t next_fold = 0;
    for (int n = 0; n < n_steps; ++n) {
        const double t = traj.node_time(n);
        const double t_next = traj.node_time(n + 1);
        if (next_fold < folds.size() && folds[next_fold] < t_next - tol) {
            // subdivide this step at the fold points it contains
            std::copy(traj.state(n).begin(), traj.state(n).end(), xsub.begin());
            std::copy(traj.node_derivative(n).begin(), traj.node_derivative(n).end(),
                      ksub.begin());
            double s = t;
            while (next_fold < folds.size() && folds[next_fold] < t_next - tol) {
                const double e = folds[next_fold];
                detail::rk_step(method, s, e - s, xsub, ksub, field_eval, xland, ktmp,
                                xtmp, ksum);
                std::swap(xsub, xland);
                field_eval(e, xsub, ksub);
                s = e;
                ++next_fold;
            }
            detail::rk_step(method, s, t_next - s, xsub, ksub, field_eval,
                            traj.mutable_state(n + 1), ktmp, xtmp, ksum);
        } else {
            detail::rk_step(method, t, problem.dt, traj.state(n), traj.node_derivative(n),
                            field_eval, traj.mutable_state(n + 1), ktmp, xtmp, ksum);
        }
        if (!detail::all_finite(traj.state(n + 1)))
            throw divergence_error("non-finite state", traj.node_time(n + 1));
        field_eval(traj.node_time(n + 1), traj.state(n + 1),
                   traj.mutable_node_derivative(n + 1));
        if (!detail::all_finite(traj.node_derivative(n + 1)))
            throw divergence_error("non-finite vector field", traj.node_time(n + 1));
    }
    return traj;
}

/// Plain ODE integration with the same stage arithmetic as the DDE path.
/// Used by the dataset generators and as the degenerate-equivalence reference.
inline DenseTrajectory integrate_ode(
    const std::function<void(double, std::span<const double>, std::span<double>)>& field,
    std::span<const double> x0, double t0, double t1, double dt, Method method) {
    const int n_steps = grid_steps(t0, t1, dt);
    const int dim = static_cast<int>(x0.size());
    if (dim < 1) throw config_error("integrate_ode: empty initial state");

    DenseTrajectory traj(t0, dt, n_steps, dim,
                         HistoryFunction::constant({x0.begin(), x0.end()}));
    std::copy(x0.begin(), x0.end(), traj.mutable_state(0).begin());

    auto field_eval = [&](double s, std::span<const double> x, std::span<double> out) {
        field(s, x, out);
    };

    std::vector<double> ktmp(dim), xtmp(dim), ksum(dim);
    field_eval(t0, traj.state(0), traj.mutable_node_derivative(0));
    if (!detail::all_finite(traj.node_derivative(0)))
        throw divergence_error("non-finite vector field", t0);

    for (int n = 0; n < n_steps; ++n) {
        const double t = traj.node_time(n);
        detail::rk_step(method, t, dt, traj.state(n), traj.node_derivative(n), field_eval,
                        traj.mutable_state(n + 1), ktmp, xtmp, ksum);
        if (!detail::all_finite(traj.state(n + 1)))
            throw divergence_error("non-finite state", traj.node_time(n + 1));
        field_eval(traj.node_time(n + 1), traj.state(n + 1),
                   traj.mutable_node_derivative(n + 1));
        if (!detail::all_finite(traj.node_derivative(n + 1)))
            throw divergence_error("non-finite vector field", traj.node_time(n + 1));
    }
    return traj;
}

} // namespace ddekit
