#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "ddekit/errors.hpp"
#include "ddekit/loss.hpp"
#include "ddekit/solver.hpp"
#include "ddekit/trajectory.hpp"

namespace ddekit {

/// Vector-Jacobian products of the field at one evaluation point:
///   grad_x       <- v^T df/dx_t            (state_dim)
///   grad_delayed <- v^T df/dx_{t-tau_i}    (k blocks of state_dim)
///   grad_params  <- v^T df/dtheta          (weight entries only)
/// Overwrite semantics; an empty span skips that output.
using FieldVjp = std::function<void(
    double t, std::span<const double> x, std::span<const double> delayed,
    std::span<const double> cotangent, std::span<double> grad_x,
    std::span<double> grad_delayed, std::span<double> grad_params)>;

/// Backward co-state trajectory with accumulated gradients.
///
/// The co-state is stored at breakpoints: every forward grid node, plus every
/// time where the backward dynamics lose smoothness (advanced lookups crossing
/// a sample time, delayed derivative lookups crossing the history boundary).
/// Each breakpoint keeps both one-sided values: at sample nodes lambda itself
/// jumps by the loss gradient, and at the other breakpoints its derivative
/// changes, so no interpolation segment ever spans a kink. `above` is the
/// value arriving from later times (pre-jump), `below` the value continuing
/// the backward sweep. lambda(t) == 0 past the last sample time.
class AdjointRun {
public:
    enum class Side { below, above };

    AdjointRun(double t0, double dt, int n_steps, int dim,
               const std::vector<double>& interior_breaks)
        : t0_(t0), dt_(dt), n_steps_(n_steps), dim_(dim) {
        const double tol = 1e-9 * dt;
        node_bp_.resize(static_cast<std::size_t>(n_steps) + 1);
        std::size_t next_break = 0;
        for (int n = 0; n <= n_steps; ++n) {
            const double t = t0_ + n * dt_;
            while (next_break < interior_breaks.size() &&
                   interior_breaks[next_break] < t - tol) {
                bp_times_.push_back(interior_breaks[next_break]);
                ++next_break;
            }
            node_bp_[static_cast<std::size_t>(n)] = static_cast<int>(bp_times_.size());
            bp_times_.push_back(t);
        }
        const std::size_t total = bp_times_.size() * static_cast<std::size_t>(dim);
        lam_above_.assign(total, 0.0);
        lam_below_.assign(total, 0.0);
        der_above_.assign(total, 0.0);
        der_below_.assign(total, 0.0);
    }

    double t0() const { return t0_; }
    double t1() const { return t0_ + n_steps_ * dt_; }
    double dt() const { return dt_; }
    int n_steps() const { return n_steps_; }
    int dim() const { return dim_; }

    int n_breakpoints() const { return static_cast<int>(bp_times_.size()); }
    double bp_time(int b) const { return bp_times_[static_cast<std::size_t>(b)]; }
    int node_breakpoint(int node) const {
        return node_bp_[static_cast<std::size_t>(node)];
    }

    std::span<double> lam_bp(Side side, int b) {
        auto& v = side == Side::below ? lam_below_ : lam_above_;
        return {v.data() + static_cast<std::size_t>(b) * dim_,
                static_cast<std::size_t>(dim_)};
    }
    std::span<const double> lam_bp(Side side, int b) const {
        const auto& v = side == Side::below ? lam_below_ : lam_above_;
        return {v.data() + static_cast<std::size_t>(b) * dim_,
                static_cast<std::size_t>(dim_)};
    }
    std::span<double> der_bp(Side side, int b) {
        auto& v = side == Side::below ? der_below_ : der_above_;
        return {v.data() + static_cast<std::size_t>(b) * dim_,
                static_cast<std::size_t>(dim_)};
    }

    /// Co-state at a forward grid node.
    std::span<const double> lam(Side side, int node) const {
        return lam_bp(side, node_breakpoint(node));
    }

    /// lambda(u): zero beyond t1, the requested one-sided value at a
    /// breakpoint (within 1e-9*dt), cubic Hermite on the enclosing smooth
    /// segment otherwise.
    void lambda_at(double u, Side side, std::span<double> out) const {
        const double tol = 1e-9 * dt_;
        if (u > t1() + tol) {
            std::fill(out.begin(), out.end(), 0.0);
            return;
        }
        if (u < t0_ - tol) throw config_error("lambda lookup before t0");
        const auto it = std::upper_bound(bp_times_.begin(), bp_times_.end(), u);
        std::size_t hi = static_cast<std::size_t>(it - bp_times_.begin());
        // snap to a neighbouring breakpoint
        if (hi < bp_times_.size() && std::abs(bp_times_[hi] - u) <= tol) {
            const auto v = lam_bp(side, static_cast<int>(hi));
            std::copy(v.begin(), v.end(), out.begin());
            return;
        }
        if (hi > 0 && std::abs(bp_times_[hi - 1] - u) <= tol) {
            const auto v = lam_bp(side, static_cast<int>(hi - 1));
            std::copy(v.begin(), v.end(), out.begin());
            return;
        }
        if (hi == 0 || hi == bp_times_.size())
            throw config_error("lambda lookup outside the stored range");
        const std::size_t lo = hi - 1;
        const double ta = bp_times_[lo];
        const double h = bp_times_[hi] - ta;
        const double s = (u - ta) / h;
        const auto ya = lam_bp(Side::above, static_cast<int>(lo));
        const auto yb = lam_bp(Side::below, static_cast<int>(hi));
        const double* fa = der_above_.data() + lo * static_cast<std::size_t>(dim_);
        const double* fb = der_below_.data() + hi * static_cast<std::size_t>(dim_);
        const double h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        const double h10 = s * (1.0 - s) * (1.0 - s);
        const double h01 = s * s * (3.0 - 2.0 * s);
        const double h11 = s * s * (s - 1.0);
        for (int c = 0; c < dim_; ++c)
            out[c] = h00 * ya[c] + h01 * yb[c] + h * (h10 * fa[c] + h11 * fb[c]);
    }

    std::vector<double> lambda_at(double u, Side side = Side::below) const {
        std::vector<double> out(static_cast<std::size_t>(dim_));
        lambda_at(u, side, out);
        return out;
    }

    std::vector<double> grad_weights;
    std::vector<double> grad_delays;
    /// Always empty: the history function carries no parameters, so the
    /// history integral of the gradient is identically zero.
    std::vector<double> grad_history;

private:
    double t0_, dt_;
    int n_steps_, dim_;
    std::vector<double> bp_times_;
    std::vector<int> node_bp_;
    std::vector<double> lam_above_, lam_below_, der_above_, der_below_;
};

namespace detail {

inline bool all_zero(std::span<const double> v) {
    for (double x : v)
        if (x != 0.0) return false;
    return true;
}

struct AdjointScratch {
    std::vector<double> x, xd;      // field inputs at the local time
    std::vector<double> x2, xd2;    // field inputs at an advanced time
    std::vector<double> gx, gd, gp; // VJP outputs
    std::vector<double> gd2;        // advanced VJP delayed-block output
    std::vector<double> xprime;     // delayed state derivative
    std::vector<double> lam_adv;    // looked-up advanced co-state
};

} // namespace detail

/// Integrates the co-state backward from t1 to t0 with the same scheme as the
/// forward pass, on the forward grid subdivided at the RHS kink times, and
/// accumulates the weight and delay gradients as extra quadrature states of
/// the same Runge-Kutta sweep.
///
/// Between samples the co-state obeys
///   d(lambda)/dt = -lambda(t) df/dx_t(t)
///                  - sum_i lambda(t+tau_i) df/dx_{t-tau_i}(t+tau_i)
/// with lambda(t >= t1) = 0, and at each sample node
///   lambda(t_i^-) = lambda(t_i^+) - dl/dx(t_i).
/// The gradients are
///   grad_weights = -int lambda df/dtheta dt
///   grad_delays[i] = +int lambda df/dx_{t-tau_i}(t) x'(t-tau_i) dt,
/// the delay sign fixed by the finite-difference oracle (tests pin it).
inline AdjointRun backward_adjoint(const DdeProblem& problem, const DenseTrajectory& fwd,
                                   const LossSpec& loss, const FieldVjp& vjp,
                                   std::size_t n_weights, Method method) {
    validate(problem);
    if (fwd.dim() != problem.state_dim) throw dimension_error("adjoint: fwd dim mismatch");
    const int N = fwd.n_steps();
    const int dim = problem.state_dim;
    const std::size_t k = problem.delays.size();
    const double dt = fwd.dt();
    const double t0 = fwd.t0();
    const double tol = 1e-9 * dt;

    const std::vector<int> sample_nodes = loss_node_indices(loss, t0, dt, N, dim);
    std::vector<int> jump_at(static_cast<std::size_t>(N) + 1, -1);
    for (std::size_t i = 0; i < sample_nodes.size(); ++i)
        jump_at[static_cast<std::size_t>(sample_nodes[i])] = static_cast<int>(i);

    // When a delay sits exactly on the grid, advanced lookups land on nodes
    // and the one-sided values start to matter.
    bool aligned = false;
    for (double tau : problem.delays) {
        const double r = tau / dt;
        if (std::abs(r - std::round(r)) <= 1e-9) aligned = true;
    }

    // Kink times of the backward RHS: advanced lookups crossing a sample time
    // (lambda jumps there) and delayed derivative lookups crossing the history
    // boundary (x' jumps there). Stepping or interpolating across one of these
    // costs O(dt^2 * jump) locally, which is enough to spoil gradients, so
    // they become breakpoints: integration restarts and interpolation
    // segments end at each.
    std::vector<double> interior_breaks;
    {
        std::vector<double> events;
        for (int node : sample_nodes) {
            const double u = fwd.node_time(node);
            for (double tau : problem.delays) {
                const double e = u - tau;
                if (e > t0 + tol && e < fwd.t1() - tol) events.push_back(e);
            }
        }
        for (double tau : problem.delays) {
            const double e = t0 + tau;
            if (e > t0 + tol && e < fwd.t1() - tol) events.push_back(e);
        }
        std::sort(events.begin(), events.end());
        for (double e : events) {
            const double r = (e - t0) / dt;
            if (std::abs(e - (t0 + std::round(r) * dt)) <= tol) continue; // on a node
            if (interior_breaks.empty() || e - interior_breaks.back() > tol)
                interior_breaks.push_back(e);
        }
    }

    AdjointRun run(t0, dt, N, dim, interior_breaks);
    run.grad_weights.assign(n_weights, 0.0);
    run.grad_delays.assign(k, 0.0);

    detail::AdjointScratch S;
    S.x.resize(dim);
    S.xd.resize(k * static_cast<std::size_t>(dim));
    S.x2.resize(dim);
    S.xd2.resize(k * static_cast<std::size_t>(dim));
    S.gx.resize(dim);
    S.gd.resize(k * static_cast<std::size_t>(dim));
    S.gp.resize(n_weights);
    S.gd2.resize(k * static_cast<std::size_t>(dim));
    S.xprime.resize(dim);
    S.lam_adv.resize(dim);

    // advanced(s) = sum_i lambda(s+tau_i) df/dx_{t-tau_i}(s+tau_i)
    auto advanced_term = [&](double s, AdjointRun::Side side, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < k; ++i) {
            const double u = s + problem.delays[i];
            run.lambda_at(u, side, S.lam_adv);
            if (detail::all_zero(S.lam_adv)) continue;
            fwd.eval(u, S.x2);
            for (std::size_t j = 0; j < k; ++j)
                fwd.eval(u - problem.delays[j],
                         std::span<double>(S.xd2.data() + j * dim,
                                           static_cast<std::size_t>(dim)));
            vjp(u, S.x2, S.xd2, S.lam_adv, {}, S.gd2, {});
            const double* block = S.gd2.data() + i * dim;
            for (int c = 0; c < dim; ++c) out[c] += block[c];
        }
    };

    const std::size_t aug = static_cast<std::size_t>(dim) + n_weights + k;

    // Augmented RHS at (s, y) where y = [lambda, weight-acc, delay-acc].
    // `adv` caches the advanced term for (s, side). The side also picks the
    // one-sided x'(s - tau_i) when a stage sits exactly on the history
    // boundary: approached from above, the limit is f(t0), not psi'(t0).
    auto rhs = [&](double s, std::span<const double> y, std::span<const double> adv,
                   AdjointRun::Side side, std::span<double> dydt) {
        std::fill(dydt.begin(), dydt.end(), 0.0);
        const std::span<const double> w(y.data(), static_cast<std::size_t>(dim));
        if (!detail::all_zero(w)) {
            fwd.eval(s, S.x);
            for (std::size_t j = 0; j < k; ++j)
                fwd.eval(s - problem.delays[j],
                         std::span<double>(S.xd.data() + j * dim,
                                           static_cast<std::size_t>(dim)));
            vjp(s, S.x, S.xd, w, S.gx, S.gd, S.gp);
            for (int c = 0; c < dim; ++c) dydt[c] -= S.gx[c];
            // d/dt of -int_t^T lambda df/dtheta: +lambda df/dtheta
            for (std::size_t p = 0; p < n_weights; ++p) dydt[dim + p] = S.gp[p];
            // d/dt of +int_t^T lambda B_i x'(t-tau_i): -lambda B_i x'(t-tau_i)
            for (std::size_t i = 0; i < k; ++i) {
                const double u = s - problem.delays[i];
                if (side == AdjointRun::Side::above && std::abs(u - t0) <= tol) {
                    const auto d0 = fwd.node_derivative(0);
                    std::copy(d0.begin(), d0.end(), S.xprime.begin());
                } else {
                    fwd.eval_derivative(u, S.xprime);
                }
                double acc = 0.0;
                const double* block = S.gd.data() + i * dim;
                for (int c = 0; c < dim; ++c) acc += block[c] * S.xprime[c];
                dydt[dim + n_weights + i] = -acc;
            }
        }
        for (int c = 0; c < dim; ++c) dydt[c] -= adv[c];
    };

    // Backward state and stage storage.
    std::vector<double> y(aug, 0.0);
    std::vector<double> k1(aug), k2(aug), k3(aug), k4(aug), ytmp(aug);
    std::vector<double> adv_mid(dim), adv_low(dim), adv_cache(dim);
    std::vector<double> jump(dim);

    // One backward sub-step between adjacent breakpoints. Stages at the upper
    // endpoint approach from inside the segment (below-sided lookups), stages
    // at the lower endpoint from above. adv_low is left holding the
    // above-sided advanced term at s_lo for reuse by the caller.
    auto substep = [&](double s_hi, double s_lo, std::span<const double> k1_in) {
        const double h = s_lo - s_hi; // negative
        const double smid = s_hi + 0.5 * h;
        switch (method) {
            case Method::euler: {
                for (std::size_t c = 0; c < aug; ++c) y[c] = y[c] + h * k1_in[c];
                return;
            }
            case Method::rk2: {
                advanced_term(smid, AdjointRun::Side::below, adv_mid);
                for (std::size_t c = 0; c < aug; ++c) ytmp[c] = y[c] + 0.5 * h * k1_in[c];
                rhs(smid, ytmp, adv_mid, AdjointRun::Side::below, k2);
                for (std::size_t c = 0; c < aug; ++c) y[c] = y[c] + h * k2[c];
                return;
            }
            case Method::rk4: {
                advanced_term(smid, AdjointRun::Side::below, adv_mid);
                for (std::size_t c = 0; c < aug; ++c) ytmp[c] = y[c] + 0.5 * h * k1_in[c];
                rhs(smid, ytmp, adv_mid, AdjointRun::Side::below, k2);
                for (std::size_t c = 0; c < aug; ++c) ytmp[c] = y[c] + 0.5 * h * k2[c];
                rhs(smid, ytmp, adv_mid, AdjointRun::Side::below, k3);
                advanced_term(s_lo, AdjointRun::Side::above, adv_low);
                for (std::size_t c = 0; c < aug; ++c) ytmp[c] = y[c] + h * k3[c];
                rhs(s_lo, ytmp, adv_low, AdjointRun::Side::above, k4);
                for (std::size_t c = 0; c < aug; ++c)
                    y[c] = y[c] + h / 6.0 * (k1_in[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
                return;
            }
        }
    };

    const int last_bp = run.n_breakpoints() - 1;

    // Terminal condition lambda(t >= t1) = 0, then the jump if t1 is sampled.
    {
        auto below = run.lam_bp(AdjointRun::Side::below, last_bp);
        if (jump_at[static_cast<std::size_t>(N)] >= 0) {
            loss_state_gradient(loss,
                                static_cast<std::size_t>(jump_at[static_cast<std::size_t>(N)]),
                                fwd.state(N), jump);
            for (int c = 0; c < dim; ++c) below[c] = -jump[c];
        }
        for (int c = 0; c < dim; ++c) y[c] = below[c];
    }
    advanced_term(fwd.t1(), AdjointRun::Side::below, adv_cache);
    rhs(fwd.t1(), y, adv_cache, AdjointRun::Side::below, k1);
    std::copy(k1.begin(), k1.begin() + dim,
              run.der_bp(AdjointRun::Side::below, last_bp).begin());

    int next_node = N - 1; // grid node owning the next node-breakpoint below
    for (int b = last_bp; b >= 1; --b) {
        const double s_hi = run.bp_time(b);
        const double s_lo = run.bp_time(b - 1);
        substep(s_hi, s_lo, k1);

        for (std::size_t c = 0; c < aug; ++c)
            if (!std::isfinite(y[c]))
                throw divergence_error("non-finite adjoint state", s_lo);

        const bool is_node = next_node >= 0 && run.node_breakpoint(next_node) == b - 1;
        auto above = run.lam_bp(AdjointRun::Side::above, b - 1);
        std::copy(y.begin(), y.begin() + dim, above.begin());

        // Upper-sided derivative at the landing breakpoint (for the segment
        // just completed); reuses the rk4 k4 advanced term.
        if (method != Method::rk4)
            advanced_term(s_lo, AdjointRun::Side::above, adv_low);
        rhs(s_lo, y, adv_low, AdjointRun::Side::above, ytmp);
        std::copy(ytmp.begin(), ytmp.begin() + dim,
                  run.der_bp(AdjointRun::Side::above, b - 1).begin());

        bool jumped = false;
        auto below = run.lam_bp(AdjointRun::Side::below, b - 1);
        if (is_node && jump_at[static_cast<std::size_t>(next_node)] >= 0) {
            loss_state_gradient(
                loss,
                static_cast<std::size_t>(jump_at[static_cast<std::size_t>(next_node)]),
                fwd.state(next_node), jump);
            for (int c = 0; c < dim; ++c) below[c] = above[c] - jump[c];
            jumped = true;
        } else {
            std::copy(above.begin(), above.end(), below.begin());
        }
        for (int c = 0; c < dim; ++c) y[c] = below[c];

        // k1 of the next sub-step. The below-sided advanced term differs from
        // the above-sided one at kink breakpoints, sample nodes, and whenever
        // a delay is grid-aligned.
        const bool sides_differ = aligned || jumped || !is_node;
        if (b - 1 >= 1) {
            if (sides_differ) {
                advanced_term(s_lo, AdjointRun::Side::below, adv_cache);
            } else {
                std::copy(adv_low.begin(), adv_low.end(), adv_cache.begin());
            }
            rhs(s_lo, y, adv_cache, AdjointRun::Side::below, k1);
        } else {
            std::fill(k1.begin(), k1.end(), 0.0);
        }
        std::copy(k1.begin(), k1.begin() + dim,
                  run.der_bp(AdjointRun::Side::below, b - 1).begin());

        if (is_node) --next_node;
    }

    std::copy(y.begin() + dim, y.begin() + dim + static_cast<std::ptrdiff_t>(n_weights),
              run.grad_weights.begin());
    std::copy(y.begin() + dim + static_cast<std::ptrdiff_t>(n_weights), y.end(),
              run.grad_delays.begin());
    return run;
}

} // namespace ddekit
