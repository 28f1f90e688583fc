#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ddekit/solver.hpp"

using namespace ddekit;

namespace {

DdeProblem decay_problem(double dt, double t1 = 1.0) {
    DdeProblem p;
    p.state_dim = 1;
    p.t0 = 0.0;
    p.t1 = t1;
    p.dt = dt;
    p.vector_field = [](double, std::span<const double> x, std::span<const double>,
                        std::span<double> out) { out[0] = -x[0]; };
    return p;
}

DdeProblem logistic_problem(double dt, double t1) {
    DdeProblem p;
    p.state_dim = 1;
    p.delays = {1.0};
    p.t0 = 0.0;
    p.t1 = t1;
    p.dt = dt;
    p.vector_field = [](double, std::span<const double> x, std::span<const double> xd,
                        std::span<double> out) { out[0] = x[0] * (1.0 - xd[0]); };
    return p;
}

double max_decay_error(Method m, double dt) {
    auto traj = integrate(decay_problem(dt), HistoryFunction::constant({1.0}), m);
    double worst = 0.0;
    for (int i = 0; i <= traj.n_steps(); ++i) {
        const double t = traj.node_time(i);
        worst = std::max(worst, std::abs(traj.state(i)[0] - std::exp(-t)));
    }
    return worst;
}

} // namespace

TEST_CASE("zero-delay exponential decay hits the analytic value") {
    auto traj = integrate(decay_problem(1e-3), HistoryFunction::constant({1.0}), Method::rk4);
    CHECK(std::abs(traj.eval(1.0)[0] - std::exp(-1.0)) < 1e-9);
}

TEST_CASE("delayed logistic follows the method-of-steps solution") {
    // On [0,1] the delayed argument reads the constant history 2, so
    // x' = -x and x(t) = 2 exp(-t) exactly.
    auto traj = integrate(logistic_problem(1e-2, 1.0), HistoryFunction::constant({2.0}),
                          Method::rk4);
    CHECK(std::abs(traj.eval(1.0)[0] - 2.0 * std::exp(-1.0)) < 1e-6);
    CHECK(std::abs(traj.eval(0.5)[0] - 2.0 * std::exp(-0.5)) < 1e-6);
}

TEST_CASE("delayed logistic equilibrium is preserved") {
    auto traj = integrate(logistic_problem(1e-2, 4.0), HistoryFunction::constant({1.0}),
                          Method::rk4);
    for (int i = 0; i <= traj.n_steps(); ++i)
        CHECK(std::abs(traj.state(i)[0] - 1.0) < 1e-12 * 4.0);
    // derivative of the equilibrium trajectory vanishes everywhere
    CHECK(std::abs(traj.eval_derivative(1.73)[0]) < 1e-10);
}

TEST_CASE("convergence factors under step halving") {
    // error ratios on x' = -x over [0,1]
    const double rk4a = max_decay_error(Method::rk4, 2e-2);
    const double rk4b = max_decay_error(Method::rk4, 1e-2);
    CHECK(rk4a / rk4b >= 14.0);
    const double rk2a = max_decay_error(Method::rk2, 2e-2);
    const double rk2b = max_decay_error(Method::rk2, 1e-2);
    CHECK(rk2a / rk2b >= 3.7);
    const double eua = max_decay_error(Method::euler, 2e-2);
    const double eub = max_decay_error(Method::euler, 1e-2);
    CHECK(eua / eub >= 1.9);
}

TEST_CASE("zero delays reduce the DDE stepper to the ODE stepper bitwise") {
    auto field = [](double, std::span<const double> x, std::span<double> out) {
        out[0] = std::sin(x[1]) - 0.3 * x[0];
        out[1] = x[0] * x[0] - x[1];
    };
    DdeProblem p;
    p.state_dim = 2;
    p.t0 = 0.0;
    p.t1 = 2.0;
    p.dt = 1e-2;
    p.vector_field = [&](double t, std::span<const double> x, std::span<const double>,
                         std::span<double> out) { field(t, x, out); };
    const std::vector<double> x0 = {0.4, -0.2};
    for (Method m : {Method::euler, Method::rk2, Method::rk4}) {
        auto dde = integrate(p, HistoryFunction::constant(x0), m);
        auto ode = integrate_ode(field, x0, 0.0, 2.0, 1e-2, m);
        REQUIRE(dde.n_steps() == ode.n_steps());
        for (int i = 0; i <= dde.n_steps(); ++i)
            for (int c = 0; c < 2; ++c) {
                CHECK(dde.state(i)[c] == ode.state(i)[c]);
                CHECK(dde.node_derivative(i)[c] == ode.node_derivative(i)[c]);
            }
    }
}

TEST_CASE("dense output: node values are returned bitwise") {
    auto traj = integrate(logistic_problem(0.05, 2.0), HistoryFunction::constant({2.5}),
                          Method::rk4);
    for (int i = 0; i <= traj.n_steps(); ++i) {
        const auto via_eval = traj.eval(traj.node_time(i));
        CHECK(via_eval[0] == traj.state(i)[0]);
    }
}

TEST_CASE("dense output: history region and linear exactness") {
    auto traj = integrate(logistic_problem(0.05, 1.0), HistoryFunction::constant({2.0}),
                          Method::rk4);
    CHECK(traj.eval(-3.7)[0] == 2.0);
    CHECK(traj.eval_derivative(-0.2)[0] == 0.0);

    // x' = 1 from x(0)=0 gives x(t)=t; Hermite reproduces cubics, so any
    // midpoint is exact to roundoff.
    DdeProblem lin;
    lin.state_dim = 1;
    lin.t0 = 0.0;
    lin.t1 = 1.0;
    lin.dt = 0.1;
    lin.vector_field = [](double, std::span<const double>, std::span<const double>,
                          std::span<double> out) { out[0] = 1.0; };
    auto line = integrate(lin, HistoryFunction::constant({0.0}), Method::rk4);
    for (int i = 0; i < 10; ++i) {
        const double mid = 0.05 + 0.1 * i;
        CHECK(std::abs(line.eval(mid)[0] - mid) < 1e-14);
        CHECK(std::abs(line.eval_derivative(mid)[0] - 1.0) < 1e-12);
    }
}

TEST_CASE("dense derivative matches the field at nodes") {
    auto traj = integrate(decay_problem(1e-2), HistoryFunction::constant({1.0}), Method::rk4);
    const double x_half = traj.eval(0.5)[0];
    CHECK(std::abs(traj.eval_derivative(0.5)[0] + x_half) < 1e-9);
}

TEST_CASE("interpolant is continuous across nodes") {
    auto traj = integrate(logistic_problem(0.05, 3.0), HistoryFunction::constant({2.2}),
                          Method::rk4);
    for (int i = 1; i < traj.n_steps(); ++i) {
        const double t = traj.node_time(i);
        const double eps = 1e-10;
        const double left = traj.eval(t - eps)[0];
        const double right = traj.eval(t + eps)[0];
        CHECK(std::abs(left - right) < 1e-12 + 1e-9 * std::abs(left));
    }
}

TEST_CASE("out-of-range evaluation throws") {
    auto traj = integrate(decay_problem(0.1), HistoryFunction::constant({1.0}), Method::rk4);
    CHECK_THROWS_AS(traj.eval(1.5), config_error);
}

TEST_CASE("configuration errors: delay < dt and misaligned grid") {
    DdeProblem p = logistic_problem(0.05, 1.0);
    p.delays = {0.01};
    CHECK_THROWS_AS(integrate(p, HistoryFunction::constant({1.0}), Method::rk4),
                    config_error);
    DdeProblem q = decay_problem(0.3); // 1.0/0.3 is not an integer
    CHECK_THROWS_AS(integrate(q, HistoryFunction::constant({1.0}), Method::rk4),
                    config_error);
}

TEST_CASE("divergence reports the failing time") {
    DdeProblem p;
    p.state_dim = 1;
    p.t0 = 0.0;
    p.t1 = 5.0;
    p.dt = 0.1;
    p.vector_field = [](double, std::span<const double> x, std::span<const double>,
                        std::span<double> out) { out[0] = x[0] * x[0]; }; // blows up
    try {
        integrate(p, HistoryFunction::constant({5.0}), Method::rk4);
        FAIL("expected divergence");
    } catch (const divergence_error& e) {
        CHECK(e.time() > 0.0);
        CHECK(e.time() <= 5.0);
    }
}

TEST_CASE("tabulated history interpolates and differentiates") {
    auto h = HistoryFunction::tabulated({-1.0, -0.5, 0.0}, {1.0, 2.0, 4.0}, 1);
    CHECK(h.eval(-0.75)[0] == Catch::Approx(1.5));
    CHECK(h.eval(0.0)[0] == 4.0);
    CHECK(h.eval(-2.0)[0] == 1.0); // clamped
    CHECK(h.derivative(-0.75)[0] == Catch::Approx(2.0));
    CHECK(h.derivative(-0.25)[0] == Catch::Approx(4.0));
    CHECK(h.derivative(-5.0)[0] == 0.0);
}
