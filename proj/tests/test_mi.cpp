#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ddekit/data.hpp"
#include "ddekit/mi.hpp"
#include "ddekit/rng.hpp"

using namespace ddekit;

namespace {

std::vector<double> noise_series(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> s(static_cast<std::size_t>(n));
    for (double& v : s) v = rng.uniform();
    return s;
}

} // namespace

TEST_CASE("iid noise carries almost no delayed information") {
    const auto s = noise_series(200000, 1);
    const double mi = delayed_mi(s, 125, 200, 16);
    CHECK(mi >= 0.0);
    CHECK(mi < 0.05); // estimator bias only
}

TEST_CASE("swapping the lags leaves the estimate unchanged") {
    const auto s = gen_two_delay_map(50000, 2);
    const double a = delayed_mi(s, 40, 90, 16);
    const double b = delayed_mi(s, 90, 40, 16);
    CHECK(std::abs(a - b) < 1e-9);
}

TEST_CASE("the generating lags dominate an off-structure pair") {
    const auto s = gen_two_delay_map(200000, 5);
    const double at_true = delayed_mi(s, 125, 200, 16);
    const double off = delayed_mi(s, 40, 40, 16);
    CHECK(at_true > off);
}

TEST_CASE("degenerate series returns zero with a warning flag") {
    std::vector<double> flat(5000, 1.25);
    bool degenerate = false;
    CHECK(delayed_mi(flat, 10, 20, 8, &degenerate) == 0.0);
    CHECK(degenerate);
}

TEST_CASE("precondition failures are configuration errors") {
    const auto s = noise_series(3000, 3);
    CHECK_THROWS_AS(delayed_mi(s, 10, 20, 3), config_error);   // bins too few
    CHECK_THROWS_AS(delayed_mi(s, 2500, 20, 8), config_error); // series too short
    CHECK_THROWS_AS(mi_map(s, 50, 10, 5, 8), config_error);    // inverted range
}

TEST_CASE("mi_map symmetry, nonnegativity, argmax bookkeeping") {
    const auto s = gen_two_delay_map(60000, 8);
    const MiGrid grid = mi_map(s, 20, 80, 20, 12); // lags 20,40,60,80
    REQUIRE(grid.n() == 4);
    for (int i = 0; i < grid.n(); ++i)
        for (int j = 0; j < grid.n(); ++j) {
            CHECK(grid.at(i, j) == grid.at(j, i));
            CHECK(grid.at(i, j) >= -1e-9);
        }
    CHECK(grid.max_value == grid.at(grid.argmax_i, grid.argmax_j));

    SECTION("single-point grid") {
        const MiGrid one = mi_map(s, 125, 125, 5, 12);
        CHECK(one.n() == 1);
        CHECK(one.lags == std::vector<int>{125});
        CHECK(one.max_value == one.at(0, 0));
    }
}

TEST_CASE("noise grid stays under the bias ceiling") {
    const auto s = noise_series(200000, 9);
    const MiGrid grid = mi_map(s, 10, 90, 40, 16); // lags 10,50,90
    CHECK(grid.max_value < 0.1);
}

TEST_CASE("adding a lagged coordinate cannot lose information") {
    const auto s = gen_two_delay_map(120000, 11);
    for (int p1 : {60, 125}) {
        const double single = delayed_mi_single(s, p1, 16);
        const double pair = delayed_mi(s, p1, 200, 16);
        CHECK(pair >= single - 0.02);
    }
}

TEST_CASE("estimates are deterministic") {
    const auto s = gen_two_delay_map(50000, 13);
    CHECK(delayed_mi(s, 30, 70, 16) == delayed_mi(s, 30, 70, 16));
    const MiGrid a = mi_map(s, 10, 50, 20, 8);
    const MiGrid b = mi_map(s, 10, 50, 20, 8);
    CHECK(a.values == b.values);
}
