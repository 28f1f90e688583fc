// Built with DDEKIT_GRADCHECK_SIGN_FLIP: the harness negates the adjoint
// gradients before comparing, so every nontrivial trial must fail. Guards
// against a gradcheck that cannot detect a wrong-sign adjoint.

#include <catch2/catch_amalgamated.hpp>

#include "ddekit/gradcheck.hpp"

using namespace ddekit;

TEST_CASE("sign-flipped gradients fail the finite-difference comparison") {
    GradcheckOptions opt;
    opt.seed = 0;
    opt.trials = 4;
    REQUIRE(opt.sign_flip); // set by the build flag
    const GradcheckReport report = run_gradcheck(opt);
    INFO(report.to_text());
    CHECK_FALSE(report.all_pass);
}
