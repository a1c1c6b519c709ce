#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "danalab/binary_nnn.hpp"
#include "danalab/discrn.hpp"
#include "oracles.hpp"

using namespace danalab;

namespace {

Vec corner(double a, double b) { return Vec{{a, b}}; }

AnnealSchedule schedule_15() {
    AnnealSchedule s;
    s.steps = 15;
    return s;
}

}  // namespace

TEST_CASE("logistic pair") {
    for (double T : {0.1, 1.0, 3.0}) CHECK(logistic(0.0, T) == 0.5);
    CHECK(logistic(std::log(3.0), 1.0) == doctest::Approx(0.75));
    for (double T : {0.2, 1.0})
        for (double x = 0.01; x < 1.0; x += 0.01)
            CHECK(std::abs(logistic(logistic_inverse(x, T), T) - x) <= 1e-12);
}

TEST_CASE("barrier integral") {
    CHECK(logistic_integral(0.5, 1.0) == doctest::Approx(std::log(0.5)));
    CHECK(logistic_integral(0.0, 1.0) == 0.0);
    CHECK(logistic_integral(1.0, 1.0) == 0.0);
    // derivative of the integral is the inverse activation
    for (double z : {0.1, 0.37, 0.8}) {
        const double fd = (logistic_integral(z + 1e-6, 0.7) - logistic_integral(z - 1e-6, 0.7)) / 2e-6;
        CHECK(fd == doctest::Approx(logistic_inverse(z, 0.7)).epsilon(1e-6));
    }
}

TEST_CASE("two-unit instance") {
    const BinaryProblem p = BinaryProblem::two_unit_example();
    CHECK(p.cost(corner(0, 0)) == doctest::Approx(15.68));
    CHECK(p.cost(corner(1, 0)) == doctest::Approx(2.08));
    CHECK(p.cost(corner(0, 1)) == doctest::Approx(7.48));
    CHECK(p.cost(corner(1, 1)) == doctest::Approx(5.88));
    for (const Vec& c : {corner(0, 0), corner(1, 0), corner(0, 1), corner(1, 1)})
        CHECK(energy(c, p, 1.0, 0.1) == doctest::Approx(p.cost(c)));

    const auto [x, f] = brute_force(p);
    CHECK(x == corner(1, 0));
    CHECK(f == doctest::Approx(2.08));
    CHECK(greedy(p) == corner(1, 0));
}

TEST_CASE("the a/b identity is enforced") {
    BinaryProblem p = BinaryProblem::two_unit_example();
    p.b(0) += 0.1;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = BinaryProblem::two_unit_example();
    p.gamma = 0.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("brute force and greedy against enumeration") {
    const BinaryProblem one =
        BinaryProblem::from_increments(Vec{{5.0}}, Vec{{1.0}}, 0.0, 1e-9, Vec{{-1.0}});
    CHECK(brute_force(one).first(0) == 0.0);

    const BinaryProblem pos = BinaryProblem::from_increments(
        Vec{{1.0, 2.0, 3.0}}, Vec{{1.0, 1.0, 1.0}}, 0.0, 1e-9, Vec::Constant(3, -1.0));
    CHECK(greedy(pos) == Vec::Zero(3));

    for (int trial = 0; trial < 60; ++trial) {
        const int n = 2 + trial % 11;
        const BinaryProblem p = BinaryProblem::random(n, std::min(n * (n - 1) / 2, 2 * n), 30.0 * n,
                                                      1.0, 1.0, 0.1, 500 + trial);
        const auto ref = oracle::binary_enumerate(p.c, p.p, p.P_r, p.gamma, p.d);
        const auto [x, f] = brute_force(p);
        CHECK(f == doctest::Approx(ref.cost).epsilon(1e-12));
        CHECK(p.cost(greedy(p)) >= f - 1e-9);
    }
}

TEST_CASE("binpac dynamics") {
    SUBCASE("one-dimensional interior equilibrium is a fixed point") {
        // a > -gamma p^2 - 4T/tau: a single interior equilibrium
        const BinaryProblem p =
            BinaryProblem::from_increments(Vec{{0.5}}, Vec{{1.0}}, 0.5, 1.0, Vec{{-1.0}});
        const double T = 1.0, tau = 0.1;
        double lo = 1e-6, hi = 1 - 1e-6;
        const auto rhs = [&](double x) { return binpac_rhs(Vec{{x}}, p, T, tau, 0.1)(0); };
        REQUIRE(rhs(lo) > 0);
        REQUIRE(rhs(hi) < 0);
        int sign_changes = 0;
        for (double x = 0.001; x < 0.999; x += 0.001) sign_changes += (rhs(x) > 0) != (rhs(x + 0.001) > 0);
        CHECK(sign_changes == 1);
        for (int k = 0; k < 200; ++k) {
            const double mid = 0.5 * (lo + hi);
            (rhs(mid) > 0 ? lo : hi) = mid;
        }
        const Vec xe{{0.5 * (lo + hi)}};
        CHECK(std::abs(xe(0) - 0.5) < 0.2);
        CHECK((binpac_step(xe, p, T, tau, 0.1, 1e-3) - xe).norm() <= 1e-10);
    }
    SUBCASE("steps stay strictly inside the cube") {
        const BinaryProblem p = BinaryProblem::two_unit_example();
        const Vec x = binpac_step(Vec{{1e-9, 0.5}}, p, 1.0, 0.1, 0.1, 100.0);
        CHECK(x.minCoeff() >= 1e-12);
        CHECK(x.maxCoeff() <= 1 - 1e-12);
    }
    SUBCASE("the symmetric direction always descends") {
        Rng rng(3, "dir");
        const BinaryProblem p = BinaryProblem::random(6, 8, 180.0, 1.0, 1.0, 0.1, 9);
        for (int k = 0; k < 200; ++k) {
            Vec x(6);
            for (int i = 0; i < 6; ++i) x(i) = rng.uniform(0.05, 0.95);
            const Vec d = binpac_sym_rhs(x, p, 1.0, 0.1, 0.1);
            const double h = 1e-7;
            CHECK(energy(x + h * d, p, 1.0, 0.1) <= energy(x, p, 1.0, 0.1) + 1e-12);
        }
    }
}

TEST_CASE("auxiliary variable") {
    const BinaryProblem p = BinaryProblem::random(8, 12, 240.0, 1.0, 1.0, 0.1, 4);
    const Laplacian L = build_laplacian(p.graph);
    Rng rng(5, "x");
    Vec x(8);
    for (int i = 0; i < 8; ++i) x(i) = rng.uniform(0.1, 0.9);

    BinaryProblem zero = p;
    zero.p.setZero();
    CHECK((y_star(x, zero, L, 4.0) - Vec::Constant(8, 0.5)).norm() <= 1e-12);

    const Vec y = y_star(x, p, L, 3.0);
    CHECK(y.sum() == doctest::Approx(3.0).epsilon(1e-14));
    const Vec resid = p.gamma * L.L * (p.p.cwiseProduct(x) + L.L * y);
    CHECK(resid.norm() <= 1e-9);

    // with y = y*, the distributed energy reduces to the centralized one
    CHECK(energy_tilde(x, y, p, L.L, 1.0, 0.1, 8.0) ==
          doctest::Approx(energy(x, p, 1.0, 0.1)).epsilon(1e-10));
}

TEST_CASE("binpad step") {
    const BinaryProblem p = BinaryProblem::random(8, 12, 240.0, 1.0, 1.0, 0.1, 6);
    const Mat L = laplacian_matrix(p.graph);
    const Vec alpha = Vec::Ones(8);
    Rng rng(7, "x");
    Vec x(8), y(8);
    for (int i = 0; i < 8; ++i) {
        x(i) = rng.uniform(0.2, 0.8);
        y(i) = rng.normal();
    }
    const auto [x1, y1] = binpad_step(x, y, p, L, 1.0, 0.1, 0.1, alpha, 1e-4);
    CHECK(std::abs(y1.sum() - y.sum()) <= 1e-12 * std::max(1.0, y.cwiseAbs().maxCoeff()));
    CHECK(x1.minCoeff() > 0.0);
    CHECK(x1.maxCoeff() < 1.0);
    const double e0 = energy_tilde(x, y, p, L, 1.0, 0.1), e1 = energy_tilde(x1, y1, p, L, 1.0, 0.1);
    CHECK(e1 <= e0);

    // the x direction is a diagonal PT-Newton step: the same as the dense PT-inverse
    // of the diagonal curvature applied to the force
    const auto rhs = binpad_rhs(x, y, p, L, 1.0, 0.1, 0.1, alpha);
    Vec s = x.array() - x.array().square();
    Vec hdiag(8), force(8);
    const Vec sigma = p.p.cwiseProduct(x) + L * y - Vec::Constant(8, p.P_r / 8);
    for (int i = 0; i < 8; ++i) {
        hdiag(i) = p.a(i) + p.gamma * p.p(i) * p.p(i) + (1.0 / 0.1) / s(i);
        force(i) = -(p.a(i) * (x(i) - p.b(i)) + p.gamma * p.p(i) * sigma(i) +
                     logistic_inverse(x(i), 1.0) / 0.1);
    }
    const Vec expect = pt_inverse(Mat(hdiag.asDiagonal()), 0.1) * s.cwiseProduct(force);
    CHECK((rhs.dx - expect).norm() <= 1e-9 * std::max(1.0, expect.norm()));
}

TEST_CASE("annealing on the two-unit instance") {
    const BinaryProblem p = BinaryProblem::two_unit_example();
    for (NnnMode mode : {NnnMode::Binpac, NnnMode::Binpad}) {
        Rng rng(1, "init");
        const auto r = anneal_run(p, schedule_15(), mode, rng, true);
        CHECK(r.corner == corner(1, 0));
        CHECK(std::max(1 - r.x(0), r.x(1)) <= 1e-3);
        CHECK(r.tel.energy_monotone);
        CHECK(r.tel.min_margin > 0.0);
        REQUIRE_FALSE(r.traj.empty());
        CHECK(r.traj.front().window == 0);
        CHECK(r.traj.back().window == 15);
    }
}

TEST_CASE("run telemetry on a random instance") {
    const BinaryProblem p = BinaryProblem::random(10, 20, 300.0, 1.0, 1.0, 0.1, 2);
    AnnealSchedule s;
    s.consistent_penalty = true;
    for (NnnMode mode : {NnnMode::Binpac, NnnMode::Binpad, NnnMode::Hnn}) {
        Rng rng(3, "init");
        const auto r = anneal_run(p, s, mode, rng);
        CHECK(r.tel.energy_monotone);
        CHECK(r.tel.min_margin > 0.0);
        CHECK(r.tel.max_sum_drift <= 1e-12);
        CHECK(r.cost == doctest::Approx(p.cost(r.corner)));
        Rng again(3, "init");
        CHECK(anneal_run(p, s, mode, again).x == r.x);
    }
}

TEST_CASE("quality metric") {
    CHECK_THROWS_AS(quality_metric({{1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(quality_metric({}), std::invalid_argument);
    std::vector<std::vector<double>> two(10, {1.0, 2.0});
    const auto q2 = quality_metric(two);
    CHECK(q2[0] == 1.0);
    CHECK(q2[1] == 0.0);
    const auto tie = quality_metric({{1.0, 1.0, 3.0}});
    CHECK(tie[0] == doctest::Approx(0.75));
    CHECK(tie[1] == doctest::Approx(0.75));
    CHECK(tie[2] == 0.0);
    // seven methods, 100 trials: the best method every time scores 600 / 600
    std::vector<std::vector<double>> seven(100, {1, 2, 3, 4, 5, 6, 7});
    const auto q7 = quality_metric(seven);
    CHECK(q7[0] == 1.0);
    CHECK(q7[3] == doctest::Approx(0.5));
}
