#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Eigenvalues>

#include "danalab/dana.hpp"
#include "danalab/weight_design.hpp"
#include "oracles.hpp"

using namespace danalab;

namespace {

struct Instance {
    Graph g;
    SeparableCost costs;
    Mat L;
    double eps;
    Vec x0;
    double d;
};

Instance quadratic_instance(int n, int m, std::uint64_t seed) {
    Instance in;
    in.g = random_connected_graph(n, m, seed);
    Rng rng(seed, "costs");
    for (int i = 0; i < n; ++i)
        in.costs.terms.push_back(ScalarCost::quadratic(rng.uniform(1, 3), rng.uniform(-1, 1)));
    const auto hb = hessian_bounds(in.costs);
    in.L = post_scale_beta(laplacian_matrix(in.g), hb).L;
    in.eps = epsilon_metric(in.L, hb, projection_T(n)).epsilon;
    in.d = 2.0 * n;
    in.x0 = Vec::Constant(n, 2.0);
    return in;
}

AllocationProblem three_node() {
    AllocationProblem p;
    for (double a : {0.5, 1.5, 4.0}) p.costs.terms.push_back(ScalarCost::quadratic(a, 0.5));
    p.d = 6;
    p.lower = Vec{{0.2, 2.5, 1.5}};
    p.upper = Vec{{1.0, 6.0, 4.0}};
    p.graph = Graph::path(3);
    return p;
}

}  // namespace

TEST_CASE("q-approximation") {
    const Instance in = quadratic_instance(12, 20, 1);
    const Vec h = in.costs.hess(in.x0);
    Rng rng(2, "v");
    Vec v(12);
    for (int i = 0; i < 12; ++i) v(i) = rng.normal();

    CHECK(q_approx_apply(in.L, h, v, 0) == v);
    for (int q : {1, 2, 3, 6}) {
        const Mat A = oracle::dense_Aq(in.L, h, q);
        CHECK((q_approx_apply(in.L, h, v, q) - A * v).norm() <= 1e-10);
        CHECK((q_approx_matrix(in.L, h, q) - A).norm() <= 1e-10);
        SyncNetwork net(in.g, in.L);
        CHECK((q_approx_apply(net, h, v, q) - A * v).norm() <= 1e-10);
    }

    // scalar analogue: on an eigenvector of LHL with eigenvalue 0.5, q = 1
    // multiplies by 1 + (1 - 0.5) = 1.5
    Mat L2 = laplacian_matrix(Graph::complete(2));
    L2 *= std::sqrt(0.5) / 2.0;  // L H L = 0.5 on (1, -1) with H = I
    const Vec e{{1.0, -1.0}};
    CHECK((q_approx_apply(L2, Vec::Ones(2), e, 1) - 1.5 * e).norm() <= 1e-14);

    // spectrum: (1 - eta^{q+1}) / (1 - eta) on range(L), q + 1 on the ones vector
    const int q = 3;
    const Mat B = Mat::Identity(12, 12) - in.L * h.asDiagonal() * in.L;
    Eigen::SelfAdjointEigenSolver<Mat> eb(B);
    const Mat A = q_approx_matrix(in.L, h, q);
    const Mat Q = eb.eigenvectors();
    const Mat D = Q.transpose() * A * Q;
    for (int k = 0; k < 12; ++k) {
        const double eta = eb.eigenvalues()(k);
        const double expect =
            std::abs(1 - eta) < 1e-12 ? q + 1.0 : (1 - std::pow(eta, q + 1)) / (1 - eta);
        CHECK(D(k, k) == doctest::Approx(expect).epsilon(1e-9));
    }
    CHECK((A * Vec::Ones(12) - (q + 1.0) * Vec::Ones(12)).norm() <= 1e-10);
}

TEST_CASE("step size bound") {
    CHECK(step_size_bound(2, 0.0, 0) == doctest::Approx(2.0));
    CHECK(step_size_bound(100, 0.9, 2) == doctest::Approx(3.924e-3).epsilon(1e-3));
    CHECK(step_size_bound(10, 0.5, 2) > step_size_bound(11, 0.5, 2));
    CHECK(step_size_bound(10, 0.5, 2) > step_size_bound(10, 0.6, 2));
    CHECK(linear_rate_alpha(10, 0.5, 2) == doctest::Approx(0.5 * step_size_bound(10, 0.5, 2)));
}

TEST_CASE("linear rate certificate") {
    const Vec z = Vec::Ones(4);
    CHECK(linear_rate_certificate(1.0, 1.0, z, z, 4, 0.5, 2));
    CHECK_FALSE(linear_rate_certificate(1.0, 1.0, z, Vec::Zero(4), 4, 0.5, 2));
    CHECK(linear_rate_decrease(0.0, 4, 0.5, 2) == 0.0);
}

TEST_CASE("DANA-D step") {
    const Instance in = quadratic_instance(10, 15, 3);
    SyncNetwork net(in.g, in.L);
    const auto opt = solve_allocation(in.costs, in.d, std::nullopt, std::nullopt);

    SUBCASE("fixed point at the optimum") {
        const Vec z = z_from_x(Laplacian(in.L), in.x0, opt.x, Vec::Zero(10));
        const DanaDState s{z, in.x0 + in.L * z};
        const DanaDState nx = dana_d_step(s, in.costs, net, 0.5, 2);
        CHECK((nx.z - s.z).norm() <= 1e-10);
    }
    SUBCASE("strict decrease, conserved sums and locality at the theorem step") {
        const double alpha = step_size_bound(10, in.eps, 2) * 0.999;
        Rng rng(4, "start");
        for (int k = 0; k < 100; ++k) {
            Vec z(10);
            for (int i = 0; i < 10; ++i) z(i) = rng.normal();
            const DanaDState s{z, in.x0 + in.L * z};
            net.clear_log();
            net.set_logging(true);
            const DanaDState nx = dana_d_step(s, in.costs, net, alpha, 2);
            net.set_logging(false);
            CHECK(in.costs.value(nx.x) < in.costs.value(s.x));
            CHECK(std::abs(nx.z.sum() - s.z.sum()) <= 1e-10);
            CHECK(std::abs(nx.x.sum() - in.d) <= 1e-9 * in.d);
            bool local = true;
            for (const auto& [reader, owner] : net.access_log())
                local = local && (reader == owner || k_hop_neighbors(in.g, reader, 2).count(owner));
            CHECK(local);
        }
    }
}

TEST_CASE("DANA-D on a single edge") {
    SeparableCost costs{{ScalarCost::quadratic(1.0), ScalarCost::quadratic(1.0)}};
    const Graph g(2, {{0, 1}});
    const Mat L = post_scale_beta(laplacian_matrix(g), hessian_bounds(costs)).L;
    DanaConfig cfg;
    cfg.alpha = 0.5;
    const auto r = dana_d_run(costs, g, L, Vec{{1.0, -1.0}}, 0.0, cfg);
    CHECK(r.converged);
    CHECK(r.x.norm() <= 1e-9);

    SeparableCost one{{ScalarCost::quadratic(1.0)}};
    CHECK_THROWS_AS(dana_d_run(one, Graph(1, {}), Mat::Zero(1, 1), Vec::Zero(1), 0.0, cfg),
                    std::invalid_argument);
}

TEST_CASE("DANA-D run is monotone and feasible on sinusoidal costs") {
    const int n = 30;
    const Graph g = random_connected_graph(n, 70, 5);
    Rng rng(5, "costs");
    const SeparableCost costs = random_sinusoidal_costs(n, rng);
    const auto hb = hessian_bounds(costs);
    const Mat L = post_scale_beta(laplacian_matrix(g), hb).L;
    const double eps = epsilon_metric(L, hb, projection_T(n)).epsilon;
    REQUIRE(eps < 1.0);
    const double d = 60.0;
    const auto opt = solve_allocation(costs, d, std::nullopt, std::nullopt);
    long prev_iters = 0;
    for (int q : {0, 2, 4}) {
        DanaConfig cfg;
        cfg.q = q;
        cfg.alpha = 1.0;
        cfg.max_iters = 20000;
        cfg.tol = 1e-12;
        const auto r = dana_d_run(costs, g, L, Vec::Constant(n, d / n), d, cfg, &opt.x);
        CHECK(r.converged);
        CHECK((r.x - opt.x).norm() <= 1e-8);
        bool mono = true, feas = true;
        for (size_t k = 1; k < r.series.size(); ++k) {
            mono = mono && r.series[k].f <= r.series[k - 1].f + 1e-12;
            feas = feas && r.series[k].feas_residual <= 1e-9 * d;
        }
        CHECK(mono);
        CHECK(feas);
        if (q > 0) CHECK(r.iters < prev_iters);
        prev_iters = r.iters;
    }
}

TEST_CASE("DANA-C three-node instance") {
    const AllocationProblem p = three_node();
    const Mat L = post_scale_beta(laplacian_matrix(p.graph), hessian_bounds(p.costs)).L;
    const Vec x0{{5.0, -1.0, 2.0}};
    const auto ref = oracle::box_qp_enumerate(Vec{{0.5, 1.5, 4.0}}, Vec::Constant(3, 0.5),
                                              *p.lower, *p.upper, p.d);
    REQUIRE(ref.has_value());

    SUBCASE("KKT point is a fixed point") {
        const AllocationSolution sol{ref->x, ref->nu, ref->lam_lo, ref->lam_hi};
        const Vec z = z_from_x(Laplacian(L), x0, sol.x, Vec::Zero(3));
        const DanaCState s{z, sol.lam_lower, sol.lam_upper};
        const DanaCState nx = dana_c_step(s, p, L, x0, 2, 1e-3);
        CHECK((nx.z - s.z).norm() <= 1e-10);
        CHECK((nx.lam_lower - s.lam_lower).norm() <= 1e-12);
        CHECK((nx.lam_upper - s.lam_upper).norm() <= 1e-12);
    }
    SUBCASE("converges to the active-set optimum") {
        const AllocationSolution sol{ref->x, ref->nu, ref->lam_lo, ref->lam_hi};
        DanaConfig cfg;
        cfg.q = 2;
        cfg.h = 1e-3;
        cfg.record_every = 100;
        const DanaCState init{Vec::Zero(3), Vec{{1.5, 0.5, 0.0}}, Vec{{0.0, 2.0, 1.0}}};
        const auto r = dana_c_run(p, L, x0, init, 150.0, cfg, &sol);
        CHECK((r.x - ref->x).norm() <= 1e-4);
        CHECK(r.lam_lower.minCoeff() >= 0.0);
        CHECK(r.lam_upper.minCoeff() >= 0.0);
        bool feas = true;
        for (const auto& row : r.series) feas = feas && row.feas_residual <= 1e-9 * p.d;
        CHECK(feas);
        // V_Q is nonincreasing once the transient has passed
        double worst = 0.0;
        for (size_t k = 1; k < r.series.size(); ++k)
            if (r.series[k].t >= 5.0)
                worst = std::max(worst, r.series[k].vq - r.series[k - 1].vq);
        CHECK(worst <= 1e-12);
    }
}

TEST_CASE("DANA-C requires a box") {
    AllocationProblem p = three_node();
    p.lower.reset();
    p.upper.reset();
    const Mat L = laplacian_matrix(p.graph);
    CHECK_THROWS_AS(dana_c_step({Vec::Zero(3), Vec::Zero(3), Vec::Zero(3)}, p, L, Vec::Ones(3), 2,
                                1e-3),
                    std::invalid_argument);
}

TEST_CASE("robust DANA") {
    const Instance in = quadratic_instance(10, 18, 7);
    const auto opt = solve_allocation(in.costs, in.d, std::nullopt, std::nullopt);
    RobustConfig cfg;
    cfg.h = 1e-2;

    SUBCASE("feasible stationary point is fixed") {
        const Vec dbar = Vec::Constant(10, in.d / 10);
        const Vec z = z_from_x(Laplacian(in.L), opt.x, dbar, Vec::Zero(10));  // L z = dbar - x
        const RobustState s{opt.x, z, -in.costs.grad(opt.x)};
        const RobustState nx = robust_dana_step(s, in.costs, in.L, dbar, cfg);
        CHECK((nx.x - s.x).norm() <= 1e-10);
        CHECK((nx.z - s.z).norm() <= 1e-10);
        CHECK((nx.nu - s.nu).norm() <= 1e-10);
    }
    SUBCASE("sparse and dense right-hand sides share the limit, perturbations recover") {
        Vec sparse = Vec::Zero(10);
        sparse(0) = in.d;
        const Vec dense = Vec::Constant(10, in.d / 10);
        Rng r1(1, "noise"), r2(1, "noise");
        const auto a = robust_dana_run(in.costs, in.L, sparse, in.x0, cfg, 300.0, {}, 0.0, r1);
        const auto b =
            robust_dana_run(in.costs, in.L, dense, in.x0, cfg, 300.0, {50.0}, 0.5, r2);
        CHECK((a.final.x - opt.x).norm() <= 1e-6);
        CHECK((b.final.x - opt.x).norm() <= 1e-6);
        // the perturbation at t = 50 shows up and is later removed
        double peak = 0.0;
        for (const auto& row : b.series)
            if (row.t > 50.0 && row.t < 51.0) peak = std::max(peak, row.grad_norm);
        CHECK(peak > 1e-2);
        CHECK(b.series.back().grad_norm <= 1e-3);
    }
}
