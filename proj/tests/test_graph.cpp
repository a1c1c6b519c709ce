#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Eigenvalues>

#include "danalab/graph.hpp"
#include "danalab/network.hpp"
#include "danalab/rng.hpp"
#include "oracles.hpp"

using namespace danalab;

TEST_CASE("graph rejects invalid input") {
    CHECK_THROWS_AS(Graph(3, {{0, 0}}), std::invalid_argument);
    CHECK_THROWS_AS(Graph(3, {{0, 1}, {1, 0}}), std::invalid_argument);
    CHECK_THROWS_AS(Graph(3, {{0, 3}}), std::invalid_argument);
    CHECK_THROWS_AS(Graph(3, {{0, 1, 0.0}}), std::invalid_argument);
    CHECK_THROWS_AS(Graph(3, {{0, 1, -2.0}}), std::invalid_argument);
}

TEST_CASE("laplacian of small graphs") {
    SUBCASE("single edge") {
        const Mat L = laplacian_matrix(Graph(2, {{0, 1}}));
        Mat expect(2, 2);
        expect << 1, -1, -1, 1;
        CHECK((L - expect).norm() == 0.0);
    }
    SUBCASE("path on three nodes") {
        const Mat L = laplacian_matrix(Graph::path(3));
        CHECK(L(0, 0) == 1.0);
        CHECK(L(1, 1) == 2.0);
        CHECK(L(2, 2) == 1.0);
        CHECK(L(0, 1) == -1.0);
        CHECK(L(1, 2) == -1.0);
        CHECK(L(0, 2) == 0.0);
    }
    SUBCASE("weighted edge") {
        const Mat L = laplacian_matrix(Graph(2, {{0, 1, 2.5}}));
        CHECK(L(0, 0) == 2.5);
        CHECK(L(0, 1) == -2.5);
    }
    SUBCASE("complete graph K3 spectrum against a direct eigensolve") {
        const Laplacian L = build_laplacian(Graph::complete(3));
        Eigen::SelfAdjointEigenSolver<Mat> es(2.0 * Mat::Identity(3, 3) -
                                              (Mat::Ones(3, 3) - Mat::Identity(3, 3)));
        for (int k = 0; k < 3; ++k) CHECK(L.mu(k) == doctest::Approx(es.eigenvalues()(k)));
        CHECK(L.mu(0) == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(L.mu(1) == doctest::Approx(3.0));
        CHECK(L.mu(2) == doctest::Approx(3.0));
    }
}

TEST_CASE("spectral summary") {
    const auto k2 = spectral_summary(build_laplacian(Graph::complete(2)));
    CHECK(k2.lambda2 == doctest::Approx(2.0));
    CHECK(k2.lambda_n == doctest::Approx(2.0));

    // P3 characteristic polynomial: x^3 - 4x^2 + 3x
    const auto roots = oracle::cubic_roots(-4.0, 3.0, 0.0);
    const auto p3 = spectral_summary(build_laplacian(Graph::path(3)));
    for (int k = 0; k < 3; ++k) CHECK(p3.mu(k) == doctest::Approx(roots[k]).epsilon(1e-10));
    CHECK(p3.lambda2 == doctest::Approx(1.0));
    CHECK(p3.lambda_n == doctest::Approx(3.0));
}

TEST_CASE("connectivity") {
    CHECK(is_connected(Graph(2, {{0, 1}})));
    CHECK_FALSE(is_connected(Graph(2, {})));
    CHECK(component_count(Graph(4, {{0, 1}, {2, 3}})) == 2);
    for (int n = 2; n < 30; n += 3) CHECK(is_connected(random_connected_graph(n, n - 1, n)));
}

TEST_CASE("zero eigenvalue multiplicity matches component count") {
    Rng rng(7, "components");
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 3 + static_cast<int>(rng.index(10));
        std::vector<Edge> edges;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (rng.uniform() < 0.2) edges.push_back({i, j, rng.uniform(0.5, 2.0)});
        const Graph g(n, edges);
        const Laplacian L = build_laplacian(g);
        int zeros = 0;
        for (int k = 0; k < n; ++k) zeros += L.mu(k) < 1e-9;
        CHECK(zeros == component_count(g));
        CHECK(is_connected(g) == (L.lambda2() > 1e-9));
    }
}

TEST_CASE("laplacian invariants on random graphs") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Graph g = random_connected_graph(15, 30, s);
        const Laplacian L = build_laplacian(g);
        CHECK((L.L * Vec::Ones(15)).cwiseAbs().maxCoeff() == 0.0);
        CHECK((L.L - L.L.transpose()).norm() == 0.0);
        CHECK(L.mu.minCoeff() >= -1e-10);
    }
}

TEST_CASE("k-hop neighbors") {
    const Graph p3 = Graph::path(3);
    CHECK(k_hop_neighbors(p3, 0, 1) == std::set<int>{1});
    CHECK(k_hop_neighbors(p3, 0, 2) == std::set<int>{1, 2});
    CHECK(k_hop_neighbors(Graph::complete(3), 0, 2) == std::set<int>{1, 2});
}

TEST_CASE("random connected graph") {
    const Graph g2 = random_connected_graph(2, 1, 5);
    CHECK(g2.m() == 1);
    const Graph g = random_connected_graph(100, 250, 3);
    CHECK(g.m() == 250);
    CHECK(is_connected(g));
    const Graph again = random_connected_graph(100, 250, 3);
    CHECK(g.to_edge_list() == again.to_edge_list());
    CHECK(g.to_edge_list() != random_connected_graph(100, 250, 4).to_edge_list());
    CHECK_THROWS_AS(random_connected_graph(5, 3, 1), std::invalid_argument);
    CHECK_THROWS_AS(random_connected_graph(5, 11, 1), std::invalid_argument);
}

TEST_CASE("serialization round trips") {
    const Graph g(4, {{0, 1, 1.5}, {1, 2}, {0, 3, 0.25}});
    const Graph e = Graph::from_edge_list(g.to_edge_list());
    const Graph j = Graph::from_json(g.to_json());
    CHECK(laplacian_matrix(e) == laplacian_matrix(g));
    CHECK(laplacian_matrix(j) == laplacian_matrix(g));
    CHECK_THROWS_AS(Graph::from_edge_list("3 2\n0 1 1\n"), std::invalid_argument);
}

TEST_CASE("projection T") {
    for (int n : {2, 3, 5, 10, 40}) {
        const Projection P = projection_T(n);
        const Mat Tr = P.reduced();
        const Mat proj = Mat::Identity(n, n) - Mat::Constant(n, n, 1.0 / n);
        CHECK((Tr * Tr.transpose() - proj).norm() <= 1e-10);
    }
    const Mat T2 = projection_T(2).reduced();
    Eigen::SelfAdjointEigenSolver<Mat> es(T2 * T2.transpose());
    CHECK(es.eigenvalues()(0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(es.eigenvalues()(1) == doctest::Approx(1.0));
}

TEST_CASE("reduced Hessian spectrum equals the nonzero spectrum of LHL") {
    Rng rng(11, "reduced");
    for (int n : {5, 12, 30}) {
        const Graph g = random_connected_graph(n, std::min(2 * n, n * (n - 1) / 2), n);
        const Mat L = laplacian_matrix(g);
        Vec h(n);
        for (int i = 0; i < n; ++i) h(i) = rng.uniform(0.5, 3.0);
        const Mat M = reduced_hessian(L, h, projection_T(n));
        REQUIRE(M.rows() == n - 1);
        Eigen::SelfAdjointEigenSolver<Mat> em(M), ef(L * h.asDiagonal() * L);
        for (int k = 0; k < n - 1; ++k)
            CHECK(std::abs(em.eigenvalues()(k) - ef.eigenvalues()(k + 1)) <= 1e-8);
    }
}

TEST_CASE("pseudoinverse") {
    const Laplacian L = build_laplacian(random_connected_graph(8, 12, 2));
    const Mat P = L.pinv();
    CHECK((L.L * P * L.L - L.L).norm() <= 1e-10);
    CHECK((P * Vec::Ones(8)).norm() <= 1e-10);
}

TEST_CASE("synchronous network matches dense products and respects locality") {
    const Graph g = random_connected_graph(12, 18, 9);
    const Mat L = 0.37 * laplacian_matrix(g);
    SyncNetwork net(g, L);
    Rng rng(1, "net");
    Vec v(12), h(12);
    for (int i = 0; i < 12; ++i) {
        v(i) = rng.normal();
        h(i) = rng.uniform(1.0, 2.0);
    }
    net.set_logging(true);
    CHECK((net.apply_L(v) - L * v).norm() <= 1e-12);
    for (const auto& [reader, owner] : net.access_log())
        CHECK((reader == owner || k_hop_neighbors(g, reader, 1).count(owner)));
    net.clear_log();
    CHECK((net.apply_LHL(h, v) - L * h.asDiagonal() * L * v).norm() <= 1e-11);
    for (const auto& [reader, owner] : net.access_log())
        CHECK((reader == owner || k_hop_neighbors(g, reader, 2).count(owner)));
}
