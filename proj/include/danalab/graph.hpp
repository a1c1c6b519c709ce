#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

namespace danalab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Edge {
    int i;
    int j;
    double w = 1.0;
};

// Undirected weighted graph on nodes 0..n-1. Edges are stored with i < j.
class Graph {
public:
    Graph() = default;
    // Throws std::invalid_argument on self-loops, duplicates, bad ids or
    // nonpositive weights.
    Graph(int n, std::vector<Edge> edges);

    int n() const { return n_; }
    int m() const { return static_cast<int>(edges_.size()); }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<int>& neighbors(int i) const { return adj_[i]; }
    int degree(int i) const { return static_cast<int>(adj_[i].size()); }
    double weight(int i, int j) const;  // 0 if not adjacent

    std::string to_edge_list() const;
    static Graph from_edge_list(const std::string& text);
    nlohmann::json to_json() const;
    static Graph from_json(const nlohmann::json& j);

    static Graph path(int n);
    static Graph complete(int n);
    static Graph ring(int n);

private:
    int n_ = 0;
    std::vector<Edge> edges_;
    std::vector<std::vector<int>> adj_;
    std::vector<std::vector<double>> adj_w_;
};

// Dense Laplacian with its eigendecomposition.
struct Laplacian {
    Mat L;
    Vec mu;    // ascending eigenvalues
    Mat basis; // orthonormal eigenvectors, column k pairs with mu(k)

    explicit Laplacian(Mat l);
    int n() const { return static_cast<int>(L.rows()); }
    double lambda2() const { return mu(1); }
    double lambda_n() const { return mu(mu.size() - 1); }
    Laplacian scaled(double beta) const;
    // Moore-Penrose pseudoinverse, built from the spectrum.
    Mat pinv(double tol = 1e-10) const;
};

Laplacian build_laplacian(const Graph& g);
Mat laplacian_matrix(const Graph& g);

bool is_connected(const Graph& g);
int component_count(const Graph& g);

struct SpectralSummary {
    Vec mu;
    double lambda2;
    double lambda_n;
};
SpectralSummary spectral_summary(const Laplacian& L);

// Nodes within k hops of i, excluding i itself.
std::set<int> k_hop_neighbors(const Graph& g, int i, int k);

// Random spanning tree over a random node order plus uniformly sampled
// extra edges. Throws std::invalid_argument if m is out of range.
Graph random_connected_graph(int n, int m, std::uint64_t seed);

// Orthogonal change of basis whose last column is 1/sqrt(n) and whose first
// n-1 columns span the complement of the ones vector.
struct Projection {
    Mat T;
    int n() const { return static_cast<int>(T.rows()); }
    // T J^T: the first n-1 columns.
    Mat reduced() const { return T.leftCols(T.cols() - 1); }
};
Projection projection_T(int n);

// M(x) = J T^T L diag(h) L T J^T.
Mat reduced_hessian(const Mat& L, const Vec& h, const Projection& P);

}  // namespace danalab
