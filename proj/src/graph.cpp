#include "danalab/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "danalab/rng.hpp"

namespace danalab {

Graph::Graph(int n, std::vector<Edge> edges) : n_(n), adj_(n), adj_w_(n) {
    if (n < 1) throw std::invalid_argument("graph needs at least one node");
    std::set<std::pair<int, int>> seen;
    for (auto& e : edges) {
        if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n)
            throw std::invalid_argument("edge endpoint out of range");
        if (e.i == e.j) throw std::invalid_argument("self-loop");
        if (!(e.w > 0.0) || !std::isfinite(e.w))
            throw std::invalid_argument("edge weight must be positive");
        if (e.i > e.j) std::swap(e.i, e.j);
        if (!seen.insert({e.i, e.j}).second) throw std::invalid_argument("duplicate edge");
    }
    std::sort(edges.begin(), edges.end(),
              [](const Edge& a, const Edge& b) { return std::pair(a.i, a.j) < std::pair(b.i, b.j); });
    edges_ = std::move(edges);
    for (const auto& e : edges_) {
        adj_[e.i].push_back(e.j);
        adj_[e.j].push_back(e.i);
    }
    for (int i = 0; i < n_; ++i) {
        std::sort(adj_[i].begin(), adj_[i].end());
        adj_w_[i].resize(adj_[i].size());
    }
    for (const auto& e : edges_) {
        auto put = [&](int a, int b) {
            auto it = std::lower_bound(adj_[a].begin(), adj_[a].end(), b);
            adj_w_[a][it - adj_[a].begin()] = e.w;
        };
        put(e.i, e.j);
        put(e.j, e.i);
    }
}

double Graph::weight(int i, int j) const {
    const auto& a = adj_[i];
    auto it = std::lower_bound(a.begin(), a.end(), j);
    if (it == a.end() || *it != j) return 0.0;
    return adj_w_[i][it - a.begin()];
}

std::string Graph::to_edge_list() const {
    std::ostringstream os;
    os.precision(17);
    os << n_ << ' ' << m() << '\n';
    for (const auto& e : edges_) os << e.i << ' ' << e.j << ' ' << e.w << '\n';
    return os.str();
}

Graph Graph::from_edge_list(const std::string& text) {
    std::istringstream is(text);
    int n = 0, m = 0;
    if (!(is >> n >> m)) throw std::invalid_argument("edge list: missing header");
    std::vector<Edge> edges;
    for (int k = 0; k < m; ++k) {
        Edge e{};
        if (!(is >> e.i >> e.j >> e.w)) throw std::invalid_argument("edge list: truncated");
        edges.push_back(e);
    }
    return Graph(n, std::move(edges));
}

nlohmann::json Graph::to_json() const {
    nlohmann::json j;
    j["n"] = n_;
    auto arr = nlohmann::json::array();
    for (const auto& e : edges_) arr.push_back({e.i, e.j, e.w});
    j["edges"] = arr;
    return j;
}

Graph Graph::from_json(const nlohmann::json& j) {
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) {
        Edge ed{e.at(0).get<int>(), e.at(1).get<int>(), 1.0};
        if (e.size() > 2) ed.w = e.at(2).get<double>();
        edges.push_back(ed);
    }
    return Graph(j.at("n").get<int>(), std::move(edges));
}

Graph Graph::path(int n) {
    std::vector<Edge> e;
    for (int i = 0; i + 1 < n; ++i) e.push_back({i, i + 1, 1.0});
    return Graph(n, e);
}

Graph Graph::complete(int n) {
    std::vector<Edge> e;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) e.push_back({i, j, 1.0});
    return Graph(n, e);
}

Graph Graph::ring(int n) {
    if (n < 3) return path(n);
    std::vector<Edge> e;
    for (int i = 0; i < n; ++i) e.push_back({i, (i + 1) % n, 1.0});
    return Graph(n, e);
}

Mat laplacian_matrix(const Graph& g) {
    Mat L = Mat::Zero(g.n(), g.n());
    for (const auto& e : g.edges()) {
        L(e.i, e.j) -= e.w;
        L(e.j, e.i) -= e.w;
    }
    // diagonal as the row sum of the off-diagonal part keeps L*1 = 0 exact
    for (int i = 0; i < g.n(); ++i) {
        double s = 0.0;
        for (int j = 0; j < g.n(); ++j)
            if (j != i) s += L(i, j);
        L(i, i) = -s;
    }
    return L;
}

Laplacian::Laplacian(Mat l) : L(std::move(l)) {
    Eigen::SelfAdjointEigenSolver<Mat> es(L);
    mu = es.eigenvalues();
    basis = es.eigenvectors();
}

Laplacian Laplacian::scaled(double beta) const {
    Laplacian out = *this;
    out.L *= beta;
    out.mu *= beta;
    return out;
}

Mat Laplacian::pinv(double tol) const {
    const int n = this->n();
    Mat P = Mat::Zero(n, n);
    const double cut = tol * std::max(1.0, std::abs(lambda_n()));
    for (int k = 0; k < n; ++k) {
        if (std::abs(mu(k)) > cut) P += basis.col(k) * basis.col(k).transpose() / mu(k);
    }
    return P;
}

Laplacian build_laplacian(const Graph& g) { return Laplacian(laplacian_matrix(g)); }

int component_count(const Graph& g) {
    std::vector<char> seen(g.n(), 0);
    int comps = 0;
    for (int s = 0; s < g.n(); ++s) {
        if (seen[s]) continue;
        ++comps;
        std::deque<int> q{s};
        seen[s] = 1;
        while (!q.empty()) {
            int u = q.front();
            q.pop_front();
            for (int v : g.neighbors(u))
                if (!seen[v]) {
                    seen[v] = 1;
                    q.push_back(v);
                }
        }
    }
    return comps;
}

bool is_connected(const Graph& g) { return component_count(g) == 1; }

SpectralSummary spectral_summary(const Laplacian& L) {
    SpectralSummary s{L.mu, L.n() > 1 ? L.mu(1) : 0.0, L.mu(L.n() - 1)};
    return s;
}

std::set<int> k_hop_neighbors(const Graph& g, int i, int k) {
    std::set<int> frontier{i}, reached{i};
    for (int hop = 0; hop < k; ++hop) {
        std::set<int> next;
        for (int u : frontier)
            for (int v : g.neighbors(u))
                if (reached.insert(v).second) next.insert(v);
        frontier = std::move(next);
    }
    reached.erase(i);
    return reached;
}

Graph random_connected_graph(int n, int m, std::uint64_t seed) {
    const long long max_m = static_cast<long long>(n) * (n - 1) / 2;
    if (n < 1 || m < n - 1 || m > max_m)
        throw std::invalid_argument("random_connected_graph: edge count out of range");
    Rng rng(seed, "graph");
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int k = n - 1; k > 0; --k) std::swap(order[k], order[rng.index(k + 1)]);

    std::set<std::pair<int, int>> used;
    std::vector<Edge> edges;
    for (int k = 1; k < n; ++k) {
        int a = order[k], b = order[rng.index(k)];
        if (a > b) std::swap(a, b);
        used.insert({a, b});
        edges.push_back({a, b, 1.0});
    }
    // remaining non-edges in lexicographic order, then a partial shuffle
    std::vector<std::pair<int, int>> pool;
    pool.reserve(max_m - (n - 1));
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            if (!used.count({a, b})) pool.push_back({a, b});
    const int extra = m - (n - 1);
    for (int k = 0; k < extra; ++k) {
        std::size_t pick = k + rng.index(pool.size() - k);
        std::swap(pool[k], pool[pick]);
        edges.push_back({pool[k].first, pool[k].second, 1.0});
    }
    return Graph(n, std::move(edges));
}

Projection projection_T(int n) {
    if (n < 2) throw std::invalid_argument("projection_T needs n >= 2");
    const double s = std::sqrt(static_cast<double>(n));
    const double rho = 1.0 / std::sqrt(n * (n + 1 + 2 * s));
    Mat T(n, n);
    for (int c = 0; c < n - 1; ++c) {
        for (int r = 0; r < n - 1; ++r) T(r, c) = (r == c) ? (n - 1 + s) : -1.0;
        T(n - 1, c) = -1.0 - s;
        T.col(c) *= rho;
    }
    T.col(n - 1).setConstant(1.0 / s);
    return Projection{T};
}

Mat reduced_hessian(const Mat& L, const Vec& h, const Projection& P) {
    const Mat TJ = P.reduced();
    const Mat LT = L * TJ;
    return LT.transpose() * h.asDiagonal() * LT;
}

}  // namespace danalab
