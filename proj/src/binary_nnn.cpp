#include "danalab/binary_nnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "danalab/discrn.hpp"

namespace danalab {

namespace {
constexpr double kEdge = 1e-12;

Vec log_odds(const Vec& x) {  // log(1/x - 1)
    return ((1.0 - x.array()) / x.array()).log().matrix();
}

bool interior(const Vec& x) { return (x.array() > 0.0).all() && (x.array() < 1.0).all(); }

double margin(const Vec& x) { return x.cwiseMin((1.0 - x.array()).matrix()).minCoeff(); }
}  // namespace

double logistic(double u, double T) { return 1.0 / (1.0 + std::exp(-u / T)); }

double logistic_inverse(double x, double T) {
    if (!(x > 0.0 && x < 1.0)) throw std::domain_error("logistic_inverse needs x in (0,1)");
    return -T * std::log(1.0 / x - 1.0);
}

double logistic_integral(double z, double T) {
    if (z <= 0.0 || z >= 1.0) return 0.0;
    return T * (std::log1p(-z) - z * std::log(1.0 / z - 1.0));
}

void BinaryProblem::validate() const {
    const int k = n();
    if (k < 1) throw std::invalid_argument("binary problem is empty");
    if (p.size() != k || a.size() != k || b.size() != k || d.size() != k)
        throw std::invalid_argument("binary problem size mismatch");
    if (!(gamma > 0)) throw std::invalid_argument("gamma must be positive");
    for (int i = 0; i < k; ++i) {
        const double inc = 0.5 * a(i) * (1.0 - b(i)) * (1.0 - b(i)) - 0.5 * a(i) * b(i) * b(i);
        if (std::abs(inc - c(i)) > 1e-10 * std::max(1.0, std::abs(c(i))))
            throw std::invalid_argument("a/b do not reproduce the increment c");
    }
    if (graph.n() != 0 && graph.n() != k) throw std::invalid_argument("graph size mismatch");
}

Mat BinaryProblem::W() const {
    Mat w = -gamma * p * p.transpose();
    w.diagonal() -= a;
    return w;
}

Vec BinaryProblem::v() const { return a.cwiseProduct(b) + gamma * P_r * p; }

double BinaryProblem::cost(const Vec& x) const {
    double s = 0.0;
    for (int i = 0; i < n(); ++i)
        s += 0.5 * a(i) * (x(i) - b(i)) * (x(i) - b(i)) - 0.5 * a(i) * b(i) * b(i) + d(i);
    const double r = p.dot(x) - P_r;
    return s + 0.5 * gamma * r * r;
}

bool BinaryProblem::corner_condition() const {
    return (a.array() < -gamma * p.squaredNorm()).all();
}

BinaryProblem BinaryProblem::from_increments(Vec c, Vec p, double P_r, double gamma, Vec a,
                                             Graph graph) {
    BinaryProblem bp;
    const int n = static_cast<int>(c.size());
    bp.b = Vec(n);
    for (int i = 0; i < n; ++i) bp.b(i) = 0.5 - c(i) / a(i);
    bp.c = std::move(c);
    bp.p = std::move(p);
    bp.a = std::move(a);
    bp.d = Vec::Zero(n);
    bp.P_r = P_r;
    bp.gamma = gamma;
    bp.graph = std::move(graph);
    bp.validate();
    return bp;
}

BinaryProblem BinaryProblem::two_unit_example() {
    return from_increments(Vec{{2.0, 1.0}}, Vec{{3.0, 1.0}}, 2.8, 4.0, Vec{{-10.0, -10.0}},
                           Graph::complete(2));
}

BinaryProblem BinaryProblem::random(int n, int m, double P_r, double gamma, double T0,
                                    double tau0, std::uint64_t seed) {
    Rng rng(seed, "costs");
    Vec p(n), c(n);
    for (int i = 0; i < n; ++i) {
        p(i) = rng.uniform(1.0, 50.0);
        c(i) = std::pow(p(i), rng.uniform(2.0, 3.0));
    }
    const double ai = -gamma * p.squaredNorm() - 4.0 * T0 / tau0 - 1.0;
    Graph g = n >= 2 ? random_connected_graph(n, m, seed) : Graph(1, {});
    return from_increments(c, p, P_r, gamma, Vec::Constant(n, ai), std::move(g));
}

double energy(const Vec& x, const BinaryProblem& prob, double T, double tau) {
    double s = prob.cost(x);
    for (int i = 0; i < x.size(); ++i) s += logistic_integral(x(i), T) / tau;
    return s;
}

Vec binpac_rhs(const Vec& x, const BinaryProblem& prob, double T, double tau, double m) {
    const Vec s = (x.array() - x.array().square()).matrix();
    Mat H = -prob.W();
    H.diagonal() += (T / tau) * s.cwiseInverse();
    const Vec force = prob.W() * x + prob.v() + (T / tau) * log_odds(x);
    return pt_inverse(H, m) * (s.cwiseProduct(force) / T);
}

Vec binpac_sym_rhs(const Vec& x, const BinaryProblem& prob, double T, double tau, double m) {
    const Vec s = (x.array() - x.array().square()).matrix();
    Mat H = -prob.W();
    H.diagonal() += (T / tau) * s.cwiseInverse();
    const Vec r = (s / T).cwiseSqrt();
    const Vec force = prob.W() * x + prob.v() + (T / tau) * log_odds(x);
    return r.cwiseProduct(pt_inverse(H, m) * r.cwiseProduct(force));
}

Vec hnn_rhs(const Vec& x, const BinaryProblem& prob, double T, double tau) {
    const Vec s = (x.array() - x.array().square()).matrix();
    const Vec force = prob.W() * x + prob.v() + (T / tau) * log_odds(x);
    return s.cwiseProduct(force) / T;
}

Vec binpac_step(const Vec& x, const BinaryProblem& prob, double T, double tau, double m, double h) {
    return (x + h * binpac_rhs(x, prob, T, tau, m)).cwiseMax(kEdge).cwiseMin(1.0 - kEdge);
}

Vec y_star(const Vec& x, const BinaryProblem& prob, const Laplacian& L, double kappa) {
    Vec y = -L.pinv() * prob.p.cwiseProduct(x);
    // pinv range is orthogonal to 1 up to roundoff; pin the sum exactly
    y.array() += (kappa - y.sum()) / static_cast<double>(x.size());
    return y;
}

double energy_tilde(const Vec& x, const Vec& y, const BinaryProblem& prob, const Mat& L, double T,
                    double tau, double penalty_scale) {
    const int n = prob.n();
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        s += 0.5 * prob.a(i) * (x(i) - prob.b(i)) * (x(i) - prob.b(i)) -
             0.5 * prob.a(i) * prob.b(i) * prob.b(i) + prob.d(i);
        s += logistic_integral(x(i), T) / tau;
    }
    Vec sigma = prob.p.cwiseProduct(x) + L * y;
    sigma.array() -= prob.P_r / n;
    return s + 0.5 * penalty_scale * prob.gamma * sigma.squaredNorm();
}

BinpadRhs binpad_rhs(const Vec& x, const Vec& y, const BinaryProblem& prob, const Mat& L,
                     double T, double tau, double m, const Vec& alpha, double penalty_scale) {
    const int n = prob.n();
    const double g = penalty_scale * prob.gamma;
    const Vec s = (x.array() - x.array().square()).matrix();
    const Vec Ly = L * y;
    Vec vt = prob.a.cwiseProduct(prob.b) +
             g * prob.p.cwiseProduct((Vec::Constant(n, prob.P_r / n) - Ly));
    const Vec wdiag = -(prob.a + g * prob.p.cwiseAbs2());
    const Vec force = wdiag.cwiseProduct(x) + (T / tau) * log_odds(x) + vt;
    BinpadRhs r;
    r.dx = Vec(n);
    for (int i = 0; i < n; ++i) {
        const double Hii = -wdiag(i) + (T / tau) / s(i);
        const double inv = std::abs(Hii) >= m ? 1.0 / std::abs(Hii) : 1.0 / m;
        r.dx(i) = inv * s(i) * force(i) / T;
    }
    r.dy = -g * alpha.cwiseProduct(L * (prob.p.cwiseProduct(x) + Ly));
    return r;
}

std::pair<Vec, Vec> binpad_step(const Vec& x, const Vec& y, const BinaryProblem& prob,
                                const Mat& L, double T, double tau, double m, const Vec& alpha,
                                double h, double penalty_scale) {
    const BinpadRhs r = binpad_rhs(x, y, prob, L, T, tau, m, alpha, penalty_scale);
    return {(x + h * r.dx).cwiseMax(kEdge).cwiseMin(1.0 - kEdge), y + h * r.dy};
}

std::string to_string(NnnMode m) {
    switch (m) {
        case NnnMode::Binpac: return "binpac";
        case NnnMode::Binpad: return "binpad";
        case NnnMode::Hnn: return "hnn";
    }
    return "unknown";
}

NnnMode nnn_mode_from_string(const std::string& s) {
    if (s == "binpac") return NnnMode::Binpac;
    if (s == "binpad") return NnnMode::Binpad;
    if (s == "hnn") return NnnMode::Hnn;
    throw std::invalid_argument("unknown nnn mode: " + s);
}

NnnResult anneal_run(const BinaryProblem& prob, const AnnealSchedule& sched, NnnMode mode,
                     Rng& rng, bool record_traj) {
    prob.validate();
    const int n = prob.n();
    Mat L;
    if (mode == NnnMode::Binpad) {
        if (prob.graph.n() != n || !is_connected(prob.graph))
            throw std::invalid_argument("binpad needs a connected graph");
        L = laplacian_matrix(prob.graph);
    }
    const double pscale = sched.consistent_penalty ? static_cast<double>(n) : 1.0;
    const Vec alpha = Vec::Constant(n, sched.alpha);

    // uniform draw from the ball around 0.5 * 1
    Vec dir(n);
    for (int i = 0; i < n; ++i) dir(i) = rng.normal();
    const double r = sched.init_radius * std::pow(rng.uniform(), 1.0 / n);
    Vec x = Vec::Constant(n, 0.5) + r * dir / std::max(dir.norm(), 1e-300);
    Vec y = Vec::Zero(n);
    double T = sched.T0 * (1.0 + sched.jitter * rng.uniform(-1.0, 1.0));
    double tau = sched.tau0 * (1.0 + sched.jitter * rng.uniform(-1.0, 1.0));

    NnnResult res;
    auto E = [&](const Vec& xx, const Vec& yy) {
        return mode == NnnMode::Binpad ? energy_tilde(xx, yy, prob, L, T, tau, pscale)
                                       : energy(xx, prob, T, tau);
    };
    res.tel.min_margin = margin(x);

    // a window runs after every update, including the last one
    const int windows = sched.anneal ? sched.steps + 1 : 1;
    const double horizon = sched.anneal ? sched.t_d : sched.fixed_horizon;
    double h = sched.h0;
    double t_total = 0.0;
    for (int w = 0; w < windows; ++w) {
        double t = 0.0;
        double e = E(x, y);
        if (record_traj) res.traj.push_back({w, t_total, T, tau, x, e});
        for (long k = 0; k < sched.max_steps_per_window && t < horizon; ++k) {
            Vec dx, dy;
            if (mode == NnnMode::Binpad) {
                BinpadRhs rr = binpad_rhs(x, y, prob, L, T, tau, sched.m, alpha, pscale);
                dx = std::move(rr.dx);
                dy = std::move(rr.dy);
            } else {
                if (mode == NnnMode::Binpac) {
                    dx = binpac_rhs(x, prob, T, tau, sched.m);
                    const Vec force = prob.W() * x + prob.v() + (T / tau) * log_odds(x);
                    if (dx.dot(force) < 0.0) {
                        dx = binpac_sym_rhs(x, prob, T, tau, sched.m);
                        ++res.tel.fallbacks;
                    }
                } else {
                    dx = hnn_rhs(x, prob, T, tau);
                }
                dy = Vec::Zero(n);
            }
            // coordinates resting on the clamp and pushed outward do not count as motion
            Vec vel = dx;
            for (int i = 0; i < n; ++i)
                if ((x(i) <= 2 * kEdge && vel(i) < 0) || (x(i) >= 1 - 2 * kEdge && vel(i) > 0))
                    vel(i) = 0.0;
            const double speed = std::max(vel.lpNorm<Eigen::Infinity>(), dy.lpNorm<Eigen::Infinity>());
            if (!(speed >= sched.stop_tol)) break;
            bool ok = false;
            Vec xn, yn;
            double en = 0.0;
            for (int halv = 0; halv <= sched.max_halvings; ++halv) {
                xn = x + h * dx;
                yn = y + h * dy;
                if (interior(xn)) {
                    en = E(xn, yn);
                    if (en <= e) {
                        ok = true;
                        break;
                    }
                }
                ++res.tel.rejected;
                h *= 0.5;
            }
            if (!ok) break;  // no decrease representable at this point
            if (!(margin(xn) >= kEdge)) {
                xn = xn.cwiseMax(kEdge).cwiseMin(1.0 - kEdge);
                ++res.tel.clamp_events;
                en = E(xn, yn);
            }
            if (en > e) res.tel.energy_monotone = false;
            if (mode == NnnMode::Binpad) {
                const double drift = std::abs(yn.sum() - y.sum()) /
                                     std::max(1.0, yn.lpNorm<Eigen::Infinity>());
                res.tel.max_sum_drift = std::max(res.tel.max_sum_drift, drift);
            }
            x = std::move(xn);
            y = std::move(yn);
            e = en;
            t += h;
            t_total += h;
            ++res.tel.accepted;
            res.tel.min_margin = std::min(res.tel.min_margin, margin(x));
            if (record_traj) res.traj.push_back({w, t_total, T, tau, x, e});
            h = std::min(1.5 * h, sched.h_max);
        }
        if (sched.anneal) {
            if (sched.scale_tau) tau *= sched.beta;
            else T /= sched.beta;
        }
    }
    res.x = x;
    res.corner = (x.array() >= 0.5).cast<double>().matrix();
    res.cost = prob.cost(res.corner);
    return res;
}

Vec greedy(const BinaryProblem& prob) {
    const int n = prob.n();
    Vec x = Vec::Zero(n);
    double cur = prob.cost(x);
    for (;;) {
        int best = -1;
        double best_cost = 0.0;
        for (int i = 0; i < n; ++i) {
            if (x(i) == 1.0) continue;
            x(i) = 1.0;
            const double c = prob.cost(x);
            x(i) = 0.0;
            if (best < 0 || c < best_cost) {
                best = i;
                best_cost = c;
            }
        }
        if (best < 0 || !(best_cost < cur)) break;
        x(best) = 1.0;
        cur = best_cost;
    }
    return x;
}

std::pair<Vec, double> brute_force(const BinaryProblem& prob) {
    const int n = prob.n();
    if (n > 24) throw std::invalid_argument("brute_force limited to n <= 24");
    // Gray-code walk keeps the running sums O(1) per corner
    const double base = prob.d.sum();
    double lin = 0.0, px = 0.0;
    auto value = [&] { return base + lin + 0.5 * prob.gamma * (px - prob.P_r) * (px - prob.P_r); };
    std::uint32_t code = 0, best_code = 0;
    double best = value();
    const std::uint32_t total = 1u << n;
    for (std::uint32_t k = 1; k < total; ++k) {
        const int bit = __builtin_ctz(k);
        code ^= 1u << bit;
        const double sgn = (code >> bit) & 1u ? 1.0 : -1.0;
        lin += sgn * prob.c(bit);
        px += sgn * prob.p(bit);
        const double v = value();
        if (v < best) {
            best = v;
            best_code = code;
        }
    }
    Vec x(n);
    for (int i = 0; i < n; ++i) x(i) = (best_code >> i) & 1u ? 1.0 : 0.0;
    return {x, prob.cost(x)};
}

std::vector<double> quality_metric(const std::vector<std::vector<double>>& costs) {
    if (costs.empty()) throw std::invalid_argument("quality_metric needs at least one trial");
    const std::size_t k = costs.front().size();
    if (k < 2) throw std::invalid_argument("quality_metric needs at least two methods");
    std::vector<double> score(k, 0.0);
    for (const auto& row : costs) {
        if (row.size() != k) throw std::invalid_argument("ragged cost table");
        std::vector<std::size_t> idx(k);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](auto i, auto j) { return row[i] < row[j]; });
        for (std::size_t r = 0; r < k;) {
            std::size_t e = r;
            while (e + 1 < k && row[idx[e + 1]] == row[idx[r]]) ++e;
            double pts = 0.0;
            for (std::size_t q = r; q <= e; ++q) pts += static_cast<double>(k - 1 - q);
            pts /= static_cast<double>(e - r + 1);
            for (std::size_t q = r; q <= e; ++q) score[idx[q]] += pts;
            r = e + 1;
        }
    }
    for (auto& s : score) s /= static_cast<double>((k - 1) * costs.size());
    return score;
}

}  // namespace danalab
