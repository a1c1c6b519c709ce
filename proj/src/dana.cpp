#include "danalab/dana.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace danalab {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

Vec q_approx_apply(const Mat& L, const Vec& h, const Vec& v, int q) {
    Vec y = v, acc = v;
    for (int p = 1; p <= q; ++p) {
        Vec w = L * y;
        w.array() *= h.array();
        y -= L * w;
        acc += y;
    }
    return acc;
}

Vec q_approx_apply(SyncNetwork& net, const Vec& h, const Vec& v, int q) {
    Vec y = v, acc = v;
    for (int p = 1; p <= q; ++p) {
        y -= net.apply_LHL(h, y);
        acc += y;
    }
    return acc;
}

Mat q_approx_matrix(const Mat& L, const Vec& h, int q) {
    const int n = static_cast<int>(L.rows());
    const Mat B = Mat::Identity(n, n) - L * h.asDiagonal() * L;
    Mat acc = Mat::Identity(n, n), pw = Mat::Identity(n, n);
    for (int p = 1; p <= q; ++p) {
        pw = pw * B;
        acc += pw;
    }
    return acc;
}

double step_size_bound(int n, double eps, int q) {
    return 2.0 * (1.0 - eps) / ((n - 1) * (1.0 + eps) * (1.0 - std::pow(eps, q + 1)));
}

double linear_rate_alpha(int n, double eps, int q) { return 0.5 * step_size_bound(n, eps, q); }

double linear_rate_decrease(double dist2, int n, double eps, int q) {
    const double num = std::pow(1.0 - eps, 4) * std::pow(1.0 + eps * std::pow(-eps, q), 2) * dist2;
    const double den = 2.0 * (n - 1.0) * (n - 1.0) * std::pow(1.0 + eps, 3) *
                       (1.0 - std::pow(eps, 2 * (q + 1)));
    return num / den;
}

bool linear_rate_certificate(double g_before, double g_after, const Vec& z, const Vec& zstar,
                             int n, double eps, int q, double slack) {
    const double dec = linear_rate_decrease((z - zstar).squaredNorm(), n, eps, q);
    return g_after - g_before <= -dec + slack;
}

Vec z_from_x(const Laplacian& L, const Vec& x0, const Vec& xstar, const Vec& z0) {
    const int n = L.n();
    Vec z = L.pinv() * (xstar - x0);
    z.array() += z0.sum() / n - z.sum() / n;
    return z;
}

DanaDState dana_d_step(const DanaDState& s, const SeparableCost& costs, SyncNetwork& net,
                       double alpha, int q) {
    const Vec h = costs.hess(s.x);
    const Vec gz = net.apply_L(costs.grad(s.x));
    const Vec step = q_approx_apply(net, h, gz, q);
    DanaDState out;
    out.z = s.z - alpha * step;
    out.x = s.x - alpha * net.apply_L(step);
    return out;
}

DanaResult dana_d_run(const SeparableCost& costs, const Graph& g, const Mat& L, const Vec& x0,
                      double d, const DanaConfig& cfg, const Vec* xstar) {
    if (costs.n() < 2) throw std::invalid_argument("DANA needs at least two agents");
    SyncNetwork net(g, L);
    DanaDState s{Vec::Zero(costs.n()), x0};
    DanaResult res;
    auto record = [&](long k) {
        const Vec gz = L * costs.grad(s.x);
        res.series.push_back({k, static_cast<double>(k), costs.value(s.x), gz.norm(),
                              std::abs(s.x.sum() - d), xstar ? (s.x - *xstar).norm() : kNaN, kNaN});
    };
    long k = 0;
    for (; k < cfg.max_iters; ++k) {
        if (k % cfg.record_every == 0) record(k);
        DanaDState nx = dana_d_step(s, costs, net, cfg.alpha, cfg.q);
        const double dz = (nx.z - s.z).lpNorm<Eigen::Infinity>();
        s = std::move(nx);
        if (!std::isfinite(dz)) break;
        if (dz < cfg.tol) {
            res.converged = true;
            ++k;
            break;
        }
    }
    if (res.series.empty() || res.series.back().iter != k) record(k);
    res.x = s.x;
    res.z = s.z;
    res.iters = k;
    res.comm_rounds = net.rounds();
    return res;
}

DanaCState dana_c_step(const DanaCState& s, const AllocationProblem& prob, const Mat& L,
                       const Vec& x0, int q, double h) {
    if (!prob.has_box()) throw std::invalid_argument("DANA-C needs box constraints");
    const Vec x = x0 + L * s.z;
    const Vec gl = L * (prob.costs.grad(x) - s.lam_lower + s.lam_upper);
    DanaCState out;
    out.z = s.z - h * q_approx_apply(L, prob.costs.hess(x), gl, q);
    out.lam_lower = (s.lam_lower + h * (*prob.lower - x)).cwiseMax(0.0);
    out.lam_upper = (s.lam_upper + h * (x - *prob.upper)).cwiseMax(0.0);
    return out;
}

LyapunovVQ::LyapunovVQ(const Mat& L, const Vec& hess, int q, Vec zstar, Vec lam_lower,
                       Vec lam_upper)
    : zstar_(std::move(zstar)), ll_(std::move(lam_lower)), lu_(std::move(lam_upper)) {
    const Mat A = q_approx_matrix(L, hess, q);
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (A + A.transpose()));
    const Vec inv_sqrt = es.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    Ainv_half_ = es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
}

double LyapunovVQ::operator()(const DanaCState& s) const {
    return 0.5 * (Ainv_half_ * (s.z - zstar_)).squaredNorm() +
           0.5 * (s.lam_lower - ll_).squaredNorm() + 0.5 * (s.lam_upper - lu_).squaredNorm();
}

DanaResult dana_c_run(const AllocationProblem& prob, const Mat& L, const Vec& x0,
                      const DanaCState& init, double horizon, const DanaConfig& cfg,
                      const AllocationSolution* ref) {
    const int n = prob.n();
    if (n < 2) throw std::invalid_argument("DANA needs at least two agents");
    std::optional<LyapunovVQ> vq;
    if (ref && n <= 20) {
        const Vec zs = z_from_x(Laplacian(L), x0, ref->x, init.z);
        vq.emplace(L, prob.costs.hess(ref->x), cfg.q, zs, ref->lam_lower, ref->lam_upper);
    }
    const long steps = static_cast<long>(std::llround(horizon / cfg.h));
    DanaCState s = init;
    DanaResult res;
    auto record = [&](long k) {
        const Vec x = x0 + L * s.z;
        const Vec gl = L * (prob.costs.grad(x) - s.lam_lower + s.lam_upper);
        res.series.push_back({k, k * cfg.h, prob.costs.value(x), gl.norm(),
                              std::abs(x.sum() - prob.d), ref ? (x - ref->x).norm() : kNaN,
                              vq ? (*vq)(s) : kNaN});
    };
    double last_rate = std::numeric_limits<double>::infinity();
    for (long k = 0; k < steps; ++k) {
        if (k % cfg.record_every == 0) record(k);
        DanaCState nx = dana_c_step(s, prob, L, x0, cfg.q, cfg.h);
        last_rate = std::max({(nx.z - s.z).lpNorm<Eigen::Infinity>(),
                              (nx.lam_lower - s.lam_lower).lpNorm<Eigen::Infinity>(),
                              (nx.lam_upper - s.lam_upper).lpNorm<Eigen::Infinity>()}) /
                    cfg.h;
        s = std::move(nx);
        if (!std::isfinite(last_rate)) break;
    }
    record(steps);
    res.z = s.z;
    res.x = x0 + L * s.z;
    res.lam_lower = s.lam_lower;
    res.lam_upper = s.lam_upper;
    res.iters = steps;
    res.converged = last_rate < cfg.tol;
    return res;
}

RobustState robust_dana_step(const RobustState& s, const SeparableCost& costs, const Mat& L,
                             const Vec& dbar, const RobustConfig& cfg) {
    const Vec r = s.x + L * s.z - dbar;
    const Vec w = s.nu + cfg.rho * r;
    RobustState out;
    out.x = s.x - cfg.h * (costs.grad(s.x) + w);
    out.z = s.z - cfg.h * q_approx_apply(L, Vec::Ones(s.x.size()), L * w, cfg.q);
    out.nu = s.nu + cfg.h * r;
    return out;
}

RobustResult robust_dana_run(const SeparableCost& costs, const Mat& L, const Vec& dbar,
                             const Vec& x_init, const RobustConfig& cfg, double horizon,
                             const std::vector<double>& perturb_times, double noise, Rng& rng,
                             long record_every, const Vec* xstar) {
    const int n = costs.n();
    const double d = dbar.sum();
    RobustState s{x_init, Vec::Zero(n), Vec::Zero(n)};
    RobustResult res;
    const long steps = static_cast<long>(std::llround(horizon / cfg.h));
    std::vector<long> hits;
    for (double t : perturb_times) hits.push_back(static_cast<long>(std::llround(t / cfg.h)));
    auto record = [&](long k) {
        const Vec r = s.x + L * s.z - dbar;
        res.series.push_back({k, k * cfg.h, costs.value(s.x), r.norm(), std::abs(s.x.sum() - d),
                              xstar ? (s.x - *xstar).norm() : kNaN, kNaN});
    };
    for (long k = 0; k < steps; ++k) {
        for (long hk : hits)
            if (hk == k)
                for (int i = 0; i < n; ++i) s.x(i) += noise * rng.normal();
        if (k % record_every == 0) record(k);
        s = robust_dana_step(s, costs, L, dbar, cfg);
    }
    record(steps);
    res.final = s;
    return res;
}

}  // namespace danalab
