#include "danalab/discrn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace danalab {

Mat pt_inverse(const Mat& A, double m) {
    if (!(m > 0)) throw std::invalid_argument("pt_inverse needs m > 0");
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (A + A.transpose()));
    Vec inv = es.eigenvalues().cwiseAbs().cwiseMax(m).cwiseInverse();
    Mat out = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

void NestedProblem::validate() const {
    if (n() < 2) throw std::invalid_argument("nested problem needs at least two agents");
    if (graph.n() != n()) throw std::invalid_argument("graph size mismatch");
    if (!is_connected(graph)) throw std::invalid_argument("graph must be connected");
    if (chi_lo.size() != n() || chi_hi.size() != n())
        throw std::invalid_argument("realization bounds size mismatch");
    for (const auto& f : costs)
        if (f.kind != CostKind::ShiftedQuadratic)
            throw std::invalid_argument("nested problem needs shifted quadratic costs");
}

Vec NestedProblem::sample_chi(Rng& rng) const {
    Vec chi(n());
    for (int i = 0; i < n(); ++i)
        chi(i) = chi_lo(i) == chi_hi(i) ? chi_lo(i) : rng.uniform(chi_lo(i), chi_hi(i));
    return chi;
}

NestedProblem NestedProblem::ev_example(bool cloudy) {
    NestedProblem p;
    // (2x + p - 1)^2 and (x + p - 2)^2 expanded in p
    p.costs.push_back(ScalarCost::shifted(Poly::constant(2.0), Poly{{-2.0, 4.0}}, Poly{{1.0, -4.0, 4.0}}));
    p.costs.push_back(ScalarCost::shifted(Poly::constant(2.0), Poly{{-4.0, 2.0}}, Poly{{4.0, -4.0, 1.0}}));
    p.P_ref = 0.0;
    p.chi_lo = cloudy ? Vec::Zero(2) : Vec::Constant(2, 1.5);
    p.chi_hi = Vec::Constant(2, 1.5);
    p.graph = Graph::complete(2);
    return p;
}

NestedProblem NestedProblem::synthetic(int n, int m, double P_ref, double lo, double hi,
                                       std::uint64_t seed) {
    NestedProblem p;
    p.graph = random_connected_graph(n, m, seed);
    Rng rng(seed, "costs");
    for (int i = 0; i < n; ++i) p.costs.push_back(random_nested_cost(rng));
    p.P_ref = P_ref;
    p.chi_lo = Vec::Constant(n, lo);
    p.chi_hi = Vec::Constant(n, hi);
    return p;
}

Vec inner_gradient(const NestedProblem& prob, const Vec& x, const Vec& p) {
    Vec g(prob.n());
    for (int i = 0; i < prob.n(); ++i) g(i) = prob.costs[i].grad_p(x(i), p(i));
    return g;
}

Vec inner_solution(const NestedProblem& prob, const Vec& x, const Vec& chi) {
    const int n = prob.n();
    double inv = 0.0, shift = 0.0;
    Vec a(n), b(n);
    for (int i = 0; i < n; ++i) {
        a(i) = prob.costs[i].alpha(x(i));
        b(i) = prob.costs[i].beta(x(i));
        inv += 1.0 / a(i);
        shift += b(i) / a(i);
    }
    const double nu = (prob.P_ref + chi.sum() + shift) / inv;
    return ((nu - b.array()) / a.array()).matrix();
}

std::pair<double, double> curvature_range(const NestedProblem& prob, const Vec& x) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int i = 0; i < prob.n(); ++i) {
        const double a = prob.costs[i].alpha(x(i));
        lo = std::min(lo, a);
        hi = std::max(hi, a);
    }
    return {lo, hi};
}

Vec inner_flow_step(const Vec& p, const Vec& x, const NestedProblem& prob, const Mat& L,
                    double eta) {
    return p - eta * (L * inner_gradient(prob, x, p));
}

bool inner_stop_check(const Vec& p, const Vec& p_next, double Delta, double eta, double lambda2,
                      double omega, int n) {
    const double thr = Delta * eta * lambda2 * omega / std::sqrt(static_cast<double>(n));
    return ((p_next - p).cwiseAbs().array() <= thr).all();
}

double EtaBounds::rounds(double Delta, double dist0) const {
    if (dist0 <= Delta) return 0.0;
    if (rate <= 0.0) return 1.0;
    return std::ceil(std::log(Delta / dist0) / std::log(rate));
}

EtaBounds eta_bounds(double omega, double theta, double lambda2, double lambda_n) {
    EtaBounds b;
    b.eta_asym = 2.0 / (theta * lambda_n);
    b.eta_rate = 2.0 * omega * lambda2 / (theta * theta * lambda_n * lambda_n);
    b.eta_cert = 0.5 * b.eta_rate;
    const double r = omega * lambda2 / (lambda_n * theta);
    b.rate = std::sqrt(std::max(0.0, 1.0 - r * r));
    return b;
}

InnerResult inner_solve(const NestedProblem& prob, const Vec& x, const Vec& chi, const Mat& L,
                        double eta, double Delta, double lambda2, double omega, long max_rounds) {
    InnerResult r;
    r.p = chi;
    r.p(0) += prob.P_ref;
    for (; r.rounds < max_rounds;) {
        Vec next = inner_flow_step(r.p, x, prob, L, eta);
        ++r.rounds;
        const bool stop = inner_stop_check(r.p, next, Delta, eta, lambda2, omega, prob.n());
        r.p = std::move(next);
        if (stop) {
            r.stopped = true;
            break;
        }
    }
    return r;
}

std::string to_string(SubmodelKind k) {
    switch (k) {
        case SubmodelKind::Cubic: return "cubic";
        case SubmodelKind::Gradient: return "gradient";
        case SubmodelKind::Newton: return "newton";
    }
    return "unknown";
}

SubmodelKind submodel_kind_from_string(const std::string& s) {
    if (s == "cubic") return SubmodelKind::Cubic;
    if (s == "gradient") return SubmodelKind::Gradient;
    if (s == "newton") return SubmodelKind::Newton;
    throw std::invalid_argument("unknown method: " + s);
}

double Submodel::value(const Vec& x) const {
    const Vec xi = x - anchor;
    double v = base + g.dot(xi);
    switch (kind) {
        case SubmodelKind::Cubic:
            v += 0.5 * xi.dot(H.cwiseProduct(xi)) + reg / 6.0 * xi.cwiseAbs().array().cube().sum();
            break;
        case SubmodelKind::Gradient:
            v += 0.5 * reg * xi.squaredNorm();
            break;
        case SubmodelKind::Newton:
            v += 0.5 * xi.dot(H.cwiseProduct(xi)) + 0.5 * reg * xi.squaredNorm();
            break;
    }
    return v;
}

Vec Submodel::grad(const Vec& x) const {
    const Vec xi = x - anchor;
    switch (kind) {
        case SubmodelKind::Cubic:
            return g + H.cwiseProduct(xi) + 0.5 * reg * xi.cwiseAbs().cwiseProduct(xi);
        case SubmodelKind::Gradient:
            return g + reg * xi;
        case SubmodelKind::Newton:
            return g + H.cwiseProduct(xi) + reg * xi;
    }
    return g;
}

double empirical_batch_value(const NestedProblem& prob, const Vec& x,
                             const std::vector<Vec>& ptilde) {
    double s = 0.0;
    for (const auto& p : ptilde)
        for (int i = 0; i < prob.n(); ++i) s += prob.costs[i].eval(x(i), p(i));
    return s / static_cast<double>(ptilde.size());
}

Submodel build_submodel(const NestedProblem& prob, const Vec& xk, const std::vector<Vec>& ptilde,
                        SubmodelKind kind, double reg) {
    if (ptilde.empty()) throw std::invalid_argument("build_submodel: empty batch");
    const int n = prob.n();
    Submodel m;
    m.kind = kind;
    m.anchor = xk;
    m.reg = reg;
    m.g = Vec::Zero(n);
    m.H = Vec::Zero(n);
    for (const auto& p : ptilde)
        for (int i = 0; i < n; ++i) {
            m.g(i) += prob.costs[i].grad_x(xk(i), p(i));
            m.H(i) += prob.costs[i].hess_x(xk(i), p(i));
        }
    m.g /= static_cast<double>(ptilde.size());
    m.H /= static_cast<double>(ptilde.size());
    m.base = empirical_batch_value(prob, xk, ptilde);
    return m;
}

double default_alpha0(const Submodel& m) {
    double c = 0.0;
    for (int i = 0; i < m.g.size(); ++i) {
        double ci = 0.0;
        switch (m.kind) {
            case SubmodelKind::Cubic:
                // curvature of the cubic term at the step length it is expected to take
                ci = std::abs(m.H(i)) + std::sqrt(2.0 * m.reg * std::abs(m.g(i)));
                break;
            case SubmodelKind::Gradient: ci = m.reg; break;
            case SubmodelKind::Newton: ci = std::abs(m.H(i) + m.reg); break;
        }
        c = std::max(c, ci);
    }
    return c > 0 ? 1.0 / c : 1.0;
}

DgdResult dgd_subsolver(const Submodel& m, const Mat& L, double lambda_n, double alpha0,
                        long rounds, double tol, bool monitor) {
    DgdResult r;
    r.x = m.anchor;
    if (monitor) r.values.push_back(m.value(r.x));
    for (long t = 1; t <= rounds; ++t) {
        Vec next = r.x - (L * r.x) / lambda_n - (alpha0 / static_cast<double>(t)) * m.grad(r.x);
        const double step = (next - r.x).lpNorm<Eigen::Infinity>();
        r.x = std::move(next);
        r.rounds = t;
        if (monitor) r.values.push_back(m.value(r.x));
        if (!std::isfinite(step) || step < tol) break;
    }
    return r;
}

double disagreement(const Vec& x) { return (x.array() - x.mean()).matrix().norm(); }

bool subsolver_condition_check(const Vec& xk, const Vec& xk1, const Submodel& m, double c,
                               double eps, double rho, double consensus_tol) {
    const double scale = std::max(1.0, xk1.norm());
    if (disagreement(xk1) > consensus_tol * scale) return false;
    const double s = (xk1 - xk).norm();
    return m.value(xk1) - m.value(xk) < -c * eps * s - c * std::sqrt(rho * eps) * s * s;
}

double batch_size_bound(double M1, double sigma1, double M2, double sigma2, double cbar,
                        double eps, double rho, double zeta) {
    const double se = std::sqrt(rho * eps);
    const double lead = std::max({M1 / (cbar * eps), sigma1 * sigma1 / (cbar * cbar * eps * eps),
                                  M2 / (cbar * se), sigma2 * sigma2 / (cbar * cbar * rho * eps)});
    const double lg = std::log(1.0 / (std::pow(eps, 1.5) * zeta * cbar));
    return lead * std::max(lg, 0.0);
}

double empirical_F(const NestedProblem& prob, const Vec& x, const std::vector<Vec>& chis) {
    double s = 0.0;
    for (const auto& chi : chis) {
        const Vec p = inner_solution(prob, x, chi);
        for (int i = 0; i < prob.n(); ++i) s += prob.costs[i].eval(x(i), p(i));
    }
    return s / static_cast<double>(chis.size());
}

long iterations_to_plateau(const std::vector<double>& F, double tail, double frac) {
    if (F.empty()) return -1;
    const std::size_t k0 = F.size() - std::max<std::size_t>(1, static_cast<std::size_t>(tail * F.size()));
    double plat = 0.0;
    for (std::size_t k = k0; k < F.size(); ++k) plat += F[k];
    plat /= static_cast<double>(F.size() - k0);
    const double thr = frac * (F.front() - plat);
    for (std::size_t k = 0; k < F.size(); ++k)
        if (F[k] - plat <= thr) return static_cast<long>(k);
    return static_cast<long>(F.size()) - 1;
}

DiscrnResult discrn_run(const NestedProblem& prob, const DiscrnConfig& cfg, std::uint64_t seed) {
    prob.validate();
    const int n = prob.n();
    const Laplacian lap = build_laplacian(prob.graph);
    const double l2 = lap.lambda2(), ln = lap.lambda_n();

    Rng eval_rng(seed, "eval");
    std::vector<Vec> eval_chis;
    for (int k = 0; k < cfg.eval_realizations; ++k) eval_chis.push_back(prob.sample_chi(eval_rng));
    Rng batch_rng(seed, "batch");

    double reg = cfg.rho;
    if (cfg.method == SubmodelKind::Gradient) reg = cfg.eta_g;
    if (cfg.method == SubmodelKind::Newton) reg = cfg.eta_H;

    DiscrnResult res;
    Vec x = Vec::Constant(n, cfg.x0);
    long inner_total = 0;
    std::vector<double> F;
    for (int k = 0;; ++k) {
        const double Fk = empirical_F(prob, x, eval_chis);
        if (!std::isfinite(Fk)) {
            res.converged = false;
            break;
        }
        F.push_back(Fk);
        if (k == cfg.outer_iters) {
            res.rows.push_back({k, Fk, disagreement(x), false, inner_total});
            break;
        }
        const auto [omega, theta] = curvature_range(prob, x);
        const double eta = cfg.certified_eta ? eta_bounds(omega, theta, l2, ln).eta_cert
                                             : 1.0 / (theta * ln);
        std::vector<Vec> ptilde;
        for (int s = 0; s < cfg.S; ++s) {
            const Vec chi = prob.sample_chi(batch_rng);
            InnerResult ir = inner_solve(prob, x, chi, lap.L, eta, cfg.Delta, l2, omega,
                                         cfg.max_inner_rounds);
            inner_total += ir.rounds;
            if (!ir.stopped) res.converged = false;
            ptilde.push_back(std::move(ir.p));
        }
        const Submodel m = build_submodel(prob, x, ptilde, cfg.method, reg);
        const double a0 = cfg.alpha0 > 0 ? cfg.alpha0 : default_alpha0(m);
        const DgdResult dg = dgd_subsolver(m, lap.L, ln, a0, cfg.dgd_rounds, cfg.dgd_tol);
        const bool acc = subsolver_condition_check(x, dg.x, m, cfg.cond_c, cfg.cond_eps, cfg.rho,
                                                   cfg.consensus_tol);
        res.rows.push_back({k, Fk, disagreement(x), acc, inner_total});
        x = dg.x;
    }
    res.x = x;
    res.plateau_iter = iterations_to_plateau(F);
    return res;
}

}  // namespace danalab
