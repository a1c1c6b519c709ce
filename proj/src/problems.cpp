#include "danalab/problems.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace danalab {

double Poly::operator()(double x) const {
    double v = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * x + *it;
    return v;
}

Poly Poly::derivative() const {
    Poly d;
    for (std::size_t k = 1; k < c.size(); ++k) d.c.push_back(static_cast<double>(k) * c[k]);
    if (d.c.empty()) d.c.push_back(0.0);
    return d;
}

Poly Poly::from_roots(double lead, const std::vector<double>& roots) {
    std::vector<double> p{lead};
    for (double r : roots) {
        std::vector<double> q(p.size() + 1, 0.0);
        for (std::size_t k = 0; k < p.size(); ++k) {
            q[k + 1] += p[k];
            q[k] -= r * p[k];
        }
        p = std::move(q);
    }
    return Poly{p};
}

std::string to_string(CostKind k) {
    switch (k) {
        case CostKind::Quadratic: return "quadratic";
        case CostKind::SinusoidalQuadratic: return "sinusoidal_quadratic";
        case CostKind::ShiftedQuadratic: return "shifted_quadratic";
        case CostKind::BinaryQuadratic: return "binary_quadratic";
    }
    return "unknown";
}

CostKind cost_kind_from_string(const std::string& s) {
    if (s == "quadratic") return CostKind::Quadratic;
    if (s == "sinusoidal_quadratic") return CostKind::SinusoidalQuadratic;
    if (s == "shifted_quadratic") return CostKind::ShiftedQuadratic;
    if (s == "binary_quadratic") return CostKind::BinaryQuadratic;
    throw std::invalid_argument("unknown cost kind: " + s);
}

ScalarCost ScalarCost::quadratic(double a, double b) {
    ScalarCost f;
    f.kind = CostKind::Quadratic;
    f.a = a;
    f.b = b;
    return f;
}

ScalarCost ScalarCost::sinusoidal(double a, double b, double c, double theta) {
    ScalarCost f;
    f.kind = CostKind::SinusoidalQuadratic;
    f.a = a;
    f.b = b;
    f.c = c;
    f.theta = theta;
    return f;
}

ScalarCost ScalarCost::binary(double a, double b, double d) {
    ScalarCost f;
    f.kind = CostKind::BinaryQuadratic;
    f.a = a;
    f.b = b;
    f.d = d;
    f.c = 0.5 * a * (1.0 - 2.0 * b);
    return f;
}

ScalarCost ScalarCost::binary_from_increment(double a, double c, double d) {
    if (a == 0.0) throw std::invalid_argument("binary cost needs a != 0");
    return binary(a, 0.5 - c / a, d);
}

ScalarCost ScalarCost::shifted(Poly alpha, Poly beta, Poly gamma) {
    ScalarCost f;
    f.kind = CostKind::ShiftedQuadratic;
    f.alpha = std::move(alpha);
    f.beta = std::move(beta);
    f.gamma = std::move(gamma);
    return f;
}

double ScalarCost::eval(double x) const {
    switch (kind) {
        case CostKind::Quadratic: return 0.5 * a * x * x + b * x;
        case CostKind::SinusoidalQuadratic: return 0.5 * a * x * x + b * x + c * std::sin(x + theta);
        case CostKind::BinaryQuadratic: return 0.5 * a * (x - b) * (x - b) - 0.5 * a * b * b + d;
        case CostKind::ShiftedQuadratic: break;
    }
    throw std::logic_error("shifted cost needs (x, p)");
}

double ScalarCost::grad(double x) const {
    switch (kind) {
        case CostKind::Quadratic: return a * x + b;
        case CostKind::SinusoidalQuadratic: return a * x + b + c * std::cos(x + theta);
        case CostKind::BinaryQuadratic: return a * (x - b);
        case CostKind::ShiftedQuadratic: break;
    }
    throw std::logic_error("shifted cost needs (x, p)");
}

double ScalarCost::hess(double x) const {
    switch (kind) {
        case CostKind::Quadratic: return a;
        case CostKind::SinusoidalQuadratic: return a - c * std::sin(x + theta);
        case CostKind::BinaryQuadratic: return a;
        case CostKind::ShiftedQuadratic: break;
    }
    throw std::logic_error("shifted cost needs (x, p)");
}

double ScalarCost::increment() const { return eval(1.0) - eval(0.0); }

double ScalarCost::eval(double x, double p) const {
    return 0.5 * alpha(x) * p * p + beta(x) * p + gamma(x);
}
double ScalarCost::grad_p(double x, double p) const { return alpha(x) * p + beta(x); }
double ScalarCost::hess_p(double x) const { return alpha(x); }
double ScalarCost::grad_x(double x, double p) const {
    return 0.5 * alpha.derivative()(x) * p * p + beta.derivative()(x) * p + gamma.derivative()(x);
}
double ScalarCost::hess_x(double x, double p) const {
    return 0.5 * alpha.derivative().derivative()(x) * p * p + beta.derivative().derivative()(x) * p +
           gamma.derivative().derivative()(x);
}

nlohmann::json ScalarCost::to_json() const {
    nlohmann::json j;
    j["kind"] = to_string(kind);
    switch (kind) {
        case CostKind::Quadratic: j["a"] = a; j["b"] = b; break;
        case CostKind::SinusoidalQuadratic:
            j["a"] = a; j["b"] = b; j["c"] = c; j["theta"] = theta; break;
        case CostKind::BinaryQuadratic: j["a"] = a; j["b"] = b; j["d"] = d; break;
        case CostKind::ShiftedQuadratic:
            j["alpha"] = alpha.c; j["beta"] = beta.c; j["gamma"] = gamma.c; break;
    }
    return j;
}

ScalarCost ScalarCost::from_json(const nlohmann::json& j) {
    const CostKind k = cost_kind_from_string(j.at("kind").get<std::string>());
    switch (k) {
        case CostKind::Quadratic: return quadratic(j.at("a"), j.value("b", 0.0));
        case CostKind::SinusoidalQuadratic:
            return sinusoidal(j.at("a"), j.value("b", 0.0), j.value("c", 0.0), j.value("theta", 0.0));
        case CostKind::BinaryQuadratic: return binary(j.at("a"), j.at("b"), j.value("d", 0.0));
        case CostKind::ShiftedQuadratic:
            return shifted(Poly{j.at("alpha").get<std::vector<double>>()},
                           Poly{j.at("beta").get<std::vector<double>>()},
                           Poly{j.value("gamma", std::vector<double>{0.0})});
    }
    throw std::invalid_argument("bad cost");
}

double SeparableCost::value(const Vec& x) const {
    double s = 0.0;
    for (int i = 0; i < n(); ++i) s += terms[i].eval(x(i));
    return s;
}

Vec SeparableCost::grad(const Vec& x) const {
    Vec g(n());
    for (int i = 0; i < n(); ++i) g(i) = terms[i].grad(x(i));
    return g;
}

Vec SeparableCost::hess(const Vec& x) const {
    Vec h(n());
    for (int i = 0; i < n(); ++i) h(i) = terms[i].hess(x(i));
    return h;
}

HessianBounds HessianBounds::global() const {
    const int n = static_cast<int>(delta.size());
    return {Vec::Constant(n, delta.minCoeff()), Vec::Constant(n, Delta.maxCoeff())};
}

HessianBounds hessian_bounds(const SeparableCost& costs) {
    HessianBounds hb{Vec(costs.n()), Vec(costs.n())};
    for (int i = 0; i < costs.n(); ++i) {
        const auto& f = costs.terms[i];
        switch (f.kind) {
            case CostKind::Quadratic:
                hb.delta(i) = hb.Delta(i) = f.a;
                break;
            case CostKind::SinusoidalQuadratic:
                hb.delta(i) = f.a - std::abs(f.c);
                hb.Delta(i) = f.a + std::abs(f.c);
                break;
            default:
                throw std::invalid_argument("hessian_bounds: unsupported cost kind " + to_string(f.kind));
        }
    }
    return hb;
}

void AllocationProblem::validate() const {
    if (n() < 1) throw std::invalid_argument("problem has no agents");
    if (graph.n() != 0 && graph.n() != n()) throw std::invalid_argument("graph size mismatch");
    for (const auto& f : costs.terms) {
        if (f.kind == CostKind::Quadratic && !(f.a > 0)) throw std::invalid_argument("quadratic cost needs a > 0");
        if (f.kind == CostKind::SinusoidalQuadratic && !(f.a - std::abs(f.c) > 0))
            throw std::invalid_argument("sinusoidal cost needs a - c > 0");
    }
    if (lower.has_value() != upper.has_value()) throw std::invalid_argument("box needs both bounds");
    if (lower) {
        if (lower->size() != n() || upper->size() != n()) throw std::invalid_argument("box size mismatch");
        if (((*upper - *lower).array() <= 0).any()) throw std::invalid_argument("box needs lower < upper");
        if (!(lower->sum() < d && d < upper->sum()))
            throw std::invalid_argument("demand must lie strictly inside the box sum range");
    }
}

nlohmann::json AllocationProblem::to_json() const {
    nlohmann::json j;
    auto arr = nlohmann::json::array();
    for (const auto& f : costs.terms) arr.push_back(f.to_json());
    j["costs"] = arr;
    j["d"] = d;
    if (lower) {
        j["lower"] = std::vector<double>(lower->data(), lower->data() + lower->size());
        j["upper"] = std::vector<double>(upper->data(), upper->data() + upper->size());
    }
    j["graph"] = graph.to_json();
    return j;
}

AllocationProblem AllocationProblem::from_json(const nlohmann::json& j) {
    AllocationProblem p;
    for (const auto& f : j.at("costs")) p.costs.terms.push_back(ScalarCost::from_json(f));
    p.d = j.at("d").get<double>();
    if (j.contains("lower")) {
        auto lo = j.at("lower").get<std::vector<double>>();
        auto hi = j.at("upper").get<std::vector<double>>();
        p.lower = Eigen::Map<Vec>(lo.data(), lo.size());
        p.upper = Eigen::Map<Vec>(hi.data(), hi.size());
    }
    if (j.contains("graph")) p.graph = Graph::from_json(j.at("graph"));
    return p;
}

Vec feasible_initializer(const AllocationProblem& prob, InitMode mode, const Vec* offsets) {
    const int n = prob.n();
    Vec x = Vec::Zero(n);
    if (mode == InitMode::Uniform)
        x.setConstant(prob.d / n);
    else
        x(0) = prob.d;
    if (offsets) x += *offsets;
    return x;
}

namespace {

// Solve f'(x) = nu for a strictly increasing marginal cost.
double inverse_marginal(const ScalarCost& f, double nu) {
    if (f.kind == CostKind::Quadratic) return (nu - f.b) / f.a;
    if (f.kind != CostKind::SinusoidalQuadratic)
        throw std::invalid_argument("solve_allocation: unsupported cost kind");
    const double c = std::abs(f.c);
    double lo = (nu - f.b - c) / f.a, hi = (nu - f.b + c) / f.a;
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double g = f.grad(x) - nu;
        if (g > 0) hi = x; else lo = x;
        double xn = x - g / f.hess(x);
        if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
        if (std::abs(xn - x) <= 1e-16 * std::max(1.0, std::abs(x)) || hi - lo <= 0) {
            x = xn;
            break;
        }
        x = xn;
    }
    return x;
}

Vec allocation_at(const SeparableCost& costs, double nu, const std::optional<Vec>& lower,
                  const std::optional<Vec>& upper) {
    Vec x(costs.n());
    for (int i = 0; i < costs.n(); ++i) {
        double v = inverse_marginal(costs.terms[i], nu);
        if (lower) v = std::clamp(v, (*lower)(i), (*upper)(i));
        x(i) = v;
    }
    return x;
}

}  // namespace

AllocationSolution solve_allocation(const SeparableCost& costs, double d,
                                    const std::optional<Vec>& lower,
                                    const std::optional<Vec>& upper) {
    const int n = costs.n();
    auto total = [&](double nu) { return allocation_at(costs, nu, lower, upper).sum(); };
    double lo = -1.0, hi = 1.0;
    for (int k = 0; k < 200 && total(lo) > d; ++k) lo *= 2.0;
    for (int k = 0; k < 200 && total(hi) < d; ++k) hi *= 2.0;
    for (int it = 0; it < 300; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (total(mid) < d) lo = mid; else hi = mid;
    }
    // pick whichever end gives the closer sum
    const double nu = std::abs(total(lo) - d) <= std::abs(total(hi) - d) ? lo : hi;
    AllocationSolution sol;
    sol.nu = nu;
    sol.x = allocation_at(costs, nu, lower, upper);
    sol.lam_lower = Vec::Zero(n);
    sol.lam_upper = Vec::Zero(n);
    if (lower) {
        for (int i = 0; i < n; ++i) {
            const double g = costs.terms[i].grad(sol.x(i));
            const double tol = 1e-12 * std::max(1.0, std::abs(sol.x(i)));
            if (sol.x(i) <= (*lower)(i) + tol) sol.lam_lower(i) = std::max(0.0, g - nu);
            if (sol.x(i) >= (*upper)(i) - tol) sol.lam_upper(i) = std::max(0.0, nu - g);
        }
    }
    return sol;
}

AllocationSolution solve_allocation(const AllocationProblem& prob) {
    return solve_allocation(prob.costs, prob.d, prob.lower, prob.upper);
}

std::optional<AllocationSolution> solve_box_qp_active_set(const Vec& a, const Vec& b,
                                                          const Vec& lower, const Vec& upper,
                                                          double d) {
    const int n = static_cast<int>(a.size());
    if (n > 12) throw std::invalid_argument("active-set enumeration limited to n <= 12");
    long total = 1;
    for (int i = 0; i < n; ++i) total *= 3;
    std::vector<int> s(n);
    for (long code = 0; code < total; ++code) {
        long c = code;
        for (int i = 0; i < n; ++i) {
            s[i] = static_cast<int>(c % 3);
            c /= 3;
        }
        // 0 free, 1 at lower, 2 at upper
        double fixed = 0.0, inv = 0.0, shift = 0.0;
        for (int i = 0; i < n; ++i) {
            if (s[i] == 1) fixed += lower(i);
            else if (s[i] == 2) fixed += upper(i);
            else {
                inv += 1.0 / a(i);
                shift += b(i) / a(i);
            }
        }
        if (inv == 0.0) continue;
        const double nu = (d - fixed + shift) / inv;
        AllocationSolution sol{Vec(n), nu, Vec::Zero(n), Vec::Zero(n)};
        bool ok = true;
        const double tol = 1e-12;
        for (int i = 0; i < n && ok; ++i) {
            if (s[i] == 0) {
                sol.x(i) = (nu - b(i)) / a(i);
                ok = sol.x(i) >= lower(i) - tol && sol.x(i) <= upper(i) + tol;
            } else if (s[i] == 1) {
                sol.x(i) = lower(i);
                sol.lam_lower(i) = a(i) * lower(i) + b(i) - nu;
                ok = sol.lam_lower(i) >= -tol;
            } else {
                sol.x(i) = upper(i);
                sol.lam_upper(i) = nu - a(i) * upper(i) - b(i);
                ok = sol.lam_upper(i) >= -tol;
            }
        }
        if (ok) {
            sol.lam_lower = sol.lam_lower.cwiseMax(0.0);
            sol.lam_upper = sol.lam_upper.cwiseMax(0.0);
            return sol;
        }
    }
    return std::nullopt;
}

SeparableCost random_sinusoidal_costs(int n, Rng& rng) {
    SeparableCost c;
    for (int i = 0; i < n; ++i) {
        const double a = rng.uniform(2.0, 4.0);
        const double b = rng.uniform(-1.0, 1.0);
        const double cc = rng.uniform(0.0, 1.0);
        const double th = rng.uniform(0.0, 2.0 * std::numbers::pi);
        c.terms.push_back(ScalarCost::sinusoidal(a, b, cc, th));
    }
    return c;
}

double poly_minimum(const Poly& p, double lo, double hi, double* argmin) {
    const int N = 4000;
    double best_x = lo, best = p(lo);
    for (int k = 1; k <= N; ++k) {
        const double x = lo + (hi - lo) * k / N;
        const double v = p(x);
        if (v < best) {
            best = v;
            best_x = x;
        }
    }
    const Poly d1 = p.derivative(), d2 = d1.derivative();
    const double h = (hi - lo) / N;
    double x = best_x;
    for (int it = 0; it < 50; ++it) {
        const double curv = d2(x);
        if (!(curv > 0)) break;
        double xn = x - d1(x) / curv;
        xn = std::clamp(xn, best_x - h, best_x + h);
        if (std::abs(xn - x) < 1e-15) {
            x = xn;
            break;
        }
        x = xn;
    }
    if (p(x) < best) {
        best = p(x);
        best_x = x;
    }
    if (argmin) *argmin = best_x;
    return best;
}

ScalarCost random_nested_cost(Rng& rng) {
    const double a1 = rng.uniform(0.5, 1.5);
    const double z1 = rng.uniform(-2.0, -1.0);
    const double z2 = rng.uniform(-1.0, 0.0);
    const double z3 = rng.uniform(0.0, 1.0);
    const double z4 = rng.uniform(1.0, 2.0);
    const double omega = rng.uniform(1.0, 5.0);
    const double b1 = rng.uniform(-1.0, 1.0);
    const double z5 = rng.uniform(-2.0, 0.0);
    const double z6 = rng.uniform(0.0, 2.0);
    Poly alpha = Poly::from_roots(a1, {z1, z2, z3, z4});
    // every root lies in [-2, 2], so the global minimum does too
    const double mn = poly_minimum(alpha, -2.5, 2.5);
    alpha.c[0] += omega - mn;
    Poly beta = Poly::from_roots(b1, {z5, z6});
    return ScalarCost::shifted(alpha, beta, Poly::constant(0.0));
}

}  // namespace danalab
