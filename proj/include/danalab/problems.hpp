#pragma once

#include <optional>
#include <string>
#include <vector>

#include "danalab/graph.hpp"
#include "danalab/rng.hpp"

namespace danalab {

// Polynomial with coefficients c[k] of x^k.
struct Poly {
    std::vector<double> c;

    double operator()(double x) const;
    Poly derivative() const;
    static Poly from_roots(double lead, const std::vector<double>& roots);
    static Poly constant(double v) { return Poly{{v}}; }
};

enum class CostKind { Quadratic, SinusoidalQuadratic, ShiftedQuadratic, BinaryQuadratic };

std::string to_string(CostKind k);
CostKind cost_kind_from_string(const std::string& s);

// One agent's cost.
//   Quadratic:            a/2 x^2 + b x
//   SinusoidalQuadratic:  a/2 x^2 + b x + c sin(x + theta)
//   BinaryQuadratic:      a/2 (x - b)^2 - a b^2 / 2 + d, so f(1) - f(0) = c
//   ShiftedQuadratic:     alpha(x)/2 p^2 + beta(x) p + gamma(x), with x the
//                         outer variable and p the inner one
struct ScalarCost {
    CostKind kind = CostKind::Quadratic;
    double a = 1.0, b = 0.0, c = 0.0, theta = 0.0, d = 0.0;
    Poly alpha, beta, gamma;

    static ScalarCost quadratic(double a, double b = 0.0);
    static ScalarCost sinusoidal(double a, double b, double c, double theta);
    static ScalarCost binary(double a, double b, double d = 0.0);
    // binary cost from its increment c = f(1) - f(0) and curvature a
    static ScalarCost binary_from_increment(double a, double c, double d = 0.0);
    static ScalarCost shifted(Poly alpha, Poly beta, Poly gamma = Poly::constant(0.0));

    double eval(double x) const;
    double grad(double x) const;
    double hess(double x) const;
    double increment() const;  // f(1) - f(0) for binary costs

    // ShiftedQuadratic only: value and partial derivatives at (x, p).
    double eval(double x, double p) const;
    double grad_p(double x, double p) const;
    double hess_p(double x) const;
    double grad_x(double x, double p) const;
    double hess_x(double x, double p) const;

    nlohmann::json to_json() const;
    static ScalarCost from_json(const nlohmann::json& j);
};

struct SeparableCost {
    std::vector<ScalarCost> terms;

    int n() const { return static_cast<int>(terms.size()); }
    double value(const Vec& x) const;
    Vec grad(const Vec& x) const;
    Vec hess(const Vec& x) const;  // diagonal
};

struct HessianBounds {
    Vec delta;
    Vec Delta;
    // scalar fallback when only network-wide bounds are known
    HessianBounds global() const;
};

// Tightest analytic bounds; throws std::invalid_argument for kinds without a
// global bound.
HessianBounds hessian_bounds(const SeparableCost& costs);

struct AllocationProblem {
    SeparableCost costs;
    double d = 0.0;
    std::optional<Vec> lower, upper;
    Graph graph;

    int n() const { return costs.n(); }
    bool has_box() const { return lower.has_value(); }
    // Throws std::invalid_argument when the data are inconsistent.
    void validate() const;

    nlohmann::json to_json() const;
    static AllocationProblem from_json(const nlohmann::json& j);
};

enum class InitMode { Uniform, SingleAgent };

// Initial point with sum equal to d plus the sum of the offsets.
Vec feasible_initializer(const AllocationProblem& prob, InitMode mode,
                         const Vec* offsets = nullptr);

// Exact optimum of a separable allocation with monotone marginal costs, by
// bisection on the common marginal cost nu. Multipliers follow the sign
// convention grad f(x) - lam_lower + lam_upper = nu 1.
struct AllocationSolution {
    Vec x;
    double nu = 0.0;
    Vec lam_lower, lam_upper;
};
AllocationSolution solve_allocation(const AllocationProblem& prob);
AllocationSolution solve_allocation(const SeparableCost& costs, double d,
                                    const std::optional<Vec>& lower,
                                    const std::optional<Vec>& upper);

// Quadratic box allocation solved by enumerating every active set; n <= 12.
std::optional<AllocationSolution> solve_box_qp_active_set(const Vec& a, const Vec& b,
                                                          const Vec& lower, const Vec& upper,
                                                          double d);

// Problem generators used by the presets.
SeparableCost random_sinusoidal_costs(int n, Rng& rng);
// Quartic alpha with min_x alpha = omega and quadratic beta for nested problems.
ScalarCost random_nested_cost(Rng& rng);
// min over the real line of a polynomial that grows at both ends, searched on
// [lo, hi] with a grid and refined by Newton steps.
double poly_minimum(const Poly& p, double lo, double hi, double* argmin = nullptr);

}  // namespace danalab
