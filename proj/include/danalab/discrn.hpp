#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "danalab/graph.hpp"
#include "danalab/problems.hpp"

namespace danalab {

// Q^T |Lambda|_m^{-1} Q: eigenvalue magnitudes floored at m, then inverted.
Mat pt_inverse(const Mat& A, double m);

// Nested problem with a scalar outer variable. Agent i holds a local copy x_i
// and an inner share p_i of cost alpha_i(x)/2 p^2 + beta_i(x) p + gamma_i(x).
// Realizations chi_i ~ U[chi_lo_i, chi_hi_i] (a point mass when equal).
struct NestedProblem {
    std::vector<ScalarCost> costs;
    double P_ref = 0.0;
    Vec chi_lo, chi_hi;
    Graph graph;

    int n() const { return static_cast<int>(costs.size()); }
    void validate() const;
    Vec sample_chi(Rng& rng) const;

    // Two EV drivers with PV generation; sunny is deterministic.
    static NestedProblem ev_example(bool cloudy);
    // Quartic/quadratic synthetic instance on a random connected graph.
    static NestedProblem synthetic(int n, int m, double P_ref, double lo, double hi,
                                   std::uint64_t seed);
};

// grad_p f(x, p) per agent.
Vec inner_gradient(const NestedProblem& prob, const Vec& x, const Vec& p);
// Exact inner optimum for local copies x and realization chi.
Vec inner_solution(const NestedProblem& prob, const Vec& x, const Vec& chi);
// (min_i alpha_i(x_i), max_i alpha_i(x_i)).
std::pair<double, double> curvature_range(const NestedProblem& prob, const Vec& x);

Vec inner_flow_step(const Vec& p, const Vec& x, const NestedProblem& prob, const Mat& L,
                    double eta);
bool inner_stop_check(const Vec& p, const Vec& p_next, double Delta, double eta, double lambda2,
                      double omega, int n);

struct EtaBounds {
    double eta_asym = 0.0;  // 2 / (theta lambda_n)
    double eta_rate = 0.0;  // 2 omega lambda_2 / (theta^2 lambda_n^2)
    double eta_cert = 0.0;  // omega lambda_2 / (theta^2 lambda_n^2)
    double rate = 0.0;      // contraction factor at eta_cert
    // Rounds needed at eta_cert to get from dist0 to Delta.
    double rounds(double Delta, double dist0) const;
};
EtaBounds eta_bounds(double omega, double theta, double lambda2, double lambda_n);

struct InnerResult {
    Vec p;
    long rounds = 0;
    bool stopped = false;
};
// Laplacian flow from the standard feasible start (agent 0 carries P_ref).
InnerResult inner_solve(const NestedProblem& prob, const Vec& x, const Vec& chi, const Mat& L,
                        double eta, double Delta, double lambda2, double omega, long max_rounds);

enum class SubmodelKind { Cubic, Gradient, Newton };
std::string to_string(SubmodelKind k);
SubmodelKind submodel_kind_from_string(const std::string& s);

struct Submodel {
    SubmodelKind kind = SubmodelKind::Cubic;
    Vec anchor, g, H;
    double reg = 0.0;  // rho for cubic, eta_g or eta_H otherwise
    double base = 0.0;

    double value(const Vec& x) const;
    Vec grad(const Vec& x) const;
};

double empirical_batch_value(const NestedProblem& prob, const Vec& x,
                             const std::vector<Vec>& ptilde);
// Throws std::invalid_argument on an empty batch.
Submodel build_submodel(const NestedProblem& prob, const Vec& xk, const std::vector<Vec>& ptilde,
                        SubmodelKind kind, double reg);

struct DgdResult {
    Vec x;
    long rounds = 0;
    std::vector<double> values;  // submodel value per round when monitored
};
// x <- W x - (alpha0 / t) grad m(x), W = I - L / lambda_n.
DgdResult dgd_subsolver(const Submodel& m, const Mat& L, double lambda_n, double alpha0,
                        long rounds, double tol, bool monitor = false);
// Inverse of the largest local curvature the submodel is expected to show.
double default_alpha0(const Submodel& m);

double disagreement(const Vec& x);
bool subsolver_condition_check(const Vec& xk, const Vec& xk1, const Submodel& m, double c,
                               double eps, double rho, double consensus_tol);

// Theorem batch size with the O(.) constant taken as 1.
double batch_size_bound(double M1, double sigma1, double M2, double sigma2, double cbar,
                        double eps, double rho, double zeta);

// Mean of sum_i f_i(x_i, p*_i) over the given realizations.
double empirical_F(const NestedProblem& prob, const Vec& x, const std::vector<Vec>& chis);

// First k with F_k - F_plat <= frac (F_0 - F_plat), where F_plat is the mean of
// the last tail fraction of the series.
long iterations_to_plateau(const std::vector<double>& F, double tail = 0.1, double frac = 0.05);

struct DiscrnConfig {
    SubmodelKind method = SubmodelKind::Cubic;
    int S = 20;
    double Delta = 0.1;
    double rho = 50.0;
    double eta_g = 100.0;
    double eta_H = 50.0;
    int outer_iters = 60;
    double x0 = 0.5;
    long dgd_rounds = 10000;
    double dgd_tol = 1e-10;
    double alpha0 = 0.0;    // 0 selects default_alpha0
    bool certified_eta = false;  // inner step eta_cert instead of 1/(theta lambda_n)
    long max_inner_rounds = 2000000;
    int eval_realizations = 500;
    // DGD with a 1/t step leaves an O(1/t) disagreement, about 1e-4 after 10^4 rounds
    double cond_c = 1e-3, cond_eps = 1e-2, consensus_tol = 1e-3;
};

struct DiscrnRow {
    int outer;
    double empirical_F;
    double disagreement;
    bool accepted;
    long inner_rounds_total;
};

struct DiscrnResult {
    std::vector<DiscrnRow> rows;
    Vec x;
    bool converged = true;
    long plateau_iter = -1;
};

DiscrnResult discrn_run(const NestedProblem& prob, const DiscrnConfig& cfg, std::uint64_t seed);

}  // namespace danalab
