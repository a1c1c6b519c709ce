#pragma once

#include <optional>
#include <vector>

#include "danalab/graph.hpp"
#include "danalab/network.hpp"
#include "danalab/problems.hpp"

namespace danalab {

struct DanaConfig {
    int q = 2;
    double alpha = 1.0;   // DANA-D primal step
    double h = 1e-3;      // Euler step for the continuous variants
    long max_iters = 1000000;
    double tol = 1e-10;   // on ||z+ - z||_inf
    long record_every = 1;
};

// A_q v = sum_{p=0}^q (I - L H L)^p v, with H = diag(h).
Vec q_approx_apply(const Mat& L, const Vec& h, const Vec& v, int q);
// Same product assembled from 2-hop exchanges.
Vec q_approx_apply(SyncNetwork& net, const Vec& h, const Vec& v, int q);
// Dense A_q, for Lyapunov reporting on small n.
Mat q_approx_matrix(const Mat& L, const Vec& h, int q);

// Largest admissible step for asymptotic convergence.
double step_size_bound(int n, double eps, int q);
// Step size under which the linear rate is guaranteed.
double linear_rate_alpha(int n, double eps, int q);
// Guaranteed per-step decrease of g for a given ||z - z*||^2.
double linear_rate_decrease(double dist2, int n, double eps, int q);
// True when g_after - g_before <= -decrease (+ slack).
bool linear_rate_certificate(double g_before, double g_after, const Vec& z, const Vec& zstar,
                             int n, double eps, int q, double slack = 0.0);

// z* with the same sum as z0, from the primal optimum x*.
Vec z_from_x(const Laplacian& L, const Vec& x0, const Vec& xstar, const Vec& z0);

struct DanaDState {
    Vec z;
    Vec x;  // x0 + L z, updated alongside z
};

DanaDState dana_d_step(const DanaDState& s, const SeparableCost& costs, SyncNetwork& net,
                       double alpha, int q);

struct SeriesRow {
    long iter;
    double t;
    double f;
    double grad_norm;
    double feas_residual;
    double err;  // ||x - x*||, NaN when no reference is given
    double vq;   // NaN when not computed
};

struct DanaResult {
    Vec x, z;
    Vec lam_lower, lam_upper;  // DANA-C only
    long iters = 0;
    bool converged = false;
    std::vector<SeriesRow> series;
    long comm_rounds = 0;
};

DanaResult dana_d_run(const SeparableCost& costs, const Graph& g, const Mat& L, const Vec& x0,
                      double d, const DanaConfig& cfg, const Vec* xstar = nullptr);

struct DanaCState {
    Vec z;
    Vec lam_lower, lam_upper;
};

// One Euler step of z' = -A_q grad_z Lagrangian, lam' = [P(z)]^+.
// Requires a box; the multipliers are clamped at zero after the update.
DanaCState dana_c_step(const DanaCState& s, const AllocationProblem& prob, const Mat& L,
                       const Vec& x0, int q, double h);

// V_Q = 1/2 ||A_q^{-1/2}(z - z*)||^2 + 1/2 ||lam - lam*||^2.
class LyapunovVQ {
public:
    LyapunovVQ(const Mat& L, const Vec& hess, int q, Vec zstar, Vec lam_lower, Vec lam_upper);
    double operator()(const DanaCState& s) const;

private:
    Mat Ainv_half_;
    Vec zstar_, ll_, lu_;
};

DanaResult dana_c_run(const AllocationProblem& prob, const Mat& L, const Vec& x0,
                      const DanaCState& init, double horizon, const DanaConfig& cfg,
                      const AllocationSolution* ref = nullptr);

// Robust variant: x and z are both free, tied by x + L z = dbar through a
// multiplier nu with an augmented penalty rho.
struct RobustState {
    Vec x, z, nu;
};

struct RobustConfig {
    int q = 2;
    double h = 1e-2;
    double rho = 1.0;
};

RobustState robust_dana_step(const RobustState& s, const SeparableCost& costs, const Mat& L,
                             const Vec& dbar, const RobustConfig& cfg);

struct RobustResult {
    RobustState final;
    std::vector<SeriesRow> series;  // feas_residual = |1'x - d|
};

// Runs to `horizon`, adding N(0, noise^2) to every x_i at each perturbation time.
RobustResult robust_dana_run(const SeparableCost& costs, const Mat& L, const Vec& dbar,
                             const Vec& x_init, const RobustConfig& cfg, double horizon,
                             const std::vector<double>& perturb_times, double noise, Rng& rng,
                             long record_every = 10, const Vec* xstar = nullptr);

}  // namespace danalab
