#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "danalab/graph.hpp"
#include "danalab/rng.hpp"

namespace danalab {

// g(u) = 1 / (1 + exp(-u / T)) and its inverse on (0, 1).
double logistic(double u, double T);
double logistic_inverse(double x, double T);
// Integral of g^{-1} from 0 to z; zero at the corners.
double logistic_integral(double z, double T);

// min over x in {0,1}^n of sum_i f_i(x_i) + gamma/2 (p'x - P_r)^2 with
// f_i(x) = a_i/2 (x - b_i)^2 - a_i b_i^2 / 2 + d_i and f_i(1) - f_i(0) = c_i.
struct BinaryProblem {
    Vec c, p, a, b, d;
    double P_r = 0.0;
    double gamma = 1.0;
    Graph graph;  // used by binpad only

    int n() const { return static_cast<int>(c.size()); }
    // Throws std::invalid_argument on size mismatch, gamma <= 0 or a broken a/b identity.
    void validate() const;

    Mat W() const;  // -diag(a) - gamma p p'
    Vec v() const;  // a.*b + gamma P_r p
    double cost(const Vec& x) const;

    // Sufficient condition for annealing to end at a corner: a_i < -gamma ||p||^2.
    bool corner_condition() const;

    static BinaryProblem from_increments(Vec c, Vec p, double P_r, double gamma, Vec a,
                                         Graph graph = Graph());
    static BinaryProblem two_unit_example();
    // p ~ U[1,50], c = p^e with e ~ U[2,3], a_i = -gamma ||p||^2 - 4 T0/tau0 - 1.
    static BinaryProblem random(int n, int m, double P_r, double gamma, double T0, double tau0,
                                std::uint64_t seed);
};

double energy(const Vec& x, const BinaryProblem& prob, double T, double tau);
// PT-Newton flow of E.
Vec binpac_rhs(const Vec& x, const BinaryProblem& prob, double T, double tau, double m);
// D^{1/2} |H|_m^{-1} D^{1/2} variant with D = diag((x - x^2)/T). Same equilibria,
// and always a descent direction of E, which the product form above is not once
// D and |H|_m stop commuting.
Vec binpac_sym_rhs(const Vec& x, const BinaryProblem& prob, double T, double tau, double m);
// Plain Hopfield flow (no curvature weighting).
Vec hnn_rhs(const Vec& x, const BinaryProblem& prob, double T, double tau);
// One explicit Euler step; the result is clamped to [1e-12, 1 - 1e-12].
Vec binpac_step(const Vec& x, const BinaryProblem& prob, double T, double tau, double m, double h);

// y* = -L^+ (p_i x_i) + (kappa / n) 1.
Vec y_star(const Vec& x, const BinaryProblem& prob, const Laplacian& L, double kappa);

// penalty_scale multiplies gamma in the distributed penalty (1 keeps the
// energy exactly as stated, n makes its reduced form match the P1 penalty).
double energy_tilde(const Vec& x, const Vec& y, const BinaryProblem& prob, const Mat& L, double T,
                    double tau, double penalty_scale = 1.0);
struct BinpadRhs {
    Vec dx, dy;
};
BinpadRhs binpad_rhs(const Vec& x, const Vec& y, const BinaryProblem& prob, const Mat& L,
                     double T, double tau, double m, const Vec& alpha,
                     double penalty_scale = 1.0);
std::pair<Vec, Vec> binpad_step(const Vec& x, const Vec& y, const BinaryProblem& prob,
                                const Mat& L, double T, double tau, double m, const Vec& alpha,
                                double h, double penalty_scale = 1.0);

enum class NnnMode { Binpac, Binpad, Hnn };
std::string to_string(NnnMode m);
NnnMode nnn_mode_from_string(const std::string& s);

struct AnnealSchedule {
    bool anneal = true;
    double beta = 1.4;
    double T0 = 1.0;
    double tau0 = 0.1;
    double t_d = 1000.0;   // continuous time per window (upper bound)
    int steps = 10;        // learning steps (windows)
    bool scale_tau = true; // tau <- beta tau, otherwise T <- T / beta
    double m = 0.1;
    double alpha = 1.0;
    double h0 = 1e-3;
    double h_max = 1000.0;
    int max_halvings = 20;
    long max_steps_per_window = 20000;
    double stop_tol = 1e-8;     // window ends when ||xdot||_inf drops below
    double fixed_horizon = 100.0;  // continuous time when not annealing
    bool consistent_penalty = false;
    double init_radius = 0.01;
    double jitter = 0.01;
};

struct NnnTelemetry {
    long accepted = 0;
    long rejected = 0;
    long clamp_events = 0;
    long fallbacks = 0;          // binpac steps that used the symmetric direction
    bool energy_monotone = true;
    double min_margin = 0.5;      // min_i min(x_i, 1 - x_i) over the run
    double max_sum_drift = 0.0;   // per-step |1'y+ - 1'y| / max(1, ||y||_inf)
};

struct TrajPoint {
    int window;
    double t;
    double T, tau;
    Vec x;
    double energy;
};

struct NnnResult {
    Vec x;       // final iterate before rounding
    Vec corner;  // nearest binary point
    double cost = 0.0;
    NnnTelemetry tel;
    std::vector<TrajPoint> traj;
};

NnnResult anneal_run(const BinaryProblem& prob, const AnnealSchedule& sched, NnnMode mode,
                     Rng& rng, bool record_traj = false);

Vec greedy(const BinaryProblem& prob);
// Exhaustive search, n <= 24.
std::pair<Vec, double> brute_force(const BinaryProblem& prob);

// costs[trial][method]; best gets k-1 points and ties share the average.
// Returns per-method Q normalized by (k-1) * trials.
std::vector<double> quality_metric(const std::vector<std::vector<double>>& costs);

}  // namespace danalab
