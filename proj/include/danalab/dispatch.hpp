#pragma once

#include <string>
#include <vector>

#include "danalab/graph.hpp"
#include "danalab/problems.hpp"
#include "danalab/rng.hpp"

namespace danalab {

enum class DeviceKind { AHU, V1G, V2G, BESS };
enum class Quantization { Continuous, Integer, Binary };

std::string to_string(DeviceKind k);
DeviceKind device_kind_from_string(const std::string& s);
std::string to_string(Quantization q);
Quantization quantization_from_string(const std::string& s);

// One device class. Bounds are per unit and measured from the baseline, so a
// setpoint of 0 means "run at baseline".
struct DeviceSpec {
    DeviceKind kind = DeviceKind::BESS;
    int count = 1;
    int nodes = 1;              // computing nodes hosting this class
    double p_lo = -1.0, p_hi = 1.0;
    double baseline = 0.0;      // absolute kW per unit
    int update_period = 1;      // seconds between new setpoints
    std::vector<int> phases{0}; // update offsets, assigned to units round-robin
    int response_delay = 0;     // pure transport delay, seconds
    double settle_tau = 0.0;    // first-order time constant, seconds
    Quantization quant = Quantization::Continuous;
    double cost_k = 1.0;        // a_i = cost_k / (p_hi - p_lo), before jitter

    void validate() const;
    nlohmann::json to_json() const;
    static DeviceSpec from_json(const nlohmann::json& j);
};

// Reference fleet: AHU, V1G, V2G and BESS classes.
std::vector<DeviceSpec> reference_device_mix();
std::vector<DeviceSpec> devices_from_json(const nlohmann::json& j);

// Units of several classes with their costs. Each class is spread over its
// computing nodes; the nodes, in class order, talk over a ring and are the
// agents of the distributed solvers.
struct Fleet {
    std::vector<DeviceSpec> specs;
    std::vector<int> cls;       // class index per unit
    std::vector<int> phase;     // update offset per unit
    std::vector<int> node;      // computing node per unit
    Vec lo, hi, a;
    int nodes = 0;
    Graph graph;                // over computing nodes

    int n() const { return static_cast<int>(cls.size()); }
    double capacity() const { return (hi - lo).sum(); }
    SeparableCost costs() const;
    std::vector<int> units_of_node(int k) const;

    // jitter: relative half-width of the uniform perturbation on a_i.
    static Fleet build(const std::vector<DeviceSpec>& specs, Rng& rng, double jitter = 0.1);
    // Units of the listed classes, keeping their costs and update phases.
    Fleet subset(const std::vector<int>& classes) const;
};

// Cost of one computing node as a function of its total output P: the units
// share P at a common marginal cost, each clipped to its box.
class NodeCost {
public:
    NodeCost(Vec a, Vec lo, Vec hi);
    double lo_sum() const { return lo_.sum(); }
    double hi_sum() const { return hi_.sum(); }
    // common marginal cost mu with sum_i clamp(mu / a_i) = P. Outside the box
    // the cost continues as a quadratic of curvature min_curvature().
    double marginal(double P) const;
    // unit setpoints for P clamped to the box
    Vec split(double P) const;
    // second derivative: 1 / sum over unsaturated units of 1/a_i
    double curvature(double P) const;
    // curvature range over the box
    double min_curvature() const;
    double max_curvature() const;

private:
    double total(double mu) const;
    Vec a_, lo_, hi_;
    std::vector<double> breaks_;
};

// Sum of band-limited sinusoids plus smoothed noise, zero mean, inside [-1, 1].
std::vector<double> synthetic_regd(int ticks, Rng& rng);
// One value per line, or the last column of a CSV with an optional header.
std::vector<double> load_signal_csv(const std::string& path);

// P_ref = beta * sum(cap) / ||s||_inf * s with s = regd + pv - pb.
std::vector<double> normalize_signal(const std::vector<double>& regd,
                                     const std::vector<double>& pv,
                                     const std::vector<double>& pb, const Vec& capacities,
                                     double beta);

// Proportional share p_i = lo_i + (P - sum lo) / sum(hi - lo) * (hi_i - lo_i).
Vec ratio_consensus_closed_form(const Vec& lo, const Vec& hi, double P);

struct RcResult {
    Vec p;
    long rounds = 0;
    bool converged = false;
};

// Push-sum on y and z with weights 1/(deg+1) including the self-loop; stops
// when max_i y_i/z_i - min_i y_i/z_i <= tol.
RcResult ratio_consensus(const Graph& g, const Vec& lo, const Vec& hi, double P,
                         const std::vector<int>& informed, long max_rounds = 100000,
                         double tol = 1e-12);

// Euler step of the augmented primal-dual flow for sum a_i/2 p_i^2 + b_i p_i
// with p + L y = P/n, followed by projection of p onto the box.
struct PdState {
    Vec p, y, lambda;
};
PdState primal_dual_step(const PdState& s, const Vec& a, const Vec& b, const Vec& lo,
                         const Vec& hi, double P, const Mat& L, double h);
// Same flow with the cost gradient evaluated at s.p by the caller.
PdState primal_dual_step(const PdState& s, const Vec& grad, const Vec& lo, const Vec& hi,
                         double P, const Mat& L, double h);

enum class TickMethod { RC, PD, DANA };
std::string to_string(TickMethod m);
TickMethod tick_method_from_string(const std::string& s);

struct TickSolverConfig {
    int pd_iters = 3000;
    double pd_h = 0.0;     // 0 picks a step from the spectrum
    int dana_iters = 800;
    double dana_h = 0.0;   // 0 picks a step from the spectrum
    int q = 2;
    // a tick that has not settled after one block of iterations gets up to
    // this many blocks in total
    int max_blocks = 4;
    // node costs are rescaled so the largest full-node curvature equals this;
    // the minimizer is unchanged
    double curvature = 5.0;
    long rc_max_rounds = 100000;
    double rc_tol = 1e-12;
    int informed = 0;      // agent that receives P_ref
};

// Per-tick allocation with warm starts between calls. The iterative methods
// run on node totals; each node then splits its total exactly among its units.
class TickSolver {
public:
    TickSolver(const Fleet& fleet, const TickSolverConfig& cfg);

    // P is clamped to [sum lo, sum hi]; `clamped` reports whether that happened.
    Vec solve(TickMethod m, double P, bool* clamped = nullptr, bool* converged = nullptr);
    // Exact answer for the same tick from the unit-level problem: closed form
    // for RC, KKT bisection otherwise.
    Vec oracle(TickMethod m, double P) const;
    double clamp(double P) const;

    const Mat& L() const { return L_; }
    double pd_step() const { return pd_h_; }
    double dana_step() const { return dana_h_; }

private:
    Vec expand(const Vec& totals) const;
    Vec node_grad(const Vec& P) const;
    Vec node_hess(const Vec& P) const;

    const Fleet* fleet_;
    TickSolverConfig cfg_;
    SeparableCost costs_;
    std::vector<NodeCost> nodes_;
    std::vector<std::vector<int>> members_;
    Vec Lo_, Hi_;
    Mat L_, Ld_;  // plain and post-scaled Laplacian over nodes
    double pd_h_ = 0.0, dana_h_ = 0.0, scale_ = 1.0;
    PdState pd_;
    Vec x_, lam_lo_, lam_hi_;
    bool started_ = false;
    double last_P_ = 0.0;
};

// Measured aggregate of one class from per-unit setpoints cmds[t][unit]:
// quantization, transport delay, then first-order settling. Causal.
std::vector<double> device_response(const std::vector<Vec>& cmds, const DeviceSpec& spec);
// Single-unit form.
std::vector<double> device_response(const std::vector<double>& setpoints,
                                    const DeviceSpec& spec);
// Nearest aggregate reachable by `count` on/off units of the given per-unit range.
double binary_group_round(double total, int count, double p_lo, double p_hi);
double integer_round(double dev, double baseline, double p_lo, double p_hi);

struct TrackingReport {
    double rmse = 0.0;   // relative, no shift
    int delay = 0;       // seconds, argmin of the shifted RMSE
    double S_c = 0.0, S_d = 0.0, S_p = 0.0, S = 0.0;
    double S_p_abs = 0.0;  // precision with mean |target| in the denominator
};

double relative_rmse(const std::vector<double>& prov, const std::vector<double>& tar);
// Shift s in [0, max_shift] minimizing the RMSE of prov[t + s] against tar[t].
int optimal_shift(const std::vector<double>& prov, const std::vector<double>& tar,
                  int max_shift);
// Throws std::invalid_argument on length mismatch, fewer than 2 samples or a
// constant target.
TrackingReport tracking_metrics(const std::vector<double>& prov,
                                const std::vector<double>& tar, int max_shift = 300);

// Outliers (a jump above outlier_frac * |mean| from the last kept value) are
// replaced by that value, then a centered moving average of `window` samples.
std::vector<double> preprocess_measurement(const std::vector<double>& stream, int window = 4,
                                           double outlier_frac = 0.5);

struct DispatchConfig {
    int ticks = 2401;
    double beta = 0.75;
    // run in equal consecutive segments, one method each
    std::vector<TickMethod> methods{TickMethod::RC, TickMethod::PD, TickMethod::DANA};
    bool two_stage = false;
    std::vector<DeviceKind> stage1{DeviceKind::AHU};
    TickSolverConfig solver;
    int max_shift = 300;
    bool check_oracle = true;
    double cost_jitter = 0.1;
};

struct DispatchRow {
    int t;
    TickMethod method;
    double target;
    double commanded;
    double measured;
    std::vector<double> commanded_cls, measured_cls;
    bool clamped;
};

struct SolverError {
    double err2 = 0.0, ref2 = 0.0;
    double nmse() const { return ref2 > 0 ? err2 / ref2 : (err2 > 0 ? 1.0 : 0.0); }
};

struct DispatchResult {
    std::vector<DispatchRow> rows;
    TrackingReport total;
    std::vector<double> class_rmse;  // measured class output vs its own command
    // nmse[method][class]; the last column is the total
    std::vector<std::vector<SolverError>> nmse;
    long clamp_events = 0;
    long nonconverged_ticks = 0;
};

DispatchResult run_dispatch(const std::vector<DeviceSpec>& specs,
                            const std::vector<double>& target, const DispatchConfig& cfg,
                            std::uint64_t seed);

}  // namespace danalab
