#include "danalab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "danalab/binary_nnn.hpp"
#include "danalab/dana.hpp"
#include "danalab/discrn.hpp"
#include "danalab/dispatch.hpp"
#include "danalab/weight_design.hpp"

namespace danalab {

using nlohmann::json;

namespace {

const std::vector<std::pair<Scenario, std::string>> kNames = {
    {Scenario::DanaDiscrete, "dana_discrete"},     {Scenario::DanaContinuous, "dana_continuous"},
    {Scenario::DanaRobust, "dana_robust"},         {Scenario::Discrn, "discrn"},
    {Scenario::NnnQuality, "nnn_quality"},         {Scenario::NnnTraj2d, "nnn_traj2d"},
    {Scenario::DispatchFullday, "dispatch_fullday"},
};

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

class Csv {
public:
    explicit Csv(const std::vector<std::string>& header) { line(header); }
    Csv& operator<<(const std::string& s) {
        cells_.push_back(s);
        return *this;
    }
    Csv& operator<<(const char* s) { return *this << std::string(s); }
    Csv& operator<<(double v) { return *this << num(v); }
    Csv& operator<<(long v) { return *this << std::to_string(v); }
    Csv& operator<<(int v) { return *this << std::to_string(v); }
    void end() {
        line(cells_);
        cells_.clear();
    }
    std::string str() const { return out_.str(); }

private:
    void line(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }
    std::ostringstream out_;
    std::vector<std::string> cells_;
};

// JSON has no NaN; keep the field and write null.
json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json vec_json(const Vec& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(jnum(v(i)));
    return a;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <class T>
std::vector<T> list(const json& p, const char* key) {
    return p.at(key).get<std::vector<T>>();
}

// --- DANA-D q sweep ---------------------------------------------------------

void run_dana_discrete(const json& p, std::uint64_t seed, RunResult& out) {
    const int n = p.at("n"), m = p.at("m");
    const double d = p.at("d");
    if (n < 2) throw ConfigError("dana_discrete needs n >= 2");
    const Graph g = random_connected_graph(n, m, seed);
    Rng rng(seed, "costs");
    const SeparableCost costs = random_sinusoidal_costs(n, rng);
    const HessianBounds hb = hessian_bounds(costs);
    const PostScale ps = post_scale_beta(laplacian_matrix(g), hb);
    const EpsilonReport eps = epsilon_metric(ps.L, hb, projection_T(n));
    const AllocationSolution sol = solve_allocation(costs, d, std::nullopt, std::nullopt);
    const double fstar = costs.value(sol.x);
    const double f_tol = p.at("f_tol");

    Vec x0 = Vec::Constant(n, d / n);
    if (p.at("init") == "single") {
        x0.setZero();
        x0(0) = d;
    } else if (p.at("init") != "uniform") {
        throw ConfigError("init must be uniform or single");
    }

    Csv csv({"q", "iter", "f", "grad_norm", "feas_residual", "err"});
    json runs = json::array();
    for (int q : list<int>(p, "qs")) {
        DanaConfig c;
        c.q = q;
        c.alpha = p.at("alpha").is_string() ? linear_rate_alpha(n, eps.epsilon, q)
                                            : p.at("alpha").get<double>();
        c.max_iters = p.at("max_iters");
        c.tol = p.at("step_tol");
        c.record_every = p.at("record_every");
        const auto t0 = std::chrono::steady_clock::now();
        const DanaResult r = dana_d_run(costs, g, ps.L, x0, d, c, &sol.x);
        const double secs = seconds_since(t0);
        long hit = -1;
        for (const auto& row : r.series) {
            if (hit < 0 && row.f - fstar <= f_tol) hit = row.iter;
            csv << q << row.iter << row.f << row.grad_norm << row.feas_residual << row.err;
            csv.end();
        }
        const double gap = r.series.back().f - fstar;
        out.converged = out.converged && hit >= 0;
        out.table.push_back({"q=" + std::to_string(q), hit, r.series.back().f, secs});
        runs.push_back({{"q", q},
                        {"alpha", c.alpha},
                        {"iterations_to_tol", hit},
                        {"final_gap", jnum(gap)},
                        {"iters", r.iters},
                        {"comm_rounds", r.comm_rounds}});
    }
    out.series_csv = csv.str();
    out.summary = {{"f_star", fstar},
                   {"epsilon", eps.epsilon},
                   {"beta", ps.beta},
                   {"f_tol", f_tol},
                   {"runs", runs}};
}

// --- DANA-C ---------------------------------------------------------------

struct BoxInstance {
    AllocationProblem prob;
    Vec x0;
    DanaCState init;
};

BoxInstance box_instance(const json& p, std::uint64_t seed) {
    BoxInstance b;
    const std::string kind = p.at("instance");
    if (kind == "three_node") {
        for (double a : {0.5, 1.5, 4.0}) b.prob.costs.terms.push_back(ScalarCost::quadratic(a, 0.5));
        b.prob.d = 6.0;
        b.prob.lower = Vec{{0.2, 2.5, 1.5}};
        b.prob.upper = Vec{{1.0, 6.0, 4.0}};
        b.prob.graph = Graph::path(3);
        b.x0 = Vec{{5.0, -1.0, 2.0}};
        b.init = {Vec::Zero(3), Vec{{1.5, 0.5, 0.0}}, Vec{{0.0, 2.0, 1.0}}};
    } else if (kind == "random") {
        const int n = p.at("n");
        Rng rng(seed, "costs");
        Vec lo(n), hi(n);
        for (int i = 0; i < n; ++i) {
            const double a = rng.uniform(0.5, 3.0);
            const double bb = rng.uniform(-2.0, 2.0);
            b.prob.costs.terms.push_back(ScalarCost::quadratic(a, bb));
            lo(i) = rng.uniform(1.5, 3.0);
            hi(i) = rng.uniform(3.0, 4.5);
        }
        b.prob.d = p.at("d");
        b.prob.lower = lo;
        b.prob.upper = hi;
        b.prob.graph = random_connected_graph(n, p.at("m"), seed);
        b.x0 = Vec::Constant(n, b.prob.d / n);
        b.init = {Vec::Zero(n), Vec::Zero(n), Vec::Zero(n)};
    } else {
        throw ConfigError("instance must be three_node or random");
    }
    b.prob.validate();
    return b;
}

void run_dana_continuous(const json& p, std::uint64_t seed, RunResult& out) {
    const BoxInstance b = box_instance(p, seed);
    const AllocationProblem& prob = b.prob;
    const Mat L = post_scale_beta(laplacian_matrix(prob.graph), hessian_bounds(prob.costs)).L;
    const AllocationSolution ref = solve_allocation(prob);
    const double tol = p.at("tol");

    Csv csv({"q", "t", "f", "grad_norm", "feas_residual", "err", "VQ"});
    json runs = json::array();
    for (int q : list<int>(p, "qs")) {
        DanaConfig c;
        c.q = q;
        c.h = p.at("h");
        c.record_every = p.at("record_every");
        const auto t0 = std::chrono::steady_clock::now();
        const DanaResult r = dana_c_run(prob, L, b.x0, b.init, p.at("horizon"), c, &ref);
        const double secs = seconds_since(t0);
        long hit = -1;
        for (const auto& row : r.series) {
            if (hit < 0 && row.err <= tol) hit = row.iter;
            csv << q << row.t << row.f << row.grad_norm << row.feas_residual << row.err << row.vq;
            csv.end();
        }
        const double err = (r.x - ref.x).norm();
        const double cs = std::max(
            (r.lam_lower.array() * (*prob.lower - r.x).array()).abs().maxCoeff(),
            (r.lam_upper.array() * (r.x - *prob.upper).array()).abs().maxCoeff());
        out.converged = out.converged && err <= tol;
        out.table.push_back({"q=" + std::to_string(q), hit, prob.costs.value(r.x), secs});
        runs.push_back({{"q", q},
                        {"final_err", jnum(err)},
                        {"cs_residual", jnum(cs)},
                        {"steps_to_tol", hit},
                        {"x", vec_json(r.x)},
                        {"lam_lower", vec_json(r.lam_lower)},
                        {"lam_upper", vec_json(r.lam_upper)}});
    }
    out.series_csv = csv.str();
    out.summary = {{"x_star", vec_json(ref.x)},
                   {"f_star", prob.costs.value(ref.x)},
                   {"lam_lower_star", vec_json(ref.lam_lower)},
                   {"lam_upper_star", vec_json(ref.lam_upper)},
                   {"tol", tol},
                   {"runs", runs}};
}

// --- robust DANA ------------------------------------------------------------

void run_dana_robust(const json& p, std::uint64_t seed, RunResult& out) {
    const int n = p.at("n");
    const double d = p.at("d");
    if (n < 2) throw ConfigError("dana_robust needs n >= 2");
    Rng rng(seed, "costs");
    SeparableCost costs;
    for (int i = 0; i < n; ++i) {
        const double a = rng.uniform(0.5, 3.0);
        costs.terms.push_back(ScalarCost::quadratic(a, rng.uniform(-2.0, 2.0)));
    }
    const Graph g = random_connected_graph(n, p.at("m"), seed);
    const Mat L = post_scale_beta(laplacian_matrix(g), hessian_bounds(costs)).L;
    Rng irng(seed, "init");
    Vec x_init(n);
    for (int i = 0; i < n; ++i) x_init(i) = irng.uniform(1.5, 4.5);
    Vec dbar = Vec::Constant(n, d / n);
    if (p.at("dbar") == "single") {
        dbar.setZero();
        dbar(0) = d;
    } else if (p.at("dbar") != "uniform") {
        throw ConfigError("dbar must be uniform or single");
    }
    const Vec xstar = solve_allocation(costs, d, std::nullopt, std::nullopt).x;
    const auto perturb = list<double>(p, "perturb_times");
    const double last_hit = perturb.empty() ? 0.0 : *std::max_element(perturb.begin(), perturb.end());
    const double viol_tol = p.at("viol_tol");

    Csv csv({"q", "t", "f", "violation", "feas_residual", "err"});
    json runs = json::array();
    for (int q : list<int>(p, "qs")) {
        RobustConfig c;
        c.q = q;
        c.h = p.at("h");
        c.rho = p.at("rho");
        Rng noise(seed, "noise");  // same perturbations for every q
        const auto t0 = std::chrono::steady_clock::now();
        const RobustResult r = robust_dana_run(costs, L, dbar, x_init, c, p.at("horizon"), perturb,
                                               p.at("noise"), noise, p.at("record_every"), &xstar);
        const double secs = seconds_since(t0);
        // first sample after the last perturbation from which the violation stays small
        long settle = -1;
        for (const auto& row : r.series) {
            csv << q << row.t << row.f << row.grad_norm << row.feas_residual << row.err;
            csv.end();
            if (row.t <= last_hit) continue;
            if (row.grad_norm <= viol_tol) {
                if (settle < 0) settle = row.iter;
            } else {
                settle = -1;
            }
        }
        const auto& last = r.series.back();
        out.converged = out.converged && settle >= 0;
        out.table.push_back({"q=" + std::to_string(q), settle, last.f, secs});
        runs.push_back({{"q", q},
                        {"final_violation", jnum(last.grad_norm)},
                        {"final_err", jnum(last.err)},
                        {"settle_step", settle}});
    }
    out.series_csv = csv.str();
    out.summary = {{"f_star", costs.value(xstar)}, {"viol_tol", viol_tol}, {"runs", runs}};
}

// --- DiSCRN -----------------------------------------------------------------

void run_discrn(const json& p, std::uint64_t seed, RunResult& out) {
    const NestedProblem prob = NestedProblem::synthetic(p.at("n"), p.at("m"), p.at("P_ref"),
                                                        p.at("chi_lo"), p.at("chi_hi"), seed);
    Csv csv({"method", "outer_iter", "empirical_F", "disagreement", "accepted",
             "inner_rounds_total"});
    json runs = json::array();
    for (const auto& name : list<std::string>(p, "methods")) {
        DiscrnConfig c;
        try {
            c.method = submodel_kind_from_string(name);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        c.S = p.at("S");
        c.Delta = p.at("Delta");
        c.rho = p.at("rho");
        c.eta_g = p.at("eta_g");
        c.eta_H = p.at("eta_H");
        c.outer_iters = p.at("outer_iters");
        c.x0 = p.at("x0");
        const auto t0 = std::chrono::steady_clock::now();
        const DiscrnResult r = discrn_run(prob, c, seed);
        const double secs = seconds_since(t0);
        long accepted = 0;
        for (const auto& row : r.rows) {
            accepted += row.accepted;
            csv << name << row.outer << row.empirical_F << row.disagreement
                << (row.accepted ? 1 : 0) << row.inner_rounds_total;
            csv.end();
        }
        out.converged = out.converged && r.converged;
        out.table.push_back({name, r.plateau_iter, r.rows.back().empirical_F, secs});
        runs.push_back({{"method", name},
                        {"plateau_iter", r.plateau_iter},
                        {"final_F", r.rows.back().empirical_F},
                        {"x_mean", r.x.mean()},
                        {"accepted_fraction",
                         static_cast<double>(accepted) / static_cast<double>(r.rows.size())}});
    }
    out.series_csv = csv.str();
    out.summary = {{"runs", runs}};
}

// --- binary NNN -------------------------------------------------------------

AnnealSchedule schedule_from(const json& p) {
    AnnealSchedule s;
    s.T0 = p.at("T0");
    s.tau0 = p.at("tau0");
    s.m = p.at("pt_floor");
    s.alpha = p.at("alpha");
    s.steps = p.at("steps");
    s.beta = p.at("beta");
    return s;
}

std::string bits(const Vec& x) {
    std::string s;
    for (int i = 0; i < x.size(); ++i) s += x(i) >= 0.5 ? '1' : '0';
    return s;
}

void run_nnn_quality(const json& p, std::uint64_t seed, RunResult& out) {
    const int n = p.at("n"), trials = p.at("trials");
    const bool brute_ok = n <= p.at("brute_max_n").get<int>();
    std::vector<std::string> methods;
    for (const auto& name : list<std::string>(p, "methods")) {
        static const std::vector<std::string> known = {"binpac", "binpac_da", "binpad", "binpad_da",
                                                       "hnn",    "greedy",    "brute"};
        if (std::find(known.begin(), known.end(), name) == known.end())
            throw ConfigError("unknown nnn method: " + name);
        if (name == "brute" && !brute_ok) continue;
        methods.push_back(name);
    }
    if (methods.empty()) throw ConfigError("no nnn methods to run");
    AnnealSchedule base = schedule_from(p);
    base.consistent_penalty = p.at("consistent_penalty");

    Csv csv({"trial", "method", "cost", "work", "corner"});
    std::vector<std::vector<double>> costs;
    std::vector<double> secs(methods.size(), 0.0), mean(methods.size(), 0.0);
    long greedy_below_brute = 0;
    Rng batch(seed, "batch");
    for (int t = 0; t < trials; ++t) {
        const std::uint64_t inst = batch.next_u64();
        const BinaryProblem prob =
            BinaryProblem::random(n, p.at("m"), p.at("P_r"), p.at("gamma"), base.T0, base.tau0, inst);
        std::vector<double> row;
        double greedy_cost = NAN, brute_cost = NAN;
        for (std::size_t k = 0; k < methods.size(); ++k) {
            const std::string& name = methods[k];
            const auto t0 = std::chrono::steady_clock::now();
            Vec corner;
            long work = 0;
            if (name == "greedy") {
                corner = greedy(prob);
                greedy_cost = prob.cost(corner);
            } else if (name == "brute") {
                corner = brute_force(prob).first;
                brute_cost = prob.cost(corner);
                work = 1L << n;
            } else {
                AnnealSchedule s = base;
                s.anneal = name.ends_with("_da");
                const NnnMode mode = name == "hnn" ? NnnMode::Hnn
                                     : name.starts_with("binpad") ? NnnMode::Binpad
                                                                  : NnnMode::Binpac;
                Rng init(inst, "init");
                const NnnResult r = anneal_run(prob, s, mode, init);
                corner = r.corner;
                work = r.tel.accepted;
            }
            secs[k] += seconds_since(t0);
            const double c = prob.cost(corner);
            mean[k] += c / trials;
            row.push_back(c);
            csv << t << name << c << work << bits(corner);
            csv.end();
        }
        if (!std::isnan(greedy_cost) && !std::isnan(brute_cost) &&
            greedy_cost < brute_cost - 1e-9 * std::max(1.0, std::abs(brute_cost)))
            ++greedy_below_brute;
        costs.push_back(std::move(row));
    }
    const std::vector<double> Q = quality_metric(costs);
    json qj = json::object(), mj = json::object();
    for (std::size_t k = 0; k < methods.size(); ++k) {
        qj[methods[k]] = Q[k];
        mj[methods[k]] = mean[k];
        out.table.push_back({methods[k], -1, mean[k], secs[k]});
    }
    out.series_csv = csv.str();
    out.summary = {{"Q", qj},
                   {"mean_cost", mj},
                   {"brute_included", brute_ok},
                   {"greedy_below_brute", greedy_below_brute}};
    out.converged = greedy_below_brute == 0;
}

void run_nnn_traj2d(const json& p, std::uint64_t seed, RunResult& out) {
    const BinaryProblem prob = BinaryProblem::two_unit_example();
    const auto [best, best_cost] = brute_force(prob);
    AnnealSchedule s = schedule_from(p);
    s.anneal = true;
    const double tol = p.at("tol");
    Csv csv({"mode", "window", "t", "T", "tau", "x1", "x2", "energy"});
    json runs = json::array();
    for (const auto& name : list<std::string>(p, "modes")) {
        NnnMode mode;
        try {
            mode = nnn_mode_from_string(name);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        Rng init(seed, "init");
        const auto t0 = std::chrono::steady_clock::now();
        const NnnResult r = anneal_run(prob, s, mode, init, true);
        const double secs = seconds_since(t0);
        for (const auto& tp : r.traj) {
            csv << name << tp.window << tp.t << tp.T << tp.tau << tp.x(0) << tp.x(1) << tp.energy;
            csv.end();
        }
        const double dist = (r.x - best).lpNorm<Eigen::Infinity>();
        out.converged = out.converged && dist <= tol;
        out.table.push_back({name, static_cast<long>(r.tel.accepted), r.cost, secs});
        runs.push_back({{"mode", name},
                        {"x", vec_json(r.x)},
                        {"corner", vec_json(r.corner)},
                        {"cost", r.cost},
                        {"distance_to_optimum", dist},
                        {"energy_monotone", r.tel.energy_monotone}});
    }
    out.series_csv = csv.str();
    out.summary = {{"brute_corner", vec_json(best)}, {"brute_cost", best_cost}, {"runs", runs}};
}

// --- dispatch ---------------------------------------------------------------

void run_dispatch_fullday(const json& p, std::uint64_t seed, RunResult& out) {
    std::vector<DeviceSpec> specs;
    const std::string dev = p.at("devices");
    try {
        if (dev.empty()) {
            specs = reference_device_mix();
        } else {
            std::ifstream in(dev);
            if (!in) throw ConfigError("cannot read devices file " + dev);
            specs = devices_from_json(json::parse(in));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("devices: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("devices: ") + e.what());
    }

    DispatchConfig cfg;
    cfg.ticks = p.at("ticks");
    cfg.beta = p.at("beta");
    cfg.two_stage = p.at("two_stage");
    cfg.max_shift = p.at("max_shift");
    cfg.cost_jitter = p.at("cost_jitter");
    cfg.solver.pd_iters = p.at("pd_iters");
    cfg.solver.dana_iters = p.at("dana_iters");
    cfg.solver.q = p.at("q");
    cfg.methods.clear();
    try {
        for (const auto& m : list<std::string>(p, "methods"))
            cfg.methods.push_back(tick_method_from_string(m));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (cfg.methods.empty()) throw ConfigError("no dispatch methods");

    const std::string sig = p.at("signal");
    std::vector<double> regd;
    if (sig == "synthetic") {
        Rng rng(seed, "signal");
        regd = synthetic_regd(cfg.ticks, rng);
    } else if (sig.starts_with("csv:")) {
        try {
            regd = load_signal_csv(sig.substr(4));
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
        if (static_cast<int>(regd.size()) < cfg.ticks)
            throw ConfigError("signal file shorter than ticks");
        regd.resize(cfg.ticks);
    } else {
        throw ConfigError("signal must be synthetic or csv:PATH");
    }
    // one-sided regulation capacity per class
    Vec caps(specs.size());
    for (std::size_t c = 0; c < specs.size(); ++c)
        caps(c) = specs[c].count * (specs[c].p_hi - specs[c].p_lo) / 2.0;
    const std::vector<double> target = normalize_signal(regd, {}, {}, caps, cfg.beta);

    const DispatchResult r = run_dispatch(specs, target, cfg, seed);

    std::vector<std::string> header = {"t", "method", "target", "commanded", "measured"};
    for (const auto& s : specs) header.push_back("cmd_" + to_string(s.kind));
    for (const auto& s : specs) header.push_back("meas_" + to_string(s.kind));
    header.push_back("clamped");
    Csv csv(header);
    for (const auto& row : r.rows) {
        csv << row.t << to_string(row.method) << row.target << row.commanded << row.measured;
        for (double v : row.commanded_cls) csv << v;
        for (double v : row.measured_cls) csv << v;
        csv << (row.clamped ? 1 : 0);
        csv.end();
    }
    out.series_csv = csv.str();

    json nmse = json::object();
    for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
        json m = json::object();
        for (std::size_t c = 0; c < specs.size(); ++c)
            m[to_string(specs[c].kind)] = r.nmse[k][c].nmse();
        m["total"] = r.nmse[k].back().nmse();
        nmse[to_string(cfg.methods[k])] = m;
        out.table.push_back({to_string(cfg.methods[k]), -1, r.nmse[k].back().nmse(), -1.0});
    }
    json cls = json::object();
    for (std::size_t c = 0; c < specs.size(); ++c) cls[to_string(specs[c].kind)] = r.class_rmse[c];
    out.summary = {{"rmse", r.total.rmse},
                   {"delay", r.total.delay},
                   {"S_c", r.total.S_c},
                   {"S_d", r.total.S_d},
                   {"S_p", r.total.S_p},
                   {"S", r.total.S},
                   {"S_p_abs", r.total.S_p_abs},
                   {"class_rmse", cls},
                   {"nmse", nmse},
                   {"clamp_events", r.clamp_events},
                   {"nonconverged_ticks", r.nonconverged_ticks}};
    out.converged = r.nonconverged_ticks == 0;
}

}  // namespace

std::string to_string(Scenario s) {
    for (const auto& [k, name] : kNames)
        if (k == s) return name;
    return "?";
}

Scenario scenario_from_string(const std::string& s) {
    for (const auto& [k, name] : kNames)
        if (name == s) return k;
    throw ConfigError("unknown scenario: " + s);
}

std::vector<Scenario> all_scenarios() {
    std::vector<Scenario> out;
    for (const auto& kv : kNames) out.push_back(kv.first);
    return out;
}

json ExperimentConfig::to_json() const {
    return {{"scenario", to_string(scenario)},
            {"seed", seed},
            {"overrides", overrides},
            {"output_dir", output_dir}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, v] : j.items()) {
        (void)v;
        if (key != "scenario" && key != "seed" && key != "overrides" && key != "output_dir")
            throw ConfigError("unknown config key: " + key);
    }
    ExperimentConfig c;
    try {
        c.scenario = scenario_from_string(j.at("scenario").get<std::string>());
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("overrides")) c.overrides = j.at("overrides");
        if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (!c.overrides.is_object()) throw ConfigError("overrides must be an object");
    return c;
}

json preset_parameters(Scenario s) {
    switch (s) {
        case Scenario::DanaDiscrete:
            return {{"n", 100},           {"m", 250},          {"d", 200.0},
                    {"qs", {0, 2, 4}},    {"alpha", 1.0},      {"max_iters", 20000},
                    {"f_tol", 1e-6},      {"step_tol", 1e-13}, {"record_every", 1},
                    {"init", "uniform"}};
        case Scenario::DanaContinuous:
            return {{"instance", "three_node"},
                    {"n", 40},
                    {"m", 156},
                    {"d", 120.0},
                    {"qs", {0, 1, 2, 3, 4}},
                    {"h", 1e-3},
                    {"horizon", 150.0},
                    {"record_every", 10},
                    {"tol", 1e-4}};
        case Scenario::DanaRobust:
            return {{"n", 20},
                    {"m", 40},
                    {"d", 60.0},
                    {"qs", {0, 2, 4}},
                    {"h", 1e-2},
                    {"rho", 1.0},
                    {"horizon", 400.0},
                    {"perturb_times", {25.0, 50.0, 75.0}},
                    {"noise", 0.5},
                    {"record_every", 10},
                    {"dbar", "uniform"},
                    {"viol_tol", 1e-3}};
        case Scenario::Discrn:
            return {{"n", 40},          {"m", 120},       {"P_ref", 40.0},
                    {"chi_lo", 0.0},    {"chi_hi", 1.5},  {"S", 20},
                    {"Delta", 0.1},     {"rho", 50.0},    {"eta_g", 100.0},
                    {"eta_H", 50.0},    {"outer_iters", 60}, {"x0", 0.5},
                    {"methods", {"cubic", "newton", "gradient"}}};
        case Scenario::NnnQuality:
            return {{"n", 50},
                    {"m", 100},
                    {"trials", 100},
                    {"P_r", 1500.0},
                    {"gamma", 1.0},
                    {"T0", 1.0},
                    {"tau0", 0.1},
                    {"pt_floor", 0.1},
                    {"alpha", 1.0},
                    {"steps", 10},
                    {"beta", 1.4},
                    {"consistent_penalty", true},
                    {"brute_max_n", 12},
                    {"methods",
                     {"binpac", "binpac_da", "binpad", "binpad_da", "hnn", "greedy", "brute"}}};
        case Scenario::NnnTraj2d:
            return {{"steps", 15},
                    {"beta", 1.4},
                    {"T0", 1.0},
                    {"tau0", 0.1},
                    {"pt_floor", 0.1},
                    {"alpha", 1.0},
                    {"modes", {"binpac", "binpad"}},
                    {"tol", 1e-3}};
        case Scenario::DispatchFullday:
            return {{"ticks", 2401},
                    {"beta", 0.75},
                    {"methods", {"rc", "pd", "dana"}},
                    {"two_stage", false},
                    {"signal", "synthetic"},
                    {"devices", ""},
                    {"pd_iters", 3000},
                    {"dana_iters", 800},
                    {"q", 2},
                    {"max_shift", 300},
                    {"cost_jitter", 0.1}};
    }
    throw ConfigError("unknown scenario");
}

json resolve_parameters(const ExperimentConfig& cfg) {
    json p = preset_parameters(cfg.scenario);
    for (const auto& [key, v] : cfg.overrides.items()) {
        if (!p.contains(key))
            throw ConfigError("unknown parameter for " + to_string(cfg.scenario) + ": " + key);
        const json& cur = p[key];
        bool ok;
        if (key == "alpha" && v == "auto")
            ok = true;
        else if (cur.is_number())
            ok = v.is_number() && (!cur.is_number_integer() || v.is_number_integer());
        else
            ok = cur.type() == v.type();
        if (!ok) throw ConfigError("wrong type for parameter " + key);
        p[key] = v;
    }
    return p;
}

CompareTable compare_table(std::vector<CompareRow> rows) {
    if (rows.empty()) throw std::invalid_argument("compare_table needs at least one row");
    std::stable_sort(rows.begin(), rows.end(),
                     [](const CompareRow& a, const CompareRow& b) { return a.final_cost < b.final_cost; });
    std::size_t w = 6;
    for (const auto& r : rows) w = std::max(w, r.method.size());
    std::ostringstream t, c;
    t << std::left << std::setw(static_cast<int>(w)) << "method" << "  " << std::right
      << std::setw(12) << "iterations" << "  " << std::setw(16) << "final_cost" << "  "
      << std::setw(10) << "runtime_s" << '\n';
    c << "method,iterations,final_cost,runtime_s\n";
    for (const auto& r : rows) {
        t << std::left << std::setw(static_cast<int>(w)) << r.method << "  " << std::right
          << std::setw(12) << (r.iterations < 0 ? std::string("-") : std::to_string(r.iterations))
          << "  " << std::setw(16) << num(r.final_cost) << "  " << std::setw(10);
        if (r.runtime_s < 0) {
            t << "-";
        } else {
            t << std::fixed << std::setprecision(3) << r.runtime_s << std::defaultfloat;
        }
        t << '\n';
        c << r.method << ',' << r.iterations << ',' << num(r.final_cost) << ','
          << (r.runtime_s < 0 ? std::string() : num(r.runtime_s)) << '\n';
    }
    return {t.str(), c.str()};
}

RunResult run_experiment(const ExperimentConfig& cfg) {
    RunResult out;
    out.config = cfg;
    out.params = resolve_parameters(cfg);
    const json& p = out.params;
    try {
        switch (cfg.scenario) {
            case Scenario::DanaDiscrete: run_dana_discrete(p, cfg.seed, out); break;
            case Scenario::DanaContinuous: run_dana_continuous(p, cfg.seed, out); break;
            case Scenario::DanaRobust: run_dana_robust(p, cfg.seed, out); break;
            case Scenario::Discrn: run_discrn(p, cfg.seed, out); break;
            case Scenario::NnnQuality: run_nnn_quality(p, cfg.seed, out); break;
            case Scenario::NnnTraj2d: run_nnn_traj2d(p, cfg.seed, out); break;
            case Scenario::DispatchFullday: run_dispatch_fullday(p, cfg.seed, out); break;
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("parameter: ") + e.what());
    }
    out.summary["scenario"] = to_string(cfg.scenario);
    out.summary["seed"] = cfg.seed;
    out.summary["converged"] = out.converged;
    return out;
}

void write_artifacts(const RunResult& r, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir + ": " + ec.message());
    json config = r.config.to_json();
    config["parameters"] = r.params;
    auto put = [&](const char* name, const std::string& text) {
        std::ofstream f(fs::path(dir) / name, std::ios::binary);
        if (!f) throw std::runtime_error(std::string("cannot write ") + name);
        f << text;
    };
    put("config.json", config.dump(2) + "\n");
    put("series.csv", r.series_csv);
    put("summary.json", r.summary.dump(2) + "\n");
}

RunResult run_preset(const ExperimentConfig& cfg) {
    RunResult r = run_experiment(cfg);
    if (!cfg.output_dir.empty()) write_artifacts(r, cfg.output_dir);
    return r;
}

std::vector<RunResult> run_queue(const std::vector<ExperimentConfig>& jobs, int width,
                                 const std::function<RunResult(const ExperimentConfig&)>& fn) {
    std::vector<RunResult> out(jobs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex mu;
    auto worker = [&] {
        for (std::size_t i; (i = next++) < jobs.size();) {
            try {
                out[i] = fn(jobs[i]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!err) err = std::current_exception();
            }
        }
    };
    const int w = std::clamp(width, 1, std::max(1, static_cast<int>(jobs.size())));
    std::vector<std::thread> pool;
    for (int k = 1; k < w; ++k) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
    return out;
}

}  // namespace danalab
