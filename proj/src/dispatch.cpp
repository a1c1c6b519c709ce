#include "danalab/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "danalab/dana.hpp"
#include "danalab/weight_design.hpp"

namespace danalab {

std::string to_string(DeviceKind k) {
    switch (k) {
        case DeviceKind::AHU: return "AHU";
        case DeviceKind::V1G: return "V1G";
        case DeviceKind::V2G: return "V2G";
        case DeviceKind::BESS: return "BESS";
    }
    return "unknown";
}

DeviceKind device_kind_from_string(const std::string& s) {
    if (s == "AHU" || s == "ahu") return DeviceKind::AHU;
    if (s == "V1G" || s == "v1g") return DeviceKind::V1G;
    if (s == "V2G" || s == "v2g") return DeviceKind::V2G;
    if (s == "BESS" || s == "bess") return DeviceKind::BESS;
    throw std::invalid_argument("unknown device kind: " + s);
}

std::string to_string(Quantization q) {
    switch (q) {
        case Quantization::Continuous: return "continuous";
        case Quantization::Integer: return "integer";
        case Quantization::Binary: return "binary";
    }
    return "unknown";
}

Quantization quantization_from_string(const std::string& s) {
    if (s == "continuous") return Quantization::Continuous;
    if (s == "integer") return Quantization::Integer;
    if (s == "binary") return Quantization::Binary;
    throw std::invalid_argument("unknown quantization: " + s);
}

std::string to_string(TickMethod m) {
    switch (m) {
        case TickMethod::RC: return "rc";
        case TickMethod::PD: return "pd";
        case TickMethod::DANA: return "dana";
    }
    return "unknown";
}

TickMethod tick_method_from_string(const std::string& s) {
    if (s == "rc") return TickMethod::RC;
    if (s == "pd") return TickMethod::PD;
    if (s == "dana") return TickMethod::DANA;
    throw std::invalid_argument("unknown tick method: " + s);
}

void DeviceSpec::validate() const {
    if (count < 1) throw std::invalid_argument("device count must be positive");
    if (nodes < 1 || nodes > count) throw std::invalid_argument("device nodes out of range");
    if (!(p_lo < p_hi)) throw std::invalid_argument("device needs p_lo < p_hi");
    if (update_period < 1) throw std::invalid_argument("update_period must be >= 1");
    if (phases.empty()) throw std::invalid_argument("device needs at least one phase");
    for (int ph : phases)
        if (ph < 0) throw std::invalid_argument("negative update phase");
    if (response_delay < 0) throw std::invalid_argument("negative response delay");
    if (settle_tau < 0) throw std::invalid_argument("negative settling time");
    if (!(cost_k > 0)) throw std::invalid_argument("cost_k must be positive");
}

nlohmann::json DeviceSpec::to_json() const {
    return {{"kind", to_string(kind)},
            {"count", count},
            {"nodes", nodes},
            {"p_lo", p_lo},
            {"p_hi", p_hi},
            {"baseline", baseline},
            {"update_period", update_period},
            {"phases", phases},
            {"response_delay", response_delay},
            {"settle_tau", settle_tau},
            {"quantization", to_string(quant)},
            {"cost_k", cost_k}};
}

DeviceSpec DeviceSpec::from_json(const nlohmann::json& j) {
    DeviceSpec d;
    d.kind = device_kind_from_string(j.at("kind").get<std::string>());
    d.count = j.value("count", 1);
    d.nodes = j.value("nodes", 1);
    d.p_lo = j.at("p_lo").get<double>();
    d.p_hi = j.at("p_hi").get<double>();
    d.baseline = j.value("baseline", 0.0);
    d.update_period = j.value("update_period", 1);
    d.phases = j.value("phases", std::vector<int>{0});
    d.response_delay = j.value("response_delay", 0);
    d.settle_tau = j.value("settle_tau", 0.0);
    d.quant = quantization_from_string(j.value("quantization", std::string("continuous")));
    d.cost_k = j.value("cost_k", 1.0);
    d.validate();
    return d;
}

std::vector<DeviceSpec> reference_device_mix() {
    DeviceSpec ahu;
    ahu.kind = DeviceKind::AHU;
    ahu.count = 34;
    ahu.nodes = 2;
    ahu.p_lo = -1.0;  // off
    ahu.p_hi = 1.0;   // on at 2 kW, baseline half the draw
    ahu.baseline = 1.0;
    ahu.update_period = 60;
    ahu.phases = {0, 15, 30, 45};
    ahu.response_delay = 105;
    ahu.settle_tau = 20.0;
    ahu.quant = Quantization::Binary;

    DeviceSpec v1g;
    v1g.kind = DeviceKind::V1G;
    v1g.count = 17;
    v1g.p_lo = -1.65;  // 1.6 kW floor to 4.9 kW
    v1g.p_hi = 1.65;
    v1g.baseline = 3.25;
    v1g.update_period = 60;
    v1g.phases = {0, 20, 40};
    v1g.response_delay = 10;
    v1g.settle_tau = 5.0;
    v1g.quant = Quantization::Integer;

    DeviceSpec v2g;
    v2g.kind = DeviceKind::V2G;
    v2g.count = 6;
    v2g.nodes = 5;
    v2g.p_lo = -5.0;
    v2g.p_hi = 5.0;
    v2g.response_delay = 3;
    v2g.settle_tau = 1.0;
    v2g.cost_k = 0.5;

    DeviceSpec bess;
    bess.kind = DeviceKind::BESS;
    bess.p_lo = -3.0;
    bess.p_hi = 3.0;
    bess.update_period = 20;
    bess.cost_k = 0.5;
    return {ahu, v1g, v2g, bess};
}

std::vector<DeviceSpec> devices_from_json(const nlohmann::json& j) {
    const auto& arr = j.is_object() ? j.at("devices") : j;
    std::vector<DeviceSpec> out;
    for (const auto& d : arr) out.push_back(DeviceSpec::from_json(d));
    if (out.empty()) throw std::invalid_argument("device list is empty");
    return out;
}

namespace {

Graph node_ring(int N) {
    if (N < 1) return Graph();
    return N < 3 ? Graph::path(N) : Graph::ring(N);
}

}  // namespace

SeparableCost Fleet::costs() const {
    SeparableCost c;
    for (int i = 0; i < n(); ++i) c.terms.push_back(ScalarCost::quadratic(a(i), 0.0));
    return c;
}

std::vector<int> Fleet::units_of_node(int k) const {
    std::vector<int> out;
    for (int i = 0; i < n(); ++i)
        if (node[i] == k) out.push_back(i);
    return out;
}

Fleet Fleet::build(const std::vector<DeviceSpec>& specs, Rng& rng, double jitter) {
    if (specs.empty()) throw std::invalid_argument("fleet needs at least one device class");
    Fleet f;
    f.specs = specs;
    int n = 0;
    for (const auto& s : specs) {
        s.validate();
        n += s.count;
    }
    f.lo.resize(n);
    f.hi.resize(n);
    f.a.resize(n);
    int u = 0;
    for (std::size_t c = 0; c < specs.size(); ++c) {
        const auto& s = specs[c];
        for (int k = 0; k < s.count; ++k, ++u) {
            f.cls.push_back(static_cast<int>(c));
            f.phase.push_back(s.phases[k % s.phases.size()]);
            f.node.push_back(f.nodes + static_cast<int>(static_cast<long>(k) * s.nodes / s.count));
            f.lo(u) = s.p_lo;
            f.hi(u) = s.p_hi;
            f.a(u) = s.cost_k / (s.p_hi - s.p_lo) * (1.0 + jitter * rng.uniform(-1.0, 1.0));
        }
        f.nodes += s.nodes;
    }
    f.graph = node_ring(f.nodes);
    return f;
}

Fleet Fleet::subset(const std::vector<int>& classes) const {
    Fleet f;
    std::vector<int> remap(specs.size(), -1);
    for (int c : classes) {
        if (c < 0 || c >= static_cast<int>(specs.size()))
            throw std::invalid_argument("subset class out of range");
        remap[c] = static_cast<int>(f.specs.size());
        f.specs.push_back(specs[c]);
    }
    std::vector<int> keep, node_map(nodes, -1);
    for (std::size_t c = 0; c < f.specs.size(); ++c)
        for (int i = 0; i < n(); ++i)
            if (remap[cls[i]] == static_cast<int>(c)) keep.push_back(i);
    const int m = static_cast<int>(keep.size());
    f.lo.resize(m);
    f.hi.resize(m);
    f.a.resize(m);
    for (int u = 0; u < m; ++u) {
        const int i = keep[u];
        if (node_map[node[i]] < 0) node_map[node[i]] = f.nodes++;
        f.cls.push_back(remap[cls[i]]);
        f.phase.push_back(phase[i]);
        f.node.push_back(node_map[node[i]]);
        f.lo(u) = lo(i);
        f.hi(u) = hi(i);
        f.a(u) = a(i);
    }
    f.graph = node_ring(f.nodes);
    return f;
}

NodeCost::NodeCost(Vec a, Vec lo, Vec hi) : a_(std::move(a)), lo_(std::move(lo)), hi_(std::move(hi)) {
    if (a_.size() == 0) throw std::invalid_argument("node without units");
    if ((a_.array() <= 0.0).any()) throw std::invalid_argument("node costs must be strictly convex");
    for (int i = 0; i < a_.size(); ++i) {
        breaks_.push_back(a_(i) * lo_(i));
        breaks_.push_back(a_(i) * hi_(i));
    }
    std::sort(breaks_.begin(), breaks_.end());
}

double NodeCost::total(double mu) const {
    return (mu * a_.cwiseInverse()).cwiseMax(lo_).cwiseMin(hi_).sum();
}

double NodeCost::marginal(double P) const {
    if (P < lo_sum()) return breaks_.front() + min_curvature() * (P - lo_sum());
    if (P > hi_sum()) return breaks_.back() + min_curvature() * (P - hi_sum());
    // total() is piecewise linear in mu with kinks at breaks_
    auto it = std::lower_bound(breaks_.begin(), breaks_.end(), P,
                               [&](double b, double v) { return total(b) < v; });
    if (it == breaks_.begin()) return breaks_.front();
    if (it == breaks_.end()) return breaks_.back();
    const double m1 = *(it - 1), m2 = *it;
    const double s1 = total(m1), s2 = total(m2);
    if (s2 <= s1) return m1;
    return m1 + (m2 - m1) * (P - s1) / (s2 - s1);
}

Vec NodeCost::split(double P) const {
    const double mu = marginal(std::clamp(P, lo_sum(), hi_sum()));
    Vec p = (mu * a_.cwiseInverse()).cwiseMax(lo_).cwiseMin(hi_);
    // put the roundoff on the units strictly inside their box
    const double gap = std::clamp(P, lo_sum(), hi_sum()) - p.sum();
    int free = 0;
    for (int i = 0; i < p.size(); ++i) free += p(i) > lo_(i) && p(i) < hi_(i);
    if (free > 0)
        for (int i = 0; i < p.size(); ++i)
            if (p(i) > lo_(i) && p(i) < hi_(i)) p(i) += gap / free;
    return p;
}

double NodeCost::curvature(double P) const {
    if (P < lo_sum() || P > hi_sum()) return min_curvature();
    const double mu = marginal(P);
    double s = 0.0;
    for (int i = 0; i < a_.size(); ++i) {
        const double v = mu / a_(i);
        if (v > lo_(i) && v < hi_(i)) s += 1.0 / a_(i);
    }
    return s > 0.0 ? 1.0 / s : max_curvature();
}

double NodeCost::min_curvature() const { return 1.0 / a_.cwiseInverse().sum(); }
double NodeCost::max_curvature() const { return a_.maxCoeff(); }

std::vector<double> synthetic_regd(int ticks, Rng& rng) {
    if (ticks < 2) throw std::invalid_argument("synthetic_regd needs at least 2 ticks");
    constexpr int kTones = 10;
    std::vector<double> s(ticks, 0.0);
    for (int k = 0; k < kTones; ++k) {
        const double period = 30.0 * std::pow(30.0, rng.uniform());  // 30 s to 15 min
        const double amp = rng.uniform(0.3, 1.0);
        const double ph = rng.uniform(0.0, 2.0 * M_PI);
        for (int t = 0; t < ticks; ++t) s[t] += amp * std::sin(2.0 * M_PI * t / period + ph);
    }
    double e = 0.0;
    for (int t = 0; t < ticks; ++t) {
        e = 0.9 * e + 0.15 * rng.normal();
        s[t] += e;
    }
    const double mean = std::accumulate(s.begin(), s.end(), 0.0) / ticks;
    double sup = 0.0;
    for (auto& v : s) {
        v -= mean;
        sup = std::max(sup, std::abs(v));
    }
    for (auto& v : s) v *= 0.95 / sup;
    return s;
}

std::vector<double> load_signal_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open signal file: " + path);
    std::vector<double> out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto pos = line.find_last_of(',');
        const std::string field = pos == std::string::npos ? line : line.substr(pos + 1);
        try {
            std::size_t used = 0;
            const double v = std::stod(field, &used);
            out.push_back(v);
        } catch (const std::exception&) {
            if (!first) throw std::invalid_argument("bad value in signal file: " + line);
        }
        first = false;
    }
    if (out.size() < 2) throw std::invalid_argument("signal file has fewer than 2 samples");
    return out;
}

std::vector<double> normalize_signal(const std::vector<double>& regd,
                                     const std::vector<double>& pv,
                                     const std::vector<double>& pb, const Vec& capacities,
                                     double beta) {
    const std::size_t T = regd.size();
    if ((!pv.empty() && pv.size() != T) || (!pb.empty() && pb.size() != T))
        throw std::invalid_argument("signal components differ in length");
    if (capacities.size() == 0 || (capacities.array() <= 0.0).any())
        throw std::invalid_argument("capacities must be positive");
    std::vector<double> s(T);
    double sup = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        s[t] = regd[t] + (pv.empty() ? 0.0 : pv[t]) - (pb.empty() ? 0.0 : pb[t]);
        sup = std::max(sup, std::abs(s[t]));
    }
    if (!(sup > 0.0)) throw std::invalid_argument("signal has zero sup-norm");
    const double scale = beta * capacities.sum() / sup;
    for (auto& v : s) v *= scale;
    return s;
}

Vec ratio_consensus_closed_form(const Vec& lo, const Vec& hi, double P) {
    const double cap = (hi - lo).sum();
    if (!(cap > 0.0)) throw std::invalid_argument("ratio consensus needs positive capacity");
    return lo + ((P - lo.sum()) / cap) * (hi - lo);
}

RcResult ratio_consensus(const Graph& g, const Vec& lo, const Vec& hi, double P,
                         const std::vector<int>& informed, long max_rounds, double tol) {
    const int n = g.n();
    if (lo.size() != n || hi.size() != n) throw std::invalid_argument("bound size mismatch");
    if (!((hi - lo).sum() > 0.0)) throw std::invalid_argument("ratio consensus needs positive capacity");
    if (informed.empty()) throw std::invalid_argument("ratio consensus needs an informed agent");
    if (!is_connected(g)) throw std::invalid_argument("ratio consensus needs a connected graph");
    Vec y = -lo;
    for (int i : informed) y(i) += P / static_cast<double>(informed.size());
    Vec z = hi - lo;
    Vec w(n);
    for (int j = 0; j < n; ++j) w(j) = 1.0 / (g.degree(j) + 1.0);
    RcResult res;
    auto spread = [&] {
        const Vec r = y.cwiseQuotient(z);
        return r.maxCoeff() - r.minCoeff();
    };
    Vec yn(n), zn(n);
    while (res.rounds < max_rounds && !(spread() <= tol)) {
        // every agent pushes an equal share to itself and each neighbor
        for (int i = 0; i < n; ++i) {
            yn(i) = w(i) * y(i);
            zn(i) = w(i) * z(i);
            for (int j : g.neighbors(i)) {
                yn(i) += w(j) * y(j);
                zn(i) += w(j) * z(j);
            }
        }
        y.swap(yn);
        z.swap(zn);
        ++res.rounds;
    }
    res.converged = spread() <= tol;
    res.p = lo + y.cwiseQuotient(z).cwiseProduct(hi - lo);
    return res;
}

PdState primal_dual_step(const PdState& s, const Vec& grad, const Vec& lo, const Vec& hi,
                         double P, const Mat& L, double h) {
    const double share = P / static_cast<double>(s.p.size());
    const Vec Ly = L * s.y;
    Vec r = s.p + Ly;
    r.array() -= share;  // p + L y - P/n
    PdState out;
    out.p = (s.p - h * (grad + s.lambda + r)).cwiseMax(lo).cwiseMin(hi);
    // L(lambda + p - P/n) + L^2 y; the constant drops out under L
    out.y = s.y - h * (L * (s.lambda + s.p + Ly));
    out.lambda = s.lambda + h * r;
    return out;
}

PdState primal_dual_step(const PdState& s, const Vec& a, const Vec& b, const Vec& lo,
                         const Vec& hi, double P, const Mat& L, double h) {
    return primal_dual_step(s, Vec(a.cwiseProduct(s.p) + b), lo, hi, P, L, h);
}

TickSolver::TickSolver(const Fleet& fleet, const TickSolverConfig& cfg)
    : fleet_(&fleet), cfg_(cfg), costs_(fleet.costs()) {
    const int N = fleet.nodes;
    if (fleet.n() < 1 || N < 1) throw std::invalid_argument("tick solver needs at least one unit");
    if (cfg.informed < 0 || cfg.informed >= N) throw std::invalid_argument("informed node out of range");
    Lo_.resize(N);
    Hi_.resize(N);
    Vec dmin(N), dmax(N);
    for (int k = 0; k < N; ++k) {
        members_.push_back(fleet.units_of_node(k));
        const auto& u = members_.back();
        Vec a(u.size()), lo(u.size()), hi(u.size());
        for (std::size_t j = 0; j < u.size(); ++j) {
            a(j) = fleet.a(u[j]);
            lo(j) = fleet.lo(u[j]);
            hi(j) = fleet.hi(u[j]);
        }
        nodes_.emplace_back(a, lo, hi);
        Lo_(k) = lo.sum();
        Hi_(k) = hi.sum();
        dmin(k) = nodes_.back().min_curvature();
        dmax(k) = nodes_.back().max_curvature();
    }
    if (!(cfg.curvature > 0)) throw std::invalid_argument("curvature must be positive");
    scale_ = cfg.curvature / dmin.maxCoeff();
    dmin *= scale_;
    dmax *= scale_;
    L_ = laplacian_matrix(fleet.graph);
    if (N > 1) {
        const double ln = Laplacian(L_).lambda_n();
        pd_h_ = cfg.pd_h > 0 ? cfg.pd_h : 1.0 / (1.0 + dmax.maxCoeff() + ln + ln * ln);
        Ld_ = post_scale_beta(L_, HessianBounds{dmin, dmin}).L;
        dana_h_ = cfg.dana_h > 0 ? cfg.dana_h : 0.5;
    }
    pd_ = PdState{Vec::Zero(N), Vec::Zero(N), Vec::Zero(N)};
    x_ = Vec::Zero(N);
    lam_lo_ = Vec::Zero(N);
    lam_hi_ = Vec::Zero(N);
}

double TickSolver::clamp(double P) const {
    return std::clamp(P, fleet_->lo.sum(), fleet_->hi.sum());
}

Vec TickSolver::oracle(TickMethod m, double P) const {
    P = clamp(P);
    if (m == TickMethod::RC) return ratio_consensus_closed_form(fleet_->lo, fleet_->hi, P);
    return solve_allocation(costs_, P, fleet_->lo, fleet_->hi).x;
}

Vec TickSolver::expand(const Vec& totals) const {
    Vec p(fleet_->n());
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
        const Vec s = nodes_[k].split(totals(k));
        for (std::size_t j = 0; j < members_[k].size(); ++j) p(members_[k][j]) = s(j);
    }
    return p;
}

Vec TickSolver::node_grad(const Vec& P) const {
    Vec g(P.size());
    for (int k = 0; k < P.size(); ++k) g(k) = scale_ * nodes_[k].marginal(P(k));
    return g;
}

Vec TickSolver::node_hess(const Vec& P) const {
    Vec h(P.size());
    for (int k = 0; k < P.size(); ++k) h(k) = scale_ * nodes_[k].curvature(P(k));
    return h;
}

namespace {
// stationarity threshold on the update speed, relative to the request size
double settle_tol(double P) { return 1e-6 * std::max(1.0, std::abs(P)); }
}  // namespace

Vec TickSolver::solve(TickMethod m, double P, bool* clamped, bool* converged) {
    const double Pc = clamp(P);
    if (clamped) *clamped = Pc != P;
    if (converged) *converged = true;
    const int N = fleet_->nodes;
    if (m == TickMethod::RC) {
        // proportional share is the same at node and unit level
        const Vec lo = fleet_->lo, hi = fleet_->hi;
        RcResult r = N > 1 ? ratio_consensus(fleet_->graph, Lo_, Hi_, Pc, {cfg_.informed},
                                             cfg_.rc_max_rounds, cfg_.rc_tol)
                           : RcResult{Vec::Constant(1, Pc), 0, true};
        if (converged) *converged = r.converged;
        x_ = r.p;
        const Vec ratio = (r.p - Lo_).cwiseQuotient(Hi_ - Lo_);
        Vec p(fleet_->n());
        for (int i = 0; i < fleet_->n(); ++i)
            p(i) = lo(i) + ratio(fleet_->node[i]) * (hi(i) - lo(i));
        pd_.p = x_;
        lam_lo_.setZero();
        lam_hi_.setZero();
        started_ = true;
        last_P_ = Pc;
        return p;
    }
    if (N == 1) {
        x_ = Vec::Constant(1, Pc);
    } else if (Pc <= Lo_.sum() || Pc >= Hi_.sum()) {
        // the request fills the whole range: the only feasible point is a corner,
        // where the box multipliers are not unique and the dual iterations wander
        x_ = Pc <= Lo_.sum() ? Lo_ : Hi_;
        pd_.p = x_;
    } else if (m == TickMethod::PD) {
        double move = 0.0;
        for (int blk = 0; blk < std::max(1, cfg_.max_blocks); ++blk) {
            for (int k = 0; k < cfg_.pd_iters; ++k) {
                PdState nx = primal_dual_step(pd_, node_grad(pd_.p), Lo_, Hi_, Pc, L_, pd_h_);
                move = (nx.p - pd_.p).lpNorm<Eigen::Infinity>() / pd_h_;
                pd_ = std::move(nx);
            }
            if (move < settle_tol(Pc)) break;
        }
        if (converged) *converged = move < settle_tol(Pc);
        x_ = pd_.p;
        lam_lo_.setZero();
        lam_hi_.setZero();
    } else {
        // the informed node absorbs the change in P so the sum starts feasible
        Vec x = started_ ? x_ : ratio_consensus_closed_form(Lo_, Hi_, Pc);
        if (started_) x(cfg_.informed) += Pc - last_P_;
        double move = 0.0;
        for (int blk = 0; blk < std::max(1, cfg_.max_blocks); ++blk) {
            for (int k = 0; k < cfg_.dana_iters; ++k) {
                const Vec gl = Ld_ * (node_grad(x) - lam_lo_ + lam_hi_);
                const Vec dz = -dana_h_ * q_approx_apply(Ld_, node_hess(x), gl, cfg_.q);
                lam_lo_ = (lam_lo_ + dana_h_ * (Lo_ - x)).cwiseMax(0.0);
                lam_hi_ = (lam_hi_ + dana_h_ * (x - Hi_)).cwiseMax(0.0);
                const Vec dx = Ld_ * dz;
                x += dx;
                move = dx.lpNorm<Eigen::Infinity>() / dana_h_;
            }
            if (move < settle_tol(Pc)) break;
        }
        if (converged) *converged = move < settle_tol(Pc);
        x_ = x;
        pd_.p = x.cwiseMax(Lo_).cwiseMin(Hi_);
    }
    started_ = true;
    last_P_ = Pc;
    return expand(x_);
}

double binary_group_round(double total, int count, double p_lo, double p_hi) {
    const double r = p_hi - p_lo;
    const double k = std::clamp(std::round((total - count * p_lo) / r), 0.0, double(count));
    return count * p_lo + k * r;
}

double integer_round(double dev, double baseline, double p_lo, double p_hi) {
    double lo = std::ceil(baseline + p_lo), hi = std::floor(baseline + p_hi);
    if (lo > hi) {  // no integer setpoint inside the range
        lo = baseline + p_lo;
        hi = baseline + p_hi;
    }
    return std::clamp(std::round(baseline + dev), lo, hi) - baseline;
}

namespace {

class ClassSim {
public:
    explicit ClassSim(const DeviceSpec& s)
        : spec_(s), pipe_(static_cast<std::size_t>(s.response_delay), 0.0),
          gain_(s.settle_tau > 0 ? 1.0 - std::exp(-1.0 / s.settle_tau) : 1.0) {}

    double step(const Vec& units) {
        double q = 0.0;
        switch (spec_.quant) {
            case Quantization::Continuous: q = units.sum(); break;
            case Quantization::Integer:
                for (int i = 0; i < units.size(); ++i)
                    q += integer_round(units(i), spec_.baseline, spec_.p_lo, spec_.p_hi);
                break;
            case Quantization::Binary:
                q = binary_group_round(units.sum(), static_cast<int>(units.size()), spec_.p_lo,
                                       spec_.p_hi);
                break;
        }
        pipe_.push_back(q);
        const double d = pipe_.front();
        pipe_.pop_front();
        y_ += gain_ * (d - y_);
        return y_;
    }

private:
    DeviceSpec spec_;
    std::deque<double> pipe_;
    double gain_;
    double y_ = 0.0;
};

}  // namespace

std::vector<double> device_response(const std::vector<Vec>& cmds, const DeviceSpec& spec) {
    spec.validate();
    ClassSim sim(spec);
    std::vector<double> out;
    out.reserve(cmds.size());
    for (const auto& c : cmds) out.push_back(sim.step(c));
    return out;
}

std::vector<double> device_response(const std::vector<double>& setpoints,
                                    const DeviceSpec& spec) {
    std::vector<Vec> cmds;
    cmds.reserve(setpoints.size());
    for (double v : setpoints) cmds.push_back(Vec::Constant(1, v));
    return device_response(cmds, spec);
}

double relative_rmse(const std::vector<double>& prov, const std::vector<double>& tar) {
    if (prov.size() != tar.size() || tar.empty())
        throw std::invalid_argument("relative_rmse needs equal nonempty series");
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < tar.size(); ++t) {
        num += (prov[t] - tar[t]) * (prov[t] - tar[t]);
        den += tar[t] * tar[t];
    }
    if (!(den > 0.0)) throw std::invalid_argument("relative_rmse needs a nonzero target");
    return std::sqrt(num / den);
}

int optimal_shift(const std::vector<double>& prov, const std::vector<double>& tar,
                  int max_shift) {
    const int T = static_cast<int>(tar.size());
    if (static_cast<int>(prov.size()) != T || T < 2)
        throw std::invalid_argument("optimal_shift needs equal series of length >= 2");
    max_shift = std::clamp(max_shift, 0, T - 2);
    int best = 0;
    double best_v = 0.0;
    for (int s = 0; s <= max_shift; ++s) {
        double num = 0.0, den = 0.0;
        for (int t = 0; t + s < T; ++t) {
            num += (prov[t + s] - tar[t]) * (prov[t + s] - tar[t]);
            den += tar[t] * tar[t];
        }
        const double v = den > 0 ? num / den : num;
        if (s == 0 || v < best_v) {
            best = s;
            best_v = v;
        }
    }
    return best;
}

TrackingReport tracking_metrics(const std::vector<double>& prov,
                                const std::vector<double>& tar, int max_shift) {
    const int T = static_cast<int>(tar.size());
    if (static_cast<int>(prov.size()) != T || T < 2)
        throw std::invalid_argument("tracking_metrics needs equal series of length >= 2");
    TrackingReport r;
    r.rmse = relative_rmse(prov, tar);
    r.delay = optimal_shift(prov, tar, max_shift);
    const int m = T - r.delay;
    double mp = 0.0, mt = 0.0, mabs = 0.0;
    for (int t = 0; t < m; ++t) {
        mp += prov[t + r.delay];
        mt += tar[t];
        mabs += std::abs(tar[t]);
    }
    mp /= m;
    mt /= m;
    mabs /= m;
    double cov = 0.0, vp = 0.0, vt = 0.0, dev = 0.0;
    for (int t = 0; t < m; ++t) {
        const double dp = prov[t + r.delay] - mp, dt = tar[t] - mt;
        cov += dp * dt;
        vp += dp * dp;
        vt += dt * dt;
        dev += std::abs(prov[t + r.delay] - tar[t]);
    }
    if (!(vt > 0.0)) throw std::invalid_argument("target has zero variance");
    r.S_c = vp > 0.0 ? cov / std::sqrt(vp * vt) : 0.0;
    r.S_d = std::clamp(std::abs((r.delay - 300.0) / 300.0), 0.0, 1.0);
    r.S_p = 1.0 - dev / m / std::abs(mt);
    r.S_p_abs = mabs > 0.0 ? 1.0 - dev / m / mabs : 0.0;
    r.S = (r.S_c + r.S_d + r.S_p) / 3.0;
    return r;
}

std::vector<double> preprocess_measurement(const std::vector<double>& stream, int window,
                                           double outlier_frac) {
    if (window < 1) throw std::invalid_argument("window must be >= 1");
    const int T = static_cast<int>(stream.size());
    if (T == 0) return {};
    const double mean = std::accumulate(stream.begin(), stream.end(), 0.0) / T;
    const double jump = outlier_frac * std::abs(mean);
    std::vector<double> clean(T);
    clean[0] = stream[0];
    for (int t = 1; t < T; ++t)
        clean[t] = std::abs(stream[t] - clean[t - 1]) > jump ? clean[t - 1] : stream[t];
    std::vector<double> out(T);
    const int back = window / 2, fwd = (window - 1) / 2;
    for (int t = 0; t < T; ++t) {
        const int lo = std::max(0, t - back), hi = std::min(T - 1, t + fwd);
        double s = 0.0;
        for (int k = lo; k <= hi; ++k) s += clean[k];
        out[t] = s / (hi - lo + 1);
    }
    return out;
}

DispatchResult run_dispatch(const std::vector<DeviceSpec>& specs,
                            const std::vector<double>& target, const DispatchConfig& cfg,
                            std::uint64_t seed) {
    if (cfg.methods.empty()) throw std::invalid_argument("dispatch needs at least one method");
    const int T = cfg.ticks > 0 ? cfg.ticks : static_cast<int>(target.size());
    if (static_cast<int>(target.size()) < T || T < 2)
        throw std::invalid_argument("target shorter than the requested ticks");
    Rng rng(seed, "costs");
    const Fleet fleet = Fleet::build(specs, rng, cfg.cost_jitter);
    const int C = static_cast<int>(specs.size());
    const int n = fleet.n();

    std::vector<int> s1, s2;
    for (int c = 0; c < C; ++c) {
        const bool first = cfg.two_stage && std::find(cfg.stage1.begin(), cfg.stage1.end(),
                                                       specs[c].kind) != cfg.stage1.end();
        (first ? s1 : s2).push_back(c);
    }
    // unit index in the full fleet for each unit of the stage-2 fleet
    std::vector<int> s2_units;
    for (int c : s2)
        for (int i = 0; i < n; ++i)
            if (fleet.cls[i] == c) s2_units.push_back(i);
    const bool staged = cfg.two_stage && !s1.empty() && !s2.empty();
    TickSolverConfig c2 = cfg.solver;
    c2.informed = 0;
    Fleet fleet2;
    if (staged) fleet2 = fleet.subset(s2);

    TickSolver full(fleet, cfg.solver);
    std::optional<TickSolver> second;
    if (staged) second.emplace(fleet2, c2);

    std::vector<ClassSim> sims;
    for (const auto& s : specs) sims.emplace_back(s);
    std::vector<std::vector<int>> members(C);
    for (int i = 0; i < n; ++i) members[fleet.cls[i]].push_back(i);

    DispatchResult res;
    const int K = static_cast<int>(cfg.methods.size());
    res.nmse.assign(K, std::vector<SolverError>(C + 1));
    std::vector<std::vector<double>> cmd_cls(C), meas_cls(C);
    std::vector<double> measured(T);
    Vec held = Vec::Zero(n);
    auto due = [&](int i, int t) {
        const int ph = fleet.phase[i];
        return t >= ph && (t - ph) % specs[fleet.cls[i]].update_period == 0;
    };
    auto account = [&](int k, const Vec& p, const Vec& ref, const std::vector<int>& units,
                       const std::vector<int>& unit_cls) {
        for (std::size_t u = 0; u < units.size(); ++u) {
            const double e2 = (p(units[u]) - ref(units[u])) * (p(units[u]) - ref(units[u]));
            const double r2 = ref(units[u]) * ref(units[u]);
            res.nmse[k][unit_cls[u]].err2 += e2;
            res.nmse[k][unit_cls[u]].ref2 += r2;
            res.nmse[k][C].err2 += e2;
            res.nmse[k][C].ref2 += r2;
        }
    };
    std::vector<int> all_idx(n), s1_idx, s1_cls, s2_local(s2_units.size()), s2_cls;
    std::iota(all_idx.begin(), all_idx.end(), 0);
    for (int i = 0; i < n; ++i)
        if (staged && std::find(s1.begin(), s1.end(), fleet.cls[i]) != s1.end()) {
            s1_idx.push_back(i);
            s1_cls.push_back(fleet.cls[i]);
        }
    std::iota(s2_local.begin(), s2_local.end(), 0);
    for (int i : s2_units) s2_cls.push_back(fleet.cls[i]);

    for (int t = 0; t < T; ++t) {
        const int k = static_cast<int>(static_cast<long>(t) * K / T);
        const TickMethod m = cfg.methods[k];
        bool clamped = false, conv = true;
        const Vec p = full.solve(m, target[t], &clamped, &conv);
        res.clamp_events += clamped;
        res.nonconverged_ticks += !conv;
        if (cfg.check_oracle) {
            const Vec ref = full.oracle(m, target[t]);
            if (staged) account(k, p, ref, s1_idx, s1_cls);
            else account(k, p, ref, all_idx, fleet.cls);
        }
        DispatchRow row{t, m, target[t], 0.0, 0.0, std::vector<double>(C, 0.0),
                        std::vector<double>(C, 0.0), clamped};
        auto actuate = [&](int c, const Vec& setp) {
            for (int i : members[c])
                if (due(i, t)) held(i) = setp(i);
            Vec u(members[c].size());
            for (std::size_t j = 0; j < members[c].size(); ++j) u(j) = held(members[c][j]);
            row.commanded_cls[c] = u.sum();
            row.measured_cls[c] = sims[c].step(u);
        };
        if (!staged) {
            for (int c = 0; c < C; ++c) actuate(c, p);
        } else {
            double stage1 = 0.0;
            for (int c : s1) {
                actuate(c, p);
                stage1 += row.measured_cls[c];
            }
            const double P2 = target[t] - stage1;
            bool cl2 = false, conv2 = true;
            const Vec p2 = second->solve(m, P2, &cl2, &conv2);
            res.clamp_events += cl2;
            res.nonconverged_ticks += !conv2;
            row.clamped = row.clamped || cl2;
            if (cfg.check_oracle) account(k, p2, second->oracle(m, P2), s2_local, s2_cls);
            Vec pf = p;
            for (std::size_t j = 0; j < s2_units.size(); ++j) pf(s2_units[j]) = p2(j);
            for (int c : s2) actuate(c, pf);
        }
        for (int c = 0; c < C; ++c) {
            row.commanded += row.commanded_cls[c];
            row.measured += row.measured_cls[c];
            cmd_cls[c].push_back(row.commanded_cls[c]);
            meas_cls[c].push_back(row.measured_cls[c]);
        }
        measured[t] = row.measured;
        res.rows.push_back(std::move(row));
    }
    const std::vector<double> tar(target.begin(), target.begin() + T);
    res.total = tracking_metrics(measured, tar, cfg.max_shift);
    for (int c = 0; c < C; ++c) {
        double den = 0.0;
        for (double v : cmd_cls[c]) den += v * v;
        res.class_rmse.push_back(den > 0 ? relative_rmse(meas_cls[c], cmd_cls[c]) : 0.0);
    }
    return res;
}

}  // namespace danalab
