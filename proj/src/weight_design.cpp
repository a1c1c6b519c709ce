#include "danalab/weight_design.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace danalab {

namespace {

Vec reduced_spectrum(const Mat& L, const Vec& h, const Projection& T) {
    Eigen::SelfAdjointEigenSolver<Mat> es(reduced_hessian(L, h, T), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

}  // namespace

EpsilonReport epsilon_metric(const Mat& L, const HessianBounds& bounds, const Projection& T) {
    EpsilonReport r;
    r.mu_min_delta = reduced_spectrum(L, bounds.delta, T).minCoeff();
    r.mu_max_Delta = reduced_spectrum(L, bounds.Delta, T).maxCoeff();
    r.epsilon = std::max(1.0 - r.mu_min_delta, r.mu_max_Delta - 1.0);
    r.satisfied = r.epsilon < 1.0;
    return r;
}

PostScale post_scale_beta(const Mat& L, const HessianBounds& bounds) {
    const Projection T = projection_T(static_cast<int>(L.rows()));
    const EpsilonReport r0 = epsilon_metric(L, bounds, T);
    const double s = r0.mu_min_delta + r0.mu_max_Delta;
    if (!(s > 0) || !(r0.mu_min_delta > 1e-12 * std::max(1.0, r0.mu_max_Delta)))
        throw std::runtime_error("post_scale_beta: degenerate reduced spectrum");
    PostScale out;
    out.beta = std::sqrt(2.0 / s);
    out.L = out.beta * L;
    return out;
}

}  // namespace danalab
