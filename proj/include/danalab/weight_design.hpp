#pragma once

#include "danalab/graph.hpp"
#include "danalab/problems.hpp"

namespace danalab {

struct EpsilonReport {
    double epsilon = 0.0;
    double mu_min_delta = 0.0;  // smallest eigenvalue of M built with delta
    double mu_max_Delta = 0.0;  // largest eigenvalue of M built with Delta
    bool satisfied = false;     // epsilon < 1
};

// eps = max(1 - mu_min(M_delta), mu_max(M_Delta) - 1) on the reduced Hessians.
EpsilonReport epsilon_metric(const Mat& L, const HessianBounds& bounds, const Projection& T);

struct PostScale {
    double beta = 1.0;
    Mat L;  // beta * L
};

// Scales L so the reduced spectrum is centered on 1. Throws std::runtime_error
// when the spectrum is degenerate (disconnected graph).
PostScale post_scale_beta(const Mat& L, const HessianBounds& bounds);

}  // namespace danalab
