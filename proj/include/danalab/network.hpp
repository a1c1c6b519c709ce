#pragma once

#include <utility>
#include <vector>

#include "danalab/graph.hpp"

namespace danalab {

// Synchronous message-passing view of a weighted Laplacian. Every product is
// assembled per agent from neighbor-owned values only. When logging is on,
// each (reader, owner) pair that contributes to a product is recorded.
class SyncNetwork {
public:
    // L must be a (possibly scaled) Laplacian of g.
    SyncNetwork(const Graph& g, const Mat& L);

    int n() const { return static_cast<int>(diag_.size()); }

    // (L v)_i from 1-hop values.
    Vec apply_L(const Vec& v);
    // (L diag(h) L v)_i from 2-hop values.
    Vec apply_LHL(const Vec& h, const Vec& v);

    void set_logging(bool on) { logging_ = on; }
    const std::vector<std::pair<int, int>>& access_log() const { return log_; }
    void clear_log() { log_.clear(); }
    long rounds() const { return rounds_; }

private:
    std::vector<std::vector<int>> nbr_;
    std::vector<std::vector<double>> off_;  // L_ij for j in nbr_[i]
    std::vector<double> diag_;
    bool logging_ = false;
    std::vector<std::pair<int, int>> log_;
    long rounds_ = 0;
};

}  // namespace danalab
