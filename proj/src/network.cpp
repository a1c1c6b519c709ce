#include "danalab/network.hpp"

namespace danalab {

SyncNetwork::SyncNetwork(const Graph& g, const Mat& L)
    : nbr_(g.n()), off_(g.n()), diag_(g.n()) {
    for (int i = 0; i < g.n(); ++i) {
        diag_[i] = L(i, i);
        for (int j : g.neighbors(i)) {
            nbr_[i].push_back(j);
            off_[i].push_back(L(i, j));
        }
    }
}

Vec SyncNetwork::apply_L(const Vec& v) {
    const int n = this->n();
    Vec out(n);
    for (int i = 0; i < n; ++i) {
        double s = diag_[i] * v(i);
        for (std::size_t k = 0; k < nbr_[i].size(); ++k) s += off_[i][k] * v(nbr_[i][k]);
        out(i) = s;
        if (logging_) {
            log_.push_back({i, i});
            for (int j : nbr_[i]) log_.push_back({i, j});
        }
    }
    ++rounds_;
    return out;
}

Vec SyncNetwork::apply_LHL(const Vec& h, const Vec& v) {
    const bool was = logging_;
    logging_ = false;
    Vec w = apply_L(v);
    w.array() *= h.array();
    Vec out = apply_L(w);
    logging_ = was;
    if (logging_) {
        // agent i combines values owned by neighbors of its neighbors
        for (int i = 0; i < n(); ++i) {
            log_.push_back({i, i});
            for (int k : nbr_[i]) {
                log_.push_back({i, k});
                for (int j : nbr_[k]) log_.push_back({i, j});
            }
        }
    }
    return out;
}

}  // namespace danalab
