#include "cyclecorr/correspondence.hpp"

#include <cmath>
#include <stdexcept>

namespace cyclecorr {

void SinkhornConfig::validate() const {
    if (!(temperature > 0.0))
        throw std::invalid_argument("SinkhornConfig: temperature must be positive");
    if (iterations < 1) throw std::invalid_argument("SinkhornConfig: iterations must be >= 1");
}

void LossWeights::validate() const {
    if (!(cycle >= 0.0) || !(rigid >= 0.0) || !(sinkhorn >= 0.0) || !std::isfinite(cycle) ||
        !std::isfinite(rigid) || !std::isfinite(sinkhorn))
        throw std::invalid_argument("LossWeights: weights must be finite and nonnegative");
}

Graph::NodeId soft_correspondence(Graph& g, Graph::NodeId f_src, Graph::NodeId f_tgt,
                                  double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("soft_correspondence: tau must be positive");
    if (!g.value(f_src).all_finite() || !g.value(f_tgt).all_finite())
        throw std::invalid_argument("soft_correspondence: non-finite features");
    return g.softmax(g.matmul(f_src, g.transpose(f_tgt)), tau, Axis::Rows);
}

Graph::NodeId compose_cycle(Graph& g, Graph::NodeId c1, Graph::NodeId c2) {
    return g.matmul(c1, c2);
}

Graph::NodeId compose_cycle(Graph& g, Graph::NodeId c1, Graph::NodeId c2, Graph::NodeId c3) {
    return g.matmul(g.matmul(c1, c2), c3);
}

Graph::NodeId distance_weighted_mass(Graph& g, Graph::NodeId dist, Graph::NodeId corr) {
    return g.sum(g.abs(g.mul(dist, corr)));
}

Graph::NodeId sinkhorn_normalize(Graph& g, Graph::NodeId c, const SinkhornConfig& cfg) {
    cfg.validate();
    const Tensor& cv = g.value(c);
    if (cv.ndim() != 2 || cv.dim(0) != cv.dim(1))
        throw std::invalid_argument("sinkhorn_normalize: matrix must be square");
    Graph::NodeId x = g.softmax(c, cfg.temperature, Axis::Rows);
    for (std::size_t i = 0; i < cfg.iterations; ++i) {
        x = g.col_normalize(x);
        x = g.row_normalize(x);
    }
    return x;
}

Graph::NodeId sinkhorn_loss(Graph& g, Graph::NodeId c12, const SinkhornConfig& cfg) {
    Graph::NodeId sh = sinkhorn_normalize(g, c12, cfg);
    if (cfg.stop_gradient) sh = g.detach(sh);
    return g.sum(g.abs(g.sub(c12, sh)));
}

Graph::NodeId total_loss(Graph& g, Graph::NodeId lc, Graph::NodeId lr, Graph::NodeId ls,
                         const LossWeights& weights) {
    weights.validate();
    return g.add(g.add(g.scale(lc, weights.cycle), g.scale(lr, weights.rigid)),
                 g.scale(ls, weights.sinkhorn));
}

Tensor soft_correspondence(const Tensor& f_src, const Tensor& f_tgt, double tau) {
    Graph g;
    return g.value(soft_correspondence(g, g.constant(f_src), g.constant(f_tgt), tau));
}

Tensor sinkhorn_normalize(const Tensor& c, const SinkhornConfig& cfg) {
    Graph g;
    return g.value(sinkhorn_normalize(g, g.constant(c), cfg));
}

double cycle_loss(const Tensor& dist, const Tensor& c12) {
    Graph g;
    return g.value(distance_weighted_mass(g, g.constant(dist), g.constant(c12))).item();
}

double rigid_loss(const Tensor& dist, const Tensor& c3) { return cycle_loss(dist, c3); }

double sinkhorn_loss(const Tensor& c12, const SinkhornConfig& cfg) {
    Graph g;
    return g.value(sinkhorn_loss(g, g.constant(c12), cfg)).item();
}

double total_loss(double lc, double lr, double ls, const LossWeights& weights) {
    weights.validate();
    return weights.cycle * lc + weights.rigid * lr + weights.sinkhorn * ls;
}

std::vector<std::size_t> hard_correspondence(const Tensor& c) {
    if (c.ndim() != 2) throw std::invalid_argument("hard_correspondence: expected a matrix");
    const std::size_t r = c.dim(0), cols = c.dim(1);
    std::vector<std::size_t> out(r);
    for (std::size_t i = 0; i < r; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < cols; ++j)
            if (c(i, j) > c(i, best)) best = j;
        out[i] = best;
    }
    return out;
}

}  // namespace cyclecorr
