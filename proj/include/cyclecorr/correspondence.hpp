#pragma once

#include <vector>

#include "cyclecorr/graph.hpp"

namespace cyclecorr {

/// Softmax sharpness for turning feature inner products into correspondence
/// rows. Features are unit-length, so logits live in [-1/tau, 1/tau].
inline constexpr double kCorrespondenceTau = 0.07;

/// Truncated Sinkhorn schedule. `stop_gradient` freezes the normalized
/// matrix when it appears as a regularization target, for ablation.
struct SinkhornConfig {
    double temperature = 0.3;
    std::size_t iterations = 30;
    bool stop_gradient = false;

    void validate() const;
};

struct LossWeights {
    double cycle = 1.0;
    double rigid = 1.0;
    double sinkhorn = 0.06;

    void validate() const;
};

/// Weights used when fine-tuning for rigid registration: nearly all emphasis
/// on the transform term.
inline LossWeights registration_weights() { return {1e-4, 1.0, 0.06}; }

// Correspondence matrices are row-stochastic: row k of
// soft_correspondence(F_src, F_tgt) distributes source point k over the
// target points. Chained products stay row-stochastic, so the 3-hop cycle
// P -> Q -> P' -> P is the plain product C1 * C2 * C3.

/// softmax over rows of (F_src * F_tgt^T) / tau.
Graph::NodeId soft_correspondence(Graph& g, Graph::NodeId f_src, Graph::NodeId f_tgt,
                                  double tau = kCorrespondenceTau);

/// Two-hop map source -> intermediate -> back: C1 (N x M) times C2 (M x N).
Graph::NodeId compose_cycle(Graph& g, Graph::NodeId c1, Graph::NodeId c2);

/// Full cycle including the third edge.
Graph::NodeId compose_cycle(Graph& g, Graph::NodeId c1, Graph::NodeId c2, Graph::NodeId c3);

/// Sum of |D (x) C|: mass placed on distant points, weighted by how far they
/// are. Zero exactly when C is concentrated on the zero-distance diagonal.
Graph::NodeId distance_weighted_mass(Graph& g, Graph::NodeId dist, Graph::NodeId corr);

/// Row softmax of C / t, then `iterations` alternating column and row
/// normalization passes, ending on a row pass: returned rows sum to 1 to
/// machine precision, column sums converge as iterations grow.
Graph::NodeId sinkhorn_normalize(Graph& g, Graph::NodeId c, const SinkhornConfig& cfg);

/// Sum of |C - SH(C)|; pulls C toward a doubly stochastic (near-bijective)
/// map. Gradient flows through the unrolled normalization unless
/// cfg.stop_gradient is set.
Graph::NodeId sinkhorn_loss(Graph& g, Graph::NodeId c12, const SinkhornConfig& cfg);

/// weights.cycle * lc + weights.rigid * lr + weights.sinkhorn * ls.
Graph::NodeId total_loss(Graph& g, Graph::NodeId lc, Graph::NodeId lr, Graph::NodeId ls,
                         const LossWeights& weights);

// unrecorded (no-gradient) counterparts for evaluation paths

Tensor soft_correspondence(const Tensor& f_src, const Tensor& f_tgt,
                           double tau = kCorrespondenceTau);
Tensor sinkhorn_normalize(const Tensor& c, const SinkhornConfig& cfg);
double cycle_loss(const Tensor& dist, const Tensor& c12);
double rigid_loss(const Tensor& dist, const Tensor& c3);
double sinkhorn_loss(const Tensor& c12, const SinkhornConfig& cfg);
double total_loss(double lc, double lr, double ls, const LossWeights& weights);

/// Per-row argmax, ties to the lower index.
std::vector<std::size_t> hard_correspondence(const Tensor& c);

}  // namespace cyclecorr
