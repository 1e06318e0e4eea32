#pragma once

#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "cyclecorr/geometry.hpp"
#include "cyclecorr/graph.hpp"

namespace cyclecorr {

/// Architecture of the per-point feature network: input lift, then one
/// {kNN grouping, shared layers, max-pool, self-attention} block per stage,
/// then a linear head. Attention runs at each stage's final width.
struct EncoderConfig {
    bool use_normals = false;
    std::size_t neighborhood_k = 16;
    std::size_t lift_width = 32;
    std::vector<std::vector<std::size_t>> stage_widths = {{32, 64}, {64, 128}};
    std::size_t attention_heads = 4;
    std::size_t out_dim = 64;
    bool normalize_output = true;
    std::uint64_t seed = 0;

    std::size_t in_dim() const { return use_normals ? 6 : 3; }
    void validate() const;
};

/// Ordered, named parameter store. Bias-flagged entries (affine and
/// layer-norm shifts) form the low-learning-rate group during training.
struct EncoderParams {
    struct Entry {
        std::string name;
        Tensor value;
        bool is_bias = false;
    };

    std::vector<Entry> entries;

    Tensor& at(std::string_view name);
    const Tensor& at(std::string_view name) const;
    std::vector<Tensor*> tensors();
    std::size_t scalar_count() const;
    void set_requires_grad(bool on);
    void zero_grads();
    bool all_finite() const;
};

/// Glorot-uniform weights (+/- sqrt(6 / (fan_in + fan_out))), zero biases,
/// unit layer-norm gains. Deterministic for a given rng state.
EncoderParams init_params(const EncoderConfig& cfg, std::mt19937_64& rng);

/// init_params seeded from cfg.seed.
EncoderParams init_params(const EncoderConfig& cfg);

/// Multi-head self-attention over all rows of x, with residual and layer
/// norm. Weight matrices are square (width x width), bias-free; heads are
/// contiguous column slices.
Graph::NodeId attention_block(Graph& g, Graph::NodeId x, Tensor& wq, Tensor& wk, Tensor& wv,
                              Tensor& wo, Tensor& ln_gain, Tensor& ln_bias, std::size_t heads);

/// Full forward pass: one 64-d (out_dim) descriptor row per input point.
/// Permutation-equivariant; rows are unit-length when normalize_output is
/// set. Gradients flow into params entries that have requires_grad.
Graph::NodeId encode(Graph& g, EncoderParams& params, const PointCloud& cloud,
                     const EncoderConfig& cfg);

/// encode on a throwaway graph, returning the feature matrix.
Tensor encode_features(EncoderParams& params, const PointCloud& cloud, const EncoderConfig& cfg);

}  // namespace cyclecorr
