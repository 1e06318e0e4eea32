#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "cyclecorr/tensor.hpp"

namespace cyclecorr {

enum class Axis { Rows, Cols };

/// Reverse-mode autodiff tape over Tensor values.
///
/// Builders evaluate eagerly: the forward value of every node is available as
/// soon as the node is created, and the tape records how to push adjoints
/// back through it. Node inputs always precede the node itself, so a single
/// reverse sweep in `backward` visits them in a valid order.
///
/// Graphs are independent: separate instances may be evaluated on separate
/// threads. A single graph is not thread-safe.
class Graph {
public:
    using NodeId = std::int32_t;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Register a leaf tensor. Gradients accumulate into `leaf.grad()` if
    /// `leaf.requires_grad` is set. Repeated calls with the same tensor
    /// return the same node.
    NodeId input(Tensor& leaf);

    /// Untracked value; no gradient flows into it.
    NodeId constant(Tensor value);

    /// Re-enter a node's value as a fresh constant, cutting gradient flow.
    NodeId detach(NodeId a);

    const Tensor& value(NodeId id) const { return nodes_[check(id)].value; }
    std::size_t node_count() const { return nodes_.size(); }
    std::vector<NodeId> inputs_of(NodeId id) const;

    // ---- op catalog ----
    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId a);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);
    /// matrix (r x c) plus row vector (c), broadcast over rows
    NodeId add_rowvec(NodeId a, NodeId v);
    NodeId scale(NodeId a, double c);
    NodeId exp(NodeId a);
    NodeId log(NodeId a);
    NodeId relu(NodeId a);
    NodeId abs(NodeId a);
    /// Gather rows of a (R x C) matrix: flat row list -> (n x C).
    NodeId gather_rows(NodeId a, const std::vector<std::size_t>& rows);
    /// Gather neighbor groups: index table (n rows, k columns, flattened
    /// row-major) -> (n, k, C) tensor.
    NodeId gather_groups(NodeId a, const std::vector<std::size_t>& table,
                         std::size_t n, std::size_t k);
    /// (n, k, C) -> (n, C), max over the middle (neighbor) axis.
    NodeId max_pool_groups(NodeId a);
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);
    /// Per-row normalization with learnable gain/bias vectors (length = cols).
    NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps = 1e-5);
    /// softmax(x / tau) along the chosen axis.
    NodeId softmax(NodeId x, double tau, Axis axis = Axis::Rows);
    /// Divide each row / column by its sum (sum must be nonzero).
    NodeId row_normalize(NodeId a);
    NodeId col_normalize(NodeId a);
    /// Scale each row to unit Euclidean norm.
    NodeId l2_normalize_rows(NodeId a);
    NodeId slice_cols(NodeId a, std::size_t first, std::size_t width);
    /// Concatenate along the last axis; leading dims must match. 2-D or 3-D.
    NodeId concat_cols(std::span<const NodeId> parts);
    NodeId reshape(NodeId a, std::vector<std::size_t> shape);

    /// Reverse accumulation from a scalar loss. Adds into the grad buffers of
    /// all tracked leaves. Deterministic: identical inputs give bitwise-equal
    /// gradients.
    void backward(NodeId loss);

private:
    struct Node {
        Tensor value;
        std::vector<NodeId> inputs;
        std::function<void(Graph&, NodeId)> backprop;  // reads adj(self), adds to inputs
        Tensor* leaf = nullptr;
        bool needs_grad = false;
    };

    NodeId check(NodeId id) const;
    NodeId emplace(Tensor value, std::vector<NodeId> inputs,
                   std::function<void(Graph&, NodeId)> backprop);
    bool any_needs_grad(const std::vector<NodeId>& ids) const;

    /// Adjoint buffer for a node, allocated as zeros on first access.
    Tensor& adj(NodeId id);
    bool has_adj(NodeId id) const;

    std::vector<Node> nodes_;
    std::vector<Tensor> adjoints_;
    std::unordered_map<const Tensor*, NodeId> leaf_ids_;
};

/// A differentiable program: returns the loss value; when `accumulate_grads`
/// is set it must also run backward so parameter grad buffers are filled.
using LossProgram = std::function<double(bool accumulate_grads)>;

/// Compare analytic gradients against central finite differences on a random
/// subsample of parameter entries. Returns the max of
/// |a - n| / max(1e-8, |a| + |n|). Throws on non-finite values.
double grad_check(const LossProgram& program, std::span<Tensor* const> params,
                  double eps = 1e-5, std::size_t samples = 100,
                  std::uint64_t seed = 0);

}  // namespace cyclecorr
