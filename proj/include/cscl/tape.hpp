#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cscl/mat.hpp"
#include "cscl/rng.hpp"

namespace cscl {

/// Reverse-mode autodiff over Mat values. Nodes are appended in topological
/// order during the forward pass; backward() walks them in reverse and
/// accumulates gradients. One tape per training batch.
using NodeId = int;

class Tape {
public:

    /// Leaf that does not require gradients (inputs, masks, positional rows).
    NodeId constant(Mat value);

    /// Leaf that accumulates gradients (model parameters).
    NodeId param(const Mat& value);

    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId a);
    NodeId add(NodeId a, NodeId b);
    /// Adds row vector b (1 x cols) to every row of a.
    NodeId add_rowvec(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId hadamard(NodeId a, NodeId b);
    NodeId softmax_rows(NodeId a);
    NodeId layernorm_rows(NodeId x, NodeId gain, NodeId bias);
    NodeId gelu(NodeId a);
    NodeId slice_cols(NodeId a, size_t c0, size_t c1);
    NodeId concat_cols(const std::vector<NodeId>& parts);
    NodeId concat_rows(const std::vector<NodeId>& parts);
    /// Rows of e indexed by ids (embedding lookup).
    NodeId gather_rows(NodeId e, std::vector<size_t> ids);
    /// One element per row: out[t,0] = a[t, ids[t]].
    NodeId select_cols_per_row(NodeId a, std::vector<size_t> ids);
    /// Unit-L2 rows; throws on a zero-norm row.
    NodeId normalize_rows(NodeId a);
    /// Row-wise log(sum(exp)), (rows x 1) output.
    NodeId logsumexp_rows(NodeId a);
    NodeId sum_all(NodeId a);
    /// Inverted-dropout mask drawn from rng at construction.
    NodeId dropout(NodeId a, double rate, Rng& rng);

    /// Custom node: forward value plus per-parent cached gradients
    /// d(out_scalar)/d(parent) supplied by the caller (used for the
    /// contrastive loss, whose gradient has a stable closed form).
    NodeId custom_scalar(double value, const std::vector<NodeId>& parents,
                         std::vector<Mat> parent_grads);

    /// Seeds d(loss)/d(loss) = 1 and runs the reverse sweep. loss must be 1x1.
    void backward(NodeId loss);

    const Mat& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
    const Mat& grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].grad; }
    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;
        bool requires_grad = false;
        std::function<void(Tape&, const Mat&)> backward;  // receives upstream grad
    };

    NodeId push(Mat value, bool requires_grad, std::function<void(Tape&, const Mat&)> bw);
    void accumulate(NodeId id, const Mat& g);
    bool needs_grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

    std::vector<Node> nodes_;
};

}  // namespace cscl
