#pragma once

#include <functional>
#include <vector>

#include "histplan/tensor.hpp"

namespace histplan {

/// Define-by-run gradient tape. Operations append nodes in execution order,
/// which is a topological order by construction; backward() walks the record
/// once in reverse. A tape is single-threaded and rebuilt per forward pass.
class Tape {
public:
    using BackFn = std::function<void(Tape&, const std::vector<double>&)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Mark a tensor as a trainable leaf. Its gradient is exactly zero unless
    /// some path connects it to the loss.
    int watch(Tensor& t);

    /// Append an op node; returns its id. Used by the op implementations.
    int emit(std::int64_t numel, BackFn fn);

    /// Add a gradient contribution into a node's buffer. node < 0 (a constant
    /// input) is a no-op.
    void accumulate(int node, const double* g, std::int64_t n);

    /// Reverse pass from a scalar loss. Each reached node is visited exactly
    /// once; callable once per tape.
    void backward(const Tensor& loss);

    /// Gradient of an attached tensor after backward(); zeros if no path
    /// reached it.
    std::vector<double> grad_of(const Tensor& t) const;

    std::size_t node_count() const { return nodes_.size(); }
    bool backward_done() const { return backward_done_; }

private:
    struct Node {
        std::int64_t numel = 0;
        BackFn fn;                  // empty for leaves
        std::vector<double> grad;   // allocated on first contribution
    };
    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

// ---- op set (closed): everything the planner's forward pass needs. ----
// Each op validates shapes, computes forward values, verifies the result is
// finite, and (when an input is attached to a tape) appends a node carrying
// the backward rule.

Tensor matmul(const Tensor& a, const Tensor& b);
/// Element-wise sum; also accepts [n x d] + [1 x d] (bias broadcast over rows).
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
/// Row-wise softmax, stabilized by row-max subtraction.
Tensor softmax_rows(const Tensor& a);
/// Per-row normalization over the last dimension, then affine. eps = 1e-5.
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias);
Tensor gelu(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::int64_t r0, std::int64_t nrows);
Tensor slice_cols(const Tensor& a, std::int64_t c0, std::int64_t ncols);
Tensor mean_rows(const Tensor& a);
Tensor sum_all(const Tensor& a);
/// Mean of scalar tensors (batch-loss reduction).
Tensor mean_of(const std::vector<Tensor>& scalars);
/// Row lookup: table [V x d], ids in [0, V) -> [len(ids) x d].
Tensor embedding(const Tensor& table, const std::vector<int>& ids);
/// Negative log-softmax of the target logit; logits are a single row.
Tensor cross_entropy(const Tensor& logits, int target);

}  // namespace histplan
