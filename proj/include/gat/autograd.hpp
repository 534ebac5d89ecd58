#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "gat/tensor.hpp"

namespace gat::ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One tape node: a value plus the recipe for pushing its gradient to its
// parents. Graphs are built per forward pass and discarded after backward().
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool leaf = true;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  Tensor& ensure_grad();
  void accumulate(const Tensor& g);
};

NodePtr leaf(Tensor value, bool requires_grad = false);
NodePtr constant(Tensor value);
NodePtr constant_scalar(double v);

// While a guard is alive, ops compute values only and record no tape.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Generic extension point: value plus explicit parents and backward hook.
NodePtr make_op(Tensor value, std::vector<NodePtr> parents,
                std::function<void(Node&)> backward);

// ---- elementwise ----
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr div(const NodePtr& a, const NodePtr& b);
NodePtr scale(const NodePtr& x, double k);
NodePtr affine(const NodePtr& x, double k, double b);  // k*x + b
NodePtr silu(const NodePtr& x);
NodePtr softplus(const NodePtr& x);
NodePtr sqrt_elem(const NodePtr& x);

// ---- broadcast over the channel (last) dimension ----
NodePtr add_channels(const NodePtr& x, const NodePtr& b);  // x: [.., C], b: [C]
NodePtr mul_channels(const NodePtr& x, const NodePtr& v);  // x: [.., C], v: [C]
// Per-sample channel gate: x [B, T, C] * g [B, C], broadcast over T.
NodePtr mul_gate(const NodePtr& x, const NodePtr& g);

// ---- linear algebra ----
// x: [..., K] flattened to rows, w: [K, N] -> [..., N].
NodePtr matmul(const NodePtr& x, const NodePtr& w);
// matmul plus bias in one tape node: x [..., K], w [K, N], b [N].
NodePtr linear(const NodePtr& x, const NodePtr& w, const NodePtr& b);
// a: [G, M, K], b: [G, K, N] (pre-transpose shapes) -> [G, M, N].
NodePtr bmm(const NodePtr& a, const NodePtr& b, bool trans_a = false,
            bool trans_b = false);

// ---- shape ----
NodePtr reshape(const NodePtr& x, std::vector<int> shape);
NodePtr transpose_12(const NodePtr& x);  // [A, B, C, D] -> [A, C, B, D]
// Pull section s of a packed per-token projection [B, T, S*H*hd] out as
// per-head rows [B, H, T, hd]; head_merge is the inverse for S = 1.
NodePtr head_split(const NodePtr& x, int section, int sections, int heads);
NodePtr head_merge(const NodePtr& x);  // [B, H, T, hd] -> [B, T, H*hd]
NodePtr slice_last(const NodePtr& x, int start, int len);
NodePtr slice_dim1(const NodePtr& x, int start, int len);
NodePtr concat_last(const NodePtr& a, const NodePtr& b);
NodePtr concat_dim1(const std::vector<NodePtr>& xs);
// v: [C] or [1, C] replicated to [n, C]; gradient sums over rows.
NodePtr repeat_rows(const NodePtr& v, int n);

// ---- reductions / rows ----
NodePtr sum_all(const NodePtr& x);   // -> [1]
NodePtr mean_all(const NodePtr& x);  // -> [1]
// Row-wise dot over the last dim: [.., C] x [.., C] -> [..].
NodePtr row_dot(const NodePtr& a, const NodePtr& b);

// ---- softmax / normalization ----
NodePtr softmax_last(const NodePtr& x);
NodePtr rms_norm_last(const NodePtr& x, double eps);

// ---- positions ----
// x: [B, H, T, D]; cos/sin: [T, D/2] rotation tables (row t, pair j).
NodePtr rope(const NodePtr& x, const Tensor& cos_tab, const Tensor& sin_tab);

// ---- patch <-> image (pure permutations) ----
// x: [B, C, H, W] -> [B, N, C*p*p], N = (H/p)*(W/p), raster patch order,
// channel-major within a patch.
NodePtr patches_from_image(const NodePtr& x, int p);
// Inverse of patches_from_image for C channels and HxW output.
NodePtr image_from_patches(const NodePtr& x, int p, int c, int h, int w);

// ---- lookup ----
// table: [V, E], ids in [0, V) -> [B, E]; gradient scatter-adds into table.
NodePtr embed_rows(const NodePtr& table, const std::vector<int>& ids);

// Seeds d(root)/d(root) = 1 and runs the tape in reverse topological order.
// Non-leaf values and grads are released as soon as they are consumed.
void backward(const NodePtr& root);

}  // namespace gat::ag
