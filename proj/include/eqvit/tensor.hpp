// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "eqvit/ndarray.hpp"

namespace eqvit {

struct TensorNode {
  NdArray value;
  NdArray grad;  // same shape, zero-initialized
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates contributions into the parents.
  std::function<void(TensorNode&)> backprop;

  bool is_leaf() const { return parents.empty(); }
};

// Handle to a node in a reverse-mode differentiation graph. Values are
// immutable once wrapped; gradients accumulate across backward calls until
// explicitly reset.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor leaf(NdArray value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const NdArray& value() const { return node_->value; }
  // For optimizers and checkpoint loading, between graph builds only; values
  // are immutable while a graph references them.
  NdArray& mutable_value() const { return node_->value; }
  // Tensor is a shared handle; gradient storage stays writable through it.
  NdArray& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  const std::vector<int64_t>& shape() const { return node_->value.shape(); }
  void zero_grad() { node_->grad.fill(0.0); }
  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Reverse accumulation from a scalar-shaped root. Interior gradients are
// recomputed per call; leaf gradients accumulate until reset.
void backward(const Tensor& root);

// Elementwise and scalar ops.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor sqrt_elem(const Tensor& a);
Tensor gelu(const Tensor& a);

// Linear algebra and reductions.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2(const Tensor& a);
Tensor softmax_lastdim(const Tensor& x);
std::pair<Tensor, Tensor> mean_var_lastdim(const Tensor& x);
Tensor mean_axis(const Tensor& x, int64_t axis);
Tensor sum_all(const Tensor& x);
Tensor softmax_cross_entropy(const Tensor& logits, int64_t label);

// Valid (unpadded) 2D convolution, channels-last: x is H x W x Cin, kernel is
// kh x kw x Cin x Cout. Supported modes: stride == kernel size (patchify) and
// stride 1.
Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride);

// Shape and indexing ops.
Tensor reshape(const Tensor& x, std::vector<int64_t> shape);
Tensor permute_axes(const Tensor& x, std::vector<int64_t> perm);
Tensor slice(const Tensor& x, std::vector<int64_t> starts, std::vector<int64_t> stops);
Tensor slice_axis(const Tensor& x, int64_t axis, int64_t start, int64_t stop);
Tensor concat(const std::vector<Tensor>& parts, int64_t axis);
Tensor gather_rows(const Tensor& table, std::vector<int64_t> indices);

// Spatial ops on the first two axes.
Tensor rot90_spatial(const Tensor& x, int quarter_turns);
Tensor flip_spatial(const Tensor& x, int axis);
Tensor stride_sample(const Tensor& x, int stride);
// Sub-pixel rearrangement, channels-last: H x W x (r*r*n) -> rH x rW x n.
// Channel block index u*r + v maps to sub-pixel offset (u, v).
Tensor pixel_shuffle(const Tensor& x, int r);

// Explicit broadcast helpers (the only broadcasting the engine provides).
Tensor bcast_sub_lastdim(const Tensor& x, const Tensor& v);  // v: x.shape minus last
Tensor bcast_div_lastdim(const Tensor& x, const Tensor& v);
Tensor mul_lastvec(const Tensor& x, const Tensor& v);        // v: {last extent}
Tensor add_lastvec(const Tensor& x, const Tensor& v);
// (..., c) -> (..., c*t), each entry repeated t times consecutively.
Tensor expand_group_channels(const Tensor& x, int t);

}  // namespace eqvit
