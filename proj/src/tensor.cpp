// SPDX-License-Identifier: Apache-2.0
#include "eqvit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace eqvit {

namespace {

Precision result_prec(std::initializer_list<const Tensor*> inputs) {
  for (const Tensor* t : inputs)
    if ((*t).value().precision() == Precision::f32) return Precision::f32;
  return Precision::f64;
}

Tensor make_op(NdArray value, std::vector<Tensor> inputs,
               std::function<void(TensorNode&)> backprop) {
  auto node = std::make_shared<TensorNode>();
  value.quantize();
  node->grad = NdArray::zeros_like(value);
  node->value = std::move(value);
  for (const Tensor& t : inputs) {
    node->parents.push_back(t.node());
    node->requires_grad = node->requires_grad || t.requires_grad();
  }
  if (node->requires_grad) node->backprop = std::move(backprop);
  return Tensor(node);
}

void check_same_shape(const NdArray& a, const NdArray& b, const char* op) {
  if (!same_shape(a, b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

bool next_index(std::vector<int64_t>& idx, const std::vector<int64_t>& shape) {
  for (size_t i = idx.size(); i-- > 0;) {
    if (++idx[i] < shape[i]) return true;
    idx[i] = 0;
  }
  return false;
}

int64_t trailing_product(const std::vector<int64_t>& shape, size_t from) {
  int64_t n = 1;
  for (size_t i = from; i < shape.size(); ++i) n *= shape[i];
  return n;
}

}  // namespace

Tensor Tensor::leaf(NdArray value, bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  value.quantize();
  node->grad = NdArray::zeros_like(value);
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Tensor(node);
}

void backward(const Tensor& root) {
  if (root.value().size() != 1)
    throw std::invalid_argument("backward: root must be scalar-shaped, got " +
                                shape_str(root.shape()));

  // Iterative post-order DFS; each node appears once, parents before children
  // in `order` reversed.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* node;
    size_t next_parent = 0;
  };
  std::vector<Frame> stack{{root.node().get()}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    Frame& frame = stack.back();
    if (frame.next_parent < frame.node->parents.size()) {
      TensorNode* parent = frame.node->parents[frame.next_parent++].get();
      if (visited.insert(parent).second) stack.push_back({parent});
    } else {
      order.push_back(frame.node);
      stack.pop_back();
    }
  }

  // Interior grads are scratch space per call; leaf grads persist.
  for (TensorNode* node : order)
    if (!node->is_leaf()) node->grad.fill(0.0);
  root.node()->grad[0] += 1.0;

  for (size_t i = order.size(); i-- > 0;) {
    TensorNode* node = order[i];
    if (node->requires_grad && node->backprop) node->backprop(*node);
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a.value(), b.value(), "add");
  NdArray out(a.value().shape(), result_prec({&a, &b}));
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_op(std::move(out), {a, b}, [a, b](TensorNode& n) {
    if (a.requires_grad())
      for (int64_t i = 0; i < n.grad.size(); ++i) a.grad()[i] += n.grad[i];
    if (b.requires_grad())
      for (int64_t i = 0; i < n.grad.size(); ++i) b.grad()[i] += n.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a.value(), b.value(), "sub");
  NdArray out(a.value().shape(), result_prec({&a, &b}));
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_op(std::move(out), {a, b}, [a, b](TensorNode& n) {
    if (a.requires_grad())
      for (int64_t i = 0; i < n.grad.size(); ++i) a.grad()[i] += n.grad[i];
    if (b.requires_grad())
      for (int64_t i = 0; i < n.grad.size(); ++i) b.grad()[i] -= n.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a.value(), b.value(), "mul");
  NdArray out(a.value().shape(), result_prec({&a, &b}));
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_op(std::move(out), {a, b}, [a, b](TensorNode& n) {
    if (a.requires_grad())
      for (int64_t i = 0; i < n.grad.size(); ++i) a.grad()[i] += n.grad[i] * b.value()[i];
    if (b.requires_grad())
      for (int64_t i = 0; i < n.grad.size(); ++i) b.grad()[i] += n.grad[i] * a.value()[i];
  });
}

Tensor scale(const Tensor& a, double c) {
  NdArray out(a.value().shape(), result_prec({&a}));
  for (int64_t i = 0; i < out.size(); ++i) out[i] = c * a.value()[i];
  return make_op(std::move(out), {a}, [a, c](TensorNode& n) {
    for (int64_t i = 0; i < n.grad.size(); ++i) a.grad()[i] += c * n.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  NdArray out(a.value().shape(), result_prec({&a}));
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + c;
  return make_op(std::move(out), {a}, [a](TensorNode& n) {
    for (int64_t i = 0; i < n.grad.size(); ++i) a.grad()[i] += n.grad[i];
  });
}

Tensor sqrt_elem(const Tensor& a) {
  NdArray out(a.value().shape(), result_prec({&a}));
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(a.value()[i]);
  NdArray vals = out;
  return make_op(std::move(out), {a}, [a, vals](TensorNode& n) {
    for (int64_t i = 0; i < n.grad.size(); ++i) a.grad()[i] += 0.5 * n.grad[i] / vals[i];
  });
}

Tensor gelu(const Tensor& a) {
  NdArray out(a.value().shape(), result_prec({&a}));
  const double inv_sqrt2 = 0.70710678118654752440;
  for (int64_t i = 0; i < out.size(); ++i) {
    double x = a.value()[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
  }
  return make_op(std::move(out), {a}, [a, inv_sqrt2](TensorNode& n) {
    const double inv_sqrt_2pi = 0.39894228040143267794;
    for (int64_t i = 0; i < n.grad.size(); ++i) {
      double x = a.value()[i];
      double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
      double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
      a.grad()[i] += n.grad[i] * (cdf + x * pdf);
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const NdArray& av = a.value();
  const NdArray& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.extent(1) != bv.extent(0))
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(av.shape()) +
                                " vs " + shape_str(bv.shape()));
  int64_t m = av.extent(0), k = av.extent(1), p = bv.extent(1);
  NdArray out({m, p}, result_prec({&a, &b}));
  for (int64_t i = 0; i < m; ++i)
    for (int64_t l = 0; l < k; ++l) {
      double ail = av[i * k + l];
      for (int64_t j = 0; j < p; ++j) out[i * p + j] += ail * bv[l * p + j];
    }
  out.quantize();
  return make_op(std::move(out), {a, b}, [a, b, m, k, p](TensorNode& n) {
    if (a.requires_grad()) {
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < p; ++j) {
          double g = n.grad[i * p + j];
          for (int64_t l = 0; l < k; ++l) a.grad()[i * k + l] += g * b.value()[l * p + j];
        }
    }
    if (b.requires_grad()) {
      for (int64_t i = 0; i < m; ++i)
        for (int64_t l = 0; l < k; ++l) {
          double av_il = a.value()[i * k + l];
          for (int64_t j = 0; j < p; ++j) b.grad()[l * p + j] += av_il * n.grad[i * p + j];
        }
    }
  });
}

Tensor transpose2(const Tensor& a) { return permute_axes(a, {1, 0}); }

Tensor softmax_lastdim(const Tensor& x) {
  const NdArray& xv = x.value();
  if (xv.rank() < 1) throw std::invalid_argument("softmax_lastdim: rank must be >= 1");
  int64_t cols = xv.extent(xv.rank() - 1);
  int64_t rows = xv.size() / std::max<int64_t>(cols, 1);
  if (cols == 0) throw std::invalid_argument("softmax_lastdim: empty last axis");
  NdArray out(xv.shape(), result_prec({&x}));
  for (int64_t r = 0; r < rows; ++r) {
    const double* src = xv.data() + r * cols;
    double* dst = out.data() + r * cols;
    double mx = src[0];
    for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, src[c]);
    double sum = 0.0;
    for (int64_t c = 0; c < cols; ++c) {
      dst[c] = std::exp(src[c] - mx);
      sum += dst[c];
    }
    for (int64_t c = 0; c < cols; ++c) dst[c] /= sum;
  }
  out.quantize();
  NdArray y = out;
  return make_op(std::move(out), {x}, [x, y, rows, cols](TensorNode& n) {
    for (int64_t r = 0; r < rows; ++r) {
      const double* yr = y.data() + r * cols;
      const double* gr = n.grad.data() + r * cols;
      double dot = 0.0;
      for (int64_t c = 0; c < cols; ++c) dot += gr[c] * yr[c];
      for (int64_t c = 0; c < cols; ++c) x.grad()[r * cols + c] += yr[c] * (gr[c] - dot);
    }
  });
}

std::pair<Tensor, Tensor> mean_var_lastdim(const Tensor& x) {
  const NdArray& xv = x.value();
  if (xv.rank() < 1) throw std::invalid_argument("mean_var_lastdim: rank must be >= 1");
  int64_t cols = xv.extent(xv.rank() - 1);
  if (cols == 0) throw std::invalid_argument("mean_var_lastdim: empty last axis");
  int64_t rows = xv.size() / cols;
  std::vector<int64_t> out_shape(xv.shape().begin(), xv.shape().end() - 1);
  Precision prec = result_prec({&x});

  NdArray mean(out_shape, prec), var(out_shape, prec);
  for (int64_t r = 0; r < rows; ++r) {
    const double* src = xv.data() + r * cols;
    double m = 0.0;
    for (int64_t c = 0; c < cols; ++c) m += src[c];
    m /= static_cast<double>(cols);
    double v = 0.0;
    for (int64_t c = 0; c < cols; ++c) v += (src[c] - m) * (src[c] - m);
    mean[r] = m;
    var[r] = v / static_cast<double>(cols);
  }
  mean.quantize();
  var.quantize();

  NdArray mean_copy = mean;
  Tensor mean_t = make_op(std::move(mean), {x}, [x, rows, cols](TensorNode& n) {
    double inv = 1.0 / static_cast<double>(cols);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) x.grad()[r * cols + c] += n.grad[r] * inv;
  });
  Tensor var_t = make_op(std::move(var), {x}, [x, mean_copy, rows, cols](TensorNode& n) {
    double inv = 2.0 / static_cast<double>(cols);
    for (int64_t r = 0; r < rows; ++r) {
      double m = mean_copy[r];
      for (int64_t c = 0; c < cols; ++c)
        x.grad()[r * cols + c] += n.grad[r] * inv * (x.value()[r * cols + c] - m);
    }
  });
  return {mean_t, var_t};
}

Tensor mean_axis(const Tensor& x, int64_t axis) {
  const NdArray& xv = x.value();
  if (axis < 0 || axis >= xv.rank())
    throw std::invalid_argument("mean_axis: axis " + std::to_string(axis) +
                                " out of range for shape " + shape_str(xv.shape()));
  std::vector<int64_t> out_shape;
  for (int64_t i = 0; i < xv.rank(); ++i)
    if (i != axis) out_shape.push_back(xv.extent(i));
  int64_t n_axis = xv.extent(axis);
  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= xv.extent(i);
  for (int64_t i = axis + 1; i < xv.rank(); ++i) inner *= xv.extent(i);

  NdArray out(out_shape, result_prec({&x}));
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t a = 0; a < n_axis; ++a)
      for (int64_t i = 0; i < inner; ++i)
        out[o * inner + i] += xv[(o * n_axis + a) * inner + i];
  double inv = n_axis > 0 ? 1.0 / static_cast<double>(n_axis) : 0.0;
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= inv;
  out.quantize();
  return make_op(std::move(out), {x}, [x, outer, n_axis, inner, inv](TensorNode& n) {
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t a = 0; a < n_axis; ++a)
        for (int64_t i = 0; i < inner; ++i)
          x.grad()[(o * n_axis + a) * inner + i] += n.grad[o * inner + i] * inv;
  });
}

Tensor sum_all(const Tensor& x) {
  NdArray out(std::vector<int64_t>{}, result_prec({&x}));
  double s = 0.0;
  for (int64_t i = 0; i < x.value().size(); ++i) s += x.value()[i];
  out[0] = s;
  out.quantize();
  return make_op(std::move(out), {x}, [x](TensorNode& n) {
    double g = n.grad[0];
    for (int64_t i = 0; i < x.grad().size(); ++i) x.grad()[i] += g;
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, int64_t label) {
  const NdArray& xv = logits.value();
  if (xv.rank() != 1)
    throw std::invalid_argument("softmax_cross_entropy: logits must be rank 1, got " +
                                shape_str(xv.shape()));
  int64_t k = xv.extent(0);
  if (label < 0 || label >= k)
    throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) +
                                " out of range for " + std::to_string(k) + " classes");
  double mx = xv[0];
  for (int64_t i = 1; i < k; ++i) mx = std::max(mx, xv[i]);
  double sum = 0.0;
  for (int64_t i = 0; i < k; ++i) sum += std::exp(xv[i] - mx);
  double lse = mx + std::log(sum);
  NdArray out(std::vector<int64_t>{}, result_prec({&logits}));
  out[0] = lse - xv[label];
  out.quantize();
  return make_op(std::move(out), {logits}, [logits, label, mx, sum, k](TensorNode& n) {
    double g = n.grad[0];
    for (int64_t i = 0; i < k; ++i) {
      double p = std::exp(logits.value()[i] - mx) / sum;
      logits.grad()[i] += g * (p - (i == label ? 1.0 : 0.0));
    }
  });
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride) {
  const NdArray& xv = x.value();
  const NdArray& kv = kernel.value();
  if (xv.rank() != 3 || kv.rank() != 4)
    throw std::invalid_argument("conv2d: expected x rank 3 (H x W x Cin) and kernel rank 4"
                                " (kh x kw x Cin x Cout), got " + shape_str(xv.shape()) +
                                " and " + shape_str(kv.shape()));
  int64_t h = xv.extent(0), w = xv.extent(1), cin = xv.extent(2);
  int64_t kh = kv.extent(0), kw = kv.extent(1);
  if (kv.extent(2) != cin)
    throw std::invalid_argument("conv2d: input channels " + std::to_string(cin) +
                                " do not match kernel " + shape_str(kv.shape()));
  int64_t cout = kv.extent(3);
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (stride != 1 && (kh != stride || kw != stride))
    throw std::invalid_argument("conv2d: supported modes are stride 1 or "
                                "stride == kernel size; got stride " +
                                std::to_string(stride) + " kernel " + shape_str(kv.shape()));
  if ((h - kh) % stride != 0 || (w - kw) % stride != 0 || h < kh || w < kw)
    throw std::invalid_argument("conv2d: extents " + shape_str(xv.shape()) +
                                " not tileable by kernel " + shape_str(kv.shape()) +
                                " at stride " + std::to_string(stride));
  int64_t oh = (h - kh) / stride + 1, ow = (w - kw) / stride + 1;

  NdArray out({oh, ow, cout}, result_prec({&x, &kernel}));
  for (int64_t oi = 0; oi < oh; ++oi)
    for (int64_t oj = 0; oj < ow; ++oj)
      for (int64_t u = 0; u < kh; ++u)
        for (int64_t v = 0; v < kw; ++v) {
          const double* xp = xv.data() + ((oi * stride + u) * w + (oj * stride + v)) * cin;
          const double* kp = kv.data() + (u * kw + v) * cin * cout;
          double* op = out.data() + (oi * ow + oj) * cout;
          for (int64_t ci = 0; ci < cin; ++ci)
            for (int64_t co = 0; co < cout; ++co) op[co] += xp[ci] * kp[ci * cout + co];
        }
  out.quantize();
  return make_op(std::move(out), {x, kernel},
                 [x, kernel, stride, oh, ow, kh, kw, w, cin, cout](TensorNode& n) {
    for (int64_t oi = 0; oi < oh; ++oi)
      for (int64_t oj = 0; oj < ow; ++oj)
        for (int64_t u = 0; u < kh; ++u)
          for (int64_t v = 0; v < kw; ++v) {
            int64_t xoff = ((oi * stride + u) * w + (oj * stride + v)) * cin;
            int64_t koff = (u * kw + v) * cin * cout;
            const double* gp = n.grad.data() + (oi * ow + oj) * cout;
            for (int64_t ci = 0; ci < cin; ++ci)
              for (int64_t co = 0; co < cout; ++co) {
                if (x.requires_grad())
                  x.grad()[xoff + ci] += n.grad[(oi * ow + oj) * cout + co] *
                                         kernel.value()[koff + ci * cout + co];
                if (kernel.requires_grad())
                  kernel.grad()[koff + ci * cout + co] += x.value()[xoff + ci] * gp[co];
              }
          }
  });
}

Tensor reshape(const Tensor& x, std::vector<int64_t> shape) {
  if (shape_product(shape) != x.value().size())
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                shape_str(shape));
  NdArray out(shape, result_prec({&x}));
  for (int64_t i = 0; i < out.size(); ++i) out[i] = x.value()[i];
  return make_op(std::move(out), {x}, [x](TensorNode& n) {
    for (int64_t i = 0; i < n.grad.size(); ++i) x.grad()[i] += n.grad[i];
  });
}

Tensor permute_axes(const Tensor& x, std::vector<int64_t> perm) {
  const NdArray& xv = x.value();
  if (static_cast<int64_t>(perm.size()) != xv.rank())
    throw std::invalid_argument("permute_axes: perm size " + std::to_string(perm.size()) +
                                " does not match rank of " + shape_str(xv.shape()));
  std::vector<bool> seen(perm.size(), false);
  for (int64_t p : perm) {
    if (p < 0 || p >= xv.rank() || seen[static_cast<size_t>(p)])
      throw std::invalid_argument("permute_axes: invalid permutation");
    seen[static_cast<size_t>(p)] = true;
  }
  std::vector<int64_t> out_shape(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) out_shape[i] = xv.extent(perm[i]);

  NdArray out(out_shape, result_prec({&x}));
  std::vector<int64_t> idx(perm.size(), 0);
  std::vector<int64_t> src_idx(perm.size(), 0);
  if (out.size() > 0) {
    do {
      for (size_t i = 0; i < perm.size(); ++i) src_idx[perm[i]] = idx[i];
      out.at(idx) = xv.at(src_idx);
    } while (next_index(idx, out_shape));
  }
  return make_op(std::move(out), {x}, [x, perm, out_shape](TensorNode& n) {
    std::vector<int64_t> idx(perm.size(), 0);
    std::vector<int64_t> src_idx(perm.size(), 0);
    if (n.grad.size() == 0) return;
    do {
      for (size_t i = 0; i < perm.size(); ++i) src_idx[perm[i]] = idx[i];
      x.grad().at(src_idx) += n.grad.at(idx);
    } while (next_index(idx, out_shape));
  });
}

Tensor slice(const Tensor& x, std::vector<int64_t> starts, std::vector<int64_t> stops) {
  const NdArray& xv = x.value();
  if (static_cast<int64_t>(starts.size()) != xv.rank() || starts.size() != stops.size())
    throw std::invalid_argument("slice: bounds rank does not match " + shape_str(xv.shape()));
  std::vector<int64_t> out_shape(starts.size());
  for (size_t i = 0; i < starts.size(); ++i) {
    if (starts[i] < 0 || stops[i] > xv.extent(static_cast<int64_t>(i)) || starts[i] > stops[i])
      throw std::invalid_argument("slice: bounds [" + std::to_string(starts[i]) + ", " +
                                  std::to_string(stops[i]) + ") invalid for axis " +
                                  std::to_string(i) + " of " + shape_str(xv.shape()));
    out_shape[i] = stops[i] - starts[i];
  }
  NdArray out(out_shape, result_prec({&x}));
  std::vector<int64_t> idx(out_shape.size(), 0);
  std::vector<int64_t> src(out_shape.size(), 0);
  if (out.size() > 0) {
    do {
      for (size_t i = 0; i < idx.size(); ++i) src[i] = idx[i] + starts[i];
      out.at(idx) = xv.at(src);
    } while (next_index(idx, out_shape));
  }
  return make_op(std::move(out), {x}, [x, starts, out_shape](TensorNode& n) {
    if (n.grad.size() == 0) return;
    std::vector<int64_t> idx(out_shape.size(), 0);
    std::vector<int64_t> src(out_shape.size(), 0);
    do {
      for (size_t i = 0; i < idx.size(); ++i) src[i] = idx[i] + starts[i];
      x.grad().at(src) += n.grad.at(idx);
    } while (next_index(idx, out_shape));
  });
}

Tensor slice_axis(const Tensor& x, int64_t axis, int64_t start, int64_t stop) {
  std::vector<int64_t> starts(x.value().rank(), 0);
  std::vector<int64_t> stops(x.shape());
  starts[static_cast<size_t>(axis)] = start;
  stops[static_cast<size_t>(axis)] = stop;
  return slice(x, starts, stops);
}

Tensor concat(const std::vector<Tensor>& parts, int64_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const NdArray& first = parts[0].value();
  if (axis < 0 || axis >= first.rank())
    throw std::invalid_argument("concat: axis " + std::to_string(axis) +
                                " out of range for " + shape_str(first.shape()));
  std::vector<int64_t> out_shape = first.shape();
  for (size_t p = 1; p < parts.size(); ++p) {
    const NdArray& v = parts[p].value();
    if (v.rank() != first.rank())
      throw std::invalid_argument("concat: rank mismatch " + shape_str(v.shape()) + " vs " +
                                  shape_str(first.shape()));
    for (int64_t i = 0; i < v.rank(); ++i)
      if (i != axis && v.extent(i) != first.extent(i))
        throw std::invalid_argument("concat: shape mismatch " + shape_str(v.shape()) +
                                    " vs " + shape_str(first.shape()));
    out_shape[static_cast<size_t>(axis)] += v.extent(axis);
  }

  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= first.extent(i);
  for (int64_t i = axis + 1; i < first.rank(); ++i) inner *= first.extent(i);
  int64_t total_axis = out_shape[static_cast<size_t>(axis)];

  Precision prec = Precision::f64;
  for (const Tensor& t : parts)
    if (t.value().precision() == Precision::f32) prec = Precision::f32;
  NdArray out(out_shape, prec);
  int64_t axis_off = 0;
  for (const Tensor& t : parts) {
    int64_t ext = t.value().extent(axis);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t a = 0; a < ext; ++a)
        for (int64_t i = 0; i < inner; ++i)
          out[(o * total_axis + axis_off + a) * inner + i] =
              t.value()[(o * ext + a) * inner + i];
    axis_off += ext;
  }
  auto node = std::make_shared<TensorNode>();
  out.quantize();
  node->grad = NdArray::zeros_like(out);
  node->value = std::move(out);
  for (const Tensor& t : parts) {
    node->parents.push_back(t.node());
    node->requires_grad = node->requires_grad || t.requires_grad();
  }
  if (node->requires_grad) {
    node->backprop = [parts, outer, inner, total_axis, axis](TensorNode& n) {
      int64_t off = 0;
      for (const Tensor& t : parts) {
        int64_t ext = t.value().extent(axis);
        if (t.requires_grad()) {
          for (int64_t o = 0; o < outer; ++o)
            for (int64_t a = 0; a < ext; ++a)
              for (int64_t i = 0; i < inner; ++i)
                t.grad()[(o * ext + a) * inner + i] +=
                    n.grad[(o * total_axis + off + a) * inner + i];
        }
        off += ext;
      }
    };
  }
  return Tensor(node);
}

Tensor gather_rows(const Tensor& table, std::vector<int64_t> indices) {
  const NdArray& tv = table.value();
  if (tv.rank() != 2)
    throw std::invalid_argument("gather_rows: table must be rank 2, got " +
                                shape_str(tv.shape()));
  int64_t rows = tv.extent(0), cols = tv.extent(1);
  for (int64_t idx : indices)
    if (idx < 0 || idx >= rows)
      throw std::invalid_argument("gather_rows: index " + std::to_string(idx) +
                                  " out of range for " + std::to_string(rows) + " rows");
  int64_t n = static_cast<int64_t>(indices.size());
  NdArray out({n, cols}, result_prec({&table}));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < cols; ++c) out[i * cols + c] = tv[indices[i] * cols + c];
  return make_op(std::move(out), {table}, [table, indices, cols](TensorNode& n_) {
    for (size_t i = 0; i < indices.size(); ++i)
      for (int64_t c = 0; c < cols; ++c)
        table.grad()[indices[i] * cols + c] += n_.grad[static_cast<int64_t>(i) * cols + c];
  });
}

namespace {

// Single quarter-turn: out[j][H-1-i] = in[i][j], trailing axes carried along.
Tensor rot90_once(const Tensor& x) {
  const NdArray& xv = x.value();
  if (xv.rank() < 2)
    throw std::invalid_argument("rot90_spatial: rank must be >= 2, got " +
                                shape_str(xv.shape()));
  int64_t h = xv.extent(0), w = xv.extent(1);
  int64_t rest = trailing_product(xv.shape(), 2);
  std::vector<int64_t> out_shape = xv.shape();
  out_shape[0] = w;
  out_shape[1] = h;
  NdArray out(out_shape, xv.precision());
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      const double* src = xv.data() + (i * w + j) * rest;
      double* dst = out.data() + (j * h + (h - 1 - i)) * rest;
      for (int64_t r = 0; r < rest; ++r) dst[r] = src[r];
    }
  return make_op(std::move(out), {x}, [x, h, w, rest](TensorNode& n) {
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        const double* src = n.grad.data() + (j * h + (h - 1 - i)) * rest;
        double* dst = x.grad().data() + (i * w + j) * rest;
        for (int64_t r = 0; r < rest; ++r) dst[r] += src[r];
      }
  });
}

}  // namespace

Tensor rot90_spatial(const Tensor& x, int quarter_turns) {
  int q = ((quarter_turns % 4) + 4) % 4;
  Tensor out = x;
  for (int i = 0; i < q; ++i) out = rot90_once(out);
  return out;
}

Tensor flip_spatial(const Tensor& x, int axis) {
  const NdArray& xv = x.value();
  if (xv.rank() < 2)
    throw std::invalid_argument("flip_spatial: rank must be >= 2, got " +
                                shape_str(xv.shape()));
  if (axis != 0 && axis != 1)
    throw std::invalid_argument("flip_spatial: axis must be 0 or 1");
  int64_t h = xv.extent(0), w = xv.extent(1);
  int64_t rest = trailing_product(xv.shape(), 2);
  NdArray out(xv.shape(), xv.precision());
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      int64_t oi = axis == 0 ? h - 1 - i : i;
      int64_t oj = axis == 1 ? w - 1 - j : j;
      const double* src = xv.data() + (i * w + j) * rest;
      double* dst = out.data() + (oi * w + oj) * rest;
      for (int64_t r = 0; r < rest; ++r) dst[r] = src[r];
    }
  return make_op(std::move(out), {x}, [x, h, w, rest, axis](TensorNode& n) {
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        int64_t oi = axis == 0 ? h - 1 - i : i;
        int64_t oj = axis == 1 ? w - 1 - j : j;
        const double* src = n.grad.data() + (oi * w + oj) * rest;
        double* dst = x.grad().data() + (i * w + j) * rest;
        for (int64_t r = 0; r < rest; ++r) dst[r] += src[r];
      }
  });
}

Tensor stride_sample(const Tensor& x, int stride) {
  const NdArray& xv = x.value();
  if (xv.rank() < 2)
    throw std::invalid_argument("stride_sample: rank must be >= 2, got " +
                                shape_str(xv.shape()));
  if (stride < 1) throw std::invalid_argument("stride_sample: stride must be >= 1");
  int64_t h = xv.extent(0), w = xv.extent(1);
  if (h % stride != 0 || w % stride != 0)
    throw std::invalid_argument("stride_sample: extents " + shape_str(xv.shape()) +
                                " not divisible by stride " + std::to_string(stride));
  int64_t oh = h / stride, ow = w / stride;
  int64_t rest = trailing_product(xv.shape(), 2);
  std::vector<int64_t> out_shape = xv.shape();
  out_shape[0] = oh;
  out_shape[1] = ow;
  NdArray out(out_shape, xv.precision());
  for (int64_t i = 0; i < oh; ++i)
    for (int64_t j = 0; j < ow; ++j) {
      const double* src = xv.data() + ((i * stride) * w + j * stride) * rest;
      double* dst = out.data() + (i * ow + j) * rest;
      for (int64_t r = 0; r < rest; ++r) dst[r] = src[r];
    }
  return make_op(std::move(out), {x}, [x, oh, ow, w, stride, rest](TensorNode& n) {
    for (int64_t i = 0; i < oh; ++i)
      for (int64_t j = 0; j < ow; ++j) {
        const double* src = n.grad.data() + (i * ow + j) * rest;
        double* dst = x.grad().data() + ((i * stride) * w + j * stride) * rest;
        for (int64_t r = 0; r < rest; ++r) dst[r] += src[r];
      }
  });
}

Tensor pixel_shuffle(const Tensor& x, int r) {
  const NdArray& xv = x.value();
  if (xv.rank() != 3)
    throw std::invalid_argument("pixel_shuffle: expected H x W x C, got " +
                                shape_str(xv.shape()));
  if (r < 1) throw std::invalid_argument("pixel_shuffle: factor must be >= 1");
  int64_t h = xv.extent(0), w = xv.extent(1), c = xv.extent(2);
  int64_t r2 = static_cast<int64_t>(r) * r;
  if (c % r2 != 0)
    throw std::invalid_argument("pixel_shuffle: channels " + std::to_string(c) +
                                " not divisible by r^2 = " + std::to_string(r2));
  int64_t n = c / r2;
  NdArray out({h * r, w * r, n}, xv.precision());
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j)
      for (int64_t ch = 0; ch < n; ++ch)
        for (int64_t u = 0; u < r; ++u)
          for (int64_t v = 0; v < r; ++v)
            out[((i * r + u) * (w * r) + (j * r + v)) * n + ch] =
                xv[(i * w + j) * c + ch * r2 + u * r + v];
  return make_op(std::move(out), {x}, [x, h, w, c, n, r, r2](TensorNode& nd) {
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j)
        for (int64_t ch = 0; ch < n; ++ch)
          for (int64_t u = 0; u < r; ++u)
            for (int64_t v = 0; v < r; ++v)
              x.grad()[(i * w + j) * c + ch * r2 + u * r + v] +=
                  nd.grad[((i * r + u) * (w * r) + (j * r + v)) * n + ch];
  });
}

Tensor bcast_sub_lastdim(const Tensor& x, const Tensor& v) {
  const NdArray& xv = x.value();
  std::vector<int64_t> expect(xv.shape().begin(), xv.shape().end() - 1);
  if (xv.rank() < 1 || v.value().shape() != expect)
    throw std::invalid_argument("bcast_sub_lastdim: shapes " + shape_str(xv.shape()) +
                                " vs " + shape_str(v.value().shape()));
  int64_t cols = xv.extent(xv.rank() - 1);
  int64_t rows = cols > 0 ? xv.size() / cols : 0;
  NdArray out(xv.shape(), result_prec({&x, &v}));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] - v.value()[r];
  out.quantize();
  return make_op(std::move(out), {x, v}, [x, v, rows, cols](TensorNode& n) {
    if (x.requires_grad())
      for (int64_t i = 0; i < n.grad.size(); ++i) x.grad()[i] += n.grad[i];
    if (v.requires_grad())
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) v.grad()[r] -= n.grad[r * cols + c];
  });
}

Tensor bcast_div_lastdim(const Tensor& x, const Tensor& v) {
  const NdArray& xv = x.value();
  std::vector<int64_t> expect(xv.shape().begin(), xv.shape().end() - 1);
  if (xv.rank() < 1 || v.value().shape() != expect)
    throw std::invalid_argument("bcast_div_lastdim: shapes " + shape_str(xv.shape()) +
                                " vs " + shape_str(v.value().shape()));
  int64_t cols = xv.extent(xv.rank() - 1);
  int64_t rows = cols > 0 ? xv.size() / cols : 0;
  NdArray out(xv.shape(), result_prec({&x, &v}));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] / v.value()[r];
  out.quantize();
  return make_op(std::move(out), {x, v}, [x, v, rows, cols](TensorNode& n) {
    for (int64_t r = 0; r < rows; ++r) {
      double d = v.value()[r];
      for (int64_t c = 0; c < cols; ++c) {
        double g = n.grad[r * cols + c];
        if (x.requires_grad()) x.grad()[r * cols + c] += g / d;
        if (v.requires_grad()) v.grad()[r] -= g * x.value()[r * cols + c] / (d * d);
      }
    }
  });
}

Tensor mul_lastvec(const Tensor& x, const Tensor& v) {
  const NdArray& xv = x.value();
  int64_t cols = xv.rank() >= 1 ? xv.extent(xv.rank() - 1) : 0;
  if (v.value().rank() != 1 || v.value().extent(0) != cols)
    throw std::invalid_argument("mul_lastvec: shapes " + shape_str(xv.shape()) + " vs " +
                                shape_str(v.value().shape()));
  int64_t rows = cols > 0 ? xv.size() / cols : 0;
  NdArray out(xv.shape(), result_prec({&x, &v}));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] * v.value()[c];
  out.quantize();
  return make_op(std::move(out), {x, v}, [x, v, rows, cols](TensorNode& n) {
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) {
        double g = n.grad[r * cols + c];
        if (x.requires_grad()) x.grad()[r * cols + c] += g * v.value()[c];
        if (v.requires_grad()) v.grad()[c] += g * x.value()[r * cols + c];
      }
  });
}

Tensor add_lastvec(const Tensor& x, const Tensor& v) {
  const NdArray& xv = x.value();
  int64_t cols = xv.rank() >= 1 ? xv.extent(xv.rank() - 1) : 0;
  if (v.value().rank() != 1 || v.value().extent(0) != cols)
    throw std::invalid_argument("add_lastvec: shapes " + shape_str(xv.shape()) + " vs " +
                                shape_str(v.value().shape()));
  int64_t rows = cols > 0 ? xv.size() / cols : 0;
  NdArray out(xv.shape(), result_prec({&x, &v}));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] + v.value()[c];
  out.quantize();
  return make_op(std::move(out), {x, v}, [x, v, rows, cols](TensorNode& n) {
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) {
        double g = n.grad[r * cols + c];
        if (x.requires_grad()) x.grad()[r * cols + c] += g;
        if (v.requires_grad()) v.grad()[c] += g;
      }
  });
}

Tensor expand_group_channels(const Tensor& x, int t) {
  const NdArray& xv = x.value();
  if (xv.rank() < 1 || t < 1)
    throw std::invalid_argument("expand_group_channels: need rank >= 1 and t >= 1");
  int64_t cols = xv.extent(xv.rank() - 1);
  int64_t rows = cols > 0 ? xv.size() / cols : 0;
  std::vector<int64_t> out_shape = xv.shape();
  out_shape.back() = cols * t;
  NdArray out(out_shape, result_prec({&x}));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) {
      double val = xv[r * cols + c];
      for (int64_t g = 0; g < t; ++g) out[(r * cols + c) * t + g] = val;
    }
  return make_op(std::move(out), {x}, [x, rows, cols, t](TensorNode& n) {
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) {
        double acc = 0.0;
        for (int64_t g = 0; g < t; ++g) acc += n.grad[(r * cols + c) * t + g];
        x.grad()[r * cols + c] += acc;
      }
  });
}

}  // namespace eqvit
