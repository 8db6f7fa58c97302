// SPDX-License-Identifier: Apache-2.0
#include "eqvit/ndarray.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace eqvit {

const char* precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision precision_from_name(const std::string& name) {
  if (name == "f32") return Precision::f32;
  if (name == "f64") return Precision::f64;
  throw std::invalid_argument("unknown precision '" + name + "' (expected f32 or f64)");
}

std::string shape_str(const std::vector<int64_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

int64_t shape_product(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

NdArray::NdArray(std::vector<int64_t> shape, Precision prec)
    : shape_(std::move(shape)), prec_(prec) {
  for (int64_t e : shape_)
    if (e < 0) throw std::invalid_argument("negative extent in shape " + shape_str(shape_));
  strides_.resize(shape_.size());
  int64_t stride = 1;
  for (size_t i = shape_.size(); i-- > 0;) {
    strides_[i] = stride;
    stride *= shape_[i];
  }
  data_.assign(static_cast<size_t>(shape_product(shape_)), 0.0);
}

NdArray NdArray::full(std::vector<int64_t> shape, double value, Precision prec) {
  NdArray a(std::move(shape), prec);
  a.fill(value);
  return a;
}

NdArray NdArray::from_values(std::vector<int64_t> shape, std::vector<double> values,
                             Precision prec) {
  NdArray a(std::move(shape), prec);
  if (static_cast<int64_t>(values.size()) != a.size())
    throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(a.shape()));
  a.data_ = std::move(values);
  a.quantize();
  return a;
}

NdArray NdArray::zeros_like(const NdArray& other) {
  return NdArray(other.shape_, other.prec_);
}

void NdArray::set_precision(Precision p) {
  prec_ = p;
  quantize();
}

int64_t NdArray::offset(const std::vector<int64_t>& idx) const {
  if (idx.size() != shape_.size())
    throw std::invalid_argument("index rank " + std::to_string(idx.size()) +
                                " does not match shape " + shape_str(shape_));
  int64_t off = 0;
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= shape_[i])
      throw std::out_of_range("index " + shape_str(std::vector<int64_t>(idx)) +
                              " out of range for shape " + shape_str(shape_));
    off += idx[i] * strides_[i];
  }
  return off;
}

void NdArray::fill(double value) {
  if (prec_ == Precision::f32) value = static_cast<double>(static_cast<float>(value));
  std::fill(data_.begin(), data_.end(), value);
}

void NdArray::quantize() {
  if (prec_ != Precision::f32) return;
  for (double& v : data_) v = static_cast<double>(static_cast<float>(v));
}

bool same_shape(const NdArray& a, const NdArray& b) { return a.shape() == b.shape(); }

double max_abs_diff(const NdArray& a, const NdArray& b) {
  if (!same_shape(a, b))
    throw std::invalid_argument("shape mismatch: " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_abs(const NdArray& a) {
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i]));
  return m;
}

double UniformRng::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double UniformRng::next(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

int64_t UniformRng::next_index(int64_t n) {
  if (n <= 0) throw std::invalid_argument("next_index requires n > 0");
  return static_cast<int64_t>(next_unit() * static_cast<double>(n)) % n;
}

NdArray UniformRng::array(std::vector<int64_t> shape, double lo, double hi, Precision prec) {
  NdArray a(std::move(shape), prec);
  for (int64_t i = 0; i < a.size(); ++i) a[i] = next(lo, hi);
  a.quantize();
  return a;
}

}  // namespace eqvit
