// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace eqvit {

// Storage precision. Values are held as doubles; f32 arrays are rounded to
// the nearest float after every producing operation, so stored values are
// always float-representable in that mode.
enum class Precision { f32, f64 };

const char* precision_name(Precision p);
Precision precision_from_name(const std::string& name);

std::string shape_str(const std::vector<int64_t>& shape);

// Dense row-major n-dimensional array.
class NdArray {
 public:
  NdArray() = default;
  explicit NdArray(std::vector<int64_t> shape, Precision prec = Precision::f64);

  static NdArray full(std::vector<int64_t> shape, double value,
                      Precision prec = Precision::f64);
  static NdArray from_values(std::vector<int64_t> shape, std::vector<double> values,
                             Precision prec = Precision::f64);
  static NdArray zeros_like(const NdArray& other);

  const std::vector<int64_t>& shape() const { return shape_; }
  const std::vector<int64_t>& strides() const { return strides_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  int64_t extent(int64_t axis) const { return shape_[static_cast<size_t>(axis)]; }
  Precision precision() const { return prec_; }
  void set_precision(Precision p);

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](int64_t flat) { return data_[static_cast<size_t>(flat)]; }
  double operator[](int64_t flat) const { return data_[static_cast<size_t>(flat)]; }

  int64_t offset(const std::vector<int64_t>& idx) const;
  double at(const std::vector<int64_t>& idx) const { return data_[static_cast<size_t>(offset(idx))]; }
  double& at(const std::vector<int64_t>& idx) { return data_[static_cast<size_t>(offset(idx))]; }

  void fill(double value);
  // Rounds every element through float when precision is f32.
  void quantize();

 private:
  std::vector<int64_t> shape_;
  std::vector<int64_t> strides_;
  std::vector<double> data_;
  Precision prec_ = Precision::f64;
};

int64_t shape_product(const std::vector<int64_t>& shape);
bool same_shape(const NdArray& a, const NdArray& b);
double max_abs_diff(const NdArray& a, const NdArray& b);
double max_abs(const NdArray& a);

// Deterministic, platform-independent uniform generator. The mt19937_64
// sequence is fully specified by the standard; doubles come from the top 53
// bits, avoiding the implementation-defined std distributions.
class UniformRng {
 public:
  explicit UniformRng(uint64_t seed) : engine_(seed) {}
  uint64_t next_u64() { return engine_(); }
  double next_unit();                 // [0, 1)
  double next(double lo, double hi);  // [lo, hi)
  int64_t next_index(int64_t n);      // [0, n)
  NdArray array(std::vector<int64_t> shape, double lo, double hi,
                Precision prec = Precision::f64);

 private:
  std::mt19937_64 engine_;
};

}  // namespace eqvit
