// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "eqvit/tensor.hpp"
#include "eqvit/verify.hpp"

using namespace eqvit;

namespace {

NdArray arange(std::vector<int64_t> shape, double start = 0.0) {
  NdArray a(shape);
  for (int64_t i = 0; i < a.size(); ++i) a[i] = start + static_cast<double>(i);
  return a;
}

}  // namespace

TEST_CASE("ndarray shape and stride law") {
  NdArray a({2, 3, 4});
  CHECK(a.size() == 24);
  CHECK(a.strides() == std::vector<int64_t>{12, 4, 1});
  CHECK(a.offset({1, 2, 3}) == 23);
  CHECK_THROWS_AS(a.offset({2, 0, 0}), std::out_of_range);

  NdArray scalar(std::vector<int64_t>{});
  CHECK(scalar.size() == 1);
}

TEST_CASE("f32 precision rounds through float") {
  NdArray a = NdArray::from_values({2}, {0.1, 1.0 / 3.0}, Precision::f32);
  CHECK(a[0] == static_cast<double>(0.1f));
  CHECK(a[1] == static_cast<double>(static_cast<float>(1.0 / 3.0)));

  // op outputs inherit f32 when any input is f32
  Tensor x = Tensor::leaf(a);
  Tensor y = Tensor::leaf(NdArray::from_values({2}, {0.2, 0.2}));
  Tensor z = add(x, y);
  CHECK(z.value().precision() == Precision::f32);
  CHECK(z.value()[0] == static_cast<double>(static_cast<float>(static_cast<double>(0.1f) + 0.2)));
}

TEST_CASE("softmax basics") {
  Tensor one = Tensor::leaf(NdArray::from_values({1, 1}, {3.7}));
  CHECK(softmax_lastdim(one).value()[0] == 1.0);

  UniformRng rng(7);
  Tensor x = Tensor::leaf(rng.array({5, 9}, -4.0, 4.0));
  Tensor y = softmax_lastdim(x);
  for (int64_t r = 0; r < 5; ++r) {
    double sum = 0.0;
    for (int64_t c = 0; c < 9; ++c) sum += y.value()[r * 9 + c];
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("conv2d patchify example") {
  Tensor x = Tensor::leaf(NdArray::full({4, 4, 1}, 1.0));
  Tensor k = Tensor::leaf(NdArray::full({2, 2, 1, 1}, 1.0));
  Tensor y = conv2d(x, k, 2);
  CHECK(y.shape() == std::vector<int64_t>{2, 2, 1});
  for (int64_t i = 0; i < y.value().size(); ++i) CHECK(y.value()[i] == 4.0);

  CHECK_THROWS_AS(conv2d(x, k, 3), std::invalid_argument);  // stride != kernel, != 1
  Tensor bad = Tensor::leaf(NdArray::full({5, 4, 1}, 1.0));
  CHECK_THROWS_AS(conv2d(bad, k, 2), std::invalid_argument);
}

TEST_CASE("backward basics") {
  Tensor x = Tensor::leaf(arange({3, 2}, 1.0), true);
  backward(sum_all(x));
  for (int64_t i = 0; i < 6; ++i) CHECK(x.grad()[i] == 1.0);

  // repeated backward without reset accumulates
  backward(sum_all(x));
  for (int64_t i = 0; i < 6; ++i) CHECK(x.grad()[i] == 2.0);

  // grad(W) of sum(x . W) is x^T . ones
  Tensor xm = Tensor::leaf(arange({2, 3}), false);
  Tensor w = Tensor::leaf(arange({3, 2}), true);
  backward(sum_all(matmul(xm, w)));
  for (int64_t k = 0; k < 3; ++k)
    for (int64_t j = 0; j < 2; ++j)
      CHECK(w.grad()[k * 2 + j] == xm.value()[k] + xm.value()[3 + k]);

  // detached subgraph receives zero gradient
  Tensor detached = Tensor::leaf(arange({2, 2}), false);
  Tensor live = Tensor::leaf(arange({2, 2}), true);
  backward(sum_all(mul(detached, live)));
  for (int64_t i = 0; i < 4; ++i) CHECK(detached.grad()[i] == 0.0);

  CHECK_THROWS_AS(backward(live), std::invalid_argument);  // non-scalar root
}

TEST_CASE("spatial op involutions are bit-exact") {
  UniformRng rng(3);
  NdArray v = rng.array({5, 7, 3}, -1.0, 1.0);
  Tensor x = Tensor::leaf(v);

  Tensor r4 = rot90_spatial(x, 4);
  CHECK(max_abs_diff(r4.value(), v) == 0.0);

  Tensor f2 = flip_spatial(flip_spatial(x, 1), 1);
  CHECK(max_abs_diff(f2.value(), v) == 0.0);

  Tensor p = permute_axes(permute_axes(x, {2, 0, 1}), {1, 2, 0});
  CHECK(max_abs_diff(p.value(), v) == 0.0);

  // single quarter turn realizes out[j][H-1-i] = in[i][j]
  Tensor r1 = rot90_spatial(x, 1);
  CHECK(r1.shape() == std::vector<int64_t>{7, 5, 3});
  for (int64_t i = 0; i < 5; ++i)
    for (int64_t j = 0; j < 7; ++j)
      for (int64_t c = 0; c < 3; ++c)
        CHECK(r1.value().at({j, 5 - 1 - i, c}) == v.at({i, j, c}));
}

TEST_CASE("pixel_shuffle sub-pixel ordering") {
  Tensor x = Tensor::leaf(NdArray::from_values({1, 1, 4}, {1, 2, 3, 4}));
  Tensor y = pixel_shuffle(x, 2);
  CHECK(y.shape() == std::vector<int64_t>{2, 2, 1});
  CHECK(y.value()[0] == 1.0);
  CHECK(y.value()[1] == 2.0);
  CHECK(y.value()[2] == 3.0);
  CHECK(y.value()[3] == 4.0);
  CHECK_THROWS_AS(pixel_shuffle(Tensor::leaf(NdArray({1, 1, 3})), 2), std::invalid_argument);
}

TEST_CASE("slice, concat, gather round trips") {
  UniformRng rng(11);
  NdArray v = rng.array({4, 6}, -1.0, 1.0);
  Tensor x = Tensor::leaf(v);
  Tensor left = slice_axis(x, 1, 0, 3);
  Tensor right = slice_axis(x, 1, 3, 6);
  Tensor back = concat({left, right}, 1);
  CHECK(max_abs_diff(back.value(), v) == 0.0);

  Tensor rows = gather_rows(x, {3, 0, 3});
  for (int64_t c = 0; c < 6; ++c) {
    CHECK(rows.value()[0 * 6 + c] == v[3 * 6 + c]);
    CHECK(rows.value()[1 * 6 + c] == v[0 * 6 + c]);
    CHECK(rows.value()[2 * 6 + c] == v[3 * 6 + c]);
  }

  CHECK_THROWS_AS(slice_axis(x, 1, 2, 9), std::invalid_argument);
  CHECK_THROWS_AS(add(x, Tensor::leaf(NdArray({4, 5}))), std::invalid_argument);
}

TEST_CASE("stride_sample and expand_group_channels") {
  Tensor x = Tensor::leaf(arange({4, 4, 1}));
  Tensor y = stride_sample(x, 2);
  CHECK(y.shape() == std::vector<int64_t>{2, 2, 1});
  CHECK(y.value()[0] == 0.0);
  CHECK(y.value()[1] == 2.0);
  CHECK(y.value()[2] == 8.0);
  CHECK(y.value()[3] == 10.0);

  Tensor v = Tensor::leaf(NdArray::from_values({2}, {5.0, 7.0}));
  Tensor e = expand_group_channels(v, 3);
  CHECK(e.shape() == std::vector<int64_t>{6});
  CHECK(e.value()[0] == 5.0);
  CHECK(e.value()[2] == 5.0);
  CHECK(e.value()[3] == 7.0);
}

TEST_CASE("gradients of every primitive match finite differences") {
  UniformRng rng(42);
  double tol = 1e-5;

  auto weighted = [&rng](const Tensor& t) {
    // fixed random projection to a scalar so FD exercises all elements
    UniformRng local(99);
    Tensor w = Tensor::leaf(local.array(t.shape(), -1.0, 1.0));
    return sum_all(mul(t, w));
  };

  using Case = std::pair<const char*, double>;
  std::vector<Case> results;

  results.push_back({"add", grad_audit([&](const std::vector<Tensor>& in) {
    return weighted(add(in[0], in[1]));
  }, {rng.array({3, 4}, -1, 1), rng.array({3, 4}, -1, 1)})});

  results.push_back({"sub_mul", grad_audit([&](const std::vector<Tensor>& in) {
    return weighted(mul(sub(in[0], in[1]), in[1]));
  }, {rng.array({2, 5}, -1, 1), rng.array({2, 5}, -1, 1)})});

  results.push_back({"scale_add_scalar", grad_audit([&](const std::vector<Tensor>& in) {
    return weighted(add_scalar(scale(in[0], -1.7), 0.3));
  }, {rng.array({7}, -1, 1)})});

  results.push_back({"sqrt", grad_audit([&](const std::vector<Tensor>& in) {
    return weighted(sqrt_elem(in[0]));
  }, {rng.array({6}, 0.5, 2.0)})});

  results.push_back({"gelu", grad_audit([&](const std::vector<Tensor>& in) {
    return weighted(gelu(in[0]));
  }, {rng.array({9}, -2, 2)})});

  results.push_back({"matmul", grad_audit([&](const std::vector<Tensor>& in) {
    return weighted(matmul(in[0], in[1]));
  }, {rng.array({3, 4}, -1, 1), rng.array({4, 2}, -1, 1)})});

  results.push_back({"conv2d_patchify", grad_audit([&](const std::vector<Tensor>& in) {
    return weighted(conv2d(in[0], in[1], 2));
  }, {rng.array({4, 4, 2}, -1, 1), rng.array({2, 2, 2, 3}, -1, 1)})});

  results.push_back({"conv2d_stride1", grad_audit([&](const std::vector<Tensor>& in) {
    return weighted(conv2d(in[0], in[1], 1));
  }, {rng.array({4, 5, 2}, -1, 1), rng.array({3, 3, 2, 2}, -1, 1)})});

  results.push_back({"softmax", grad_audit([&](const std::vector<Tensor>& in) {
    return weighted(softmax_lastdim(in[0]));
  }, {rng.array({3, 5}, -2, 2)})});

  results.push_back({"mean_var", grad_audit([&](const std::vector<Tensor>& in) {
    auto [m, v] = mean_var_lastdim(in[0]);
    return add(weighted(m), weighted(v));
  }, {rng.array({4, 6}, -1, 1)})});

  results.push_back({"mean_axis", grad_audit([&](const std::vector<Tensor>& in) {
    return weighted(mean_axis(in[0], 1));
  }, {rng.array({2, 3, 4}, -1, 1)})});

  results.push_back({"reshape_permute", grad_audit([&](const std::vector<Tensor>& in) {
    return weighted(permute_axes(reshape(in[0], {2, 6}), {1, 0}));
  }, {rng.array({3, 4}, -1, 1)})});

  results.push_back({"slice_concat", grad_audit([&](const std::vector<Tensor>& in) {
    Tensor a = slice_axis(in[0], 0, 0, 2);
    Tensor b = slice_axis(in[0], 0, 1, 4);
    return weighted(concat({b, a}, 0));
  }, {rng.array({4, 3}, -1, 1)})});

  results.push_back({"gather_rows", grad_audit([&](const std::vector<Tensor>& in) {
    return weighted(gather_rows(in[0], {2, 0, 2, 1}));
  }, {rng.array({3, 4}, -1, 1)})});

  results.push_back({"rot_flip_stride_ps", grad_audit([&](const std::vector<Tensor>& in) {
    Tensor a = rot90_spatial(in[0], 1);
    Tensor b = flip_spatial(a, 1);
    Tensor c = stride_sample(b, 2);
    return weighted(pixel_shuffle(c, 2));
  }, {rng.array({4, 4, 4}, -1, 1)})});

  results.push_back({"bcast_ln_path", grad_audit([&](const std::vector<Tensor>& in) {
    auto [m, v] = mean_var_lastdim(in[0]);
    Tensor centered = bcast_sub_lastdim(in[0], m);
    Tensor denom = sqrt_elem(add_scalar(v, 1e-3));
    Tensor normed = bcast_div_lastdim(centered, denom);
    return weighted(add_lastvec(mul_lastvec(normed, in[1]), in[2]));
  }, {rng.array({3, 4}, -1, 1), rng.array({4}, 0.5, 1.5), rng.array({4}, -0.5, 0.5)})});

  results.push_back({"expand_group", grad_audit([&](const std::vector<Tensor>& in) {
    return weighted(expand_group_channels(in[0], 3));
  }, {rng.array({2, 3}, -1, 1)})});

  results.push_back({"cross_entropy", grad_audit([&](const std::vector<Tensor>& in) {
    return softmax_cross_entropy(in[0], 2);
  }, {rng.array({5}, -2, 2)})});

  for (const auto& [name, err] : results) {
    INFO(name);
    CHECK(err <= tol);
  }
}

TEST_CASE("softmax_cross_entropy value") {
  Tensor logits = Tensor::leaf(NdArray::from_values({3}, {1.0, 2.0, 3.0}));
  Tensor loss = softmax_cross_entropy(logits, 2);
  double lse = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
  CHECK(std::abs(loss.value()[0] - (lse - 3.0)) <= 1e-12);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, 3), std::invalid_argument);
}
