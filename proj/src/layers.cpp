// SPDX-License-Identifier: Apache-2.0
#include "eqvit/layers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace eqvit {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

int isqrt_exact(int64_t n, const char* what) {
  int side = static_cast<int>(std::llround(std::sqrt(static_cast<double>(n))));
  require(static_cast<int64_t>(side) * side == n,
          std::string(what) + ": token count " + std::to_string(n) +
              " is not a square grid");
  return side;
}

double glorot_bound(int64_t fan_in, int64_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

int64_t LiftedFeature::channels() const {
  return layout == Layout::Tokens ? data.value().extent(1) : data.value().extent(2);
}

LiftedFeature LiftedFeature::to_spatial() const {
  if (layout == Layout::Spatial) return *this;
  int64_t c = data.value().extent(1), t = data.value().extent(2);
  int side = grid_side > 0 ? grid_side : isqrt_exact(data.value().extent(0), "to_spatial");
  require(static_cast<int64_t>(side) * side == data.value().extent(0),
          "to_spatial: grid side does not match token count");
  return {reshape(data, {side, side, c, t}), Layout::Spatial, group, side};
}

LiftedFeature LiftedFeature::to_tokens() const {
  if (layout == Layout::Tokens) return *this;
  int64_t h = data.value().extent(0), w = data.value().extent(1);
  require(h == w, "to_tokens: non-square spatial grid " + shape_str(data.value().shape()));
  int64_t c = data.value().extent(2), t = data.value().extent(3);
  return {reshape(data, {h * w, c, t}), Layout::Tokens, group, static_cast<int>(h)};
}

Tensor spatial_transform(const GroupElement& g, const Tensor& x, const GroupSpec& spec) {
  require(spec.t == 1 || spec.t == 2 || spec.t == 4,
          "spatial_transform: grid action requires t in {1, 2, 4}");
  require(is_valid(g, spec), "spatial_transform: invalid element for group");
  Tensor out = rot90_spatial(x, g.k * (4 / spec.t));
  if (g.m == 1) out = flip_spatial(out, 1);
  return out;
}

LiftedFeature lifted_transform(const GroupElement& g, const LiftedFeature& z) {
  const GroupSpec& spec = z.group;
  int order = spec.order();
  LiftedFeature spatial = z.to_spatial();
  require(spatial.data.value().extent(3) == order,
          "lifted_transform: group axis extent does not match group order");

  auto perm = channel_permutation(g, spec);
  std::vector<Tensor> parts(static_cast<size_t>(order));
  for (int h = 0; h < order; ++h) {
    Tensor slice_h = slice_axis(spatial.data, 3, h, h + 1);
    parts[static_cast<size_t>(perm[h])] = spatial_transform(g, slice_h, spec);
  }
  LiftedFeature out{concat(parts, 3), Layout::Spatial, spec, spatial.grid_side};
  return z.layout == Layout::Tokens ? out.to_tokens() : out;
}

EqConvKernel EqConvKernel::init(int stride, int64_t c_in, int64_t c_out, UniformRng& rng,
                                Precision prec) {
  double bound = glorot_bound(stride * stride * c_in, c_out);
  NdArray base = rng.array({stride, stride, c_in, c_out}, -bound, bound, prec);
  return {Tensor::leaf(base, true), stride};
}

LiftedFeature eq_patch_embed(const Tensor& image, const EqConvKernel& kernel,
                             const GroupSpec& spec) {
  const NdArray& xv = image.value();
  require(xv.rank() == 3, "eq_patch_embed: image must be H x W x c0, got " +
                              shape_str(xv.shape()));
  int s = kernel.stride;
  require(s >= 1 && kernel.base.value().extent(0) == s && kernel.base.value().extent(1) == s,
          "eq_patch_embed: kernel spatial extents must equal the stride");
  require(xv.extent(0) % s == 0 && xv.extent(1) % s == 0,
          "eq_patch_embed: extents " + shape_str(xv.shape()) +
              " not divisible by stride " + std::to_string(s));
  require(xv.extent(0) == xv.extent(1), "eq_patch_embed: image must be square");

  std::vector<Tensor> parts;
  parts.reserve(static_cast<size_t>(spec.order()));
  int64_t oh = xv.extent(0) / s, ow = xv.extent(1) / s;
  int64_t c = kernel.base.value().extent(3);
  for (const GroupElement& g : elements(spec)) {
    Tensor rotated = spatial_transform(g, kernel.base, spec);
    Tensor slice_g = conv2d(image, rotated, s);
    parts.push_back(reshape(slice_g, {oh, ow, c, 1}));
  }
  Tensor stacked = concat(parts, 3);
  return LiftedFeature{reshape(stacked, {oh * ow, c, spec.order()}), Layout::Tokens, spec,
                       static_cast<int>(oh)};
}

EqLinearWeights EqLinearWeights::init(const GroupSpec& spec, int64_t c_in, int64_t c_out,
                                      UniformRng& rng, Precision prec) {
  EqLinearWeights w;
  w.spec = spec;
  double bound = glorot_bound(c_in * spec.order(), c_out * spec.order());
  for (int i = 0; i < spec.order(); ++i)
    w.blocks.push_back(Tensor::leaf(rng.array({c_in, c_out}, -bound, bound, prec), true));
  return w;
}

LiftedFeature eq_linear(const LiftedFeature& z, const EqLinearWeights& w) {
  require(z.layout == Layout::Tokens, "eq_linear: expected tokens layout");
  require(z.group == w.spec, "eq_linear: group mismatch between feature and weights");
  const NdArray& zv = z.data.value();
  int order = w.spec.order();
  require(zv.extent(2) == order, "eq_linear: group axis mismatch");
  require(zv.extent(1) == w.c_in(),
          "eq_linear: channel extent " + std::to_string(zv.extent(1)) +
              " does not match weight input extent " + std::to_string(w.c_in()));

  int64_t n = zv.extent(0);
  std::vector<Tensor> slices(static_cast<size_t>(order));
  for (int g = 0; g < order; ++g)
    slices[static_cast<size_t>(g)] =
        reshape(slice_axis(z.data, 2, g, g + 1), {n, w.c_in()});

  std::vector<Tensor> parts;
  parts.reserve(static_cast<size_t>(order));
  for (int b = 0; b < order; ++b) {
    GroupElement inv_b = inverse(element_at(b, w.spec), w.spec);
    Tensor acc;
    for (int g = 0; g < order; ++g) {
      int widx = element_index(compose(inv_b, element_at(g, w.spec), w.spec), w.spec);
      Tensor term = matmul(slices[static_cast<size_t>(g)],
                           w.blocks[static_cast<size_t>(widx)]);
      acc = g == 0 ? term : add(acc, term);
    }
    parts.push_back(reshape(acc, {n, w.c_out(), 1}));
  }
  return LiftedFeature{concat(parts, 2), Layout::Tokens, z.group, z.grid_side};
}

NdArray tiled_matrix(const EqLinearWeights& w) {
  int order = w.spec.order();
  int64_t ci = w.c_in(), co = w.c_out();
  NdArray tiled({ci * order, co * order}, w.blocks[0].value().precision());
  for (int b = 0; b < order; ++b) {
    GroupElement inv_b = inverse(element_at(b, w.spec), w.spec);
    for (int g = 0; g < order; ++g) {
      int widx = element_index(compose(inv_b, element_at(g, w.spec), w.spec), w.spec);
      const NdArray& block = w.blocks[static_cast<size_t>(widx)].value();
      for (int64_t r = 0; r < ci; ++r)
        for (int64_t c = 0; c < co; ++c)
          tiled[(r * order + g) * (co * order) + (c * order + b)] = block[r * co + c];
    }
  }
  return tiled;
}

int64_t EqPosEncodings::param_count() const {
  int64_t n = 0;
  if (ape_base.defined()) n += ape_base.value().size();
  if (rpe_base.defined()) n += rpe_base.value().size();
  return n;
}

EqPosEncodings build_ape(const CanonicalMaps& maps, int64_t channels, UniformRng& rng,
                         Precision prec) {
  EqPosEncodings pe;
  pe.maps = maps;
  pe.ape_base = Tensor::leaf(rng.array({maps.orbit_count, channels}, -0.02, 0.02, prec), true);
  return pe;
}

LiftedFeature apply_ape(const LiftedFeature& z, const EqPosEncodings& pe) {
  require(z.layout == Layout::Tokens, "apply_ape: expected tokens layout");
  require(pe.ape_base.defined(), "apply_ape: no absolute table built");
  const NdArray& zv = z.data.value();
  int n = pe.maps.grid_side;
  require(z.grid_side == n && zv.extent(0) == static_cast<int64_t>(n) * n,
          "apply_ape: token grid side " + std::to_string(z.grid_side) +
              " does not match canonical maps side " + std::to_string(n));
  int64_t c = zv.extent(1);
  require(pe.ape_base.value().extent(1) == c, "apply_ape: channel mismatch");
  int t = z.group.order();
  require(zv.extent(2) == t, "apply_ape: group axis mismatch");

  std::vector<int64_t> idx(static_cast<size_t>(n) * n);
  for (size_t p = 0; p < idx.size(); ++p)
    idx[p] = pe.maps.rep_index[p];
  Tensor rows = gather_rows(pe.ape_base, idx);            // N x c
  Tensor expanded = expand_group_channels(rows, t);       // N x c*t, constant per slot
  Tensor added = add(z.data, reshape(expanded, {zv.extent(0), c, zv.extent(2)}));
  return {added, Layout::Tokens, z.group, z.grid_side};
}

EqPosEncodings build_rpe(const CanonicalMaps& maps, UniformRng& rng, Precision prec) {
  EqPosEncodings pe;
  pe.maps = maps;
  pe.rpe_base = Tensor::leaf(rng.array({maps.disp_count, 1}, -0.02, 0.02, prec), true);
  return pe;
}

Tensor rpe_bias(const EqPosEncodings& pe) {
  require(pe.rpe_base.defined(), "rpe_bias: no relative table built");
  int n = pe.maps.grid_side;
  int64_t n2 = static_cast<int64_t>(n) * n;
  std::vector<int64_t> idx(static_cast<size_t>(n2) * n2);
  for (int64_t a = 0; a < n2; ++a)
    for (int64_t b = 0; b < n2; ++b)
      idx[static_cast<size_t>(a * n2 + b)] =
          pe.maps.pair_disp_index[pe.maps.pair_index(static_cast<int>(a), static_cast<int>(b))];
  return reshape(gather_rows(pe.rpe_base, idx), {n2, n2});
}

Tensor roll_spatial(const Tensor& x, int axis, int shift) {
  require(axis == 0 || axis == 1, "roll_spatial: axis must be 0 or 1");
  int64_t extent = x.value().extent(axis);
  int s = static_cast<int>(((shift % extent) + extent) % extent);
  if (s == 0) return x;
  Tensor head = slice_axis(x, axis, extent - s, extent);
  Tensor tail = slice_axis(x, axis, 0, extent - s);
  return concat({head, tail}, axis);
}

namespace {

// pi(h) o Roll_(di,dj) o pi(h^-1) applied to every group slice, so the
// displacement co-transforms with the slice's orientation.
LiftedFeature conjugated_roll(const LiftedFeature& f, int di, int dj) {
  LiftedFeature spatial = f.to_spatial();
  const GroupSpec& spec = f.group;
  std::vector<Tensor> parts;
  parts.reserve(static_cast<size_t>(spec.order()));
  for (const GroupElement& h : elements(spec)) {
    Tensor slice_h = slice_axis(spatial.data, 3, element_index(h, spec),
                                element_index(h, spec) + 1);
    Tensor canonical = spatial_transform(inverse(h, spec), slice_h, spec);
    Tensor rolled = roll_spatial(roll_spatial(canonical, 0, di), 1, dj);
    parts.push_back(spatial_transform(h, rolled, spec));
  }
  LiftedFeature out{concat(parts, 3), Layout::Spatial, spec, spatial.grid_side};
  return f.layout == Layout::Tokens ? out.to_tokens() : out;
}

// Scaled dot-product attention over a token set, heads splitting the
// flattened c*t axis in whole group blocks.
Tensor attention_tokens(const Tensor& q, const Tensor& k, const Tensor& v, int64_t c,
                        int64_t t, int heads, const Tensor* bias, const Tensor* mask) {
  int64_t n = q.value().extent(0);
  int64_t width = c * t;
  int64_t dh = width / heads;
  Tensor qf = reshape(q, {n, width});
  Tensor kf = reshape(k, {n, width});
  Tensor vf = reshape(v, {n, width});
  double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Tensor> outs;
  outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_axis(qf, 1, h * dh, (h + 1) * dh);
    Tensor kh = slice_axis(kf, 1, h * dh, (h + 1) * dh);
    Tensor vh = slice_axis(vf, 1, h * dh, (h + 1) * dh);
    Tensor logits = scale(matmul(qh, transpose2(kh)), inv_scale);
    if (bias) logits = add(logits, *bias);
    if (mask) logits = add(logits, *mask);
    outs.push_back(matmul(softmax_lastdim(logits), vh));
  }
  Tensor merged = heads == 1 ? outs[0] : concat(outs, 1);
  return reshape(merged, {n, c, t});
}

}  // namespace

std::vector<NdArray> shifted_window_masks(int grid_side, int window_side, int shift,
                                          const GroupSpec& spec) {
  int n = grid_side, m = window_side;
  require(n % m == 0, "shifted_window_masks: grid does not tile into windows");
  require(shift > 0 && shift < m, "shifted_window_masks: shift must be in (0, window)");

  // Band id of the canonical (unshifted) frame, evaluated post-roll; the
  // standard three-band partition along each axis.
  auto band = [&](int x) { return x < n - m ? 0 : (x < n - shift ? 1 : 2); };
  auto canonical_id = [&](int i, int j) {
    return 3 * band((i + shift) % n) + band((j + shift) % n);
  };

  // Signature of a position: the band id seen from every slice's
  // co-transformed frame. Pairs may attend only with equal signatures, which
  // keeps the mask invariant under the whole group.
  auto group_elems = elements(spec);
  std::vector<std::vector<int>> sig(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      std::vector<int> s;
      s.reserve(group_elems.size());
      for (const GroupElement& h : group_elems) {
        auto [ci, cj] = act_on_coords(inverse(h, spec), {i, j}, n, spec);
        s.push_back(canonical_id(ci, cj));
      }
      sig[static_cast<size_t>(i) * n + j] = std::move(s);
    }

  int nw = n / m;
  int64_t m2 = static_cast<int64_t>(m) * m;
  std::vector<NdArray> masks;
  masks.reserve(static_cast<size_t>(nw) * nw);
  for (int a = 0; a < nw; ++a)
    for (int b = 0; b < nw; ++b) {
      NdArray mask({m2, m2});
      for (int64_t la = 0; la < m2; ++la)
        for (int64_t lb = 0; lb < m2; ++lb) {
          int pa = (a * m + static_cast<int>(la) / m) * n + (b * m + static_cast<int>(la) % m);
          int pb = (a * m + static_cast<int>(lb) / m) * n + (b * m + static_cast<int>(lb) % m);
          mask[la * m2 + lb] = sig[static_cast<size_t>(pa)] == sig[static_cast<size_t>(pb)]
                                   ? 0.0
                                   : -1e9;
        }
      masks.push_back(std::move(mask));
    }
  return masks;
}

LiftedFeature eq_self_attention(const LiftedFeature& z, const EqLinearWeights& wq,
                                const EqLinearWeights& wk, const EqLinearWeights& wv,
                                int heads, const EqPosEncodings* pe,
                                const WindowSpec* window) {
  require(z.layout == Layout::Tokens, "eq_self_attention: expected tokens layout");
  int t = z.group.order();
  int64_t co = wv.c_out();
  require(wq.c_out() == co && wk.c_out() == co,
          "eq_self_attention: q/k/v projections must share the output extent");
  require(heads >= 1 && co % heads == 0,
          "eq_self_attention: heads must split whole channel blocks (c=" +
              std::to_string(co) + ", heads=" + std::to_string(heads) + ")");

  bool shifted = window != nullptr && window->shift > 0;
  LiftedFeature zin = shifted ? conjugated_roll(z, -window->shift, -window->shift) : z;

  LiftedFeature q = eq_linear(zin, wq);
  LiftedFeature k = eq_linear(zin, wk);
  LiftedFeature v = eq_linear(zin, wv);

  if (window == nullptr) {
    Tensor bias;
    if (pe != nullptr) {
      require(pe->maps.grid_side == z.grid_side,
              "eq_self_attention: relative tables built for grid side " +
                  std::to_string(pe->maps.grid_side) + ", tokens have side " +
                  std::to_string(z.grid_side));
      bias = rpe_bias(*pe);
    }
    Tensor out = attention_tokens(q.data, k.data, v.data, co, t, heads,
                                  pe ? &bias : nullptr, nullptr);
    return {out, Layout::Tokens, z.group, z.grid_side};
  }

  int n = z.grid_side, m = window->side;
  require(m >= 1 && n % m == 0, "eq_self_attention: token grid side " + std::to_string(n) +
                                    " does not tile into windows of side " +
                                    std::to_string(m));
  require(window->shift >= 0 && window->shift < m,
          "eq_self_attention: shift must be smaller than the window side");

  Tensor bias;
  if (pe != nullptr) {
    require(pe->maps.grid_side == m, "eq_self_attention: relative tables built for side " +
                                         std::to_string(pe->maps.grid_side) +
                                         ", window side is " + std::to_string(m));
    bias = rpe_bias(*pe);
  }
  std::vector<NdArray> masks;
  if (shifted) masks = shifted_window_masks(n, m, window->shift, z.group);

  Tensor qs = q.to_spatial().data, ks = k.to_spatial().data, vs = v.to_spatial().data;
  int nw = n / m;
  std::vector<Tensor> rows;
  rows.reserve(static_cast<size_t>(nw));
  for (int a = 0; a < nw; ++a) {
    std::vector<Tensor> cols;
    cols.reserve(static_cast<size_t>(nw));
    for (int b = 0; b < nw; ++b) {
      auto window_slice = [&](const Tensor& x) {
        Tensor wslice = slice(x, {a * m, b * m, 0, 0},
                              {(a + 1) * m, (b + 1) * m, co, t});
        return reshape(wslice, {static_cast<int64_t>(m) * m, co, t});
      };
      Tensor mask_t;
      if (shifted) mask_t = Tensor::leaf(masks[static_cast<size_t>(a) * nw + b]);
      Tensor out_w = attention_tokens(window_slice(qs), window_slice(ks), window_slice(vs),
                                      co, t, heads, pe ? &bias : nullptr,
                                      shifted ? &mask_t : nullptr);
      cols.push_back(reshape(out_w, {m, m, co, t}));
    }
    rows.push_back(nw == 1 ? cols[0] : concat(cols, 1));
  }
  Tensor out_spatial = nw == 1 ? rows[0] : concat(rows, 0);
  LiftedFeature out{out_spatial, Layout::Spatial, z.group, n};
  if (shifted) out = conjugated_roll(out, window->shift, window->shift);
  return out.to_tokens();
}

LiftedFeature eq_downsample(const LiftedFeature& f, int stride) {
  LiftedFeature spatial = f.to_spatial();
  const NdArray& fv = spatial.data.value();
  require(fv.extent(0) % stride == 0 && fv.extent(1) % stride == 0,
          "eq_downsample: extents " + shape_str(fv.shape()) +
              " not divisible by stride " + std::to_string(stride));
  const GroupSpec& spec = f.group;
  std::vector<Tensor> parts;
  parts.reserve(static_cast<size_t>(spec.order()));
  for (const GroupElement& h : elements(spec)) {
    int idx = element_index(h, spec);
    Tensor slice_h = slice_axis(spatial.data, 3, idx, idx + 1);
    Tensor canonical = spatial_transform(inverse(h, spec), slice_h, spec);
    Tensor sampled = stride_sample(canonical, stride);
    parts.push_back(spatial_transform(h, sampled, spec));
  }
  LiftedFeature out{concat(parts, 3), Layout::Spatial, spec,
                    spatial.grid_side / stride};
  return f.layout == Layout::Tokens ? out.to_tokens() : out;
}

LiftedFeature eq_pixel_shuffle(const LiftedFeature& f, int r) {
  LiftedFeature spatial = f.to_spatial();
  const NdArray& fv = spatial.data.value();
  int64_t c = fv.extent(2);
  int64_t r2 = static_cast<int64_t>(r) * r;
  require(c % r2 == 0, "eq_pixel_shuffle: channels " + std::to_string(c) +
                           " not divisible by r^2 = " + std::to_string(r2));
  const GroupSpec& spec = f.group;
  int64_t h = fv.extent(0), w = fv.extent(1);
  std::vector<Tensor> parts;
  parts.reserve(static_cast<size_t>(spec.order()));
  for (const GroupElement& g : elements(spec)) {
    int idx = element_index(g, spec);
    Tensor slice_g = reshape(slice_axis(spatial.data, 3, idx, idx + 1), {h, w, c});
    Tensor canonical = spatial_transform(inverse(g, spec), slice_g, spec);
    Tensor shuffled = pixel_shuffle(canonical, r);
    Tensor back = spatial_transform(g, shuffled, spec);
    parts.push_back(reshape(back, {h * r, w * r, c / r2, 1}));
  }
  LiftedFeature out{concat(parts, 3), Layout::Spatial, spec,
                    spatial.grid_side * r};
  return f.layout == Layout::Tokens ? out.to_tokens() : out;
}

EqLayerNormParams EqLayerNormParams::init(int64_t channels, Precision prec) {
  return {Tensor::leaf(NdArray::full({channels}, 1.0, prec), true),
          Tensor::leaf(NdArray::full({channels}, 0.0, prec), true)};
}

LiftedFeature eq_layernorm(const LiftedFeature& z, const EqLayerNormParams& params,
                           double eps) {
  require(z.layout == Layout::Tokens, "eq_layernorm: expected tokens layout");
  const NdArray& zv = z.data.value();
  int64_t n = zv.extent(0), c = zv.extent(1), t = zv.extent(2);
  require(params.gamma_base.value().extent(0) == c &&
              params.beta_base.value().extent(0) == c,
          "eq_layernorm: parameter extent does not match channels");

  Tensor flat = reshape(z.data, {n, c * t});
  auto [mean, var] = mean_var_lastdim(flat);
  Tensor centered = bcast_sub_lastdim(flat, mean);
  Tensor denom = sqrt_elem(add_scalar(var, eps));
  Tensor normed = bcast_div_lastdim(centered, denom);
  Tensor gamma = expand_group_channels(params.gamma_base, static_cast<int>(t));
  Tensor beta = expand_group_channels(params.beta_base, static_cast<int>(t));
  Tensor out = add_lastvec(mul_lastvec(normed, gamma), beta);
  return {reshape(out, {n, c, t}), Layout::Tokens, z.group, z.grid_side};
}

}  // namespace eqvit
