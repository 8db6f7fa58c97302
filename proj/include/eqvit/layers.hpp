// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "eqvit/group.hpp"
#include "eqvit/tensor.hpp"

namespace eqvit {

// Feature with an explicit group axis. Tokens: N x c x t, Spatial:
// H x W x c x t. Flattened to width c*t the group index varies fastest
// within each channel block: [F_1^1 .. F_t^1, ..., F_1^n .. F_t^n].
enum class Layout { Tokens, Spatial };

struct LiftedFeature {
  Tensor data;
  Layout layout = Layout::Tokens;
  GroupSpec group;
  int grid_side = 0;  // tokens per axis when layout == Tokens

  int64_t channels() const;
  LiftedFeature to_spatial() const;
  LiftedFeature to_tokens() const;
};

// Spatial action of g on the first two axes: mirror^m after rotation^k.
// Realizes act_on_coords: output[g.p] = input[p].
Tensor spatial_transform(const GroupElement& g, const Tensor& x, const GroupSpec& spec);

// pi^F_g: spatial/token-grid action combined with the left regular channel
// permutation. This is the transport every equivariance statement uses.
LiftedFeature lifted_transform(const GroupElement& g, const LiftedFeature& z);

// Learnable stride-s patchify kernel; the expanded bank holds one
// rotated/reflected copy of `base` per group element.
struct EqConvKernel {
  Tensor base;  // s x s x c0 x c
  int stride = 1;

  static EqConvKernel init(int stride, int64_t c_in, int64_t c_out, UniformRng& rng,
                           Precision prec = Precision::f64);
};

LiftedFeature eq_patch_embed(const Tensor& image, const EqConvKernel& kernel,
                             const GroupSpec& spec);

// The family {W_g : g in S} of c_in x c_out blocks. Tiled to (c_in*t) x
// (c_out*t), block (B, g) holds W_{B^-1 g}: a block-circulant sharing pattern.
struct EqLinearWeights {
  GroupSpec spec;
  std::vector<Tensor> blocks;  // indexed by element index

  int64_t c_in() const { return blocks.at(0).value().extent(0); }
  int64_t c_out() const { return blocks.at(0).value().extent(1); }
  int64_t param_count() const { return static_cast<int64_t>(blocks.size()) * c_in() * c_out(); }

  static EqLinearWeights init(const GroupSpec& spec, int64_t c_in, int64_t c_out,
                              UniformRng& rng, Precision prec = Precision::f64);
};

// out^B = sum_g z^g . W_{B^-1 g}, per token.
LiftedFeature eq_linear(const LiftedFeature& z, const EqLinearWeights& w);

// Dense (c_in*t) x (c_out*t) matrix in the interleaved channel order:
// entry[(ci*t + g), (co*t + B)] = W_{B^-1 g}[ci][co]. Second route for the
// tiling-equivalence check.
NdArray tiled_matrix(const EqLinearWeights& w);

// Orbit-canonical positional encodings. The absolute table holds one
// learnable row per position orbit (expanded across group slots on use);
// the relative table holds one learnable entry per canonical displacement.
struct EqPosEncodings {
  CanonicalMaps maps;
  Tensor ape_base;  // orbit_count x c
  Tensor rpe_base;  // disp_count x 1

  int64_t param_count() const;
};

EqPosEncodings build_ape(const CanonicalMaps& maps, int64_t channels, UniformRng& rng,
                         Precision prec = Precision::f64);
LiftedFeature apply_ape(const LiftedFeature& z, const EqPosEncodings& pe);

EqPosEncodings build_rpe(const CanonicalMaps& maps, UniformRng& rng,
                         Precision prec = Precision::f64);
// N_w x N_w additive bias, N_w = maps.grid_side^2 window positions.
Tensor rpe_bias(const EqPosEncodings& pe);

struct WindowSpec {
  int side = 0;   // M
  int shift = 0;  // cyclic displacement, 0 = unshifted
};

LiftedFeature eq_self_attention(const LiftedFeature& z, const EqLinearWeights& wq,
                                const EqLinearWeights& wk, const EqLinearWeights& wv,
                                int heads, const EqPosEncodings* pe = nullptr,
                                const WindowSpec* window = nullptr);

// Per group slice: pi(g) o Down_s o pi(g^-1), top-left anchored sampling.
LiftedFeature eq_downsample(const LiftedFeature& f, int stride);

// Per group slice: pi(g) o PS_r o pi(g^-1).
LiftedFeature eq_pixel_shuffle(const LiftedFeature& f, int r);

// Per-channel affine parameters, shared across the group dimension: each base
// entry is repeated t times consecutively in the flattened channel order.
struct EqLayerNormParams {
  Tensor gamma_base;  // {c}
  Tensor beta_base;   // {c}

  static EqLayerNormParams init(int64_t channels, Precision prec = Precision::f64);
};

LiftedFeature eq_layernorm(const LiftedFeature& z, const EqLayerNormParams& params,
                           double eps = 1e-6);

// Cyclic roll along one of the first two axes: out[i] = in[(i - shift) mod H].
Tensor roll_spatial(const Tensor& x, int axis, int shift);

// Additive attention mask for shifted windows: token pairs whose
// band signatures differ in any group slice's co-transformed frame may not
// attend. One M^2 x M^2 block per window, row-major over windows.
std::vector<NdArray> shifted_window_masks(int grid_side, int window_side, int shift,
                                          const GroupSpec& spec);

}  // namespace eqvit
