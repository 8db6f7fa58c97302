// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eqvit/layers.hpp"

namespace eqvit {

// Named learnable tensor with an accounting tag (attn_linear, mlp_linear,
// patch, norm, pos, head).
struct ParamEntry {
  std::string name;
  std::string kind;
  Tensor tensor;
};

int64_t total_param_count(const std::vector<ParamEntry>& params);
int64_t param_count_of_kind(const std::vector<ParamEntry>& params, const std::string& kind);

struct EqViTConfig {
  int image_side = 32;
  int patch_stride = 4;
  int in_channels = 1;
  int channels = 8;  // per group slot; flattened width is channels * order
  int depth = 2;
  int heads = 2;
  int mlp_ratio = 2;
  int num_classes = 3;
  GroupSpec group{4, false};
  bool use_ape = true;

  int grid_side() const { return image_side / patch_stride; }
  void validate() const;
};

struct TransformerBlock {
  EqLayerNormParams ln1, ln2;
  EqLinearWeights wq, wk, wv;
  EqLinearWeights mlp_in, mlp_out;
};

class EqViT {
 public:
  EqViTConfig cfg;
  EqConvKernel patch{Tensor(), 1};
  CanonicalMaps maps;
  std::optional<EqPosEncodings> ape;
  std::vector<TransformerBlock> blocks;
  Tensor head_w, head_b;
  std::vector<ParamEntry> params;

  static EqViT build(const EqViTConfig& cfg, uint64_t seed,
                     Precision prec = Precision::f64);
  // image H x W x c0 -> logits {num_classes}
  Tensor forward(const Tensor& image) const;
};

struct EqSwinConfig {
  int image_side = 32;
  int patch_stride = 2;
  int in_channels = 1;
  int channels = 4;
  int heads = 2;
  int mlp_ratio = 2;
  int num_classes = 3;
  GroupSpec group{4, false};
  bool use_ape = false;
  int window_side = 4;
  int shift_size = 2;
  std::vector<int> stage_depths{2, 2};
  bool use_rpe = true;
  // Super-resolution head: linear expansion + equivariant pixel shuffle +
  // group mean. Output side = grid_side * sr_scale * patch_stride.
  bool sr_head = false;
  int sr_scale = 2;
  int sr_out_channels = 1;

  int grid_side() const { return image_side / patch_stride; }
  void validate() const;
};

struct EqSwinStage {
  std::vector<TransformerBlock> blocks;
  std::vector<WindowSpec> windows;  // per block
  bool merge_after = false;
  EqLinearWeights merge;  // channel expansion following the stride-2 reduction
};

class EqSwin {
 public:
  EqSwinConfig cfg;
  EqConvKernel patch{Tensor(), 1};
  CanonicalMaps window_maps;
  std::optional<EqPosEncodings> ape;
  CanonicalMaps ape_maps;
  std::vector<EqSwinStage> stages;
  std::vector<std::optional<EqPosEncodings>> block_rpe;  // flat, one per block
  Tensor head_w, head_b;             // classifier head
  EqLinearWeights sr_expand;         // SR head
  std::vector<ParamEntry> params;

  static EqSwin build(const EqSwinConfig& cfg, uint64_t seed,
                      Precision prec = Precision::f64);
  // image -> logits {num_classes}, or H' x W' x sr_out_channels when sr_head
  Tensor forward(const Tensor& image) const;
};

// Plain stochastic gradient descent with momentum over a parameter list.
class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

  void step(std::vector<ParamEntry>& params);
  static void zero_grad(std::vector<ParamEntry>& params);

  double lr() const { return lr_; }

 private:
  double lr_;
  double momentum_;
  std::vector<NdArray> velocity_;
};

}  // namespace eqvit
