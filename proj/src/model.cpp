// SPDX-License-Identifier: Apache-2.0
#include "eqvit/model.hpp"

#include <cmath>
#include <stdexcept>

namespace eqvit {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

Tensor register_param(std::vector<ParamEntry>& params, const std::string& name,
                      const std::string& kind, Tensor t) {
  params.push_back({name, kind, t});
  return t;
}

void register_linear(std::vector<ParamEntry>& params, const std::string& prefix,
                     const std::string& kind, const EqLinearWeights& w) {
  for (size_t i = 0; i < w.blocks.size(); ++i)
    register_param(params, prefix + ".g" + std::to_string(i), kind, w.blocks[i]);
}

TransformerBlock build_block(const GroupSpec& group, int64_t c, int mlp_ratio,
                             UniformRng& rng, Precision prec,
                             std::vector<ParamEntry>& params, const std::string& prefix) {
  TransformerBlock block;
  block.ln1 = EqLayerNormParams::init(c, prec);
  block.ln2 = EqLayerNormParams::init(c, prec);
  register_param(params, prefix + ".ln1.gamma", "norm", block.ln1.gamma_base);
  register_param(params, prefix + ".ln1.beta", "norm", block.ln1.beta_base);
  register_param(params, prefix + ".ln2.gamma", "norm", block.ln2.gamma_base);
  register_param(params, prefix + ".ln2.beta", "norm", block.ln2.beta_base);
  block.wq = EqLinearWeights::init(group, c, c, rng, prec);
  block.wk = EqLinearWeights::init(group, c, c, rng, prec);
  block.wv = EqLinearWeights::init(group, c, c, rng, prec);
  register_linear(params, prefix + ".attn.wq", "attn_linear", block.wq);
  register_linear(params, prefix + ".attn.wk", "attn_linear", block.wk);
  register_linear(params, prefix + ".attn.wv", "attn_linear", block.wv);
  block.mlp_in = EqLinearWeights::init(group, c, c * mlp_ratio, rng, prec);
  block.mlp_out = EqLinearWeights::init(group, c * mlp_ratio, c, rng, prec);
  register_linear(params, prefix + ".mlp.in", "mlp_linear", block.mlp_in);
  register_linear(params, prefix + ".mlp.out", "mlp_linear", block.mlp_out);
  return block;
}

LiftedFeature lifted_add(const LiftedFeature& a, const LiftedFeature& b) {
  return {add(a.data, b.data), a.layout, a.group, a.grid_side};
}

LiftedFeature lifted_gelu(const LiftedFeature& z) {
  return {gelu(z.data), z.layout, z.group, z.grid_side};
}

LiftedFeature block_forward(const TransformerBlock& block, const LiftedFeature& z,
                            int heads, const EqPosEncodings* rpe, const WindowSpec* window) {
  LiftedFeature attn =
      eq_self_attention(eq_layernorm(z, block.ln1), block.wq, block.wk, block.wv, heads,
                        rpe, window);
  LiftedFeature z1 = lifted_add(z, attn);
  LiftedFeature mlp =
      eq_linear(lifted_gelu(eq_linear(eq_layernorm(z1, block.ln2), block.mlp_in)),
                block.mlp_out);
  return lifted_add(z1, mlp);
}

// Mean over the group axis, then over tokens, then a plain linear map.
Tensor invariant_head(const LiftedFeature& z, const Tensor& w, const Tensor& b,
                      int64_t num_classes) {
  Tensor pooled = mean_axis(mean_axis(z.data, 2), 0);  // {c}
  Tensor logits = matmul(reshape(pooled, {1, pooled.shape()[0]}), w);
  return reshape(add_lastvec(logits, b), {num_classes});
}

}  // namespace

int64_t total_param_count(const std::vector<ParamEntry>& params) {
  int64_t n = 0;
  for (const auto& p : params) n += p.tensor.value().size();
  return n;
}

int64_t param_count_of_kind(const std::vector<ParamEntry>& params, const std::string& kind) {
  int64_t n = 0;
  for (const auto& p : params)
    if (p.kind == kind) n += p.tensor.value().size();
  return n;
}

void EqViTConfig::validate() const {
  require(image_side >= 1 && patch_stride >= 1 && image_side % patch_stride == 0,
          "EqViTConfig: image side must be divisible by the patch stride");
  require(channels >= 1 && heads >= 1 && channels % heads == 0,
          "EqViTConfig: heads must divide the channel blocks");
  require(depth >= 1 && mlp_ratio >= 1 && num_classes >= 1 && in_channels >= 1,
          "EqViTConfig: depth, mlp_ratio, num_classes, in_channels must be positive");
}

EqViT EqViT::build(const EqViTConfig& cfg, uint64_t seed, Precision prec) {
  cfg.validate();
  EqViT model;
  model.cfg = cfg;
  UniformRng rng(seed);
  model.patch = EqConvKernel::init(cfg.patch_stride, cfg.in_channels, cfg.channels, rng, prec);
  register_param(model.params, "patch.kernel", "patch", model.patch.base);
  model.maps = CanonicalMaps::build(cfg.grid_side(), cfg.group);
  if (cfg.use_ape) {
    model.ape = build_ape(model.maps, cfg.channels, rng, prec);
    register_param(model.params, "ape.table", "pos", model.ape->ape_base);
  }
  for (int l = 0; l < cfg.depth; ++l)
    model.blocks.push_back(build_block(cfg.group, cfg.channels, cfg.mlp_ratio, rng, prec,
                                       model.params, "block" + std::to_string(l)));
  double bound = std::sqrt(6.0 / static_cast<double>(cfg.channels + cfg.num_classes));
  model.head_w = register_param(model.params, "head.weight", "head",
                                Tensor::leaf(rng.array({cfg.channels, cfg.num_classes},
                                                       -bound, bound, prec), true));
  model.head_b = register_param(model.params, "head.bias", "head",
                                Tensor::leaf(NdArray({cfg.num_classes}, prec), true));
  return model;
}

Tensor EqViT::forward(const Tensor& image) const {
  LiftedFeature z = eq_patch_embed(image, patch, cfg.group);
  if (ape.has_value()) z = apply_ape(z, *ape);
  for (const auto& block : blocks) z = block_forward(block, z, cfg.heads, nullptr, nullptr);
  return invariant_head(z, head_w, head_b, cfg.num_classes);
}

void EqSwinConfig::validate() const {
  require(image_side >= 1 && patch_stride >= 1 && image_side % patch_stride == 0,
          "EqSwinConfig: image side must be divisible by the patch stride");
  require(channels >= 1 && heads >= 1 && channels % heads == 0,
          "EqSwinConfig: heads must divide the channel blocks");
  require(!stage_depths.empty(), "EqSwinConfig: at least one stage");
  require(window_side >= 1 && shift_size >= 0 && shift_size < window_side,
          "EqSwinConfig: shift must be smaller than the window side");
  int side = grid_side();
  for (size_t s = 0; s < stage_depths.size(); ++s) {
    require(stage_depths[s] >= 1, "EqSwinConfig: stage depths must be positive");
    require(side % window_side == 0,
            "EqSwinConfig: token grid side " + std::to_string(side) +
                " does not tile into windows at stage " + std::to_string(s));
    if (s + 1 < stage_depths.size()) {
      require(side % 2 == 0, "EqSwinConfig: merge requires an even grid side");
      side /= 2;
    }
  }
  if (sr_head) {
    require(stage_depths.size() == 1, "EqSwinConfig: SR head expects a single stage");
    require(sr_scale >= 1 && sr_out_channels >= 1, "EqSwinConfig: invalid SR head fields");
  }
  require(mlp_ratio >= 1 && num_classes >= 1 && in_channels >= 1,
          "EqSwinConfig: mlp_ratio, num_classes, in_channels must be positive");
}

EqSwin EqSwin::build(const EqSwinConfig& cfg, uint64_t seed, Precision prec) {
  cfg.validate();
  EqSwin model;
  model.cfg = cfg;
  UniformRng rng(seed);
  model.patch = EqConvKernel::init(cfg.patch_stride, cfg.in_channels, cfg.channels, rng, prec);
  register_param(model.params, "patch.kernel", "patch", model.patch.base);
  model.window_maps = CanonicalMaps::build(cfg.window_side, cfg.group);
  if (cfg.use_ape) {
    model.ape_maps = CanonicalMaps::build(cfg.grid_side(), cfg.group);
    model.ape = build_ape(model.ape_maps, cfg.channels, rng, prec);
    register_param(model.params, "ape.table", "pos", model.ape->ape_base);
  }

  int64_t c = cfg.channels;
  int block_id = 0;
  for (size_t s = 0; s < cfg.stage_depths.size(); ++s) {
    EqSwinStage stage;
    for (int d = 0; d < cfg.stage_depths[s]; ++d) {
      std::string prefix = "stage" + std::to_string(s) + ".block" + std::to_string(d);
      stage.blocks.push_back(
          build_block(cfg.group, c, cfg.mlp_ratio, rng, prec, model.params, prefix));
      int shift = (d % 2 == 1) ? cfg.shift_size : 0;
      stage.windows.push_back(WindowSpec{cfg.window_side, shift});
      if (cfg.use_rpe) {
        EqPosEncodings rpe = build_rpe(model.window_maps, rng, prec);
        register_param(model.params, prefix + ".rpe.table", "pos", rpe.rpe_base);
        model.block_rpe.push_back(rpe);
      } else {
        model.block_rpe.push_back(std::nullopt);
      }
      ++block_id;
    }
    if (s + 1 < cfg.stage_depths.size()) {
      stage.merge_after = true;
      stage.merge = EqLinearWeights::init(cfg.group, c, c * 2, rng, prec);
      register_linear(model.params, "merge" + std::to_string(s), "mlp_linear", stage.merge);
      c *= 2;
    }
    model.stages.push_back(std::move(stage));
  }

  if (cfg.sr_head) {
    int r = cfg.sr_scale * cfg.patch_stride;
    model.sr_expand = EqLinearWeights::init(
        cfg.group, c, static_cast<int64_t>(r) * r * cfg.sr_out_channels, rng, prec);
    register_linear(model.params, "sr.expand", "head", model.sr_expand);
  } else {
    double bound = std::sqrt(6.0 / static_cast<double>(c + cfg.num_classes));
    model.head_w = register_param(model.params, "head.weight", "head",
                                  Tensor::leaf(rng.array({c, cfg.num_classes}, -bound,
                                                         bound, prec), true));
    model.head_b = register_param(model.params, "head.bias", "head",
                                  Tensor::leaf(NdArray({cfg.num_classes}, prec), true));
  }
  return model;
}

Tensor EqSwin::forward(const Tensor& image) const {
  LiftedFeature z = eq_patch_embed(image, patch, cfg.group);
  if (ape.has_value()) z = apply_ape(z, *ape);
  size_t rpe_idx = 0;
  for (const auto& stage : stages) {
    for (size_t d = 0; d < stage.blocks.size(); ++d) {
      const EqPosEncodings* rpe =
          block_rpe[rpe_idx].has_value() ? &*block_rpe[rpe_idx] : nullptr;
      z = block_forward(stage.blocks[d], z, cfg.heads, rpe, &stage.windows[d]);
      ++rpe_idx;
    }
    if (stage.merge_after) z = eq_linear(eq_downsample(z, 2).to_tokens(), stage.merge);
  }

  if (!cfg.sr_head) return invariant_head(z, head_w, head_b, cfg.num_classes);

  int r = cfg.sr_scale * cfg.patch_stride;
  LiftedFeature expanded = eq_linear(z, sr_expand);
  LiftedFeature up = eq_pixel_shuffle(expanded.to_spatial(), r);
  return mean_axis(up.data, 3);  // group mean -> H' x W' x out_channels
}

void SgdMomentum::step(std::vector<ParamEntry>& params) {
  if (velocity_.empty())
    for (const auto& p : params) velocity_.push_back(NdArray::zeros_like(p.tensor.value()));
  require(velocity_.size() == params.size(), "SgdMomentum: parameter list changed size");
  for (size_t i = 0; i < params.size(); ++i) {
    NdArray& v = velocity_[i];
    NdArray& w = params[i].tensor.mutable_value();
    const NdArray& g = params[i].tensor.grad();
    for (int64_t j = 0; j < w.size(); ++j) {
      v[j] = momentum_ * v[j] + g[j];
      w[j] -= lr_ * v[j];
    }
    w.quantize();
  }
}

void SgdMomentum::zero_grad(std::vector<ParamEntry>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace eqvit
