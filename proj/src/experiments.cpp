// SPDX-License-Identifier: Apache-2.0
#include "eqvit/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace eqvit {

namespace {

std::vector<size_t> shuffled_order(size_t n, UniformRng& rng) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.next_index(i)]);
  return order;
}

template <typename LossFn>
TrainSummary train_loop(AnyModel& model, size_t count, const OptimizerConfig& opt,
                        LossFn&& sample_loss) {
  TrainSummary summary;
  SgdMomentum sgd(opt.lr, opt.momentum);
  UniformRng rng(opt.seed * 0x2545f4914f6cdd1dULL + 11);
  size_t batch = std::max<size_t>(1, static_cast<size_t>(opt.batch_size));
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    auto order = shuffled_order(count, rng);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size(); start += batch) {
      size_t n = std::min(batch, order.size() - start);
      SgdMomentum::zero_grad(model.params());
      // gradients of the batch-mean loss
      for (size_t pos = start; pos < start + n; ++pos) {
        Tensor loss = sample_loss(order[pos]);
        epoch_loss += loss.value()[0];
        backward(scale(loss, 1.0 / static_cast<double>(n)));
      }
      sgd.step(model.params());
    }
    epoch_loss /= static_cast<double>(std::max<size_t>(count, 1));
    summary.epoch_losses.push_back(epoch_loss);
    if (!std::isfinite(epoch_loss)) {
      summary.diverged = true;
      break;
    }
  }
  return summary;
}

}  // namespace

TrainSummary train_classifier(AnyModel& model, const LabeledImages& data,
                              const OptimizerConfig& opt) {
  return train_loop(model, data.images.size(), opt, [&](size_t i) {
    Tensor logits = model.forward(Tensor::leaf(data.images[i]));
    return softmax_cross_entropy(logits, data.labels[i]);
  });
}

TrainSummary train_sr(AnyModel& model, const std::vector<SrPair>& data,
                      const OptimizerConfig& opt) {
  return train_loop(model, data.size(), opt, [&](size_t i) {
    Tensor out = model.forward(Tensor::leaf(data[i].lr));
    Tensor diff = sub(out, Tensor::leaf(data[i].hr));
    return scale(sum_all(mul(diff, diff)), 1.0 / static_cast<double>(out.value().size()));
  });
}

double evaluate_accuracy(const AnyModel& model, const LabeledImages& data) {
  if (data.images.empty()) return 0.0;
  int64_t correct = 0;
  for (size_t i = 0; i < data.images.size(); ++i) {
    Tensor logits = model.forward(Tensor::leaf(data.images[i]));
    const NdArray& v = logits.value();
    int64_t best = 0;
    for (int64_t c = 1; c < v.size(); ++c)
      if (v[c] > v[best]) best = c;
    if (best == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.images.size());
}

double evaluate_psnr(const AnyModel& model, const std::vector<SrPair>& data) {
  if (data.empty()) return 0.0;
  double acc = 0.0;
  for (const SrPair& pair : data)
    acc += psnr(model.forward(Tensor::leaf(pair.lr)).value(), pair.hr);
  return acc / static_cast<double>(data.size());
}

DataEfficiencyResult run_data_efficiency(const ModelChoice& eq_model,
                                         const ModelChoice& baseline_model,
                                         const SyntheticTaskSpec& task,
                                         const OptimizerConfig& opt) {
  SyntheticTaskSpec canonical = task;
  canonical.test_orientation_policy = OrientationPolicy::CanonicalOnly;
  ShapesData data = gen_shapes(canonical);
  LabeledImages rotated_test =
      with_random_orientations(data.test, task.orientation_group, task.seed + 101);

  DataEfficiencyResult result;
  AnyModel eq = AnyModel::build(eq_model, opt.seed);
  TrainSummary eq_summary = train_classifier(eq, data.train, opt);
  AnyModel base = AnyModel::build(baseline_model, opt.seed);
  TrainSummary base_summary = train_classifier(base, data.train, opt);
  result.failed = eq_summary.diverged || base_summary.diverged;
  if (result.failed) return result;

  result.eq_acc_canonical = evaluate_accuracy(eq, data.test);
  result.eq_acc_rotated = evaluate_accuracy(eq, rotated_test);
  result.baseline_acc_canonical = evaluate_accuracy(base, data.test);
  result.baseline_acc_rotated = evaluate_accuracy(base, rotated_test);
  return result;
}

namespace {

std::vector<SrPair> rotate_sr_pairs(const std::vector<SrPair>& pairs, const GroupSpec& group,
                                    uint64_t seed) {
  UniformRng rng(seed);
  std::vector<SrPair> out;
  out.reserve(pairs.size());
  for (const SrPair& pair : pairs) {
    GroupElement g = element_at(static_cast<int>(rng.next_index(group.order())), group);
    out.push_back({transform_image(pair.lr, g, group), transform_image(pair.hr, g, group)});
  }
  return out;
}

}  // namespace

SrComparisonResult run_toy_sr(const ModelChoice& eq_model, const ModelChoice& baseline_model,
                              const SyntheticTaskSpec& task, const OptimizerConfig& opt) {
  SrData data = gen_toy_sr(task);
  std::vector<SrPair> rotated_test =
      rotate_sr_pairs(data.test, task.orientation_group, task.seed + 211);

  SrComparisonResult result;
  AnyModel eq = AnyModel::build(eq_model, opt.seed);
  TrainSummary eq_summary = train_sr(eq, data.train, opt);
  AnyModel base = AnyModel::build(baseline_model, opt.seed);
  TrainSummary base_summary = train_sr(base, data.train, opt);
  result.failed = eq_summary.diverged || base_summary.diverged;
  if (result.failed) return result;

  result.eq_psnr = evaluate_psnr(eq, data.test);
  result.eq_psnr_rotated = evaluate_psnr(eq, rotated_test);
  result.baseline_psnr = evaluate_psnr(base, data.test);
  result.baseline_psnr_rotated = evaluate_psnr(base, rotated_test);
  return result;
}

std::string data_efficiency_to_json(const DataEfficiencyResult& r) {
  nlohmann::json j;
  j["failed"] = r.failed;
  j["eq"] = {{"canonical_accuracy", r.eq_acc_canonical},
             {"rotated_accuracy", r.eq_acc_rotated}};
  j["baseline"] = {{"canonical_accuracy", r.baseline_acc_canonical},
                   {"rotated_accuracy", r.baseline_acc_rotated}};
  j["eq_gap"] = r.eq_gap();
  j["baseline_gap"] = r.baseline_gap();
  j["rotated_margin"] = r.rotated_margin();
  return j.dump(2);
}

std::string sr_comparison_to_json(const SrComparisonResult& r) {
  nlohmann::json j;
  j["failed"] = r.failed;
  j["eq"] = {{"psnr", r.eq_psnr}, {"psnr_rotated", r.eq_psnr_rotated}};
  j["baseline"] = {{"psnr", r.baseline_psnr}, {"psnr_rotated", r.baseline_psnr_rotated}};
  j["eq_gap_db"] = r.eq_gap_db();
  j["baseline_gap_db"] = r.baseline_gap_db();
  return j.dump(2);
}

ModelChoice shapes_model_config(bool eq, const SyntheticTaskSpec& task) {
  ModelChoice choice;
  choice.kind = "eqvit";
  EqViTConfig& cfg = choice.vit;
  cfg.image_side = task.image_side;
  cfg.patch_stride = 4;
  cfg.in_channels = 1;
  cfg.depth = 2;
  cfg.heads = 2;
  cfg.mlp_ratio = 2;
  cfg.num_classes = task.num_classes;
  cfg.use_ape = true;
  if (eq) {
    cfg.group = task.orientation_group;
    cfg.channels = 8;
  } else {
    cfg.group = {1, false};
    cfg.channels = 8 * task.orientation_group.order();  // same flattened width
  }
  return choice;
}

ModelChoice sr_model_config(bool eq, const SyntheticTaskSpec& task) {
  ModelChoice choice;
  choice.kind = "eqswin";
  EqSwinConfig& cfg = choice.swin;
  cfg.image_side = task.image_side / task.scale;  // the low-resolution input side
  cfg.patch_stride = 2;
  cfg.in_channels = 1;
  cfg.heads = 2;
  cfg.mlp_ratio = 2;
  cfg.window_side = cfg.image_side / cfg.patch_stride;
  cfg.shift_size = 0;
  cfg.stage_depths = {2};
  cfg.use_rpe = true;
  cfg.use_ape = false;
  cfg.sr_head = true;
  cfg.sr_scale = task.scale;
  cfg.sr_out_channels = 1;
  if (eq) {
    cfg.group = task.orientation_group;
    cfg.channels = 8;
  } else {
    cfg.group = {1, false};
    cfg.channels = 8 * task.orientation_group.order();
  }
  return choice;
}

}  // namespace eqvit
