// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "eqvit/config.hpp"
#include "eqvit/data.hpp"

namespace eqvit {

struct TrainSummary {
  std::vector<double> epoch_losses;
  bool diverged = false;  // non-finite loss encountered

  double final_loss() const { return epoch_losses.empty() ? 0.0 : epoch_losses.back(); }
};

TrainSummary train_classifier(AnyModel& model, const LabeledImages& data,
                              const OptimizerConfig& opt);
TrainSummary train_sr(AnyModel& model, const std::vector<SrPair>& data,
                      const OptimizerConfig& opt);

double evaluate_accuracy(const AnyModel& model, const LabeledImages& data);
double evaluate_psnr(const AnyModel& model, const std::vector<SrPair>& data);

// Canonical-orientation training, evaluation on both the canonical test set
// and its randomly re-oriented copy, for an equivariant model and a
// width-matched unconstrained baseline.
struct DataEfficiencyResult {
  double eq_acc_canonical = 0.0;
  double eq_acc_rotated = 0.0;
  double baseline_acc_canonical = 0.0;
  double baseline_acc_rotated = 0.0;
  bool failed = false;

  double eq_gap() const { return std::abs(eq_acc_canonical - eq_acc_rotated); }
  double baseline_gap() const { return baseline_acc_canonical - baseline_acc_rotated; }
  double rotated_margin() const { return eq_acc_rotated - baseline_acc_rotated; }
};

DataEfficiencyResult run_data_efficiency(const ModelChoice& eq_model,
                                         const ModelChoice& baseline_model,
                                         const SyntheticTaskSpec& task,
                                         const OptimizerConfig& opt);

struct SrComparisonResult {
  double eq_psnr = 0.0;
  double eq_psnr_rotated = 0.0;
  double baseline_psnr = 0.0;
  double baseline_psnr_rotated = 0.0;
  bool failed = false;

  double eq_gap_db() const { return std::abs(eq_psnr - eq_psnr_rotated); }
  double baseline_gap_db() const { return std::abs(baseline_psnr - baseline_psnr_rotated); }
};

SrComparisonResult run_toy_sr(const ModelChoice& eq_model, const ModelChoice& baseline_model,
                              const SyntheticTaskSpec& task, const OptimizerConfig& opt);

std::string data_efficiency_to_json(const DataEfficiencyResult& r);
std::string sr_comparison_to_json(const SrComparisonResult& r);

// Reference configurations for the desk-scale experiments; `eq` toggles the
// lifted group (t=4) against the width-matched unconstrained baseline (t=1
// with the same flattened width).
ModelChoice shapes_model_config(bool eq, const SyntheticTaskSpec& task);
ModelChoice sr_model_config(bool eq, const SyntheticTaskSpec& task);

}  // namespace eqvit
