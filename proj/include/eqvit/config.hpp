// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include "eqvit/data.hpp"
#include "eqvit/model.hpp"

namespace eqvit {

// Model selection: exactly one of the two architectures.
struct ModelChoice {
  std::string kind = "eqvit";  // "eqvit" | "eqswin"
  EqViTConfig vit;
  EqSwinConfig swin;

  void validate() const;
};

struct OptimizerConfig {
  double lr = 0.01;
  double momentum = 0.9;
  int epochs = 40;
  int batch_size = 16;
  uint64_t seed = 0;
};

struct RunConfig {
  ModelChoice model;
  bool has_model = true;  // false when the source JSON had no model section
  SyntheticTaskSpec task;
  OptimizerConfig optimizer;
};

// Thin dispatch over the two model classes.
struct AnyModel {
  std::string kind;
  std::optional<EqViT> vit;
  std::optional<EqSwin> swin;

  static AnyModel build(const ModelChoice& choice, uint64_t seed,
                        Precision prec = Precision::f64);
  Tensor forward(const Tensor& image) const;
  std::vector<ParamEntry>& params();
  const std::vector<ParamEntry>& params() const;
  const GroupSpec& group() const;
};

RunConfig run_config_from_json(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& config);
void save_run_config(const std::string& path, const RunConfig& config);

}  // namespace eqvit
