// SPDX-License-Identifier: Apache-2.0
#include "eqvit/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace eqvit {

namespace {

using nlohmann::json;

GroupSpec group_from_json(const json& j) {
  GroupSpec spec;
  spec.t = j.at("t").get<int>();
  spec.with_reflection = j.at("with_reflection").get<bool>();
  return spec;
}

json group_to_json(const GroupSpec& spec) {
  return {{"t", spec.t}, {"with_reflection", spec.with_reflection}};
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void ModelChoice::validate() const {
  if (kind == "eqvit")
    vit.validate();
  else if (kind == "eqswin")
    swin.validate();
  else
    throw std::invalid_argument("model kind must be eqvit or eqswin, got '" + kind + "'");
}

AnyModel AnyModel::build(const ModelChoice& choice, uint64_t seed, Precision prec) {
  choice.validate();
  AnyModel model;
  model.kind = choice.kind;
  if (choice.kind == "eqvit")
    model.vit = EqViT::build(choice.vit, seed, prec);
  else
    model.swin = EqSwin::build(choice.swin, seed, prec);
  return model;
}

Tensor AnyModel::forward(const Tensor& image) const {
  return vit.has_value() ? vit->forward(image) : swin->forward(image);
}

std::vector<ParamEntry>& AnyModel::params() {
  return vit.has_value() ? vit->params : swin->params;
}

const std::vector<ParamEntry>& AnyModel::params() const {
  return vit.has_value() ? vit->params : swin->params;
}

const GroupSpec& AnyModel::group() const {
  return vit.has_value() ? vit->cfg.group : swin->cfg.group;
}

RunConfig run_config_from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  RunConfig config;

  config.has_model = j.contains("model");
  if (config.has_model) {
    const json& m = j.at("model");
    read_if(m, "kind", config.model.kind);
    auto fill_common = [&](auto& cfg) {
      read_if(m, "image_side", cfg.image_side);
      read_if(m, "patch_stride", cfg.patch_stride);
      read_if(m, "in_channels", cfg.in_channels);
      read_if(m, "channels", cfg.channels);
      read_if(m, "heads", cfg.heads);
      read_if(m, "mlp_ratio", cfg.mlp_ratio);
      read_if(m, "num_classes", cfg.num_classes);
      read_if(m, "use_ape", cfg.use_ape);
      if (m.contains("group")) cfg.group = group_from_json(m.at("group"));
    };
    if (config.model.kind == "eqvit") {
      fill_common(config.model.vit);
      read_if(m, "depth", config.model.vit.depth);
    } else {
      fill_common(config.model.swin);
      read_if(m, "window_side", config.model.swin.window_side);
      read_if(m, "shift_size", config.model.swin.shift_size);
      read_if(m, "stage_depths", config.model.swin.stage_depths);
      read_if(m, "use_rpe", config.model.swin.use_rpe);
      read_if(m, "sr_head", config.model.swin.sr_head);
      read_if(m, "sr_scale", config.model.swin.sr_scale);
      read_if(m, "sr_out_channels", config.model.swin.sr_out_channels);
    }
    config.model.validate();
  }

  if (j.contains("task")) {
    const json& t = j.at("task");
    if (t.contains("task")) config.task.task = task_from_name(t.at("task").get<std::string>());
    read_if(t, "image_side", config.task.image_side);
    read_if(t, "num_classes", config.task.num_classes);
    read_if(t, "scale", config.task.scale);
    read_if(t, "train_size", config.task.train_size);
    read_if(t, "test_size", config.task.test_size);
    read_if(t, "seed", config.task.seed);
    if (t.contains("test_orientation_policy"))
      config.task.test_orientation_policy =
          policy_from_name(t.at("test_orientation_policy").get<std::string>());
    if (t.contains("orientation_group"))
      config.task.orientation_group = group_from_json(t.at("orientation_group"));
    read_if(t, "sr_exact_degradation", config.task.sr_exact_degradation);
    config.task.validate();
  }

  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    read_if(o, "lr", config.optimizer.lr);
    read_if(o, "momentum", config.optimizer.momentum);
    read_if(o, "epochs", config.optimizer.epochs);
    read_if(o, "batch_size", config.optimizer.batch_size);
    read_if(o, "seed", config.optimizer.seed);
  }
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return run_config_from_json(buffer.str());
}

std::string run_config_to_json(const RunConfig& config) {
  json m;
  m["kind"] = config.model.kind;
  auto put_common = [&](const auto& cfg) {
    m["image_side"] = cfg.image_side;
    m["patch_stride"] = cfg.patch_stride;
    m["in_channels"] = cfg.in_channels;
    m["channels"] = cfg.channels;
    m["heads"] = cfg.heads;
    m["mlp_ratio"] = cfg.mlp_ratio;
    m["num_classes"] = cfg.num_classes;
    m["use_ape"] = cfg.use_ape;
    m["group"] = group_to_json(cfg.group);
  };
  if (config.model.kind == "eqvit") {
    put_common(config.model.vit);
    m["depth"] = config.model.vit.depth;
  } else {
    put_common(config.model.swin);
    m["window_side"] = config.model.swin.window_side;
    m["shift_size"] = config.model.swin.shift_size;
    m["stage_depths"] = config.model.swin.stage_depths;
    m["use_rpe"] = config.model.swin.use_rpe;
    m["sr_head"] = config.model.swin.sr_head;
    m["sr_scale"] = config.model.swin.sr_scale;
    m["sr_out_channels"] = config.model.swin.sr_out_channels;
  }

  json t;
  t["task"] = task_name(config.task.task);
  t["image_side"] = config.task.image_side;
  t["num_classes"] = config.task.num_classes;
  t["scale"] = config.task.scale;
  t["train_size"] = config.task.train_size;
  t["test_size"] = config.task.test_size;
  t["seed"] = config.task.seed;
  t["test_orientation_policy"] = policy_name(config.task.test_orientation_policy);
  t["orientation_group"] = group_to_json(config.task.orientation_group);
  t["sr_exact_degradation"] = config.task.sr_exact_degradation;

  json o;
  o["lr"] = config.optimizer.lr;
  o["momentum"] = config.optimizer.momentum;
  o["epochs"] = config.optimizer.epochs;
  o["batch_size"] = config.optimizer.batch_size;
  o["seed"] = config.optimizer.seed;

  return json{{"model", m}, {"task", t}, {"optimizer", o}}.dump(2);
}

void save_run_config(const std::string& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot open '" + path + "' for writing");
  out << run_config_to_json(config) << "\n";
}

}  // namespace eqvit
