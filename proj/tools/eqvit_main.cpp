// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "eqvit/checkpoint.hpp"
#include "eqvit/config.hpp"
#include "eqvit/experiments.hpp"
#include "eqvit/verify.hpp"

namespace {

using namespace eqvit;

GroupSpec parse_group(const std::string& name) {
  if (name.size() < 2 || (name[0] != 'c' && name[0] != 'd'))
    throw CLI::ValidationError("--group", "expected c{1,2,4} or d{1,2,4}, got '" + name + "'");
  GroupSpec spec;
  spec.with_reflection = name[0] == 'd';
  spec.t = std::stoi(name.substr(1));
  if (spec.t != 1 && spec.t != 2 && spec.t != 4)
    throw CLI::ValidationError("--group", "rotation order must be 1, 2, or 4");
  return spec;
}

void print_report_line(const EquivarianceReport& r, double threshold) {
  std::printf("  %-34s worst_abs %.3e  worst_rel %.3e  [%s]\n", r.target.c_str(),
              r.worst_abs(), r.worst_rel(), r.worst_abs() <= threshold ? "ok" : "FAIL");
}

void write_reports_json(const std::string& path,
                        const std::vector<EquivarianceReport>& reports) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reports) j.push_back(nlohmann::json::parse(report_to_json(r)));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open report path '" + path + "'");
  out << j.dump(2) << "\n";
}

int cmd_audit(const std::string& group_name, const std::string& precision_name_,
              int seeds, const std::string& report_path, bool negative_control,
              const std::string& orbit_csv, int orbit_grid) {
  Precision prec = precision_from_name(precision_name_);
  GroupSpec group = parse_group(group_name);
  std::vector<EquivarianceReport> all_reports;
  bool ok = true;

  if (!orbit_csv.empty()) {
    CanonicalMaps maps = CanonicalMaps::build(orbit_grid, group);
    std::ofstream out(orbit_csv);
    if (!out) throw std::runtime_error("cannot open '" + orbit_csv + "'");
    write_canonical_maps_csv(maps, out);
    std::printf("wrote canonical maps (side %d, %d orbits) to %s\n", orbit_grid,
                maps.orbit_count, orbit_csv.c_str());
  }

  if (negative_control) {
    EquivarianceReport report = negative_control_report(prec);
    all_reports.push_back(report);
    double worst = report.worst_abs();
    std::printf("negative control (unshared weights): worst_abs %.3e (flag threshold %.0e)\n",
                worst, negative_control_threshold());
    bool flagged = worst >= negative_control_threshold();
    std::printf("%s\n", flagged ? "flagged as non-equivariant (expected)"
                                : "NOT flagged: the suite failed to detect the defect");
    if (!report_path.empty()) write_reports_json(report_path, all_reports);
    return flagged ? 1 : 0;  // a flagged control is a failing suite by design
  }

  std::printf("layer equivariance (%s, %s, %d seeds):\n", group_name.c_str(),
              eqvit::precision_name(prec), seeds);
  SuiteResult layers = layer_equivariance_suite(prec, seeds, group);
  for (const auto& r : layers.reports) print_report_line(r, layers.threshold);
  ok = ok && layers.passed;

  std::printf("model invariance/equivariance (%s):\n", eqvit::precision_name(prec));
  SuiteResult models = model_invariance_suite(prec);
  for (const auto& r : models.reports) print_report_line(r, models.threshold);
  ok = ok && models.passed;

  double tile_worst = tiling_equivalence_worst(50);
  bool tile_ok = tile_worst <= 1e-12;
  std::printf("tiling equivalence over 50 configs: worst_abs %.3e  [%s]\n", tile_worst,
              tile_ok ? "ok" : "FAIL");
  ok = ok && tile_ok;

  ParamAccounting acc = param_accounting();
  bool params_ok = acc.reduction_exact() && acc.all_layer_factors_exact;
  std::printf("parameter sharing: eq attn+mlp %lld vs unconstrained %lld (factor %lld) [%s]\n",
              static_cast<long long>(acc.eq_attn_mlp),
              static_cast<long long>(acc.baseline_attn_mlp),
              static_cast<long long>(acc.group_order), params_ok ? "ok" : "FAIL");
  ok = ok && params_ok;

  bool orbits_ok = orbit_tables_match(16, 8);
  std::printf("orbit tables vs enumeration oracle: [%s]\n", orbits_ok ? "ok" : "FAIL");
  ok = ok && orbits_ok;

  std::printf("gradient audits (64-bit):\n");
  for (const auto& [name, err] : gradient_audit_suite()) {
    double tol = name == "attention_grad" ? 1e-4 : 1e-5;
    bool grad_ok = err <= tol;
    std::printf("  %-34s rel_err %.3e (tol %.0e)  [%s]\n", name.c_str(), err, tol,
                grad_ok ? "ok" : "FAIL");
    ok = ok && grad_ok;
  }

  for (const auto& r : layers.reports) all_reports.push_back(r);
  for (const auto& r : models.reports) all_reports.push_back(r);
  if (!report_path.empty()) write_reports_json(report_path, all_reports);

  std::printf("audit: %s\n", ok ? "all suites passed" : "FAILURES detected");
  return ok ? 0 : 1;
}

RunConfig config_for(const std::string& config_path, const std::string& task_name_) {
  RunConfig config;
  if (!config_path.empty()) config = load_run_config(config_path);
  if (!task_name_.empty()) config.task.task = task_from_name(task_name_);
  if (config_path.empty() || !config.has_model) {
    config.model = config.task.task == TaskKind::Shapes
                       ? shapes_model_config(true, config.task)
                       : sr_model_config(true, config.task);
    config.has_model = true;
  }
  return config;
}

int cmd_train(const std::string& config_path, const std::string& task_name_,
              const std::string& out_path) {
  RunConfig config = config_for(config_path, task_name_);
  AnyModel model = AnyModel::build(config.model, config.optimizer.seed);
  std::printf("training %s on %s (%lld parameters)\n", config.model.kind.c_str(),
              task_name(config.task.task),
              static_cast<long long>(total_param_count(model.params())));

  TrainSummary summary;
  if (config.task.task == TaskKind::Shapes) {
    SyntheticTaskSpec train_spec = config.task;
    train_spec.test_orientation_policy = OrientationPolicy::CanonicalOnly;
    ShapesData data = gen_shapes(train_spec);
    summary = train_classifier(model, data.train, config.optimizer);
  } else {
    SrData data = gen_toy_sr(config.task);
    summary = train_sr(model, data.train, config.optimizer);
  }
  for (size_t e = 0; e < summary.epoch_losses.size(); ++e)
    std::printf("  epoch %2zu  loss %.6f\n", e, summary.epoch_losses[e]);
  if (summary.diverged) {
    std::printf("training diverged (non-finite loss); run marked failed\n");
    return 1;
  }
  save_checkpoint(out_path, state_of(model.params()));
  save_run_config(out_path + ".json", config);
  std::printf("wrote %s and %s.json\n", out_path.c_str(), out_path.c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& config_path,
             const std::string& task_name_, const std::string& report_path) {
  std::string sidecar = config_path.empty() ? checkpoint_path + ".json" : config_path;
  RunConfig config = load_run_config(sidecar);
  if (!task_name_.empty()) config.task.task = task_from_name(task_name_);
  AnyModel model = AnyModel::build(config.model, config.optimizer.seed);
  load_state(model.params(), load_checkpoint(checkpoint_path));

  nlohmann::json j;
  if (config.task.task == TaskKind::Shapes) {
    SyntheticTaskSpec spec = config.task;
    spec.test_orientation_policy = OrientationPolicy::CanonicalOnly;
    ShapesData data = gen_shapes(spec);
    LabeledImages rotated =
        with_random_orientations(data.test, spec.orientation_group, spec.seed + 101);
    double acc = evaluate_accuracy(model, data.test);
    double acc_rot = evaluate_accuracy(model, rotated);
    std::printf("accuracy canonical %.4f  rotated %.4f  gap %.4f\n", acc, acc_rot,
                acc - acc_rot);
    j = {{"accuracy_canonical", acc}, {"accuracy_rotated", acc_rot}};
  } else {
    SrData data = gen_toy_sr(config.task);
    double db = evaluate_psnr(model, data.test);
    std::printf("psnr %.3f dB over %zu held-out pairs\n", db, data.test.size());
    j = {{"psnr_db", db}};
  }
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    out << j.dump(2) << "\n";
  }
  return 0;
}

int cmd_bench(const std::string& config_path, const std::string& task_name_) {
  RunConfig config = config_for(config_path, task_name_);
  AnyModel model = AnyModel::build(config.model, config.optimizer.seed);
  const auto& params = model.params();
  std::printf("parameter ledger (%s):\n", config.model.kind.c_str());
  for (const char* kind : {"patch", "pos", "attn_linear", "mlp_linear", "norm", "head"})
    std::printf("  %-12s %lld\n", kind,
                static_cast<long long>(param_count_of_kind(params, kind)));
  std::printf("  %-12s %lld\n", "total", static_cast<long long>(total_param_count(params)));

  int side = config.model.kind == "eqvit" ? config.model.vit.image_side
                                          : config.model.swin.image_side;
  int chans = config.model.kind == "eqvit" ? config.model.vit.in_channels
                                           : config.model.swin.in_channels;
  UniformRng rng(1);
  Tensor image = Tensor::leaf(rng.array({side, side, chans}, -1.0, 1.0));
  model.forward(image);  // warm-up
  auto start = std::chrono::steady_clock::now();
  int iters = 20;
  for (int i = 0; i < iters; ++i) model.forward(image);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("forward throughput: %.1f images/s (%.2f ms/image)\n", iters / secs,
              1e3 * secs / iters);
  return 0;
}

int cmd_compare(const std::string& task_name_, int num_seeds, const std::string& config_path,
                const std::string& report_path) {
  RunConfig base_config = config_for(config_path, task_name_);
  SyntheticTaskSpec task = base_config.task;
  nlohmann::json out = nlohmann::json::array();
  bool ok = true;

  for (int s = 0; s < num_seeds; ++s) {
    SyntheticTaskSpec seeded = task;
    seeded.seed = static_cast<uint64_t>(s);
    OptimizerConfig opt = base_config.optimizer;
    opt.seed = static_cast<uint64_t>(s);
    if (task.task == TaskKind::Shapes) {
      DataEfficiencyResult r = run_data_efficiency(shapes_model_config(true, seeded),
                                                   shapes_model_config(false, seeded),
                                                   seeded, opt);
      std::printf("seed %d: eq canonical %.3f rotated %.3f | baseline canonical %.3f "
                  "rotated %.3f | margin %.3f%s\n",
                  s, r.eq_acc_canonical, r.eq_acc_rotated, r.baseline_acc_canonical,
                  r.baseline_acc_rotated, r.rotated_margin(), r.failed ? " [FAILED]" : "");
      out.push_back(nlohmann::json::parse(data_efficiency_to_json(r)));
      ok = ok && !r.failed;
    } else {
      SrComparisonResult r = run_toy_sr(sr_model_config(true, seeded),
                                        sr_model_config(false, seeded), seeded, opt);
      std::printf("seed %d: eq %.3f dB (rotated %.3f) | baseline %.3f dB (rotated %.3f)%s\n",
                  s, r.eq_psnr, r.eq_psnr_rotated, r.baseline_psnr, r.baseline_psnr_rotated,
                  r.failed ? " [FAILED]" : "");
      out.push_back(nlohmann::json::parse(sr_comparison_to_json(r)));
      ok = ok && !r.failed;
    }
  }
  if (!report_path.empty()) {
    std::ofstream f(report_path);
    f << out.dump(2) << "\n";
  }
  return ok ? 0 : 1;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_path) {
  std::vector<EquivarianceReport> reports;
  for (const std::string& path : inputs) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    nlohmann::json j = nlohmann::json::parse(buffer.str());
    if (j.is_array())
      for (const auto& item : j) reports.push_back(report_from_json(item.dump()));
    else
      reports.push_back(report_from_json(j.dump()));
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot open '" + out_path + "'");
  reports_to_csv(reports, out);
  std::printf("wrote %zu report rows to %s\n", reports.size(), out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"equivariant vision transformer toolkit"};
  app.require_subcommand(1);

  auto* audit = app.add_subcommand("audit", "run the verification suites");
  std::string group = "d4", precision = "f64", audit_report, orbit_csv;
  int seeds = 20, orbit_grid = 8;
  bool negative_control = false;
  audit->add_option("--group", group, "transformation group (c1,c2,c4,d1,d2,d4)");
  audit->add_option("--precision", precision, "f32 or f64");
  audit->add_option("--seeds", seeds, "number of fixed seeds (default 20)");
  audit->add_option("--report", audit_report, "write JSON reports to this path");
  audit->add_flag("--negative-control", negative_control,
                  "audit the deliberately broken (unshared) layer instead");
  audit->add_option("--orbit-csv", orbit_csv, "export canonical maps CSV to this path");
  audit->add_option("--orbit-grid", orbit_grid, "grid side for --orbit-csv (default 8)");

  auto* train = app.add_subcommand("train", "train a toy model on a synthetic task");
  std::string train_config, train_task, train_out = "model.eqtc";
  train->add_option("--config", train_config, "run configuration JSON");
  train->add_option("--task", train_task, "shapes or sr (defaults from config)");
  train->add_option("--out", train_out, "checkpoint output path");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a task");
  std::string eval_ckpt, eval_config, eval_task, eval_report;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--config", eval_config, "run configuration (default: <checkpoint>.json)");
  eval->add_option("--task", eval_task, "shapes or sr");
  eval->add_option("--report", eval_report, "write metrics JSON here");

  auto* bench = app.add_subcommand("bench", "parameter and throughput ledger");
  std::string bench_config, bench_task;
  bench->add_option("--config", bench_config, "run configuration JSON");
  bench->add_option("--task", bench_task, "shapes or sr selects the default model");

  auto* compare = app.add_subcommand(
      "compare", "train equivariant and width-matched baseline models, compare metrics");
  std::string compare_task = "shapes", compare_config, compare_report;
  int compare_seeds = 5;
  compare->add_option("--task", compare_task, "shapes or sr");
  compare->add_option("--seeds", compare_seeds, "number of seeds (default 5: 0..4)");
  compare->add_option("--config", compare_config, "run configuration JSON");
  compare->add_option("--report", compare_report, "write JSON results here");

  auto* report = app.add_subcommand("report", "merge JSON reports into a CSV");
  std::vector<std::string> report_inputs;
  std::string report_out = "report.csv";
  report->add_option("inputs", report_inputs, "JSON report files");
  report->add_option("--out", report_out, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (audit->parsed())
      return cmd_audit(group, precision, seeds, audit_report, negative_control, orbit_csv,
                       orbit_grid);
    if (train->parsed()) return cmd_train(train_config, train_task, train_out);
    if (eval->parsed()) return cmd_eval(eval_ckpt, eval_config, eval_task, eval_report);
    if (bench->parsed()) return cmd_bench(bench_config, bench_task);
    if (compare->parsed())
      return cmd_compare(compare_task, compare_seeds, compare_config, compare_report);
    if (report->parsed()) return cmd_report(report_inputs, report_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
