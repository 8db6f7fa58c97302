// SPDX-License-Identifier: Apache-2.0
#include "eqvit/verify.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "eqvit/layers.hpp"
#include "eqvit/model.hpp"

namespace eqvit {

double EquivarianceReport::worst_abs() const {
  double m = 0.0;
  for (const auto& c : cells) m = std::max(m, c.max_abs);
  return m;
}

double EquivarianceReport::worst_rel() const {
  double m = 0.0;
  for (const auto& c : cells) m = std::max(m, c.max_rel);
  return m;
}

EquivarianceCell equivariance_error(const std::function<Tensor(const Tensor&)>& f,
                                    const Tensor& x, const GroupElement& g,
                                    const Transport& transport_in,
                                    const Transport& transport_out) {
  Tensor lhs = f(transport_in(g, x));
  Tensor rhs = transport_out(g, f(x));
  if (!same_shape(lhs.value(), rhs.value()))
    throw std::invalid_argument("equivariance_error: layout mismatch " +
                                shape_str(lhs.shape()) + " vs " + shape_str(rhs.shape()));
  EquivarianceCell cell;
  cell.g = g;
  cell.max_abs = max_abs_diff(lhs.value(), rhs.value());
  double ref = max_abs(rhs.value());
  cell.max_rel = ref > 0.0 ? cell.max_abs / ref : cell.max_abs;
  return cell;
}

double grad_audit(const ScalarFn& fn, const std::vector<NdArray>& inputs, double step) {
  // Analytic gradients.
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const NdArray& in : inputs) leaves.push_back(Tensor::leaf(in, true));
  backward(fn(leaves));

  auto eval = [&](const std::vector<NdArray>& vals) {
    std::vector<Tensor> ts;
    ts.reserve(vals.size());
    for (const NdArray& v : vals) ts.push_back(Tensor::leaf(v, false));
    return fn(ts).value()[0];
  };

  double worst = 0.0;
  std::vector<NdArray> probe = inputs;
  for (size_t which = 0; which < inputs.size(); ++which) {
    for (int64_t i = 0; i < inputs[which].size(); ++i) {
      double orig = probe[which][i];
      probe[which][i] = orig + step;
      double up = eval(probe);
      probe[which][i] = orig - step;
      double down = eval(probe);
      probe[which][i] = orig;
      double numeric = (up - down) / (2.0 * step);
      double analytic = leaves[which].grad()[i];
      double denom = std::max({1.0, std::abs(numeric), std::abs(analytic)});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

std::vector<uint64_t> report_seeds() {
  std::vector<uint64_t> seeds(20);
  for (uint64_t i = 0; i < 20; ++i) seeds[i] = i;
  return seeds;
}

std::string report_to_json(const EquivarianceReport& report) {
  nlohmann::json j;
  j["target"] = report.target;
  j["group"] = {{"t", report.group.t}, {"with_reflection", report.group.with_reflection}};
  j["precision"] = precision_name(report.precision);
  j["cells"] = nlohmann::json::array();
  for (const auto& c : report.cells) {
    j["cells"].push_back({{"g", {{"k", c.g.k}, {"m", c.g.m}}},
                          {"seed", c.seed},
                          {"max_abs", c.max_abs},
                          {"max_rel", c.max_rel}});
  }
  return j.dump(2);
}

EquivarianceReport report_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  EquivarianceReport report;
  report.target = j.at("target").get<std::string>();
  report.group.t = j.at("group").at("t").get<int>();
  report.group.with_reflection = j.at("group").at("with_reflection").get<bool>();
  report.precision = precision_from_name(j.at("precision").get<std::string>());
  for (const auto& c : j.at("cells")) {
    EquivarianceCell cell;
    cell.g.k = c.at("g").at("k").get<int>();
    cell.g.m = c.at("g").at("m").get<int>();
    cell.seed = c.at("seed").get<uint64_t>();
    cell.max_abs = c.at("max_abs").get<double>();
    cell.max_rel = c.at("max_rel").get<double>();
    report.cells.push_back(cell);
  }
  return report;
}

void reports_to_csv(const std::vector<EquivarianceReport>& reports, std::ostream& out) {
  out << "target,t,with_reflection,precision,k,m,seed,max_abs,max_rel\n";
  for (const auto& r : reports)
    for (const auto& c : r.cells)
      out << r.target << "," << r.group.t << "," << (r.group.with_reflection ? 1 : 0) << ","
          << precision_name(r.precision) << "," << c.g.k << "," << c.g.m << "," << c.seed
          << "," << c.max_abs << "," << c.max_rel << "\n";
}

namespace {

// Images of a position written out from the explicit orbit formula: the four
// quarter-turn images, optionally mirrored. No group arithmetic involved.
std::vector<std::pair<int, int>> explicit_images(std::pair<int, int> p, int n,
                                                 const GroupSpec& spec) {
  auto [i, j] = p;
  std::vector<std::pair<int, int>> quarter = {
      {i, j}, {j, n - 1 - i}, {n - 1 - i, n - 1 - j}, {n - 1 - j, i}};
  std::vector<std::pair<int, int>> images;
  int step = 4 / spec.t;
  for (int q = 0; q < 4; q += step) images.push_back(quarter[static_cast<size_t>(q)]);
  if (spec.with_reflection) {
    size_t base = images.size();
    for (size_t idx = 0; idx < base; ++idx)
      images.push_back({images[idx].first, n - 1 - images[idx].second});
  }
  return images;
}

}  // namespace

OrbitOracle orbit_oracle(int grid_side, const GroupSpec& spec) {
  if (grid_side < 1 || grid_side > 64)
    throw std::invalid_argument("orbit_oracle: grid side must be in [1, 64]");
  if (spec.t != 1 && spec.t != 2 && spec.t != 4)
    throw std::invalid_argument("orbit_oracle: requires t in {1, 2, 4}");
  OrbitOracle oracle;
  oracle.grid_side = grid_side;
  int n = grid_side;
  int64_t n2 = static_cast<int64_t>(n) * n;

  std::map<std::pair<int, int>, int> reps;
  oracle.position_to_rep.resize(static_cast<size_t>(n2));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      auto images = explicit_images({i, j}, n, spec);
      auto rep = *std::min_element(images.begin(), images.end());
      oracle.position_to_rep[static_cast<size_t>(i) * n + j] = rep;
      reps.try_emplace(rep, static_cast<int>(reps.size()));
    }
  oracle.orbit_count = static_cast<int>(reps.size());

  GroupSpec d4{4, true};
  oracle.pair_to_canonical.resize(static_cast<size_t>(n2) * n2);
  for (int64_t a = 0; a < n2; ++a) {
    auto pa = std::pair<int, int>{static_cast<int>(a) / n, static_cast<int>(a) % n};
    auto images_a = explicit_images(pa, n, d4);
    for (int64_t b = 0; b < n2; ++b) {
      auto pb = std::pair<int, int>{static_cast<int>(b) / n, static_cast<int>(b) % n};
      auto images_b = explicit_images(pb, n, d4);
      std::array<int, 4> best{};
      bool first = true;
      for (size_t idx = 0; idx < images_a.size(); ++idx) {
        std::array<int, 4> tup{images_a[idx].first, images_a[idx].second,
                               images_b[idx].first, images_b[idx].second};
        if (first || tup < best) {
          best = tup;
          first = false;
        }
      }
      oracle.pair_to_canonical[static_cast<size_t>(a * n2 + b)] = best;
    }
  }
  return oracle;
}

SharingFactor sharing_factor(const EqLinearWeights& w) {
  int64_t order = w.spec.order();
  SharingFactor f;
  f.actual = w.param_count();
  f.unconstrained = (w.c_in() * order) * (w.c_out() * order);
  return f;
}

double SuiteResult::worst() const {
  double m = 0.0;
  for (const auto& r : reports) m = std::max(m, r.worst_abs());
  return m;
}

namespace {

LiftedFeature random_tokens(const GroupSpec& spec, int side, int64_t c, UniformRng& rng,
                            Precision prec) {
  NdArray v = rng.array({static_cast<int64_t>(side) * side, c, spec.order()}, -1.0, 1.0,
                        prec);
  return {Tensor::leaf(v), Layout::Tokens, spec, side};
}

LiftedFeature random_spatial(const GroupSpec& spec, int side, int64_t c, UniformRng& rng,
                             Precision prec) {
  NdArray v = rng.array({side, side, c, spec.order()}, -1.0, 1.0, prec);
  return {Tensor::leaf(v), Layout::Spatial, spec, side};
}

using LiftedMap = std::function<LiftedFeature(const LiftedFeature&)>;

EquivarianceCell lifted_cell(const LiftedMap& fn, const LiftedFeature& z,
                             const GroupElement& g, uint64_t seed) {
  LiftedFeature lhs = fn(lifted_transform(g, z));
  LiftedFeature rhs = lifted_transform(g, fn(z));
  EquivarianceCell cell;
  cell.g = g;
  cell.seed = seed;
  cell.max_abs = max_abs_diff(lhs.data.value(), rhs.data.value());
  double ref = max_abs(rhs.data.value());
  cell.max_rel = ref > 0.0 ? cell.max_abs / ref : cell.max_abs;
  return cell;
}

double layer_threshold(Precision prec) { return prec == Precision::f64 ? 1e-10 : 1e-4; }
double model_threshold(Precision prec) { return prec == Precision::f64 ? 1e-8 : 1e-3; }

}  // namespace

SuiteResult layer_equivariance_suite(Precision prec, int num_seeds, const GroupSpec& group) {
  const GroupSpec d4 = group;
  SuiteResult suite;
  suite.threshold = layer_threshold(prec);

  auto run_lifted = [&](const std::string& name,
                        const std::function<LiftedFeature(UniformRng&)>& make_input,
                        const std::function<LiftedMap(UniformRng&)>& make_layer) {
    EquivarianceReport report;
    report.target = name;
    report.group = d4;
    report.precision = prec;
    for (int s = 0; s < num_seeds; ++s) {
      UniformRng rng(static_cast<uint64_t>(s));
      LiftedFeature z = make_input(rng);
      LiftedMap layer = make_layer(rng);
      for (const GroupElement& g : elements(d4))
        report.cells.push_back(lifted_cell(layer, z, g, static_cast<uint64_t>(s)));
    }
    suite.reports.push_back(std::move(report));
  };

  // eq_patch_embed: plain spatial transport on the image input.
  {
    EquivarianceReport report;
    report.target = "eq_patch_embed";
    report.group = d4;
    report.precision = prec;
    for (int s = 0; s < num_seeds; ++s) {
      UniformRng rng(static_cast<uint64_t>(s));
      Tensor image = Tensor::leaf(rng.array({8, 8, 2}, -1.0, 1.0, prec));
      EqConvKernel kernel = EqConvKernel::init(2, 2, 3, rng, prec);
      for (const GroupElement& g : elements(d4)) {
        LiftedFeature lhs = eq_patch_embed(spatial_transform(g, image, d4), kernel, d4);
        LiftedFeature rhs = lifted_transform(g, eq_patch_embed(image, kernel, d4));
        EquivarianceCell cell;
        cell.g = g;
        cell.seed = static_cast<uint64_t>(s);
        cell.max_abs = max_abs_diff(lhs.data.value(), rhs.data.value());
        double ref = max_abs(rhs.data.value());
        cell.max_rel = ref > 0.0 ? cell.max_abs / ref : cell.max_abs;
        report.cells.push_back(cell);
      }
    }
    suite.reports.push_back(std::move(report));
  }

  run_lifted("eq_linear",
             [&](UniformRng& rng) { return random_tokens(d4, 3, 3, rng, prec); },
             [&](UniformRng& rng) {
               auto w = EqLinearWeights::init(d4, 3, 2, rng, prec);
               return [w](const LiftedFeature& z) { return eq_linear(z, w); };
             });

  run_lifted("eq_self_attention",
             [&](UniformRng& rng) { return random_tokens(d4, 4, 2, rng, prec); },
             [&](UniformRng& rng) {
               auto maps = CanonicalMaps::build(4, d4);
               auto ape = build_ape(maps, 2, rng, prec);
               auto rpe = build_rpe(maps, rng, prec);
               auto wq = EqLinearWeights::init(d4, 2, 2, rng, prec);
               auto wk = EqLinearWeights::init(d4, 2, 2, rng, prec);
               auto wv = EqLinearWeights::init(d4, 2, 2, rng, prec);
               return [=](const LiftedFeature& z) {
                 return eq_self_attention(apply_ape(z, ape), wq, wk, wv, 2, &rpe);
               };
             });

  run_lifted("eq_downsample",
             [&](UniformRng& rng) { return random_spatial(d4, 4, 2, rng, prec); },
             [&](UniformRng&) {
               return [](const LiftedFeature& f) { return eq_downsample(f, 2); };
             });

  run_lifted("eq_pixel_shuffle",
             [&](UniformRng& rng) { return random_spatial(d4, 2, 8, rng, prec); },
             [&](UniformRng&) {
               return [](const LiftedFeature& f) { return eq_pixel_shuffle(f, 2); };
             });

  run_lifted("eq_layernorm",
             [&](UniformRng& rng) { return random_tokens(d4, 2, 3, rng, prec); },
             [&](UniformRng& rng) {
               EqLayerNormParams params{Tensor::leaf(rng.array({3}, 0.5, 1.5, prec), true),
                                        Tensor::leaf(rng.array({3}, -0.5, 0.5, prec), true)};
               return [params](const LiftedFeature& z) {
                 return eq_layernorm(z, params, 1e-6);
               };
             });

  suite.passed = true;
  for (const auto& r : suite.reports)
    if (r.worst_abs() > suite.threshold) suite.passed = false;
  return suite;
}

SuiteResult model_invariance_suite(Precision prec, int num_seeds) {
  SuiteResult suite;
  suite.threshold = model_threshold(prec);

  auto invariance_report = [&](const std::string& name, const GroupSpec& group,
                               const std::function<Tensor(const Tensor&)>& fwd,
                               std::vector<int64_t> input_shape, bool equivariant_output) {
    EquivarianceReport report;
    report.target = name;
    report.group = group;
    report.precision = prec;
    for (int s = 0; s < num_seeds; ++s) {
      UniformRng rng(static_cast<uint64_t>(s));
      Tensor image = Tensor::leaf(rng.array(input_shape, -1.0, 1.0, prec));
      Tensor ref = fwd(image);
      for (const GroupElement& g : elements(group)) {
        Tensor lhs = fwd(spatial_transform(g, image, group));
        Tensor rhs = equivariant_output ? spatial_transform(g, ref, group) : ref;
        EquivarianceCell cell;
        cell.g = g;
        cell.seed = static_cast<uint64_t>(s);
        cell.max_abs = max_abs_diff(lhs.value(), rhs.value());
        double mag = max_abs(rhs.value());
        cell.max_rel = mag > 0.0 ? cell.max_abs / mag : cell.max_abs;
        report.cells.push_back(cell);
      }
    }
    suite.reports.push_back(std::move(report));
  };

  {
    EqViTConfig cfg;
    cfg.image_side = 16;
    cfg.patch_stride = 4;
    cfg.in_channels = 3;
    cfg.channels = 4;
    cfg.depth = 2;
    cfg.heads = 2;
    cfg.num_classes = 5;
    cfg.group = {4, true};
    cfg.use_ape = true;
    EqViT model = EqViT::build(cfg, 7, prec);
    invariance_report("eqvit_logits", cfg.group,
                      [&model](const Tensor& x) { return model.forward(x); }, {16, 16, 3},
                      false);
  }

  {
    EqSwinConfig cfg;
    cfg.image_side = 32;
    cfg.patch_stride = 2;
    cfg.in_channels = 1;
    cfg.channels = 2;
    cfg.heads = 1;
    cfg.num_classes = 4;
    cfg.group = {4, false};
    cfg.window_side = 4;
    cfg.shift_size = 2;
    cfg.stage_depths = {2, 2};
    cfg.use_rpe = true;
    EqSwin model = EqSwin::build(cfg, 13, prec);
    invariance_report("eqswin_logits", cfg.group,
                      [&model](const Tensor& x) { return model.forward(x); }, {32, 32, 1},
                      false);
  }

  {
    EqSwinConfig cfg;
    cfg.image_side = 16;
    cfg.patch_stride = 2;
    cfg.in_channels = 1;
    cfg.channels = 4;
    cfg.heads = 1;
    cfg.group = {4, false};
    cfg.window_side = 4;
    cfg.shift_size = 2;
    cfg.stage_depths = {2};
    cfg.use_rpe = true;
    cfg.sr_head = true;
    cfg.sr_scale = 2;
    cfg.sr_out_channels = 1;
    EqSwin model = EqSwin::build(cfg, 23, prec);
    invariance_report("eqswin_sr_output", cfg.group,
                      [&model](const Tensor& x) { return model.forward(x); }, {16, 16, 1},
                      true);
  }

  suite.passed = true;
  for (const auto& r : suite.reports)
    if (r.worst_abs() > suite.threshold) suite.passed = false;
  return suite;
}

double negative_control_threshold() { return 1e-2; }

EquivarianceReport negative_control_report(Precision prec) {
  const GroupSpec d4{4, true};
  EquivarianceReport report;
  report.target = "negative_control_unshared_linear";
  report.group = d4;
  report.precision = prec;

  UniformRng rng(12345);
  EqLinearWeights w = EqLinearWeights::init(d4, 2, 2, rng, prec);
  NdArray dense = tiled_matrix(w);
  // Perturb a single tiled block so the circulant sharing no longer holds.
  int order = d4.order();
  for (int64_t ci = 0; ci < 2; ++ci)
    for (int64_t co = 0; co < 2; ++co) dense[(ci * order) * (2 * order) + co * order] += 0.75;
  Tensor dense_t = Tensor::leaf(dense);

  auto layer = [&](const LiftedFeature& z) {
    int64_t n = z.data.value().extent(0);
    Tensor out = matmul(reshape(z.data, {n, 2 * order}), dense_t);
    return LiftedFeature{reshape(out, {n, 2, order}), Layout::Tokens, d4, z.grid_side};
  };

  for (uint64_t seed : report_seeds()) {
    UniformRng in_rng(seed);
    LiftedFeature z = random_tokens(d4, 2, 2, in_rng, prec);
    for (const GroupElement& g : elements(d4))
      report.cells.push_back(lifted_cell(layer, z, g, seed));
  }
  return report;
}

std::vector<std::pair<std::string, double>> gradient_audit_suite() {
  const GroupSpec c4{4, false};
  UniformRng rng(424242);
  std::vector<std::pair<std::string, double>> results;

  auto weighted = [](const Tensor& t) {
    UniformRng local(8675309);
    Tensor w = Tensor::leaf(local.array(t.shape(), -1.0, 1.0));
    return sum_all(mul(t, w));
  };

  // Primitives.
  results.push_back({"matmul", grad_audit([&](const std::vector<Tensor>& in) {
    return weighted(matmul(in[0], in[1]));
  }, {rng.array({3, 4}, -1, 1), rng.array({4, 2}, -1, 1)})});

  results.push_back({"conv2d", grad_audit([&](const std::vector<Tensor>& in) {
    return weighted(conv2d(in[0], in[1], 2));
  }, {rng.array({4, 4, 2}, -1, 1), rng.array({2, 2, 2, 3}, -1, 1)})});

  results.push_back({"softmax", grad_audit([&](const std::vector<Tensor>& in) {
    return weighted(softmax_lastdim(in[0]));
  }, {rng.array({3, 5}, -2, 2)})});

  results.push_back({"gelu", grad_audit([&](const std::vector<Tensor>& in) {
    return weighted(gelu(in[0]));
  }, {rng.array({9}, -2, 2)})});

  results.push_back({"elementwise", grad_audit([&](const std::vector<Tensor>& in) {
    return weighted(mul(add(scale(in[0], 1.3), in[1]), sub(in[0], in[1])));
  }, {rng.array({3, 4}, -1, 1), rng.array({3, 4}, -1, 1)})});

  results.push_back({"mean_var", grad_audit([&](const std::vector<Tensor>& in) {
    auto [m, v] = mean_var_lastdim(in[0]);
    return add(weighted(m), weighted(v));
  }, {rng.array({4, 6}, -1, 1)})});

  results.push_back({"indexing", grad_audit([&](const std::vector<Tensor>& in) {
    Tensor a = permute_axes(reshape(in[0], {2, 6}), {1, 0});
    Tensor b = concat({slice_axis(a, 0, 0, 3), slice_axis(a, 0, 2, 6)}, 0);
    return weighted(gather_rows(b, {4, 0, 6}));
  }, {rng.array({3, 4}, -1, 1)})});

  results.push_back({"spatial", grad_audit([&](const std::vector<Tensor>& in) {
    Tensor a = flip_spatial(rot90_spatial(in[0], 1), 1);
    return weighted(pixel_shuffle(stride_sample(a, 2), 2));
  }, {rng.array({4, 4, 4}, -1, 1)})});

  results.push_back({"cross_entropy", grad_audit([&](const std::vector<Tensor>& in) {
    return softmax_cross_entropy(in[0], 1);
  }, {rng.array({4}, -2, 2)})});

  // Equivariant layers.
  results.push_back({"eq_patch_embed", grad_audit([&](const std::vector<Tensor>& in) {
    EqConvKernel kernel{in[1], 2};
    return weighted(eq_patch_embed(in[0], kernel, c4).data);
  }, {rng.array({4, 4, 2}, -1, 1), rng.array({2, 2, 2, 2}, -1, 1)})});

  results.push_back({"eq_linear", grad_audit([&](const std::vector<Tensor>& in) {
    EqLinearWeights w{c4, {in[1], in[2], in[3], in[4]}};
    LiftedFeature z{in[0], Layout::Tokens, c4, 2};
    return weighted(eq_linear(z, w).data);
  }, {rng.array({4, 2, 4}, -1, 1), rng.array({2, 3}, -1, 1), rng.array({2, 3}, -1, 1),
      rng.array({2, 3}, -1, 1), rng.array({2, 3}, -1, 1)})});

  results.push_back({"eq_layernorm", grad_audit([&](const std::vector<Tensor>& in) {
    LiftedFeature z{in[0], Layout::Tokens, c4, 2};
    EqLayerNormParams p{in[1], in[2]};
    return weighted(eq_layernorm(z, p, 1e-5).data);
  }, {rng.array({4, 2, 4}, -1, 1), rng.array({2}, 0.5, 1.5), rng.array({2}, -0.5, 0.5)})});

  results.push_back({"eq_resampling", grad_audit([&](const std::vector<Tensor>& in) {
    LiftedFeature f{in[0], Layout::Spatial, c4, 2};
    return weighted(eq_downsample(eq_pixel_shuffle(f, 2), 2).data);
  }, {rng.array({2, 2, 4, 4}, -1, 1)})});

  {
    auto maps = CanonicalMaps::build(2, c4);
    results.push_back({"attention_grad", grad_audit([&](const std::vector<Tensor>& in) {
      LiftedFeature z{in[0], Layout::Tokens, c4, 2};
      EqLinearWeights wq{c4, {in[1], in[2], in[3], in[4]}};
      EqLinearWeights wk{c4, {in[5], in[6], in[7], in[8]}};
      EqLinearWeights wv{c4, {in[9], in[10], in[11], in[12]}};
      EqPosEncodings pe;
      pe.maps = maps;
      pe.ape_base = in[13];
      pe.rpe_base = in[14];
      LiftedFeature out = eq_self_attention(apply_ape(z, pe), wq, wk, wv, 1, &pe);
      return weighted(out.data);
    }, {rng.array({4, 2, 4}, -1, 1), rng.array({2, 2}, -1, 1), rng.array({2, 2}, -1, 1),
        rng.array({2, 2}, -1, 1), rng.array({2, 2}, -1, 1), rng.array({2, 2}, -1, 1),
        rng.array({2, 2}, -1, 1), rng.array({2, 2}, -1, 1), rng.array({2, 2}, -1, 1),
        rng.array({2, 2}, -1, 1), rng.array({2, 2}, -1, 1), rng.array({2, 2}, -1, 1),
        rng.array({2, 2}, -1, 1), rng.array({2, 2}, -1, 1), rng.array({3, 1}, -1, 1)})});
  }

  return results;
}

double tiling_equivalence_worst(int num_configs) {
  UniformRng rng(77001);
  const GroupSpec groups[] = {{1, false}, {1, true}, {2, false}, {2, true},
                              {4, false}, {4, true}};
  double worst = 0.0;
  for (int cfg = 0; cfg < num_configs; ++cfg) {
    GroupSpec spec = groups[rng.next_index(6)];
    int64_t ci = 1 + rng.next_index(5);
    int64_t co = 1 + rng.next_index(5);
    int64_t n = 1 + rng.next_index(6);
    EqLinearWeights w = EqLinearWeights::init(spec, ci, co, rng);
    NdArray zv = rng.array({n, ci, spec.order()}, -1.0, 1.0);
    LiftedFeature z{Tensor::leaf(zv), Layout::Tokens, spec, 0};
    LiftedFeature out = eq_linear(z, w);

    NdArray dense = tiled_matrix(w);
    int64_t wi = ci * spec.order(), wo = co * spec.order();
    for (int64_t r = 0; r < n; ++r)
      for (int64_t oc = 0; oc < wo; ++oc) {
        double acc = 0.0;
        for (int64_t icol = 0; icol < wi; ++icol)
          acc += zv[r * wi + icol] * dense[icol * wo + oc];
        worst = std::max(worst, std::abs(acc - out.data.value()[r * wo + oc]));
      }
  }
  return worst;
}

ParamAccounting param_accounting() {
  EqViTConfig eq_cfg;
  eq_cfg.image_side = 16;
  eq_cfg.patch_stride = 4;
  eq_cfg.channels = 8;
  eq_cfg.depth = 2;
  eq_cfg.heads = 2;
  eq_cfg.group = {4, false};
  EqViT eq_model = EqViT::build(eq_cfg, 3);

  EqViTConfig wide_cfg = eq_cfg;
  wide_cfg.group = {1, false};
  wide_cfg.channels = eq_cfg.channels * eq_cfg.group.order();
  EqViT wide_model = EqViT::build(wide_cfg, 3);

  ParamAccounting acc;
  acc.group_order = eq_cfg.group.order();
  acc.eq_attn_mlp = param_count_of_kind(eq_model.params, "attn_linear") +
                    param_count_of_kind(eq_model.params, "mlp_linear");
  acc.baseline_attn_mlp = param_count_of_kind(wide_model.params, "attn_linear") +
                          param_count_of_kind(wide_model.params, "mlp_linear");

  acc.all_layer_factors_exact = true;
  for (const auto& block : eq_model.blocks) {
    for (const EqLinearWeights* w : {&block.wq, &block.wk, &block.wv, &block.mlp_in,
                                     &block.mlp_out}) {
      SharingFactor f = sharing_factor(*w);
      if (!f.is_exact_multiple() || f.factor() != acc.group_order)
        acc.all_layer_factors_exact = false;
    }
  }
  return acc;
}

bool orbit_tables_match(int max_side, int pair_side) {
  const GroupSpec groups[] = {{1, false}, {1, true}, {2, false}, {2, true},
                              {4, false}, {4, true}};
  for (const GroupSpec& spec : groups)
    for (int n = 1; n <= max_side; ++n) {
      OrbitOracle oracle = orbit_oracle(n, spec);
      CanonicalMaps maps = CanonicalMaps::build(n, spec);
      if (oracle.orbit_count != maps.orbit_count) return false;
      if (oracle.position_to_rep != maps.position_to_rep) return false;
    }
  OrbitOracle oracle = orbit_oracle(pair_side, {4, true});
  CanonicalMaps maps = CanonicalMaps::build(pair_side, {4, true});
  return oracle.pair_to_canonical == maps.pair_to_canonical;
}

}  // namespace eqvit
