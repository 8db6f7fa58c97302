// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "eqvit/verify.hpp"

using namespace eqvit;

namespace {
const GroupSpec kC4{4, false};
const GroupSpec kD4{4, true};
}  // namespace

TEST_CASE("equivariance_error basics") {
  UniformRng rng(1);
  Tensor x = Tensor::leaf(rng.array({4, 4, 2, 8}, -1.0, 1.0));
  auto as_lifted = [](const Tensor& t) {
    return LiftedFeature{t, Layout::Spatial, kD4, 4};
  };
  Transport lifted = [&](const GroupElement& g, const Tensor& t) {
    return lifted_transform(g, as_lifted(t)).data;
  };

  // identity element gives exactly zero
  auto cell = equivariance_error([](const Tensor& t) { return scale(t, 2.0); }, x,
                                 {0, 0}, lifted, lifted);
  CHECK(cell.max_abs == 0.0);

  // an equivariant layer stays at rounding level
  auto down = [&](const Tensor& t) { return eq_downsample(as_lifted(t), 2).data; };
  for (const auto& g : elements(kD4)) {
    auto c = equivariance_error(down, x, g, lifted, lifted);
    CHECK(c.max_abs <= 1e-10);
  }

  // layout mismatch is a domain error
  Transport broken = [&](const GroupElement&, const Tensor& t) {
    return reshape(t, {8, 2, 2, 8});
  };
  CHECK_THROWS_AS(equivariance_error(down, x, {1, 0}, lifted, broken),
                  std::invalid_argument);
}

TEST_CASE("negative control is flagged far above threshold") {
  EquivarianceReport report = negative_control_report(Precision::f64);
  CHECK(report.worst_abs() >= negative_control_threshold());
  CHECK(report.cells.size() == 20 * 8);

  // identity cells stay clean; non-identity cells show the broken sharing
  for (const auto& c : report.cells)
    if (c.g == GroupElement{0, 0}) CHECK(c.max_abs == 0.0);
}

TEST_CASE("grad_audit oracle behaves") {
  UniformRng rng(3);
  double id_err = grad_audit(
      [](const std::vector<Tensor>& in) { return sum_all(in[0]); }, {rng.array({5}, -1, 1)});
  CHECK(id_err <= 1e-9);

  double mm_err = grad_audit(
      [](const std::vector<Tensor>& in) { return sum_all(matmul(in[0], in[1])); },
      {rng.array({3, 4}, -1, 1), rng.array({4, 2}, -1, 1)});
  CHECK(mm_err <= 1e-5);
}

TEST_CASE("orbit oracle matches the constructive tables") {
  CHECK(orbit_oracle(4, kC4).orbit_count == 4);
  CHECK(orbit_oracle(1, kC4).orbit_count == 1);

  for (GroupSpec spec : {kC4, kD4, GroupSpec{2, false}, GroupSpec{1, true}}) {
    for (int n = 1; n <= 16; ++n) {
      auto oracle = orbit_oracle(n, spec);
      auto maps = CanonicalMaps::build(n, spec);
      CHECK(oracle.orbit_count == maps.orbit_count);
      CHECK(oracle.position_to_rep == maps.position_to_rep);
    }
  }

  // ordered pairs under D4, exhaustive on an 8x8 grid
  auto oracle = orbit_oracle(8, kD4);
  auto maps = CanonicalMaps::build(8, kD4);
  CHECK(oracle.pair_to_canonical == maps.pair_to_canonical);
}

TEST_CASE("sharing factors") {
  UniformRng rng(5);
  EqLinearWeights trivial = EqLinearWeights::init({1, false}, 6, 6, rng);
  CHECK(sharing_factor(trivial).factor() == 1);

  EqLinearWeights shared = EqLinearWeights::init(kC4, 8, 8, rng);
  SharingFactor f = sharing_factor(shared);
  CHECK(f.actual == 256);
  CHECK(f.unconstrained == 1024);  // (8*4) x (8*4) dense
  CHECK(f.is_exact_multiple());
  CHECK(f.factor() == 4);
}

TEST_CASE("report JSON and CSV") {
  EquivarianceReport report;
  report.target = "eq_linear";
  report.group = kD4;
  report.precision = Precision::f64;
  report.cells.push_back({{1, 0}, 3, 1.5e-13, 2.5e-13});

  EquivarianceReport back = report_from_json(report_to_json(report));
  CHECK(back.target == report.target);
  CHECK(back.group == report.group);
  CHECK(back.cells.size() == 1);
  CHECK(back.cells[0].g == GroupElement{1, 0});
  CHECK(back.cells[0].seed == 3);
  CHECK(back.cells[0].max_abs == report.cells[0].max_abs);

  std::ostringstream csv;
  reports_to_csv({report}, csv);
  CHECK(csv.str() ==
        "target,t,with_reflection,precision,k,m,seed,max_abs,max_rel\n"
        "eq_linear,4,1,f64,1,0,3,1.5e-13,2.5e-13\n");

  std::ostringstream empty;
  reports_to_csv({}, empty);
  CHECK(empty.str() == "target,t,with_reflection,precision,k,m,seed,max_abs,max_rel\n");
}

TEST_CASE("layer suite passes at 64-bit on a seed subset") {
  SuiteResult suite = layer_equivariance_suite(Precision::f64, 3);
  CHECK(suite.reports.size() == 6);
  CHECK(suite.threshold == 1e-10);
  for (const auto& r : suite.reports) {
    INFO(r.target);
    CHECK(r.worst_abs() <= suite.threshold);
  }
  CHECK(suite.passed);
}

TEST_CASE("seed list is the published 0..19") {
  auto seeds = report_seeds();
  CHECK(seeds.size() == 20);
  CHECK(seeds.front() == 0);
  CHECK(seeds.back() == 19);
}
