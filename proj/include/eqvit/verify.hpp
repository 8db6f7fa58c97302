// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "eqvit/group.hpp"
#include "eqvit/layers.hpp"
#include "eqvit/ndarray.hpp"
#include "eqvit/tensor.hpp"

namespace eqvit {

struct EquivarianceCell {
  GroupElement g;
  uint64_t seed = 0;
  double max_abs = 0.0;
  double max_rel = 0.0;
};

struct EquivarianceReport {
  std::string target;
  GroupSpec group;
  Precision precision = Precision::f64;
  std::vector<EquivarianceCell> cells;

  double worst_abs() const;
  double worst_rel() const;
};

// Transport of a value under a group element (how g~ acts on the input or
// output of the map under test).
using Transport = std::function<Tensor(const GroupElement&, const Tensor&)>;

// max |f(transport_in(g, x)) - transport_out(g, f(x))| and the same relative
// to the reference output's max magnitude.
EquivarianceCell equivariance_error(const std::function<Tensor(const Tensor&)>& f,
                                    const Tensor& x, const GroupElement& g,
                                    const Transport& transport_in,
                                    const Transport& transport_out);

// Scalar-valued function of several tensors, for gradient audits.
using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Worst relative error of reverse-mode gradients against central finite
// differences over every element of every input.
double grad_audit(const ScalarFn& fn, const std::vector<NdArray>& inputs,
                  double step = 1e-5);

// Fixed seed list published for reproducible reports.
std::vector<uint64_t> report_seeds();  // 0..19

// JSON / CSV report emission.
std::string report_to_json(const EquivarianceReport& report);
void reports_to_csv(const std::vector<EquivarianceReport>& reports, std::ostream& out);
EquivarianceReport report_from_json(const std::string& json_text);

// Independent orbit/canonicalization tables by exhaustive enumeration of the
// explicit coordinate images; must equal CanonicalMaps bit-exactly.
struct OrbitOracle {
  int grid_side = 0;
  int orbit_count = 0;
  std::vector<std::pair<int, int>> position_to_rep;   // n^2
  std::vector<std::array<int, 4>> pair_to_canonical;  // n^4, under D4
};
OrbitOracle orbit_oracle(int grid_side, const GroupSpec& spec);

// Parameter count of the constrained layer against an unconstrained dense map
// of the same flattened width. The ratio is exactly the group order.
struct SharingFactor {
  int64_t unconstrained = 0;
  int64_t actual = 0;

  bool is_exact_multiple() const { return actual > 0 && unconstrained % actual == 0; }
  int64_t factor() const { return actual > 0 ? unconstrained / actual : 0; }
};
SharingFactor sharing_factor(const EqLinearWeights& w);

struct SuiteResult {
  std::vector<EquivarianceReport> reports;
  double threshold = 0.0;
  bool passed = false;

  double worst() const;
};

// Per-layer equivariance over every element of the group and the fixed seed
// list (Theorem-style layer law, tested numerically).
SuiteResult layer_equivariance_suite(Precision prec, int num_seeds = 20,
                                     const GroupSpec& group = GroupSpec{4, true});

// End-to-end invariance of the toy classifiers and equivariance of the SR
// model output.
SuiteResult model_invariance_suite(Precision prec, int num_seeds = 3);

// A deliberately unshared linear layer (one tiled block perturbed); the suite
// must flag it. Expected worst error far above negative_control_threshold().
EquivarianceReport negative_control_report(Precision prec);
double negative_control_threshold();

// Reverse-mode gradients against central finite differences for every
// primitive and every equivariant layer. Pairs of (target, worst relative
// error); composed attention is reported under "attention".
std::vector<std::pair<std::string, double>> gradient_audit_suite();

// Worst deviation between the sharing-sum route and the dense block-circulant
// product over randomized configurations (groups, widths, token counts).
double tiling_equivalence_worst(int num_configs);

// Reference parameter accounting: a t=4 toy classifier against the
// width-matched unconstrained (t=1) model of the same flattened width.
struct ParamAccounting {
  int64_t eq_attn_mlp = 0;
  int64_t baseline_attn_mlp = 0;
  int64_t group_order = 0;
  bool all_layer_factors_exact = false;

  bool reduction_exact() const { return baseline_attn_mlp == group_order * eq_attn_mlp; }
};
ParamAccounting param_accounting();

// Constructive tables against the enumeration oracle: positions for every
// group and side up to max_side, ordered pairs under D4 at pair_side.
bool orbit_tables_match(int max_side, int pair_side);

}  // namespace eqvit
