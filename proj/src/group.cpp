// SPDX-License-Identifier: Apache-2.0
#include "eqvit/group.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>

namespace eqvit {

namespace {

int mod(int a, int n) { return ((a % n) + n) % n; }

void check_element(const GroupElement& g, const GroupSpec& spec) {
  if (spec.t < 1) throw std::invalid_argument("GroupSpec: t must be >= 1");
  if (g.k < 0 || g.k >= spec.t || (g.m != 0 && g.m != 1) ||
      (g.m == 1 && !spec.with_reflection)) {
    throw std::invalid_argument("invalid group element (k=" + std::to_string(g.k) +
                                ", m=" + std::to_string(g.m) + ") for t=" +
                                std::to_string(spec.t) +
                                (spec.with_reflection ? " with" : " without") +
                                " reflection");
  }
}

}  // namespace

int element_index(const GroupElement& g, const GroupSpec& spec) {
  check_element(g, spec);
  return g.m * spec.t + g.k;
}

GroupElement element_at(int index, const GroupSpec& spec) {
  if (index < 0 || index >= spec.order())
    throw std::invalid_argument("element index " + std::to_string(index) +
                                " out of range for group of order " +
                                std::to_string(spec.order()));
  return GroupElement{index % spec.t, index / spec.t};
}

std::vector<GroupElement> elements(const GroupSpec& spec) {
  std::vector<GroupElement> out;
  out.reserve(spec.order());
  for (int idx = 0; idx < spec.order(); ++idx) out.push_back(element_at(idx, spec));
  return out;
}

bool is_valid(const GroupElement& g, const GroupSpec& spec) {
  return g.k >= 0 && g.k < spec.t && (g.m == 0 || (g.m == 1 && spec.with_reflection));
}

Mat2 matrix_of(const GroupElement& g, const GroupSpec& spec) {
  check_element(g, spec);
  double c, s;
  if (spec.t == 1 || spec.t == 2 || spec.t == 4) {
    // Angles are multiples of pi/2; entries are exact in {-1, 0, 1}.
    static const int cos_q[4] = {1, 0, -1, 0};
    static const int sin_q[4] = {0, 1, 0, -1};
    int q = mod(g.k * (4 / spec.t), 4);
    c = cos_q[q];
    s = sin_q[q];
  } else {
    double theta = 2.0 * M_PI * g.k / spec.t;
    c = std::cos(theta);
    s = std::sin(theta);
  }
  double sign = g.m == 0 ? 1.0 : -1.0;
  return Mat2{{{sign * c, -sign * s}, {s, c}}};
}

GroupElement compose(const GroupElement& a, const GroupElement& b, const GroupSpec& spec) {
  check_element(a, spec);
  check_element(b, spec);
  // With f the mirror and r the rotation generator, r^k f = f r^-k.
  if (b.m == 0) return GroupElement{mod(a.k + b.k, spec.t), a.m};
  return GroupElement{mod(b.k - a.k, spec.t), 1 - a.m};
}

GroupElement inverse(const GroupElement& g, const GroupSpec& spec) {
  check_element(g, spec);
  if (g.m == 1) return g;  // reflections are involutions
  return GroupElement{mod(-g.k, spec.t), 0};
}

CayleyTable CayleyTable::build(const GroupSpec& spec) {
  CayleyTable table;
  int n = spec.order();
  table.compose.assign(n, std::vector<int>(n, 0));
  table.inverse.assign(n, 0);
  for (int a = 0; a < n; ++a) {
    GroupElement ga = element_at(a, spec);
    table.inverse[a] = element_index(eqvit::inverse(ga, spec), spec);
    for (int b = 0; b < n; ++b) {
      GroupElement gb = element_at(b, spec);
      table.compose[a][b] = element_index(eqvit::compose(ga, gb, spec), spec);
    }
  }
  return table;
}

std::pair<int, int> act_on_coords(const GroupElement& g, std::pair<int, int> p,
                                  int n, const GroupSpec& spec) {
  check_element(g, spec);
  if (spec.t != 1 && spec.t != 2 && spec.t != 4)
    throw std::invalid_argument("grid action requires t in {1, 2, 4}, got t=" +
                                std::to_string(spec.t));
  auto [i, j] = p;
  if (i < 0 || i >= n || j < 0 || j >= n)
    throw std::invalid_argument("position (" + std::to_string(i) + ", " +
                                std::to_string(j) + ") out of range for grid side " +
                                std::to_string(n));
  int quarters = mod(g.k * (4 / spec.t), 4);
  for (int q = 0; q < quarters; ++q) {
    int ni = j, nj = n - 1 - i;
    i = ni;
    j = nj;
  }
  if (g.m == 1) j = n - 1 - j;
  return {i, j};
}

std::vector<std::pair<int, int>> orbit(std::pair<int, int> p, int n, const GroupSpec& spec) {
  std::set<std::pair<int, int>> seen;
  for (const GroupElement& g : elements(spec)) seen.insert(act_on_coords(g, p, n, spec));
  return {seen.begin(), seen.end()};
}

std::pair<int, int> canonical_rep(std::pair<int, int> p, int n, const GroupSpec& spec) {
  auto orb = orbit(p, n, spec);
  return *std::min_element(orb.begin(), orb.end());
}

std::pair<std::pair<int, int>, std::pair<int, int>> canonical_pair(
    std::pair<int, int> pi, std::pair<int, int> pj, int n) {
  GroupSpec d4{4, true};
  std::array<int, 4> best{};
  bool first = true;
  for (const GroupElement& g : elements(d4)) {
    auto a = act_on_coords(g, pi, n, d4);
    auto b = act_on_coords(g, pj, n, d4);
    std::array<int, 4> tup{a.first, a.second, b.first, b.second};
    if (first || tup < best) {
      best = tup;
      first = false;
    }
  }
  return {{best[0], best[1]}, {best[2], best[3]}};
}

std::vector<int> channel_permutation(const GroupElement& g_tilde, const GroupSpec& spec) {
  check_element(g_tilde, spec);
  std::vector<int> perm(spec.order());
  for (int h = 0; h < spec.order(); ++h)
    perm[h] = element_index(compose(g_tilde, element_at(h, spec), spec), spec);
  return perm;
}

CanonicalMaps CanonicalMaps::build(int grid_side, const GroupSpec& spec) {
  if (grid_side < 1) throw std::invalid_argument("grid side must be >= 1");
  CanonicalMaps maps;
  maps.spec = spec;
  maps.grid_side = grid_side;

  int n2 = grid_side * grid_side;
  maps.position_to_rep.resize(n2);
  maps.rep_index.resize(n2);
  std::map<std::pair<int, int>, int> rep_ids;
  for (int i = 0; i < grid_side; ++i) {
    for (int j = 0; j < grid_side; ++j) {
      auto rep = canonical_rep({i, j}, grid_side, spec);
      maps.position_to_rep[maps.pos_index(i, j)] = rep;
      auto [it, inserted] = rep_ids.try_emplace(rep, static_cast<int>(rep_ids.size()));
      maps.rep_index[maps.pos_index(i, j)] = it->second;
    }
  }
  maps.orbit_count = static_cast<int>(rep_ids.size());

  maps.pair_to_canonical.resize(static_cast<size_t>(n2) * n2);
  maps.pair_disp_index.resize(static_cast<size_t>(n2) * n2);
  std::map<std::pair<int, int>, int> disp_ids;
  for (int a = 0; a < n2; ++a) {
    std::pair<int, int> pa{a / grid_side, a % grid_side};
    for (int b = 0; b < n2; ++b) {
      std::pair<int, int> pb{b / grid_side, b % grid_side};
      auto [ca, cb] = canonical_pair(pa, pb, grid_side);
      maps.pair_to_canonical[maps.pair_index(a, b)] = {ca.first, ca.second, cb.first, cb.second};
      std::pair<int, int> disp{cb.first - ca.first, cb.second - ca.second};
      auto [it, inserted] = disp_ids.try_emplace(disp, static_cast<int>(disp_ids.size()));
      maps.pair_disp_index[maps.pair_index(a, b)] = it->second;
    }
  }
  maps.disp_count = static_cast<int>(disp_ids.size());
  return maps;
}

void write_canonical_maps_csv(const CanonicalMaps& maps, std::ostream& out) {
  out << "i,j,rep_i,rep_j\n";
  for (int i = 0; i < maps.grid_side; ++i) {
    for (int j = 0; j < maps.grid_side; ++j) {
      auto rep = maps.position_to_rep[maps.pos_index(i, j)];
      out << i << "," << j << "," << rep.first << "," << rep.second << "\n";
    }
  }
}

}  // namespace eqvit
