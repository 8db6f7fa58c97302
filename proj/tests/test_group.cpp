// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "eqvit/group.hpp"

using namespace eqvit;

namespace {

const GroupSpec kC4{4, false};
const GroupSpec kD4{4, true};

Mat2 matmul2(const Mat2& a, const Mat2& b) {
  Mat2 r{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
  return r;
}

double det2(const Mat2& a) { return a[0][0] * a[1][1] - a[0][1] * a[1][0]; }

}  // namespace

TEST_CASE("matrix_of known values") {
  CHECK(matrix_of({0, 0}, kC4) == Mat2{{{1, 0}, {0, 1}}});
  CHECK(matrix_of({1, 0}, kC4) == Mat2{{{0, -1}, {1, 0}}});
  CHECK(matrix_of({0, 1}, kD4) == Mat2{{{-1, 0}, {0, 1}}});
  for (const auto& g : elements(kD4)) {
    CHECK(det2(matrix_of(g, kD4)) == (g.m == 0 ? 1.0 : -1.0));
  }
  CHECK_THROWS_AS(matrix_of({0, 1}, kC4), std::invalid_argument);
  CHECK_THROWS_AS(matrix_of({4, 0}, kC4), std::invalid_argument);
}

TEST_CASE("composition matches matrix products exactly") {
  for (GroupSpec spec : {GroupSpec{1, false}, GroupSpec{2, true}, kC4, kD4}) {
    for (const auto& a : elements(spec)) {
      for (const auto& b : elements(spec)) {
        GroupElement c = compose(a, b, spec);
        CHECK(matrix_of(c, spec) == matmul2(matrix_of(a, spec), matrix_of(b, spec)));
      }
    }
  }
}

TEST_CASE("identity, inverse, and rotation laws") {
  GroupElement e{0, 0};
  GroupElement r90{1, 0};
  CHECK(compose(r90, r90, kC4) == GroupElement{2, 0});
  CHECK(inverse(r90, kC4) == GroupElement{3, 0});
  CHECK(inverse(e, kC4) == e);
  for (const auto& g : elements(kD4)) {
    CHECK(compose(e, g, kD4) == g);
    CHECK(compose(g, e, kD4) == g);
    CHECK(compose(g, inverse(g, kD4), kD4) == e);
    if (g.m == 1) CHECK(compose(g, g, kD4) == e);  // reflections square to identity
  }
}

TEST_CASE("Cayley table is a Latin square with valid inverses") {
  for (GroupSpec spec : {kC4, kD4, GroupSpec{2, false}}) {
    auto table = CayleyTable::build(spec);
    int n = spec.order();
    for (int a = 0; a < n; ++a) {
      std::set<int> row(table.compose[a].begin(), table.compose[a].end());
      CHECK(row.size() == static_cast<size_t>(n));
      std::set<int> col;
      for (int b = 0; b < n; ++b) col.insert(table.compose[b][a]);
      CHECK(col.size() == static_cast<size_t>(n));
      CHECK(table.compose[a][table.inverse[a]] == 0);
    }
  }
}

TEST_CASE("act_on_coords known values and action law") {
  GroupElement r90{1, 0};
  CHECK(act_on_coords(r90, {0, 0}, 4, kC4) == std::pair<int, int>{0, 3});
  CHECK(act_on_coords({0, 0}, {2, 1}, 4, kC4) == std::pair<int, int>{2, 1});

  std::pair<int, int> p{2, 1};
  for (int rep = 0; rep < 4; ++rep) p = act_on_coords(r90, p, 4, kC4);
  CHECK(p == std::pair<int, int>{2, 1});

  // act(a, act(b, p)) == act(a o b, p), exhaustive over D4 on grids up to 16
  for (int n : {1, 2, 3, 5, 8, 16}) {
    for (const auto& a : elements(kD4)) {
      for (const auto& b : elements(kD4)) {
        GroupElement ab = compose(a, b, kD4);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            auto lhs = act_on_coords(a, act_on_coords(b, {i, j}, n, kD4), n, kD4);
            CHECK(lhs == act_on_coords(ab, {i, j}, n, kD4));
          }
      }
    }
  }

  CHECK_THROWS_AS(act_on_coords(r90, {4, 0}, 4, kC4), std::invalid_argument);
  CHECK_THROWS_AS(act_on_coords({1, 0}, {0, 0}, 4, GroupSpec{3, false}), std::invalid_argument);
}

TEST_CASE("orbits") {
  auto o = orbit({0, 0}, 4, kC4);
  CHECK(o == std::vector<std::pair<int, int>>{{0, 0}, {0, 3}, {3, 0}, {3, 3}});
  CHECK(orbit({1, 1}, 3, kC4) == std::vector<std::pair<int, int>>{{1, 1}});
  auto o2 = orbit({2, 1}, 4, kC4);
  CHECK(o2 == std::vector<std::pair<int, int>>{{1, 1}, {1, 2}, {2, 1}, {2, 2}});

  // Lagrange: orbit sizes divide the group order; orbits partition the grid.
  for (GroupSpec spec : {kC4, kD4}) {
    for (int n : {1, 2, 3, 4, 7, 16}) {
      std::set<std::pair<int, int>> reps;
      int covered = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          auto orb = orbit({i, j}, n, spec);
          CHECK(spec.order() % orb.size() == 0);
          auto rep = canonical_rep({i, j}, n, spec);
          if (reps.insert(rep).second) covered += static_cast<int>(orb.size());
        }
      CHECK(covered == n * n);
    }
  }
}

TEST_CASE("canonical_rep") {
  CHECK(canonical_rep({2, 1}, 4, kC4) == std::pair<int, int>{1, 1});
  CHECK(canonical_rep({0, 0}, 4, kC4) == std::pair<int, int>{0, 0});

  std::set<std::pair<int, int>> reps;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) reps.insert(canonical_rep({i, j}, 4, kC4));
  CHECK(reps.size() == 4);

  // idempotent and constant on orbits, exhaustively for n <= 16
  for (GroupSpec spec : {kC4, kD4}) {
    for (int n : {2, 5, 16}) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          auto rep = canonical_rep({i, j}, n, spec);
          CHECK(canonical_rep(rep, n, spec) == rep);
          for (const auto& g : elements(spec))
            CHECK(canonical_rep(act_on_coords(g, {i, j}, n, spec), n, spec) == rep);
        }
    }
  }
}

TEST_CASE("canonical_pair") {
  using Pos = std::pair<int, int>;
  auto cp = canonical_pair({0, 0}, {0, 1}, 4);
  CHECK(cp.first == Pos{0, 0});
  CHECK(cp.second == Pos{0, 1});

  // a vertical-neighbor pair shares its canonical pair with the horizontal one
  CHECK(canonical_pair({0, 0}, {1, 0}, 4) == cp);

  // coincident points stay coincident with zero displacement
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      auto [a, b] = canonical_pair({i, j}, {i, j}, 4);
      CHECK(a == b);
    }

  // invariant under simultaneous D4 action, exhaustive for n <= 8
  for (int n : {2, 4, 8}) {
    for (int a = 0; a < n * n; ++a)
      for (int b = 0; b < n * n; ++b) {
        Pos pa{a / n, a % n}, pb{b / n, b % n};
        auto canon = canonical_pair(pa, pb, n);
        for (const auto& g : elements(kD4)) {
          auto ga = act_on_coords(g, pa, n, kD4);
          auto gb = act_on_coords(g, pb, n, kD4);
          CHECK(canonical_pair(ga, gb, n) == canon);
        }
      }
  }
}

TEST_CASE("channel_permutation") {
  auto id_perm = channel_permutation({0, 0}, kC4);
  CHECK(id_perm == std::vector<int>{0, 1, 2, 3});

  // r90 on C4 channels is a cyclic shift by one
  auto r_perm = channel_permutation({1, 0}, kC4);
  CHECK(r_perm == std::vector<int>{1, 2, 3, 0});

  // composition law over all D4 pairs
  for (const auto& a : elements(kD4)) {
    for (const auto& b : elements(kD4)) {
      auto pa = channel_permutation(a, kD4);
      auto pb = channel_permutation(b, kD4);
      auto pab = channel_permutation(compose(a, b, kD4), kD4);
      for (int h = 0; h < kD4.order(); ++h) CHECK(pab[h] == pa[pb[h]]);
    }
  }

  // bijection
  for (const auto& g : elements(kD4)) {
    auto perm = channel_permutation(g, kD4);
    std::set<int> vals(perm.begin(), perm.end());
    CHECK(vals.size() == perm.size());
  }
}

TEST_CASE("CanonicalMaps tables") {
  auto maps = CanonicalMaps::build(4, kC4);
  CHECK(maps.orbit_count == 4);
  CHECK(CanonicalMaps::build(3, kC4).orbit_count == 3);

  // constant on orbits
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      for (const auto& g : elements(kC4)) {
        auto [gi, gj] = act_on_coords(g, {i, j}, 4, kC4);
        CHECK(maps.position_to_rep[maps.pos_index(i, j)] ==
              maps.position_to_rep[maps.pos_index(gi, gj)]);
        CHECK(maps.rep_index[maps.pos_index(i, j)] ==
              maps.rep_index[maps.pos_index(gi, gj)]);
      }
      CHECK(maps.position_to_rep[maps.pos_index(i, j)] <= std::pair<int, int>{i, j});
    }

  // pair tables invariant under simultaneous D4 action
  int n2 = 16;
  for (int a = 0; a < n2; ++a)
    for (int b = 0; b < n2; ++b) {
      std::pair<int, int> pa{a / 4, a % 4}, pb{b / 4, b % 4};
      for (const auto& g : elements(kD4)) {
        auto ga = act_on_coords(g, pa, 4, kD4);
        auto gb = act_on_coords(g, pb, 4, kD4);
        int idx1 = maps.pair_index(a, b);
        int idx2 = maps.pair_index(ga.first * 4 + ga.second, gb.first * 4 + gb.second);
        CHECK(maps.pair_to_canonical[idx1] == maps.pair_to_canonical[idx2]);
        CHECK(maps.pair_disp_index[idx1] == maps.pair_disp_index[idx2]);
      }
    }
}

TEST_CASE("CSV export") {
  auto maps = CanonicalMaps::build(2, kC4);
  std::ostringstream out;
  write_canonical_maps_csv(maps, out);
  CHECK(out.str() == "i,j,rep_i,rep_j\n0,0,0,0\n0,1,0,0\n1,0,0,0\n1,1,0,0\n");
}
