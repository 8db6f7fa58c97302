// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

namespace eqvit {

// Finite transformation group S: rotations by multiples of 2*pi/t, optionally
// composed with a mirror reflection. t=4 gives C4 (order 4) or, with
// reflection, D4 (order 8). Elements are written g(k, m) with k the rotation
// step and m in {0,1} the mirror bit.
struct GroupSpec {
  int t = 4;
  bool with_reflection = false;

  int order() const { return with_reflection ? 2 * t : t; }
  bool operator==(const GroupSpec&) const = default;
};

struct GroupElement {
  int k = 0;
  int m = 0;

  bool operator==(const GroupElement&) const = default;
};

// Index convention: rotations first (k = 0..t-1, m = 0), then the mirrored
// coset. Identity is index 0.
int element_index(const GroupElement& g, const GroupSpec& spec);
GroupElement element_at(int index, const GroupSpec& spec);
std::vector<GroupElement> elements(const GroupSpec& spec);
bool is_valid(const GroupElement& g, const GroupSpec& spec);

// The 2x2 matrix of g(k, m): row 0 = [(-1)^m cos(2pi k/t), -(-1)^m sin(2pi k/t)],
// row 1 = [sin(2pi k/t), cos(2pi k/t)]. Exact (integer-valued) for t in {1,2,4}.
using Mat2 = std::array<std::array<double, 2>, 2>;
Mat2 matrix_of(const GroupElement& g, const GroupSpec& spec);

GroupElement compose(const GroupElement& a, const GroupElement& b, const GroupSpec& spec);
GroupElement inverse(const GroupElement& g, const GroupSpec& spec);

struct CayleyTable {
  std::vector<std::vector<int>> compose;  // order x order element indices
  std::vector<int> inverse;               // order element indices

  static CayleyTable build(const GroupSpec& spec);
};

// Action on grid coordinates (i, j), 0 <= i, j < N. The rotation generator
// maps (i, j) -> (j, N-1-i); the mirror generator is the horizontal mirror
// (i, j) -> (i, N-1-j). g(k, m) acts as mirror^m after rotation^k. Only
// t in {1, 2, 4} maps the integer grid to itself; other t are rejected.
std::pair<int, int> act_on_coords(const GroupElement& g, std::pair<int, int> p,
                                  int n, const GroupSpec& spec);

// Orbit {g.p : g in S}, deduplicated, in lexicographic order.
std::vector<std::pair<int, int>> orbit(std::pair<int, int> p, int n, const GroupSpec& spec);

// Lexicographic minimum of orbit(p).
std::pair<int, int> canonical_rep(std::pair<int, int> p, int n, const GroupSpec& spec);

// Lex-min over the 8-element D4 orbit of the ordered pair, comparing the
// flattened tuples (i1, j1, i2, j2). The same group element is applied to
// both endpoints; swapping endpoints is not part of the orbit.
std::pair<std::pair<int, int>, std::pair<int, int>> canonical_pair(
    std::pair<int, int> pi, std::pair<int, int> pj, int n);

// Left regular action on the group channel axis: perm[h] = index of g~ o h.
// Slice perm[h] of a transformed feature holds the transported slice h, so
// slice h' reads from slice g~^-1 h' of the original.
std::vector<int> channel_permutation(const GroupElement& g_tilde, const GroupSpec& spec);

// Precomputed orbit-canonicalization tables for an n x n token grid.
// Position canonicalization follows the owning group; pair canonicalization
// is always under D4. Displacement indices enumerate the distinct canonical
// displacements p_jc - p_ic, for relative-position lookup.
struct CanonicalMaps {
  GroupSpec spec;
  int grid_side = 0;
  int orbit_count = 0;
  std::vector<std::pair<int, int>> position_to_rep;  // n*n entries, row-major
  std::vector<int> rep_index;                        // n*n entries into [0, orbit_count)
  std::vector<std::array<int, 4>> pair_to_canonical; // n^4 entries (i1,j1,i2,j2)
  std::vector<int> pair_disp_index;                  // n^4 entries
  int disp_count = 0;

  static CanonicalMaps build(int grid_side, const GroupSpec& spec);

  int pos_index(int i, int j) const { return i * grid_side + j; }
  int pair_index(int a, int b) const { return a * grid_side * grid_side + b; }
};

// CSV export (columns: i, j, rep_i, rep_j).
void write_canonical_maps_csv(const CanonicalMaps& maps, std::ostream& out);

}  // namespace eqvit
