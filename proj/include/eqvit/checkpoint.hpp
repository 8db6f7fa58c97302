// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "eqvit/model.hpp"
#include "eqvit/ndarray.hpp"

namespace eqvit {

// Flat binary container of named tensors. Layout (all integers little-endian):
//   magic "EQTC" (4 bytes), version byte 0x01, then records until EOF:
//     u64 name length, name bytes (UTF-8),
//     u64 rank, rank x u64 extents,
//     f64 data (row-major, IEEE 754 little-endian bit pattern).
struct NamedTensor {
  std::string name;
  NdArray array;
};

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

std::vector<NamedTensor> state_of(const std::vector<ParamEntry>& params);
// Assigns by name; throws if a parameter is missing or has the wrong shape.
void load_state(std::vector<ParamEntry>& params, const std::vector<NamedTensor>& state);

}  // namespace eqvit
