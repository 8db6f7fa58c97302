// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eqvit/group.hpp"
#include "eqvit/ndarray.hpp"

namespace eqvit {

enum class TaskKind { Shapes, Sr };
enum class OrientationPolicy { CanonicalOnly, AllOrientations };

// Deterministic synthetic tasks: the same spec always produces identical
// datasets, byte for byte.
struct SyntheticTaskSpec {
  TaskKind task = TaskKind::Shapes;
  int image_side = 16;
  int num_classes = 3;
  int scale = 2;  // SR upscale factor
  int train_size = 512;
  int test_size = 256;
  uint64_t seed = 0;
  OrientationPolicy test_orientation_policy = OrientationPolicy::AllOrientations;
  GroupSpec orientation_group{4, false};
  // Sanity mode: the high-resolution target is the nearest-neighbor upsample
  // of the low-resolution input, so exact reconstruction is expressible.
  bool sr_exact_degradation = false;

  void validate() const;
};

struct LabeledImages {
  std::vector<NdArray> images;  // H x W x 1
  std::vector<int64_t> labels;
};

struct ShapesData {
  LabeledImages train;  // canonical orientation
  LabeledImages test;   // per the spec's orientation policy
};

// Images hold one of the orientation-sensitive glyphs at a random position
// with additive noise; the label is the glyph class. Classes are assigned
// round-robin.
ShapesData gen_shapes(const SyntheticTaskSpec& spec);

// Applies a uniformly random element of the group to each image (labels are
// unchanged). Deterministic in the seed.
LabeledImages with_random_orientations(const LabeledImages& data, const GroupSpec& group,
                                       uint64_t seed);

struct SrPair {
  NdArray lr;  // h x w x 1
  NdArray hr;  // h*scale x w*scale x 1
};

struct SrData {
  std::vector<SrPair> train;
  std::vector<SrPair> test;
};

// Procedural band-limited textures in [0, 1]; the low-resolution input is the
// block mean (or the exact nearest-neighbor inverse in sanity mode).
SrData gen_toy_sr(const SyntheticTaskSpec& spec);

// Plain spatial action of g on an image array.
NdArray transform_image(const NdArray& image, const GroupElement& g, const GroupSpec& spec);

double psnr(const NdArray& a, const NdArray& b, double peak = 1.0);

const char* task_name(TaskKind task);
TaskKind task_from_name(const std::string& name);
const char* policy_name(OrientationPolicy policy);
OrientationPolicy policy_from_name(const std::string& name);

}  // namespace eqvit
