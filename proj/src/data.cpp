// SPDX-License-Identifier: Apache-2.0
#include "eqvit/data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "eqvit/layers.hpp"

namespace eqvit {

namespace {

struct Glyph {
  std::vector<std::pair<int, int>> cells;
  int rows;
  int cols;
};

// Orientation-sensitive glyphs on a unit cell grid, canonical pose.
const std::vector<Glyph>& glyphs() {
  static const std::vector<Glyph> all = {
      {{{0, 0}, {1, 0}, {1, 1}}, 2, 2},                          // L-tromino
      {{{0, 0}, {0, 1}, {0, 2}, {1, 1}}, 2, 3},                  // T-tetromino
      {{{0, 0}, {0, 1}, {0, 2}, {1, 0}, {2, 0}}, 3, 3},          // corner wedge
      {{{0, 0}, {0, 1}, {1, 1}, {1, 2}}, 2, 3},                  // S-tetromino
      {{{0, 0}, {1, 0}, {2, 0}, {3, 0}, {3, 1}}, 4, 2},          // long hook
  };
  return all;
}

constexpr int kCellScale = 2;        // each glyph cell covers 2x2 pixels
constexpr double kNoiseAmplitude = 0.1;

NdArray render_glyph(int image_side, int glyph_id, UniformRng& rng) {
  const Glyph& glyph = glyphs()[static_cast<size_t>(glyph_id)];
  int gh = glyph.rows * kCellScale, gw = glyph.cols * kCellScale;
  int max_i = image_side - gh, max_j = image_side - gw;
  int oi = static_cast<int>(rng.next_index(max_i + 1));
  int oj = static_cast<int>(rng.next_index(max_j + 1));
  double intensity = rng.next(0.7, 1.0);

  NdArray image({image_side, image_side, 1});
  for (auto [ci, cj] : glyph.cells)
    for (int u = 0; u < kCellScale; ++u)
      for (int v = 0; v < kCellScale; ++v)
        image[(oi + ci * kCellScale + u) * image_side + (oj + cj * kCellScale + v)] =
            intensity;
  for (int64_t i = 0; i < image.size(); ++i) image[i] += rng.next(0.0, kNoiseAmplitude);
  return image;
}

}  // namespace

void SyntheticTaskSpec::validate() const {
  if (image_side < 16) throw std::invalid_argument("task: image_side must be >= 16");
  if (train_size < 0 || test_size < 0)
    throw std::invalid_argument("task: negative dataset size");
  if (task == TaskKind::Shapes &&
      (num_classes < 1 || num_classes > static_cast<int>(glyphs().size())))
    throw std::invalid_argument("task: num_classes must be in [1, " +
                                std::to_string(glyphs().size()) + "]");
  if (task == TaskKind::Sr && scale != 2)
    throw std::invalid_argument("task: only scale 2 is supported");
}

ShapesData gen_shapes(const SyntheticTaskSpec& spec) {
  spec.validate();
  ShapesData data;
  UniformRng rng(spec.seed * 0x9e3779b97f4a7c15ULL + 1);

  auto generate = [&](int count, LabeledImages& out) {
    for (int i = 0; i < count; ++i) {
      int label = i % spec.num_classes;  // round-robin keeps classes balanced
      out.images.push_back(render_glyph(spec.image_side, label, rng));
      out.labels.push_back(label);
    }
  };
  generate(spec.train_size, data.train);
  generate(spec.test_size, data.test);
  if (spec.test_orientation_policy == OrientationPolicy::AllOrientations)
    data.test = with_random_orientations(data.test, spec.orientation_group, spec.seed + 17);
  return data;
}

LabeledImages with_random_orientations(const LabeledImages& data, const GroupSpec& group,
                                       uint64_t seed) {
  UniformRng rng(seed);
  LabeledImages out;
  out.labels = data.labels;
  out.images.reserve(data.images.size());
  for (const NdArray& image : data.images) {
    GroupElement g = element_at(static_cast<int>(rng.next_index(group.order())), group);
    out.images.push_back(transform_image(image, g, group));
  }
  return out;
}

SrData gen_toy_sr(const SyntheticTaskSpec& spec) {
  spec.validate();
  SrData data;
  UniformRng rng(spec.seed * 0x9e3779b97f4a7c15ULL + 2);
  int hr_side = spec.image_side;
  int lr_side = hr_side / spec.scale;

  auto texture = [&](int side) {
    NdArray img({side, side, 1});
    int waves = 3;
    std::vector<double> fi(waves), fj(waves), phase(waves), amp(waves);
    for (int k = 0; k < waves; ++k) {
      fi[k] = rng.next(0.5, 3.0);
      fj[k] = rng.next(0.5, 3.0);
      phase[k] = rng.next(0.0, 2.0 * M_PI);
      amp[k] = rng.next(0.3, 1.0);
    }
    double gi = rng.next(-1.0, 1.0), gj = rng.next(-1.0, 1.0);
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i < side; ++i)
      for (int j = 0; j < side; ++j) {
        double v = gi * i / side + gj * j / side;
        for (int k = 0; k < waves; ++k)
          v += amp[k] * std::sin(2.0 * M_PI * (fi[k] * i + fj[k] * j) / side + phase[k]);
        img[i * side + j] = v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    double span = hi > lo ? hi - lo : 1.0;
    for (int64_t i = 0; i < img.size(); ++i) img[i] = (img[i] - lo) / span;
    return img;
  };

  auto generate = [&](int count, std::vector<SrPair>& out) {
    for (int n = 0; n < count; ++n) {
      SrPair pair;
      if (spec.sr_exact_degradation) {
        pair.lr = texture(lr_side);
        pair.hr = NdArray({hr_side, hr_side, 1});
        for (int i = 0; i < hr_side; ++i)
          for (int j = 0; j < hr_side; ++j)
            pair.hr[i * hr_side + j] = pair.lr[(i / spec.scale) * lr_side + j / spec.scale];
      } else {
        pair.hr = texture(hr_side);
        pair.lr = NdArray({lr_side, lr_side, 1});
        for (int i = 0; i < lr_side; ++i)
          for (int j = 0; j < lr_side; ++j) {
            double acc = 0.0;
            for (int u = 0; u < spec.scale; ++u)
              for (int v = 0; v < spec.scale; ++v)
                acc += pair.hr[(i * spec.scale + u) * hr_side + (j * spec.scale + v)];
            pair.lr[i * lr_side + j] = acc / (spec.scale * spec.scale);
          }
      }
      out.push_back(std::move(pair));
    }
  };
  generate(spec.train_size, data.train);
  generate(spec.test_size, data.test);
  return data;
}

NdArray transform_image(const NdArray& image, const GroupElement& g, const GroupSpec& spec) {
  return spatial_transform(g, Tensor::leaf(image), spec).value();
}

double psnr(const NdArray& a, const NdArray& b, double peak) {
  if (!same_shape(a, b))
    throw std::invalid_argument("psnr: shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  double mse = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return 1e9;
  return 10.0 * std::log10(peak * peak / mse);
}

const char* task_name(TaskKind task) { return task == TaskKind::Shapes ? "shapes" : "sr"; }

TaskKind task_from_name(const std::string& name) {
  if (name == "shapes") return TaskKind::Shapes;
  if (name == "sr") return TaskKind::Sr;
  throw std::invalid_argument("unknown task '" + name + "' (expected shapes or sr)");
}

const char* policy_name(OrientationPolicy policy) {
  return policy == OrientationPolicy::CanonicalOnly ? "canonical-only" : "all-orientations";
}

OrientationPolicy policy_from_name(const std::string& name) {
  if (name == "canonical-only") return OrientationPolicy::CanonicalOnly;
  if (name == "all-orientations") return OrientationPolicy::AllOrientations;
  throw std::invalid_argument("unknown orientation policy '" + name + "'");
}

}  // namespace eqvit
