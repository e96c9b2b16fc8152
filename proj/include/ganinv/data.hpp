#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "ganinv/tensor.hpp"

namespace ganinv {

/// Images in [-1,1] (NHWC) plus integer labels.
struct LabeledImageSet {
  Tensor<float> images;      // [n, h, w, c]
  std::vector<int> labels;   // n entries in [0, num_classes)
  int num_classes = 0;
  std::string split;         // train | test
  std::string source;

  int64_t count() const { return images.empty() ? 0 : images.dim(0); }
  LabeledImageSet subset(const std::vector<int64_t>& idx) const;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Byte [0,255] -> [-1,1] and back; the round trip is exact on bytes.
inline float normalize_byte(uint8_t b) { return static_cast<float>(b) / 127.5f - 1.0f; }
inline uint8_t denormalize_pixel(float v) {
  const float x = (v + 1.0f) * 127.5f;
  const int q = static_cast<int>(std::lround(x));
  return static_cast<uint8_t>(std::min(255, std::max(0, q)));
}

/// Reads the big-endian IDX pair (image magic 0x803, label magic 0x801).
LabeledImageSet load_idx(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path);

/// Writes a set back out as an IDX pair (pixels quantized to bytes).
void save_idx(const LabeledImageSet& set, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path);

/// n points from k isotropic Gaussians placed on a ring, labeled by mode.
/// Points live in [-1,1]^2, stored as images of shape [n,1,1,2].
LabeledImageSet synth_gaussians(int k_modes, int64_t n, uint64_t seed, double ring_radius = 0.7,
                                double sigma = 0.05);

/// Analytic mode centers used by synth_gaussians.
std::vector<std::pair<double, double>> gaussian_ring_centers(int k_modes, double ring_radius);

/// Procedural 28x28 grayscale glyph corpus, ten classes, jittered by a small
/// random affine map per sample. Two template families are available so that
/// distinct datasets of the same scale can be produced.
enum class GlyphStyle { Digits, Shapes };
LabeledImageSet synth_glyphs(GlyphStyle style, int64_t n, uint64_t seed,
                             const std::string& split = "train");

}  // namespace ganinv
