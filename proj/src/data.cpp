#include "ganinv/data.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "ganinv/rng.hpp"

namespace ganinv {

LabeledImageSet LabeledImageSet::subset(const std::vector<int64_t>& idx) const {
  LabeledImageSet out;
  Shape s = images.shape();
  s[0] = static_cast<int64_t>(idx.size());
  out.images = Tensor<float>(s);
  out.labels.resize(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) {
    out.images.set_row(static_cast<int64_t>(i), images.slice_rows(idx[i], idx[i] + 1));
    out.labels[i] = labels[idx[i]];
  }
  out.num_classes = num_classes;
  out.split = split;
  out.source = source;
  return out;
}

namespace {

constexpr uint32_t kImageMagic = 0x00000803;
constexpr uint32_t kLabelMagic = 0x00000801;

uint32_t read_be32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("truncated IDX file while reading " + what);
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

void write_be32(std::ostream& os, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

LabeledImageSet load_idx(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw DataError("cannot open " + images_path.string());
  std::ifstream lbls(labels_path, std::ios::binary);
  if (!lbls) throw DataError("cannot open " + labels_path.string());

  const uint32_t im = read_be32(imgs, "image magic");
  if (im != kImageMagic)
    throw DataError("bad image magic in " + images_path.string() + " (expected 0x803)");
  const int64_t n = read_be32(imgs, "image count");
  const int64_t h = read_be32(imgs, "rows");
  const int64_t w = read_be32(imgs, "cols");

  const uint32_t lm = read_be32(lbls, "label magic");
  if (lm != kLabelMagic)
    throw DataError("bad label magic in " + labels_path.string() + " (expected 0x801)");
  const int64_t nl = read_be32(lbls, "label count");
  if (n != nl)
    throw DataError("image/label count mismatch: " + std::to_string(n) + " images vs " +
                    std::to_string(nl) + " labels");

  std::vector<unsigned char> pixels(static_cast<size_t>(n) * h * w);
  imgs.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (static_cast<size_t>(imgs.gcount()) != pixels.size())
    throw DataError("truncated pixel payload in " + images_path.string());

  std::vector<unsigned char> raw_labels(static_cast<size_t>(n));
  lbls.read(reinterpret_cast<char*>(raw_labels.data()), n);
  if (lbls.gcount() != n) throw DataError("truncated label payload in " + labels_path.string());

  LabeledImageSet out;
  out.images = Tensor<float>(Shape{n, h, w, 1});
  for (size_t i = 0; i < pixels.size(); ++i) out.images[i] = normalize_byte(pixels[i]);
  out.labels.resize(n);
  int max_label = 0;
  for (int64_t i = 0; i < n; ++i) {
    out.labels[i] = raw_labels[i];
    max_label = std::max(max_label, out.labels[i]);
  }
  out.num_classes = max_label + 1;
  out.source = images_path.string();
  return out;
}

void save_idx(const LabeledImageSet& set, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path) {
  if (set.images.rank() != 4 || set.images.dim(3) != 1)
    throw DataError("IDX export supports single-channel image sets");
  const int64_t n = set.count(), h = set.images.dim(1), w = set.images.dim(2);

  std::ofstream imgs(images_path, std::ios::binary | std::ios::trunc);
  if (!imgs) throw DataError("cannot write " + images_path.string());
  write_be32(imgs, kImageMagic);
  write_be32(imgs, static_cast<uint32_t>(n));
  write_be32(imgs, static_cast<uint32_t>(h));
  write_be32(imgs, static_cast<uint32_t>(w));
  std::vector<unsigned char> row(static_cast<size_t>(h) * w);
  for (int64_t i = 0; i < n; ++i) {
    const float* src = set.images.data() + i * h * w;
    for (int64_t j = 0; j < h * w; ++j) row[j] = denormalize_pixel(src[j]);
    imgs.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }

  std::ofstream lbls(labels_path, std::ios::binary | std::ios::trunc);
  if (!lbls) throw DataError("cannot write " + labels_path.string());
  write_be32(lbls, kLabelMagic);
  write_be32(lbls, static_cast<uint32_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const unsigned char b = static_cast<unsigned char>(set.labels[i]);
    lbls.write(reinterpret_cast<const char*>(&b), 1);
  }
}

std::vector<std::pair<double, double>> gaussian_ring_centers(int k_modes, double ring_radius) {
  std::vector<std::pair<double, double>> centers(k_modes);
  for (int k = 0; k < k_modes; ++k) {
    const double a = 2.0 * M_PI * k / k_modes;
    centers[k] = {ring_radius * std::cos(a), ring_radius * std::sin(a)};
  }
  return centers;
}

LabeledImageSet synth_gaussians(int k_modes, int64_t n, uint64_t seed, double ring_radius,
                                double sigma) {
  if (k_modes < 1) throw DataError("k_modes must be >= 1");
  if (n < k_modes) throw DataError("need at least one point per mode");
  const auto centers = gaussian_ring_centers(k_modes, ring_radius);
  Rng rng(seed);
  LabeledImageSet out;
  out.images = Tensor<float>(Shape{n, 1, 1, 2});
  out.labels.resize(n);
  for (int64_t i = 0; i < n; ++i) {
    const int k = static_cast<int>(rng.integer(static_cast<uint64_t>(k_modes)));
    out.labels[i] = k;
    out.images[2 * i + 0] = static_cast<float>(centers[k].first + sigma * rng.normal());
    out.images[2 * i + 1] = static_cast<float>(centers[k].second + sigma * rng.normal());
  }
  out.num_classes = k_modes;
  out.source = "synth_gaussians(k=" + std::to_string(k_modes) + ")";
  return out;
}

// ---------------------------------------------------------------------------
// Glyph rendering: each class is a fixed set of strokes (line segments in
// unit coordinates); samples are drawn by rasterizing the strokes under a
// small random similarity transform.

namespace {

struct Seg {
  double x0, y0, x1, y1;
};

// Stroke templates in [0,1]^2, y growing downward.
std::vector<Seg> glyph_template(GlyphStyle style, int cls) {
  using S = std::vector<Seg>;
  if (style == GlyphStyle::Digits) {
    switch (cls) {
      case 0: return S{{.3, .2, .7, .2}, {.7, .2, .7, .8}, {.7, .8, .3, .8}, {.3, .8, .3, .2}};
      case 1: return S{{.5, .15, .5, .85}, {.35, .3, .5, .15}};
      case 2: return S{{.3, .3, .5, .15}, {.5, .15, .7, .3}, {.7, .3, .3, .85}, {.3, .85, .7, .85}};
      case 3: return S{{.3, .2, .7, .2}, {.7, .2, .5, .5}, {.5, .5, .7, .8}, {.7, .8, .3, .8}};
      case 4: return S{{.65, .15, .65, .85}, {.65, .15, .3, .6}, {.3, .6, .75, .6}};
      case 5: return S{{.7, .15, .3, .15}, {.3, .15, .3, .5}, {.3, .5, .65, .5},
                       {.65, .5, .65, .85}, {.65, .85, .3, .85}};
      case 6: return S{{.65, .15, .35, .45}, {.35, .45, .35, .8}, {.35, .8, .65, .8},
                       {.65, .8, .65, .55}, {.65, .55, .35, .55}};
      case 7: return S{{.3, .15, .7, .15}, {.7, .15, .4, .85}};
      case 8: return S{{.5, .15, .7, .3}, {.7, .3, .3, .65}, {.3, .65, .5, .85},
                       {.5, .85, .7, .65}, {.7, .65, .3, .3}, {.3, .3, .5, .15}};
      case 9: return S{{.65, .45, .35, .45}, {.35, .45, .35, .2}, {.35, .2, .65, .2},
                       {.65, .2, .65, .85}};
    }
  } else {
    switch (cls) {
      case 0: return S{{.25, .3, .75, .3}, {.25, .3, .25, .85}, {.75, .3, .75, .85},
                       {.25, .85, .75, .85}, {.25, .3, .15, .45}, {.75, .3, .85, .45}};  // shirt
      case 1: return S{{.4, .15, .6, .15}, {.4, .15, .35, .85}, {.6, .15, .65, .85},
                       {.5, .4, .5, .85}};  // trousers
      case 2: return S{{.3, .25, .7, .25}, {.3, .25, .2, .9}, {.7, .25, .8, .9},
                       {.2, .9, .8, .9}};  // dress
      case 3: return S{{.25, .5, .75, .5}, {.25, .5, .25, .8}, {.75, .5, .75, .8},
                       {.25, .8, .75, .8}, {.35, .5, .45, .25}, {.65, .5, .55, .25}};  // bag
      case 4: return S{{.2, .6, .6, .6}, {.6, .6, .75, .45}, {.2, .6, .2, .8},
                       {.2, .8, .8, .8}, {.75, .45, .8, .8}};  // sandal/boot
      case 5: return S{{.5, .2, .5, .6}, {.3, .4, .7, .4}, {.35, .6, .65, .6},
                       {.35, .6, .3, .85}, {.65, .6, .7, .85}};  // coat
      case 6: return S{{.2, .75, .8, .75}, {.2, .75, .35, .55}, {.8, .75, .65, .55},
                       {.35, .55, .65, .55}};  // slipper
      case 7: return S{{.5, .15, .2, .5}, {.5, .15, .8, .5}, {.2, .5, .5, .85},
                       {.8, .5, .5, .85}};  // diamond
      case 8: return S{{.3, .2, .3, .8}, {.3, .5, .7, .2}, {.3, .5, .7, .8}};  // k-mark
      case 9: return S{{.5, .5, .8, .5}, {.5, .5, .35, .25}, {.5, .5, .35, .75},
                       {.5, .5, .65, .1}, {.5, .5, .65, .9}};  // star-ish
    }
  }
  throw DataError("glyph class out of range");
}

double seg_distance(double px, double py, const Seg& s) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
  t = std::min(1.0, std::max(0.0, t));
  const double cx = s.x0 + t * dx, cy = s.y0 + t * dy;
  return std::hypot(px - cx, py - cy);
}

}  // namespace

LabeledImageSet synth_glyphs(GlyphStyle style, int64_t n, uint64_t seed,
                             const std::string& split) {
  constexpr int64_t kSize = 28;
  constexpr int kClasses = 10;
  LabeledImageSet out;
  out.images = Tensor<float>(Shape{n, kSize, kSize, 1});
  out.labels.resize(n);
  out.num_classes = kClasses;
  out.split = split;
  out.source = style == GlyphStyle::Digits ? "synth_glyphs(digits)" : "synth_glyphs(shapes)";

  Rng rng(seed);
  for (int64_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(rng.integer(kClasses));
    out.labels[i] = cls;
    const auto segs = glyph_template(style, cls);

    // per-sample similarity jitter
    const double angle = rng.uniform(-0.17, 0.17);
    const double scale = rng.uniform(0.88, 1.10);
    const double tx = rng.uniform(-0.07, 0.07);
    const double ty = rng.uniform(-0.07, 0.07);
    const double thickness = rng.uniform(0.040, 0.055);
    const double ca = std::cos(angle), sa = std::sin(angle);

    std::vector<Seg> placed(segs.size());
    for (size_t s = 0; s < segs.size(); ++s) {
      auto xf = [&](double x, double y, double& ox, double& oy) {
        const double cx = x - 0.5, cy = y - 0.5;
        ox = 0.5 + tx + scale * (ca * cx - sa * cy);
        oy = 0.5 + ty + scale * (sa * cx + ca * cy);
      };
      xf(segs[s].x0, segs[s].y0, placed[s].x0, placed[s].y0);
      xf(segs[s].x1, segs[s].y1, placed[s].x1, placed[s].y1);
    }

    float* img = out.images.data() + i * kSize * kSize;
    for (int64_t py = 0; py < kSize; ++py) {
      for (int64_t px = 0; px < kSize; ++px) {
        const double ux = (px + 0.5) / kSize, uy = (py + 0.5) / kSize;
        double dmin = 1e9;
        for (const auto& s : placed) dmin = std::min(dmin, seg_distance(ux, uy, s));
        // soft-edged stroke: 1 inside, smooth falloff over one pixel width
        const double edge = 1.0 / kSize;
        double v = 1.0 - (dmin - thickness) / edge;
        v = std::min(1.0, std::max(0.0, v));
        img[py * kSize + px] = static_cast<float>(2.0 * v - 1.0);
      }
    }
  }
  return out;
}

}  // namespace ganinv
