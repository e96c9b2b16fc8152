#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ganinv/data.hpp"
#include "ganinv/rng.hpp"

using namespace ganinv;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto p = fs::temp_directory_path() / "ganinv_test_data";
  fs::create_directories(p);
  return p;
}

void write_be32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v >> 24), (unsigned char)(v >> 16),
                        (unsigned char)(v >> 8), (unsigned char)v};
  os.write((const char*)b, 4);
}

// Hand-crafted IDX pair: n images of 2x2 with the given pixel bytes.
void write_idx_fixture(const fs::path& img, const fs::path& lbl,
                       const std::vector<unsigned char>& pixels,
                       const std::vector<unsigned char>& labels, uint32_t n_images,
                       uint32_t n_labels) {
  std::ofstream fi(img, std::ios::binary);
  write_be32(fi, 0x00000803);
  write_be32(fi, n_images);
  write_be32(fi, 2);
  write_be32(fi, 2);
  fi.write((const char*)pixels.data(), (std::streamsize)pixels.size());
  std::ofstream fl(lbl, std::ios::binary);
  write_be32(fl, 0x00000801);
  write_be32(fl, n_labels);
  fl.write((const char*)labels.data(), (std::streamsize)labels.size());
}

}  // namespace

TEST_CASE("idx fixture loads with exact normalized values") {
  const auto img = temp_dir() / "fix-images-idx3-ubyte";
  const auto lbl = temp_dir() / "fix-labels-idx1-ubyte";
  // 2 images: [0, 255, 128, 64], [1, 2, 3, 4]
  write_idx_fixture(img, lbl, {0, 255, 128, 64, 1, 2, 3, 4}, {7, 2}, 2, 2);

  auto set = load_idx(img, lbl);
  CHECK(set.count() == 2);
  CHECK(set.images.shape() == Shape{2, 2, 2, 1});
  CHECK(set.images[0] == doctest::Approx(-1.0f));
  CHECK(set.images[1] == doctest::Approx(1.0f));
  CHECK(set.images[2] == doctest::Approx(128.0f / 127.5f - 1.0f));
  CHECK(set.images[3] == doctest::Approx(64.0f / 127.5f - 1.0f));
  CHECK(set.labels[0] == 7);
  CHECK(set.labels[1] == 2);
  CHECK(set.num_classes == 8);
}

TEST_CASE("idx loader rejects bad magic, count mismatch, truncation") {
  const auto img = temp_dir() / "bad-images";
  const auto lbl = temp_dir() / "bad-labels";

  SUBCASE("count mismatch") {
    write_idx_fixture(img, lbl, std::vector<unsigned char>(10 * 4, 0),
                      std::vector<unsigned char>(9, 0), 10, 9);
    CHECK_THROWS_AS(load_idx(img, lbl), DataError);
  }
  SUBCASE("bad image magic") {
    {
      std::ofstream fi(img, std::ios::binary);
      write_be32(fi, 0x00000802);
      write_be32(fi, 1);
      write_be32(fi, 2);
      write_be32(fi, 2);
      unsigned char px[4] = {0, 0, 0, 0};
      fi.write((const char*)px, 4);
    }
    {
      std::ofstream fl(lbl, std::ios::binary);
      write_be32(fl, 0x00000801);
      write_be32(fl, 1);
      unsigned char b = 0;
      fl.write((const char*)&b, 1);
    }
    CHECK_THROWS_AS(load_idx(img, lbl), DataError);
  }
  SUBCASE("truncated pixel payload") {
    write_idx_fixture(img, lbl, {0, 1, 2}, {0}, 1, 1);  // needs 4 pixel bytes, has 3
    CHECK_THROWS_AS(load_idx(img, lbl), DataError);
  }
}

TEST_CASE("normalization round trip reproduces bytes exactly") {
  for (int b = 0; b < 256; ++b) {
    const float v = normalize_byte(static_cast<uint8_t>(b));
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
    CHECK(denormalize_pixel(v) == b);
  }
}

TEST_CASE("idx save/load round trip through files") {
  auto set = synth_glyphs(GlyphStyle::Digits, 8, 123);
  const auto img = temp_dir() / "glyphs-images";
  const auto lbl = temp_dir() / "glyphs-labels";
  save_idx(set, img, lbl);
  auto back = load_idx(img, lbl);
  CHECK(back.count() == 8);
  for (size_t i = 0; i < set.labels.size(); ++i) CHECK(back.labels[i] == set.labels[i]);
  // quantize-then-load equals quantizing the original floats
  for (int64_t i = 0; i < set.images.size(); ++i)
    CHECK(back.images[i] == doctest::Approx(normalize_byte(denormalize_pixel(set.images[i]))));
}

TEST_CASE("gaussian ring: determinism, mode means, range") {
  auto a = synth_gaussians(8, 4000, 99);
  auto b = synth_gaussians(8, 4000, 99);
  for (int64_t i = 0; i < a.images.size(); ++i) CHECK(a.images[i] == b.images[i]);

  // single mode at origin: sample mean within 3 sigma / sqrt(n)
  auto c = synth_gaussians(1, 400, 5, 0.0, 1.0);
  double mx = 0, my = 0;
  for (int64_t i = 0; i < c.count(); ++i) {
    mx += c.images[2 * i];
    my += c.images[2 * i + 1];
  }
  mx /= c.count();
  my /= c.count();
  CHECK(std::abs(mx) < 3.0 / std::sqrt(400.0));
  CHECK(std::abs(my) < 3.0 / std::sqrt(400.0));

  // per-mode empirical means near analytic centers
  auto centers = gaussian_ring_centers(8, 0.7);
  std::vector<double> sx(8, 0), sy(8, 0);
  std::vector<int> cnt(8, 0);
  for (int64_t i = 0; i < a.count(); ++i) {
    const int k = a.labels[i];
    sx[k] += a.images[2 * i];
    sy[k] += a.images[2 * i + 1];
    cnt[k]++;
  }
  for (int k = 0; k < 8; ++k) {
    REQUIRE(cnt[k] > 50);
    CHECK(std::abs(sx[k] / cnt[k] - centers[k].first) < 0.05 * 0.7);
    CHECK(std::abs(sy[k] / cnt[k] - centers[k].second) < 0.05 * 0.7);
  }

  CHECK_THROWS_AS(synth_gaussians(0, 10, 1), DataError);
  CHECK_THROWS_AS(synth_gaussians(4, 3, 1), DataError);
}

TEST_CASE("glyph corpus is deterministic, in range, and class-balanced-ish") {
  auto a = synth_glyphs(GlyphStyle::Digits, 500, 77);
  auto b = synth_glyphs(GlyphStyle::Digits, 500, 77);
  for (int64_t i = 0; i < a.images.size(); ++i) CHECK(a.images[i] == b.images[i]);
  CHECK(a.images.shape() == Shape{500, 28, 28, 1});
  for (int64_t i = 0; i < a.images.size(); ++i) {
    CHECK(a.images[i] >= -1.0f);
    CHECK(a.images[i] <= 1.0f);
  }
  std::vector<int> counts(10, 0);
  for (int l : a.labels) counts[l]++;
  for (int k = 0; k < 10; ++k) CHECK(counts[k] > 20);

  // the two families differ
  auto s = synth_glyphs(GlyphStyle::Shapes, 500, 77);
  double diff = 0;
  for (int64_t i = 0; i < a.images.size(); ++i) diff += std::abs(a.images[i] - s.images[i]);
  CHECK(diff / a.images.size() > 0.05);
}
