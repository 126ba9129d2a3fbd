#include <doctest.h>

#include <cmath>
#include <set>

#include "banknet/augment.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace bnk;
using testutil::bitwise_equal;

TEST_CASE("sampling with all-zero ranges yields identity parameters") {
  SplitMix64 rng(0);
  const AffineParams p = sample_params(AugmentConfig::identity(), rng);
  CHECK(p.is_identity());
}

TEST_CASE("sampling is deterministic for a fixed seed") {
  AugmentConfig cfg;  // full default ranges
  SplitMix64 a(42), b(42);
  for (int i = 0; i < 32; ++i) {
    const AffineParams pa = sample_params(cfg, a);
    const AffineParams pb = sample_params(cfg, b);
    CHECK(pa.angle_deg == pb.angle_deg);
    CHECK(pa.dx_frac == pb.dx_frac);
    CHECK(pa.dy_frac == pb.dy_frac);
    CHECK(pa.shear == pb.shear);
    CHECK(pa.zoom_x == pb.zoom_x);
    CHECK(pa.flip == pb.flip);
  }
}

TEST_CASE("10000 draws stay inside the configured ranges and cover them") {
  AugmentConfig cfg;
  SplitMix64 rng(7);
  double angle_min = 1e9, angle_max = -1e9, zoom_min = 1e9, zoom_max = -1e9;
  int flips = 0;
  for (int i = 0; i < 10000; ++i) {
    const AffineParams p = sample_params(cfg, rng);
    CHECK(p.angle_deg >= 0.0);
    CHECK(p.angle_deg <= 180.0);
    CHECK(std::abs(p.dx_frac) <= 0.1);
    CHECK(std::abs(p.dy_frac) <= 0.1);
    CHECK(std::abs(p.shear) <= 0.1);
    CHECK(p.zoom_x >= 0.8);
    CHECK(p.zoom_x <= 1.5);
    CHECK(p.zoom_y == p.zoom_x);
    angle_min = std::min(angle_min, p.angle_deg);
    angle_max = std::max(angle_max, p.angle_deg);
    zoom_min = std::min(zoom_min, p.zoom_x);
    zoom_max = std::max(zoom_max, p.zoom_x);
    flips += p.flip ? 1 : 0;
  }
  CHECK(angle_min < 1.0);
  CHECK(angle_max > 179.0);
  CHECK(zoom_min < 0.81);
  CHECK(zoom_max > 1.49);
  CHECK(flips > 4500);
  CHECK(flips < 5500);
}

TEST_CASE("identity affine parameters copy the image exactly") {
  SplitMix64 rng(9);
  const Tensor img = oracle::random_tensor({7, 5, 3}, rng, 0.0, 1.0);
  CHECK(bitwise_equal(apply_affine(img, AffineParams{}), img));
}

TEST_CASE("flip-only warp mirrors columns") {
  SplitMix64 rng(10);
  const Tensor img = oracle::random_tensor({4, 6, 3}, rng, 0.0, 1.0);
  AffineParams p;
  p.flip = true;
  const Tensor out = apply_affine(img, p);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 6; ++x) {
      for (int c = 0; c < 3; ++c) CHECK(out.at(y, x, c) == img.at(y, 6 - 1 - x, c));
    }
  }
}

TEST_CASE("90-degree rotation matches a per-pixel scalar-trig oracle") {
  // Asymmetric 5x5 marker.
  Tensor img({5, 5, 1});
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) img.at(y, x, 0) = y * 10.0 + x;
  }
  AffineParams p;
  p.angle_deg = 90.0;
  const Tensor got = apply_affine(img, p);

  // Independent inverse map: rotate output coordinates by -90 degrees about
  // the center, round to nearest, clamp to the edge.
  const double theta = 90.0 * M_PI / 180.0;
  const double c = 2.0;  // (5 - 1) / 2
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      const double u = x - c, v = y - c;
      const double su = u * std::cos(theta) + v * std::sin(theta);
      const double sv = -u * std::sin(theta) + v * std::cos(theta);
      const int sx = std::clamp(static_cast<int>(std::lround(c + su)), 0, 4);
      const int sy = std::clamp(static_cast<int>(std::lround(c + sv)), 0, 4);
      CHECK(got.at(y, x, 0) == img.at(sy, sx, 0));
    }
  }
}

TEST_CASE("warps preserve shape and create no new pixel values") {
  SplitMix64 rng(11);
  AugmentConfig cfg;  // full ranges
  const Tensor img = oracle::random_tensor({9, 8, 3}, rng, 0.0, 1.0);
  std::set<double> source_values(img.values().begin(), img.values().end());
  for (int trial = 0; trial < 25; ++trial) {
    const AffineParams p = sample_params(cfg, rng);
    const Tensor out = apply_affine(img, p);
    REQUIRE(out.shape() == img.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(source_values.count(out[i]) == 1);
    }
  }
}

TEST_CASE("offline oversampling multiplies the set by the configured factor") {
  SplitMix64 rng(12);
  std::vector<LabeledImage> items;
  for (int i = 0; i < 7; ++i) {
    items.push_back({oracle::random_tensor({6, 6, 3}, rng, 0.0, 1.0), i % 3, "item" +
                                                                               std::to_string(i)});
  }
  AugmentConfig cfg;
  cfg.oversample_factor = 10;
  const std::vector<LabeledImage> out = augment_offline(items, cfg, 99);
  CHECK(out.size() == 70);

  cfg.oversample_factor = 1;
  const std::vector<LabeledImage> originals = augment_offline(items, cfg, 99);
  REQUIRE(originals.size() == items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    CHECK(bitwise_equal(originals[i].pixels, items[i].pixels));
  }
}

TEST_CASE("augmentation never touches labels") {
  SplitMix64 rng(13);
  std::vector<LabeledImage> items;
  for (int i = 0; i < 5; ++i) {
    items.push_back({oracle::random_tensor({5, 5, 3}, rng, 0.0, 1.0), i, ""});
  }
  AugmentConfig cfg;
  cfg.oversample_factor = 4;
  const std::vector<LabeledImage> out = augment_offline(items, cfg, 5);
  REQUIRE(out.size() == 20);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].label == static_cast<int>(i / 4));
  }
}

TEST_CASE("online variants are keyed by (seed, item, epoch)") {
  SplitMix64 rng(14);
  const LabeledImage item{oracle::random_tensor({8, 8, 3}, rng, 0.0, 1.0), 1, ""};
  AugmentConfig cfg;
  const LabeledImage a = augment_online(item, cfg, 7, 3, 2);
  const LabeledImage b = augment_online(item, cfg, 7, 3, 2);
  CHECK(bitwise_equal(a.pixels, b.pixels));
  const LabeledImage c = augment_online(item, cfg, 7, 3, 5);
  CHECK_FALSE(bitwise_equal(a.pixels, c.pixels));
  const LabeledImage d = augment_online(item, cfg, 8, 3, 2);
  CHECK_FALSE(bitwise_equal(a.pixels, d.pixels));
}

TEST_CASE("config validation") {
  AugmentConfig cfg;
  cfg.zoom_min = -0.1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = AugmentConfig{};
  cfg.oversample_factor = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = AugmentConfig{};
  cfg.zoom_max = 0.5;  // below zoom_min
  CHECK_THROWS_AS(cfg.validate(), Error);
}
