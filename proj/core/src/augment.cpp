#include "banknet/augment.hpp"

#include <algorithm>
#include <cmath>

namespace bnk {

AugmentConfig AugmentConfig::identity() {
  AugmentConfig c;
  c.rotation_range_deg = 0.0;
  c.width_shift_frac = 0.0;
  c.height_shift_frac = 0.0;
  c.shear_range = 0.0;
  c.zoom_min = 1.0;
  c.zoom_max = 1.0;
  c.horizontal_flip = false;
  c.oversample_factor = 1;
  return c;
}

void AugmentConfig::validate() const {
  if (rotation_range_deg < 0.0 || width_shift_frac < 0.0 || height_shift_frac < 0.0 ||
      shear_range < 0.0) {
    throw Error("augment ranges must be non-negative");
  }
  if (zoom_min <= 0.0 || zoom_max < zoom_min) {
    throw Error("zoom bounds must be positive with zoom_min <= zoom_max");
  }
  if (oversample_factor < 1) throw Error("oversample factor must be at least 1");
}

bool AffineParams::is_identity() const {
  return angle_deg == 0.0 && dx_frac == 0.0 && dy_frac == 0.0 && shear == 0.0 && zoom_x == 1.0 &&
         zoom_y == 1.0 && !flip;
}

AffineParams sample_params(const AugmentConfig& config, SplitMix64& rng) {
  config.validate();
  AffineParams p;
  p.angle_deg = rng.uniform(0.0, config.rotation_range_deg);
  p.dx_frac = rng.uniform(-config.width_shift_frac, config.width_shift_frac);
  p.dy_frac = rng.uniform(-config.height_shift_frac, config.height_shift_frac);
  p.shear = rng.uniform(-config.shear_range, config.shear_range);
  p.zoom_x = rng.uniform(config.zoom_min, config.zoom_max);
  p.zoom_y = p.zoom_x;
  p.flip = config.horizontal_flip && rng.coin();
  return p;
}

Tensor apply_affine(const Tensor& image, const AffineParams& params) {
  if (image.rank() != 3 || image.dim(0) < 1 || image.dim(1) < 1) {
    throw ShapeError("affine warp expects a HxWxC image, got " + image.shape_str());
  }
  if (!(params.zoom_x > 0.0) || !(params.zoom_y > 0.0)) {
    throw Error("affine zoom factors must be positive");
  }
  if (params.is_identity()) return image;

  const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
  const double cy = (h - 1) / 2.0;
  const double cx = (w - 1) / 2.0;
  const double theta = params.angle_deg * (3.14159265358979323846 / 180.0);
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double tan_s = std::tan(params.shear);
  const double sec_s = 1.0 / std::cos(params.shear);
  const double tx = params.dx_frac * w;
  const double ty = params.dy_frac * h;

  Tensor out(image.shape());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Invert the forward chain, last step first.
      double u = x - cx;
      double v = y - cy;
      if (params.flip) u = -u;
      u -= tx;
      v -= ty;
      u /= params.zoom_x;
      v /= params.zoom_y;
      // Shear was x' = x - sin(s) y, y' = cos(s) y, so
      // y = sec(s) y' and x = x' + tan(s) y'.
      u += tan_s * v;
      v *= sec_s;
      // Rotate by -theta.
      const double ur = u * cos_t + v * sin_t;
      const double vr = -u * sin_t + v * cos_t;
      const int sx = std::clamp(static_cast<int>(std::lround(cx + ur)), 0, w - 1);
      const int sy = std::clamp(static_cast<int>(std::lround(cy + vr)), 0, h - 1);
      for (int ci = 0; ci < c; ++ci) out.at(y, x, ci) = image.at(sy, sx, ci);
    }
  }
  return out;
}

std::vector<LabeledImage> augment_offline(const std::vector<LabeledImage>& items,
                                          const AugmentConfig& config, std::uint64_t seed) {
  config.validate();
  std::vector<LabeledImage> out;
  out.reserve(items.size() * static_cast<std::size_t>(config.oversample_factor));
  for (std::size_t i = 0; i < items.size(); ++i) {
    out.push_back(items[i]);
    for (int j = 1; j < config.oversample_factor; ++j) {
      SplitMix64 rng(derive_seed(seed, i, static_cast<std::uint64_t>(j)));
      const AffineParams p = sample_params(config, rng);
      out.push_back({apply_affine(items[i].pixels, p), items[i].label, items[i].source_path});
    }
  }
  return out;
}

LabeledImage augment_online(const LabeledImage& item, const AugmentConfig& config,
                            std::uint64_t seed, std::uint64_t index, std::uint64_t epoch) {
  SplitMix64 rng(derive_seed(seed, index, epoch));
  const AffineParams p = sample_params(config, rng);
  return {apply_affine(item.pixels, p), item.label, item.source_path};
}

}  // namespace bnk
