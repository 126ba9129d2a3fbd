#pragma once

#include <cstdint>
#include <vector>

#include "banknet/dataset.hpp"
#include "banknet/rng.hpp"
#include "banknet/tensor.hpp"

namespace bnk {

/// Random-affine augmentation ranges. The defaults are the training recipe:
/// rotation up to 180 degrees, 10% shifts, 0.1 rad shear, zoom in
/// [0.8, 1.5], horizontal flips, nearest fill, and a x10 oversampling factor
/// for offline materialization.
struct AugmentConfig {
  double rotation_range_deg = 180.0;  // angle drawn from [0, range]
  double width_shift_frac = 0.1;      // dx drawn from [-frac, +frac]
  double height_shift_frac = 0.1;
  double shear_range = 0.1;  // radians, drawn from [-range, +range]
  double zoom_min = 0.8;
  double zoom_max = 1.5;
  bool horizontal_flip = true;
  int oversample_factor = 10;

  /// All-zero ranges, zoom pinned at 1, flip off.
  static AugmentConfig identity();
  void validate() const;
};

/// One sampled realization of the config ranges.
struct AffineParams {
  double angle_deg = 0.0;
  double dx_frac = 0.0;
  double dy_frac = 0.0;
  double shear = 0.0;
  double zoom_x = 1.0;
  double zoom_y = 1.0;
  bool flip = false;

  bool is_identity() const;
};

/// Draw order is fixed (angle, dx, dy, shear, zoom, flip) so a given
/// (seed, draw index) yields the same parameters everywhere.
AffineParams sample_params(const AugmentConfig& config, SplitMix64& rng);

/// Warps the image by the forward transform chain
///   center-rotate -> shear -> zoom -> translate -> flip
/// evaluated by inverse-mapping every output pixel and sampling the source
/// nearest-neighbor; source coordinates outside the image clamp to the edge
/// (nearest fill). Shape is preserved.
Tensor apply_affine(const Tensor& image, const AffineParams& params);

/// Offline materialization: per source image, the original followed by
/// oversample_factor - 1 augmented variants. Variant j of item i draws from
/// derive_seed(seed, i, j), so output is independent of worker scheduling.
std::vector<LabeledImage> augment_offline(const std::vector<LabeledImage>& items,
                                          const AugmentConfig& config, std::uint64_t seed);

/// Online mode: the fresh variant of item `index` for `epoch`.
LabeledImage augment_online(const LabeledImage& item, const AugmentConfig& config,
                            std::uint64_t seed, std::uint64_t index, std::uint64_t epoch);

}  // namespace bnk
