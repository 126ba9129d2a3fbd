#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "banknet/dataset.hpp"

namespace bnk {

/// Procedural image classes with distinct geometric structure. Each render
/// draws its own stripe period, phase, colors and pixel noise, so a class is
/// a pattern family rather than one fixed bitmap.
enum class SynthPattern { h_stripes, v_stripes, checker, diag_stripes, rings, dots };

const char* synth_pattern_name(SynthPattern kind);

Tensor render_synth_image(SynthPattern kind, int size, std::uint64_t seed, double noise = 0.08);

struct SynthSpec {
  std::vector<SynthPattern> classes;
  int per_class_train = 60;
  int per_class_val = 15;
  int per_class_test = 15;
  int image_size = 64;
  std::uint64_t seed = 0;
  double noise = 0.08;
};

/// In-memory dataset with split assignments baked in; item i of a class is
/// fully determined by (seed, class, i).
Dataset make_synth_dataset(const SynthSpec& spec);

/// Same generator, materialized as a class-per-directory PPM tree.
void write_synth_dataset(const std::filesystem::path& root, const SynthSpec& spec);

}  // namespace bnk
