#include "banknet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "banknet/image_io.hpp"
#include "banknet/rng.hpp"

namespace bnk {

const char* synth_pattern_name(SynthPattern kind) {
  switch (kind) {
    case SynthPattern::h_stripes: return "h_stripes";
    case SynthPattern::v_stripes: return "v_stripes";
    case SynthPattern::checker: return "checker";
    case SynthPattern::diag_stripes: return "diag_stripes";
    case SynthPattern::rings: return "rings";
    case SynthPattern::dots: return "dots";
  }
  return "?";
}

Tensor render_synth_image(SynthPattern kind, int size, std::uint64_t seed, double noise) {
  if (size < 4) throw Error("synthetic images need size >= 4");
  SplitMix64 rng(seed);
  const double period = rng.uniform(8.0, 16.0);
  const double phase = rng.uniform(0.0, period);
  const double cx = size / 2.0 + rng.uniform(-size / 8.0, size / 8.0);
  const double cy = size / 2.0 + rng.uniform(-size / 8.0, size / 8.0);
  double color_a[3], color_b[3];
  for (int c = 0; c < 3; ++c) {
    color_a[c] = rng.uniform(0.6, 0.95);
    color_b[c] = rng.uniform(0.05, 0.4);
  }

  auto banded = [&](double coord) {
    const double m = std::fmod(std::fmod(coord + phase, period) + period, period);
    return m < period / 2.0;
  };

  Tensor img({size, size, 3});
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      bool a = false;
      switch (kind) {
        case SynthPattern::h_stripes:
          a = banded(y);
          break;
        case SynthPattern::v_stripes:
          a = banded(x);
          break;
        case SynthPattern::checker:
          a = banded(x) != banded(y);
          break;
        case SynthPattern::diag_stripes:
          a = banded((x + y) * 0.7071067811865476);
          break;
        case SynthPattern::rings: {
          const double r = std::hypot(x - cx, y - cy);
          a = banded(r);
          break;
        }
        case SynthPattern::dots: {
          const double gx = std::fmod(std::fmod(x - cx, period) + period, period) - period / 2.0;
          const double gy = std::fmod(std::fmod(y - cy, period) + period, period) - period / 2.0;
          a = std::hypot(gx, gy) < period / 3.0;
          break;
        }
      }
      const double* base = a ? color_a : color_b;
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) = std::clamp(base[c] + rng.uniform(-noise, noise), 0.0, 1.0);
      }
    }
  }
  return img;
}

Dataset make_synth_dataset(const SynthSpec& spec) {
  if (spec.classes.empty()) throw Error("synthetic dataset needs at least one class");
  Dataset data;
  for (const SynthPattern kind : spec.classes) {
    data.manifest.class_names.push_back(synth_pattern_name(kind));
  }
  const int per_class = spec.per_class_train + spec.per_class_val + spec.per_class_test;
  for (std::size_t label = 0; label < spec.classes.size(); ++label) {
    for (int i = 0; i < per_class; ++i) {
      Split split = Split::train;
      if (i >= spec.per_class_train + spec.per_class_val) {
        split = Split::test;
      } else if (i >= spec.per_class_train) {
        split = Split::val;
      }
      const std::uint64_t item_seed = derive_seed(spec.seed, label, static_cast<std::uint64_t>(i));
      Tensor img = render_synth_image(spec.classes[label], spec.image_size, item_seed, spec.noise);
      const std::string path = std::string("synth://") +
                               data.manifest.class_names[label] + "/" + std::to_string(i);
      data.manifest.items.push_back({path, static_cast<int>(label), split});
      data.items.push_back({std::move(img), static_cast<int>(label), path});
    }
  }
  return data;
}

void write_synth_dataset(const std::filesystem::path& root, const SynthSpec& spec) {
  namespace fs = std::filesystem;
  const Dataset data = make_synth_dataset(spec);
  char name[32];
  std::vector<int> counter(data.manifest.class_names.size(), 0);
  for (const LabeledImage& item : data.items) {
    const fs::path dir = root / data.manifest.class_names[static_cast<std::size_t>(item.label)];
    fs::create_directories(dir);
    std::snprintf(name, sizeof(name), "%04d.ppm", counter[static_cast<std::size_t>(item.label)]++);
    write_ppm(dir / name, encode_from_unit(item.pixels));
  }
}

}  // namespace bnk
