#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "banknet/tensor.hpp"

namespace bnk {

struct LabeledImage {
  Tensor pixels;  // H x W x 3 in [0, 1]
  int label = 0;
  std::string source_path;
};

enum class Split { train, val, test };

const char* split_name(Split s);

struct ManifestEntry {
  std::string path;
  int label = 0;
  Split split = Split::train;
};

/// Class names (lexicographically sorted directory names), the order-stable
/// item list, and the per-item split assignment.
struct DatasetManifest {
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> items;
  int skipped = 0;  // undecodable files found during ingest

  int num_classes() const { return static_cast<int>(class_names.size()); }
  std::vector<int> indices_of(Split s) const;
  std::vector<int> class_counts() const;
  std::vector<int> class_counts(Split s) const;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<LabeledImage> items;  // parallel to manifest.items

  std::vector<int> indices_of(Split s) const { return manifest.indices_of(s); }
};

/// Ingests a class-per-directory image tree: decodes every readable image,
/// bilinear-resizes to target_h x target_w, and scales pixel values by
/// 1/255. Class indices follow sorted directory names. Undecodable files are
/// skipped with a warning to stderr and counted; a class directory with no
/// decodable image, or a root with no class directory, is a hard error.
Dataset load_dataset(const std::filesystem::path& root, int target_h = 224, int target_w = 224);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

/// Per class: shuffle by seed, then cut floor(val*n) and floor(test*n) items,
/// remainder to train. Deterministic for a given (manifest, ratios, seed).
DatasetManifest stratified_split(const DatasetManifest& manifest, const SplitRatios& ratios,
                                 std::uint64_t seed);

/// Audit table: one "path<TAB>class<TAB>split" line per item.
std::string manifest_table(const DatasetManifest& manifest);

}  // namespace bnk
