#include "banknet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "banknet/image_io.hpp"
#include "banknet/rng.hpp"

namespace bnk {

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

std::vector<int> DatasetManifest::indices_of(Split s) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].split == s) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> DatasetManifest::class_counts() const {
  std::vector<int> counts(class_names.size(), 0);
  for (const ManifestEntry& e : items) counts[static_cast<std::size_t>(e.label)]++;
  return counts;
}

std::vector<int> DatasetManifest::class_counts(Split s) const {
  std::vector<int> counts(class_names.size(), 0);
  for (const ManifestEntry& e : items) {
    if (e.split == s) counts[static_cast<std::size_t>(e.label)]++;
  }
  return counts;
}

Dataset load_dataset(const std::filesystem::path& root, int target_h, int target_w) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) {
    throw DataError("dataset root " + root.string() + " is not a directory");
  }
  std::vector<std::string> class_names;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_names.push_back(entry.path().filename().string());
  }
  std::sort(class_names.begin(), class_names.end());
  if (class_names.empty()) {
    throw DataError("dataset root " + root.string() + " contains no class directories");
  }

  Dataset data;
  data.manifest.class_names = class_names;
  for (std::size_t label = 0; label < class_names.size(); ++label) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(root / class_names[label])) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    int decoded = 0;
    for (const fs::path& file : files) {
      Tensor pixels;
      try {
        pixels = resize_bilinear(decode_to_unit(read_ppm(file)), target_h, target_w);
      } catch (const DataError& e) {
        std::cerr << "warning: skipping " << file.string() << ": " << e.what() << "\n";
        data.manifest.skipped++;
        continue;
      }
      ManifestEntry entry;
      entry.path = file.string();
      entry.label = static_cast<int>(label);
      data.manifest.items.push_back(entry);
      data.items.push_back({std::move(pixels), static_cast<int>(label), file.string()});
      decoded++;
    }
    if (decoded == 0) {
      throw DataError("class directory " + (root / class_names[label]).string() +
                      " has no decodable image");
    }
  }
  return data;
}

DatasetManifest stratified_split(const DatasetManifest& manifest, const SplitRatios& ratios,
                                 std::uint64_t seed) {
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw DataError("split ratios must be non-negative and sum to 1");
  }
  DatasetManifest out = manifest;
  for (int label = 0; label < manifest.num_classes(); ++label) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < manifest.items.size(); ++i) {
      if (manifest.items[i].label == label) idx.push_back(static_cast<int>(i));
    }
    SplitMix64 rng(derive_seed(seed, 0x5b17, static_cast<std::uint64_t>(label)));
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[rng.next_below(i)]);
    }
    const int n = static_cast<int>(idx.size());
    const int n_val = static_cast<int>(std::floor(ratios.val * n));
    const int n_test = static_cast<int>(std::floor(ratios.test * n));
    for (int i = 0; i < n; ++i) {
      Split s = Split::train;
      if (i < n_val) {
        s = Split::val;
      } else if (i < n_val + n_test) {
        s = Split::test;
      }
      out.items[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])].split = s;
    }
  }
  return out;
}

std::string manifest_table(const DatasetManifest& manifest) {
  std::string out = "path\tclass\tsplit\n";
  for (const ManifestEntry& e : manifest.items) {
    out += e.path;
    out += '\t';
    out += manifest.class_names[static_cast<std::size_t>(e.label)];
    out += '\t';
    out += split_name(e.split);
    out += '\n';
  }
  return out;
}

}  // namespace bnk
