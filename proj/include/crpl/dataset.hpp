#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "crpl/common.hpp"

namespace crpl {

struct Sample {
  std::filesystem::path image_path;  // resolved against the manifest root
  int label = 0;                     // binary, 0 or 1
  std::int64_t id = 0;               // stable index in manifest order
};

struct DatasetManifest {
  std::vector<Sample> samples;
  std::filesystem::path root;

  std::filesystem::path resolve(const Sample& s) const {
    return s.image_path.is_absolute() ? s.image_path : root / s.image_path;
  }
};

// Manifest format: two-column CSV `path,label` with header, UTF-8, LF.
// Paths are relative to the manifest's directory unless absolute.
DatasetManifest load_manifest(const std::filesystem::path& csv);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& csv);

struct SplitSpec {
  double train_fraction = 0.5;  // in (0,1)
  std::uint64_t seed = 0;
  bool stratified = true;
};

// Deterministic disjoint/exhaustive split. The stratified variant shuffles
// each class with its own stream derived from (seed, class) and assigns
// round(fraction * n_class) samples to the train side, preserving the class
// ratio within one sample per class. Sample ids are retained.
std::pair<DatasetManifest, DatasetManifest> split(const DatasetManifest& m, const SplitSpec& spec);

}  // namespace crpl
