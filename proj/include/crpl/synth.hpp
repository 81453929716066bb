#pragma once

#include <cstdint>
#include <filesystem>

#include "crpl/dataset.hpp"
#include "crpl/tensor.hpp"

namespace crpl {

struct SynthSpec {
  int n = 512;
  int resolution = 64;      // square images, >= 32
  double difficulty = 0.3;  // in [0,1]; lesion contrast scales with (1 - difficulty)
  std::uint64_t seed = 0;
};

// Renders one image: a shaded circular retina disc with dark vessel-like arcs
// on a black background; positive samples additionally carry 1-5 bright or
// dark lesion blobs. Pure function of its arguments.
Tensor<float> render_synthetic(int resolution, double difficulty, std::uint64_t seed,
                               std::int64_t sample_id, int label);

// Writes n PNGs plus manifest.csv into out_dir. Labels alternate 0,1,... so
// classes are balanced within one sample. Output bytes depend only on spec.
DatasetManifest gen_synthetic(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace crpl
