#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crpl/image.hpp"

namespace crpl {

enum class TransformKind { Resize, CenterCrop, RandomHFlip, RandomVFlip, RandomRotation, ColorJitter };

struct Transform {
  TransformKind kind;
  int size = 0;          // Resize / CenterCrop target
  double p = 0.5;        // flip probability
  double max_deg = 180;  // rotation range
  JitterRanges jitter;
};

// Ordered transform list. In eval mode all Random*/ColorJitter steps are
// skipped, so eval output is a deterministic function of the image alone.
struct AugmentPipeline {
  std::vector<Transform> transforms;
  bool train_mode = true;
};

// Input geometries of the three ensemble members at working resolution R:
//   A      resize to R
//   B, C   resize to round(R * 470/384), then center-crop to R
// B and C differ only in the random draws they see (distinct member seeds).
enum class PipelinePreset { A, B, C };

PipelinePreset preset_from_string(const std::string& s);
std::string preset_to_string(PipelinePreset p);

// Pre-crop size preserving the 470/384 ratio for any working resolution.
int preset_resize_extent(int resolution);

struct AugmentOptions {
  bool random_flips = true;
  double flip_p = 0.5;
  bool random_rotation = true;
  double rotation_max_deg = 180.0;
  bool color_jitter = true;
  JitterRanges jitter;
};

AugmentPipeline make_pipeline(PipelinePreset preset, int resolution, bool train,
                              const AugmentOptions& opts = {});

// Spatial extent the pipeline emits (target of the last geometry step).
int pipeline_output_resolution(const AugmentPipeline& p);

// Applies the pipeline. Each transform draws from an independent stream
// derived from (seed, epoch, sample_id, transform_index), so the result is a
// pure function of its arguments and per-sample application can run in
// parallel without shared state.
Image apply_pipeline(const AugmentPipeline& p, const Image& img, std::uint64_t seed,
                     std::uint64_t epoch, std::uint64_t sample_id);

}  // namespace crpl
