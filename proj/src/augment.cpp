#include "crpl/augment.hpp"

#include <cmath>

namespace crpl {

PipelinePreset preset_from_string(const std::string& s) {
  if (s == "A" || s == "a") return PipelinePreset::A;
  if (s == "B" || s == "b") return PipelinePreset::B;
  if (s == "C" || s == "c") return PipelinePreset::C;
  throw UsageError(cat("unknown pipeline preset '", s, "' (expected A, B or C)"));
}

std::string preset_to_string(PipelinePreset p) {
  switch (p) {
    case PipelinePreset::A: return "A";
    case PipelinePreset::B: return "B";
    default: return "C";
  }
}

int preset_resize_extent(int resolution) {
  return static_cast<int>(std::llround(resolution * 470.0 / 384.0));
}

AugmentPipeline make_pipeline(PipelinePreset preset, int resolution, bool train,
                              const AugmentOptions& opts) {
  check_arg(resolution >= 1, "make_pipeline: resolution must be >= 1, got ", resolution);
  AugmentPipeline p;
  p.train_mode = train;
  if (preset == PipelinePreset::A) {
    p.transforms.push_back({TransformKind::Resize, resolution});
  } else {
    p.transforms.push_back({TransformKind::Resize, preset_resize_extent(resolution)});
    p.transforms.push_back({TransformKind::CenterCrop, resolution});
  }
  if (train) {
    if (opts.random_flips) {
      Transform t{TransformKind::RandomHFlip};
      t.p = opts.flip_p;
      p.transforms.push_back(t);
      t.kind = TransformKind::RandomVFlip;
      p.transforms.push_back(t);
    }
    if (opts.random_rotation) {
      Transform t{TransformKind::RandomRotation};
      t.max_deg = opts.rotation_max_deg;
      p.transforms.push_back(t);
    }
    if (opts.color_jitter) {
      Transform t{TransformKind::ColorJitter};
      t.jitter = opts.jitter;
      p.transforms.push_back(t);
    }
  }
  return p;
}

int pipeline_output_resolution(const AugmentPipeline& p) {
  int r = 0;
  for (const Transform& t : p.transforms)
    if (t.kind == TransformKind::Resize || t.kind == TransformKind::CenterCrop) r = t.size;
  check_arg(r > 0, "pipeline has no geometry step");
  return r;
}

Image apply_pipeline(const AugmentPipeline& p, const Image& img, std::uint64_t seed,
                     std::uint64_t epoch, std::uint64_t sample_id) {
  Image out = img;
  for (std::size_t i = 0; i < p.transforms.size(); ++i) {
    const Transform& t = p.transforms[i];
    const bool random = t.kind != TransformKind::Resize && t.kind != TransformKind::CenterCrop;
    if (random && !p.train_mode) continue;
    RngStream rng = derive_stream(seed, epoch, sample_id, static_cast<std::uint64_t>(i));
    switch (t.kind) {
      case TransformKind::Resize: out = resize_bilinear(out, t.size, t.size); break;
      case TransformKind::CenterCrop: out = center_crop(out, t.size); break;
      case TransformKind::RandomHFlip: out = random_flip_h(out, t.p, rng); break;
      case TransformKind::RandomVFlip: out = random_flip_v(out, t.p, rng); break;
      case TransformKind::RandomRotation: out = random_rotation(out, t.max_deg, rng); break;
      case TransformKind::ColorJitter: out = color_jitter(out, t.jitter, rng); break;
    }
  }
  return out;
}

}  // namespace crpl
