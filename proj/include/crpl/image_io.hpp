#pragma once

#include <filesystem>

#include "crpl/tensor.hpp"

namespace crpl {

// Decodes a PNG or JPEG file (detected by magic bytes) to a (3,H,W) float
// tensor, RGB, 8-bit channel value v mapped to v/255. Grayscale sources are
// replicated across channels; alpha is dropped.
Tensor<float> load_image(const std::filesystem::path& path);

// Writes an RGB float image as 8-bit PNG; values are clamped to [0,1] and
// quantised with round(v*255). Fixed encoder settings, so identical tensors
// produce identical files.
void save_png(const std::filesystem::path& path, const Tensor<float>& img);

}  // namespace crpl
