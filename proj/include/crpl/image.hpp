#pragma once

#include "crpl/rng.hpp"
#include "crpl/tensor.hpp"

// Deterministic image transforms on (C,H,W) float tensors with values in
// [0,1]. Geometry uses the half-pixel-center convention throughout:
//   src = (dst + 0.5) * (src_extent / dst_extent) - 0.5, clamped to bounds.
// That convention is the portability-critical detail of this module; a
// different resize convention would shift every downstream result.

namespace crpl {

using Image = Tensor<float>;

Image resize_bilinear(const Image& img, int out_h, int out_w);

// Top-left offset (floor((H-size)/2), floor((W-size)/2)).
Image center_crop(const Image& img, int size);

Image flip_h(const Image& img);  // mirrors the W axis
Image flip_v(const Image& img);  // mirrors the H axis

// Rotation by `deg` (counter-clockwise) about the image center
// ((W-1)/2, (H-1)/2), inverse-mapped bilinear sampling, out-of-bounds fill
// 0.0. Multiples of 90 degrees map the grid exactly.
Image rotate(const Image& img, double deg);

double luma(double r, double g, double b);  // 0.299 R + 0.587 G + 0.114 B

// Photometric adjustments; each clamps its output to [0,1]. A factor of
// exactly 1 (or hue shift 0) returns the input bit for bit.
Image adjust_brightness(const Image& img, double factor);
Image adjust_contrast(const Image& img, double factor);  // blends toward mean luma
Image adjust_saturation(const Image& img, double factor);
Image adjust_hue(const Image& img, double shift);  // shift in [-0.5, 0.5], hue wraps mod 1

struct JitterRanges {
  double brightness_lo = 0.8, brightness_hi = 1.2;
  double contrast_lo = 0.8, contrast_hi = 1.2;
  double saturation_lo = 0.8, saturation_hi = 1.2;
  double hue_lo = -0.05, hue_hi = 0.05;
};

// Random transforms consume draws from `rng` in a fixed order.
Image random_flip_h(const Image& img, double p, RngStream& rng);
Image random_flip_v(const Image& img, double p, RngStream& rng);
Image random_rotation(const Image& img, double max_deg, RngStream& rng);

// Draws factors (brightness, contrast, saturation, hue) in that order, then
// applies the stages in the same fixed order.
Image color_jitter(const Image& img, const JitterRanges& r, RngStream& rng);

// RGB <-> HSV on [0,1] components (h in [0,1)).
void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v);
void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b);

}  // namespace crpl
