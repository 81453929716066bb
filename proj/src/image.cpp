#include "crpl/image.hpp"

#include <algorithm>
#include <cmath>

namespace crpl {

namespace {

void check_chw(const Image& img, const char* what) {
  check_arg(img.rank() == 3, what, ": image must be (C,H,W), got rank ", img.rank());
}

// Bilinear sample with zero fill; neighbours with zero weight are skipped so
// exact grid hits reproduce the pixel bit for bit.
double sample_bilinear(const float* plane, std::int64_t h, std::int64_t w, double sy, double sx) {
  const double fy0 = std::floor(sy);
  const double fx0 = std::floor(sx);
  const std::int64_t y0 = static_cast<std::int64_t>(fy0);
  const std::int64_t x0 = static_cast<std::int64_t>(fx0);
  const double fy = sy - fy0;
  const double fx = sx - fx0;
  double acc = 0.0;
  const double w00 = (1.0 - fy) * (1.0 - fx);
  const double w01 = (1.0 - fy) * fx;
  const double w10 = fy * (1.0 - fx);
  const double w11 = fy * fx;
  auto tap = [&](std::int64_t y, std::int64_t x, double wt) {
    if (wt == 0.0) return;
    if (y < 0 || y >= h || x < 0 || x >= w) return;  // fill 0
    acc += wt * static_cast<double>(plane[y * w + x]);
  };
  tap(y0, x0, w00);
  tap(y0, x0 + 1, w01);
  tap(y0 + 1, x0, w10);
  tap(y0 + 1, x0 + 1, w11);
  return acc;
}

// sin/cos of an angle in degrees with exact values at multiples of 90, so
// that quarter-turn rotations land on the integer grid.
void sincos_deg(double deg, double& s, double& c) {
  double r = std::fmod(deg, 360.0);
  const double k = std::round(r / 90.0);
  const double rem = (r - 90.0 * k) * M_PI / 180.0;
  const double sr = std::sin(rem), cr = std::cos(rem);
  const int q = (static_cast<int>(k) % 4 + 4) % 4;
  switch (q) {
    case 0: c = cr; s = sr; break;
    case 1: c = -sr; s = cr; break;
    case 2: c = -cr; s = -sr; break;
    default: c = sr; s = -cr; break;
  }
}

inline float clamp01(double v) {
  return static_cast<float>(std::min(1.0, std::max(0.0, v)));
}

}  // namespace

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  check_chw(img, "resize_bilinear");
  check_arg(out_h >= 1 && out_w >= 1, "resize_bilinear: target must be >= 1, got ", out_h, "x",
            out_w);
  const std::int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  Image out({c, out_h, out_w});
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const float* src = img.data() + ch * h * w;
    float* dst = out.data() + ch * static_cast<std::int64_t>(out_h) * out_w;
    for (std::int64_t y = 0; y < out_h; ++y) {
      double srcy = (static_cast<double>(y) + 0.5) * sy - 0.5;
      srcy = std::min(static_cast<double>(h - 1), std::max(0.0, srcy));
      for (std::int64_t x = 0; x < out_w; ++x) {
        double srcx = (static_cast<double>(x) + 0.5) * sx - 0.5;
        srcx = std::min(static_cast<double>(w - 1), std::max(0.0, srcx));
        dst[y * out_w + x] = static_cast<float>(sample_bilinear(src, h, w, srcy, srcx));
      }
    }
  }
  return out;
}

Image center_crop(const Image& img, int size) {
  check_chw(img, "center_crop");
  const std::int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  check_arg(size >= 1 && size <= h && size <= w, "center_crop: size ", size,
            " out of range for image ", h, "x", w);
  const std::int64_t oy = (h - size) / 2;
  const std::int64_t ox = (w - size) / 2;
  Image out({c, size, size});
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < size; ++y) {
      const float* src = img.data() + (ch * h + oy + y) * w + ox;
      float* dst = out.data() + (ch * static_cast<std::int64_t>(size) + y) * size;
      std::copy(src, src + size, dst);
    }
  return out;
}

Image flip_h(const Image& img) {
  check_chw(img, "flip_h");
  const std::int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  Image out(img.shape());
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < h; ++y) {
      const float* src = img.data() + (ch * h + y) * w;
      float* dst = out.data() + (ch * h + y) * w;
      for (std::int64_t x = 0; x < w; ++x) dst[x] = src[w - 1 - x];
    }
  return out;
}

Image flip_v(const Image& img) {
  check_chw(img, "flip_v");
  const std::int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  Image out(img.shape());
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < h; ++y) {
      const float* src = img.data() + (ch * h + (h - 1 - y)) * w;
      float* dst = out.data() + (ch * h + y) * w;
      std::copy(src, src + w, dst);
    }
  return out;
}

Image rotate(const Image& img, double deg) {
  check_chw(img, "rotate");
  const std::int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  double s, cs;
  sincos_deg(deg, s, cs);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  Image out(img.shape());
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const float* src = img.data() + ch * h * w;
    float* dst = out.data() + ch * h * w;
    for (std::int64_t y = 0; y < h; ++y) {
      const double dy = static_cast<double>(y) - cy;
      for (std::int64_t x = 0; x < w; ++x) {
        const double dx = static_cast<double>(x) - cx;
        // inverse map: rotate the destination point by -deg
        const double sx = cs * dx + s * dy + cx;
        const double sy = -s * dx + cs * dy + cy;
        dst[y * w + x] = static_cast<float>(sample_bilinear(src, h, w, sy, sx));
      }
    }
  }
  return out;
}

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

Image adjust_brightness(const Image& img, double factor) {
  check_chw(img, "adjust_brightness");
  check_arg(factor > 0.0, "adjust_brightness: factor must be > 0, got ", factor);
  if (factor == 1.0) return img;
  Image out(img.shape());
  for (std::int64_t i = 0; i < img.numel(); ++i)
    out[i] = clamp01(static_cast<double>(img[i]) * factor);
  return out;
}

Image adjust_contrast(const Image& img, double factor) {
  check_chw(img, "adjust_contrast");
  check_arg(factor > 0.0, "adjust_contrast: factor must be > 0, got ", factor);
  check_arg(img.dim(0) == 3, "adjust_contrast: expects RGB");
  if (factor == 1.0) return img;
  const std::int64_t hw = img.dim(1) * img.dim(2);
  const float* r = img.data();
  const float* g = r + hw;
  const float* b = g + hw;
  double mean = 0.0;
  for (std::int64_t i = 0; i < hw; ++i) mean += luma(r[i], g[i], b[i]);
  mean /= static_cast<double>(hw);
  Image out(img.shape());
  for (std::int64_t i = 0; i < img.numel(); ++i)
    out[i] = clamp01(mean + factor * (static_cast<double>(img[i]) - mean));
  return out;
}

Image adjust_saturation(const Image& img, double factor) {
  check_chw(img, "adjust_saturation");
  check_arg(factor > 0.0, "adjust_saturation: factor must be > 0, got ", factor);
  check_arg(img.dim(0) == 3, "adjust_saturation: expects RGB");
  if (factor == 1.0) return img;
  const std::int64_t hw = img.dim(1) * img.dim(2);
  Image out(img.shape());
  const float* r = img.data();
  const float* g = r + hw;
  const float* b = g + hw;
  float* ro = out.data();
  float* go = ro + hw;
  float* bo = go + hw;
  for (std::int64_t i = 0; i < hw; ++i) {
    const double gray = luma(r[i], g[i], b[i]);
    ro[i] = clamp01(gray + factor * (r[i] - gray));
    go[i] = clamp01(gray + factor * (g[i] - gray));
    bo[i] = clamp01(gray + factor * (b[i] - gray));
  }
  return out;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double maxc = std::max(r, std::max(g, b));
  const double minc = std::min(r, std::min(g, b));
  v = maxc;
  const double d = maxc - minc;
  s = maxc == 0.0 ? 0.0 : d / maxc;
  if (d == 0.0) {
    h = 0.0;
    return;
  }
  double h6;
  if (maxc == r)
    h6 = (g - b) / d;
  else if (maxc == g)
    h6 = (b - r) / d + 2.0;
  else
    h6 = (r - g) / d + 4.0;
  h6 /= 6.0;
  if (h6 < 0.0) h6 += 1.0;
  h = h6;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double hh = h * 6.0;
  const int i = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch ((i + 6) % 6) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

Image adjust_hue(const Image& img, double shift) {
  check_chw(img, "adjust_hue");
  check_arg(shift >= -0.5 && shift <= 0.5, "adjust_hue: shift must be in [-0.5,0.5], got ", shift);
  check_arg(img.dim(0) == 3, "adjust_hue: expects RGB");
  if (shift == 0.0) return img;
  const std::int64_t hw = img.dim(1) * img.dim(2);
  Image out(img.shape());
  const float* r = img.data();
  const float* g = r + hw;
  const float* b = g + hw;
  float* ro = out.data();
  float* go = ro + hw;
  float* bo = go + hw;
  for (std::int64_t i = 0; i < hw; ++i) {
    double h, s, v;
    rgb_to_hsv(r[i], g[i], b[i], h, s, v);
    h += shift;
    h -= std::floor(h);  // wrap to [0,1)
    double rr, gg, bb;
    hsv_to_rgb(h, s, v, rr, gg, bb);
    ro[i] = clamp01(rr);
    go[i] = clamp01(gg);
    bo[i] = clamp01(bb);
  }
  return out;
}

Image random_flip_h(const Image& img, double p, RngStream& rng) {
  check_arg(p >= 0.0 && p <= 1.0, "random_flip_h: p must be in [0,1], got ", p);
  return rng.uniform() < p ? flip_h(img) : img;
}

Image random_flip_v(const Image& img, double p, RngStream& rng) {
  check_arg(p >= 0.0 && p <= 1.0, "random_flip_v: p must be in [0,1], got ", p);
  return rng.uniform() < p ? flip_v(img) : img;
}

Image random_rotation(const Image& img, double max_deg, RngStream& rng) {
  check_arg(max_deg >= 0.0 && max_deg <= 180.0, "random_rotation: max_deg must be in [0,180], got ",
            max_deg);
  const double deg = rng.uniform(-max_deg, max_deg);
  return rotate(img, deg);
}

Image color_jitter(const Image& img, const JitterRanges& r, RngStream& rng) {
  check_arg(r.brightness_lo > 0 && r.contrast_lo > 0 && r.saturation_lo > 0 &&
                r.brightness_hi >= r.brightness_lo && r.contrast_hi >= r.contrast_lo &&
                r.saturation_hi >= r.saturation_lo,
            "color_jitter: factor ranges must be positive and ordered");
  check_arg(r.hue_lo >= -0.5 && r.hue_hi <= 0.5 && r.hue_hi >= r.hue_lo,
            "color_jitter: hue range must be within [-0.5,0.5]");
  const double fb = rng.uniform(r.brightness_lo, r.brightness_hi);
  const double fc = rng.uniform(r.contrast_lo, r.contrast_hi);
  const double fs = rng.uniform(r.saturation_lo, r.saturation_hi);
  const double fh = rng.uniform(r.hue_lo, r.hue_hi);
  Image out = adjust_brightness(img, fb);
  out = adjust_contrast(out, fc);
  out = adjust_saturation(out, fs);
  out = adjust_hue(out, fh);
  return out;
}

}  // namespace crpl
