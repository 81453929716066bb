#include "crpl/synth.hpp"

#include <algorithm>
#include <cmath>

#include "crpl/image_io.hpp"
#include "crpl/rng.hpp"

namespace crpl {

namespace {

struct Rgb {
  double r, g, b;
};

inline void blend(float* r, float* g, float* b, std::int64_t i, const Rgb& target, double alpha) {
  r[i] = static_cast<float>((1.0 - alpha) * r[i] + alpha * target.r);
  g[i] = static_cast<float>((1.0 - alpha) * g[i] + alpha * target.g);
  b[i] = static_cast<float>((1.0 - alpha) * b[i] + alpha * target.b);
}

}  // namespace

Tensor<float> render_synthetic(int res, double difficulty, std::uint64_t seed,
                               std::int64_t sample_id, int label) {
  check_arg(res >= 32, "render_synthetic: resolution must be >= 32, got ", res);
  check_arg(difficulty >= 0.0 && difficulty <= 1.0, "render_synthetic: difficulty must be in [0,1]");
  check_arg(label == 0 || label == 1, "render_synthetic: label must be 0 or 1");

  RngStream rng = derive_stream(seed, 0, static_cast<std::uint64_t>(sample_id), kStreamSynth);
  const double cx = (res - 1) / 2.0;
  const double cy = (res - 1) / 2.0;
  const double disc_r = res * (0.42 + 0.04 * rng.uniform());
  const Rgb base{0.55 + 0.15 * rng.uniform(), 0.26 + 0.10 * rng.uniform(),
                 0.08 + 0.05 * rng.uniform()};

  Tensor<float> img({3, res, res});
  float* r = img.data();
  float* g = r + static_cast<std::int64_t>(res) * res;
  float* b = g + static_cast<std::int64_t>(res) * res;

  // disc with radial shading and a one-pixel anti-aliased rim
  for (std::int64_t y = 0; y < res; ++y) {
    for (std::int64_t x = 0; x < res; ++x) {
      const double d = std::hypot(x - cx, y - cy);
      if (d > disc_r + 0.5) continue;
      const double cover = std::min(1.0, std::max(0.0, disc_r - d + 0.5));
      const double shade = 1.0 - 0.15 * (d / disc_r) * (d / disc_r);
      const std::int64_t i = y * res + x;
      r[i] = static_cast<float>(base.r * shade * cover);
      g[i] = static_cast<float>(base.g * shade * cover);
      b[i] = static_cast<float>(base.b * shade * cover);
    }
  }

  // vessels: quadratic arcs from an off-center hub toward the rim, darkening
  // the underlying tissue by 35% at full coverage (kept clearly lighter than
  // lesion cores so low-difficulty sets stay separable)
  const double hub_ang = rng.uniform(0.0, 2.0 * M_PI);
  const double hub_x = cx + 0.55 * disc_r * std::cos(hub_ang);
  const double hub_y = cy + 0.55 * disc_r * std::sin(hub_ang);
  const int n_vessels = 4 + static_cast<int>(rng.bounded(4));
  std::vector<double> vessel(static_cast<std::size_t>(res) * res, 0.0);
  for (int v = 0; v < n_vessels; ++v) {
    const double ang = rng.uniform(0.0, 2.0 * M_PI);
    const double rad = disc_r * rng.uniform(0.85, 0.98);
    const double ex = cx + rad * std::cos(ang);
    const double ey = cy + rad * std::sin(ang);
    const double mx = (hub_x + ex) / 2.0 - (ey - hub_y) * rng.uniform(-0.3, 0.3);
    const double my = (hub_y + ey) / 2.0 + (ex - hub_x) * rng.uniform(-0.3, 0.3);
    const double thick = std::max(0.8, 0.012 * res) * rng.uniform(0.7, 1.3);
    const int steps = 4 * res;
    for (int si = 0; si <= steps; ++si) {
      const double t = static_cast<double>(si) / steps;
      const double px = (1 - t) * (1 - t) * hub_x + 2 * (1 - t) * t * mx + t * t * ex;
      const double py = (1 - t) * (1 - t) * hub_y + 2 * (1 - t) * t * my + t * t * ey;
      const std::int64_t x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(px - thick - 1));
      const std::int64_t x1 = std::min<std::int64_t>(res - 1, static_cast<std::int64_t>(px + thick + 1));
      const std::int64_t y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(py - thick - 1));
      const std::int64_t y1 = std::min<std::int64_t>(res - 1, static_cast<std::int64_t>(py + thick + 1));
      for (std::int64_t y = y0; y <= y1; ++y)
        for (std::int64_t x = x0; x <= x1; ++x) {
          const double d = std::hypot(x - px, y - py);
          const double c = std::min(1.0, std::max(0.0, thick - d + 0.5));
          auto& cell = vessel[static_cast<std::size_t>(y * res + x)];
          cell = std::max(cell, c);
        }
    }
  }
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(res) * res; ++i) {
    const double f = 1.0 - 0.35 * vessel[static_cast<std::size_t>(i)];
    r[i] = static_cast<float>(r[i] * f);
    g[i] = static_cast<float>(g[i] * f);
    b[i] = static_cast<float>(b[i] * f);
  }

  // lesions on positives only; contrast scales with (1 - difficulty)
  if (label == 1) {
    const int n_lesions = 1 + static_cast<int>(rng.bounded(5));
    const double contrast = 1.0 - difficulty;
    for (int l = 0; l < n_lesions; ++l) {
      const double ang = rng.uniform(0.0, 2.0 * M_PI);
      const double rad = rng.uniform(0.0, 0.75) * disc_r;
      const double px = cx + rad * std::cos(ang);
      const double py = cy + rad * std::sin(ang);
      const double lr = res * rng.uniform(0.04, 0.08);
      const bool bright = rng.uniform() < 0.5;
      const Rgb target = bright ? Rgb{1.0, 0.97, 0.80} : Rgb{0.08, 0.02, 0.02};
      const std::int64_t x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(px - lr - 1));
      const std::int64_t x1 = std::min<std::int64_t>(res - 1, static_cast<std::int64_t>(px + lr + 1));
      const std::int64_t y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(py - lr - 1));
      const std::int64_t y1 = std::min<std::int64_t>(res - 1, static_cast<std::int64_t>(py + lr + 1));
      for (std::int64_t y = y0; y <= y1; ++y)
        for (std::int64_t x = x0; x <= x1; ++x) {
          const double d = std::hypot(x - px, y - py);
          const double cov = std::max(0.0, 1.0 - (d / lr) * (d / lr));
          if (cov <= 0.0) continue;
          blend(r, g, b, y * res + x, target, contrast * cov);
        }
    }
  }

  for (std::int64_t i = 0; i < img.numel(); ++i)
    img[i] = std::min(1.0f, std::max(0.0f, img[i]));
  return img;
}

DatasetManifest gen_synthetic(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  check_arg(spec.n >= 1, "gen_synthetic: n must be >= 1, got ", spec.n);
  check_arg(spec.resolution >= 32, "gen_synthetic: resolution must be >= 32, got ", spec.resolution);
  check_arg(spec.difficulty >= 0.0 && spec.difficulty <= 1.0,
            "gen_synthetic: difficulty must be in [0,1], got ", spec.difficulty);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  check_runtime(!ec && std::filesystem::is_directory(out_dir), "cannot create output directory ",
                out_dir.string());

  DatasetManifest m;
  m.root = out_dir;
  for (int i = 0; i < spec.n; ++i) {
    const int label = i % 2;
    const Tensor<float> img =
        render_synthetic(spec.resolution, spec.difficulty, spec.seed, i, label);
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05d.png", i);
    save_png(out_dir / name, img);
    m.samples.push_back(Sample{name, label, i});
  }
  save_manifest(m, out_dir / "manifest.csv");
  return m;
}

}  // namespace crpl
