#pragma once

// Independent reference implementations the real code is checked against.
// These stay deliberately naive and share no code with the library paths
// they verify.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <type_traits>
#include <vector>

#include "crpl/rng.hpp"
#include "crpl/tensor.hpp"

namespace oracle {

// Plain 7-loop cross-correlation.
template <class S>
crpl::Tensor<S> naive_conv2d(const crpl::Tensor<S>& x, const crpl::Tensor<S>& w,
                             std::type_identity_t<const crpl::Tensor<S>*> bias, int stride,
                             int padding, int groups) {
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::int64_t cout = w.dim(0), cg = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const std::int64_t cout_g = cout / groups;
  const std::int64_t ho = (h + 2 * padding - kh) / stride + 1;
  const std::int64_t wo = (wd + 2 * padding - kw) / stride + 1;
  crpl::Tensor<S> out({n, cout, ho, wo});
  for (std::int64_t ni = 0; ni < n; ++ni)
    for (std::int64_t co = 0; co < cout; ++co) {
      const std::int64_t grp = co / cout_g;
      for (std::int64_t oh = 0; oh < ho; ++oh)
        for (std::int64_t ow = 0; ow < wo; ++ow) {
          double acc = bias ? static_cast<double>((*bias)[co]) : 0.0;
          for (std::int64_t ci = 0; ci < cg; ++ci)
            for (std::int64_t fy = 0; fy < kh; ++fy)
              for (std::int64_t fx = 0; fx < kw; ++fx) {
                const std::int64_t iy = oh * stride - padding + fy;
                const std::int64_t ix = ow * stride - padding + fx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += static_cast<double>(x.at4(ni, grp * cg + ci, iy, ix)) *
                       static_cast<double>(w.at4(co, ci, fy, fx));
              }
          out.at4(ni, co, oh, ow) = static_cast<S>(acc);
        }
    }
  return out;
}

// O(P*N) pairwise Mann-Whitney statistic with half-credit for ties.
inline double pairwise_auroc(const std::vector<int>& labels, const std::vector<double>& scores) {
  double wins = 0.0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

// Standalone HSV round trip (textbook formulation).
inline void ref_hue_shift(double r, double g, double b, double shift, double& ro, double& go,
                          double& bo) {
  const double maxc = std::max({r, g, b});
  const double minc = std::min({r, g, b});
  const double v = maxc;
  const double d = maxc - minc;
  const double s = maxc == 0.0 ? 0.0 : d / maxc;
  double h = 0.0;
  if (d > 0.0) {
    if (maxc == r)
      h = std::fmod((g - b) / d, 6.0);
    else if (maxc == g)
      h = (b - r) / d + 2.0;
    else
      h = (r - g) / d + 4.0;
    h /= 6.0;
    if (h < 0.0) h += 1.0;
  }
  h += shift;
  h -= std::floor(h);
  const double hh = h * 6.0;
  const int i = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (i) {
    case 0: ro = v; go = t; bo = p; break;
    case 1: ro = q; go = v; bo = p; break;
    case 2: ro = p; go = v; bo = t; break;
    case 3: ro = p; go = q; bo = v; break;
    case 4: ro = t; go = p; bo = v; break;
    default: ro = v; go = p; bo = q; break;
  }
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

template <class S>
void fill_uniform(crpl::Tensor<S>& t, crpl::RngStream& rng, double lo = -1.0, double hi = 1.0) {
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<S>(rng.uniform(lo, hi));
}

template <class S>
crpl::Tensor<S> random_tensor(std::vector<std::int64_t> shape, crpl::RngStream& rng,
                              double lo = -1.0, double hi = 1.0) {
  crpl::Tensor<S> t(std::move(shape));
  fill_uniform(t, rng, lo, hi);
  return t;
}

}  // namespace oracle
