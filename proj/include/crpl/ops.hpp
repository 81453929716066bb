#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <type_traits>
#include <vector>

#include "crpl/tensor.hpp"

// Forward/backward kernels for the model family. All reductions accumulate in
// double with a fixed traversal order, so identical inputs give bit-identical
// outputs across runs regardless of optimisation level.

namespace crpl {

template <class S>
using MatrixR = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixRd = MatrixR<double>;

struct ConvGeom {
  std::int64_t n, c, h, w;        // input
  std::int64_t cout, cg, kh, kw;  // weight (cg = c / groups)
  std::int64_t ho, wo;
  std::int64_t cout_g;  // cout / groups
  int stride, padding, groups;
};

template <class S>
inline ConvGeom conv_geometry(const Tensor<S>& x, const Tensor<S>& weight, int stride, int padding,
                              int groups) {
  check_arg(x.rank() == 4, "conv2d: input must be NCHW, got rank ", x.rank());
  check_arg(weight.rank() == 4, "conv2d: weight must be (Cout,Cin/groups,Kh,Kw), got rank ",
            weight.rank());
  check_arg(stride >= 1, "conv2d: stride must be >= 1, got ", stride);
  check_arg(padding >= 0, "conv2d: padding must be >= 0, got ", padding);
  check_arg(groups >= 1, "conv2d: groups must be >= 1, got ", groups);
  ConvGeom g;
  g.n = x.dim(0);
  g.c = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = weight.dim(0);
  g.cg = weight.dim(1);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = stride;
  g.padding = padding;
  g.groups = groups;
  check_arg(g.c % groups == 0, "conv2d: input channels ", g.c, " not divisible by groups ", groups);
  check_arg(g.cout % groups == 0, "conv2d: output channels ", g.cout, " not divisible by groups ",
            groups);
  check_arg(g.cg == g.c / groups, "conv2d: weight expects ", g.cg, " channels per group, input has ",
            g.c / groups);
  g.cout_g = g.cout / groups;
  g.ho = (g.h + 2 * padding - g.kh) / stride + 1;
  g.wo = (g.w + 2 * padding - g.kw) / stride + 1;
  check_arg(g.h + 2 * padding >= g.kh && g.w + 2 * padding >= g.kw,
            "conv2d: kernel ", g.kh, "x", g.kw, " larger than padded input ", g.h + 2 * padding, "x",
            g.w + 2 * padding);
  return g;
}

namespace detail {

// Patch matrix in double for one (image, group): rows are (ci,kh,kw), columns
// are output positions.
template <class S>
void im2col_group(const Tensor<S>& x, const ConvGeom& g, std::int64_t n, std::int64_t grp,
                  MatrixRd& col) {
  for (std::int64_t ci = 0; ci < g.cg; ++ci) {
    const S* plane = x.data() + ((n * g.c + grp * g.cg + ci) * g.h) * g.w;
    for (std::int64_t kh = 0; kh < g.kh; ++kh) {
      for (std::int64_t kw = 0; kw < g.kw; ++kw) {
        double* dst = col.data() + ((ci * g.kh + kh) * g.kw + kw) * (g.ho * g.wo);
        for (std::int64_t oh = 0; oh < g.ho; ++oh) {
          const std::int64_t ih = oh * g.stride - g.padding + kh;
          double* row = dst + oh * g.wo;
          if (ih < 0 || ih >= g.h) {
            for (std::int64_t ow = 0; ow < g.wo; ++ow) row[ow] = 0.0;
            continue;
          }
          const S* src = plane + ih * g.w;
          for (std::int64_t ow = 0; ow < g.wo; ++ow) {
            const std::int64_t iw = ow * g.stride - g.padding + kw;
            row[ow] = (iw < 0 || iw >= g.w) ? 0.0 : static_cast<double>(src[iw]);
          }
        }
      }
    }
  }
}

template <class S>
std::vector<MatrixRd> weight_groups(const Tensor<S>& weight, const ConvGeom& g) {
  std::vector<MatrixRd> wd(static_cast<std::size_t>(g.groups));
  const std::int64_t k = g.cg * g.kh * g.kw;
  for (int grp = 0; grp < g.groups; ++grp) {
    Eigen::Map<const MatrixR<S>> m(weight.data() + grp * g.cout_g * k, g.cout_g, k);
    wd[static_cast<std::size_t>(grp)] = m.template cast<double>();
  }
  return wd;
}

}  // namespace detail

// 2-D cross-correlation (no kernel flip), NCHW. Output extents follow
// floor((H + 2p - K)/stride) + 1.
template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& weight,
                 std::type_identity_t<const Tensor<S>*> bias, int stride, int padding,
                 int groups) {
  const ConvGeom g = conv_geometry(x, weight, stride, padding, groups);
  if (bias) {
    check_arg(bias->rank() == 1 && bias->dim(0) == g.cout, "conv2d: bias length ",
              bias ? bias->numel() : 0, " != output channels ", g.cout);
  }
  Tensor<S> out({g.n, g.cout, g.ho, g.wo});

  if (g.cg == 1) {
    // One input channel per group (covers depthwise): direct accumulation.
    const std::int64_t m = g.cout_g;
    for (std::int64_t n = 0; n < g.n; ++n) {
      for (std::int64_t c = 0; c < g.c; ++c) {
        const S* plane = x.data() + ((n * g.c + c) * g.h) * g.w;
        for (std::int64_t j = 0; j < m; ++j) {
          const std::int64_t co = c * m + j;
          const S* ker = weight.data() + co * g.kh * g.kw;
          const double b = bias ? static_cast<double>((*bias)[co]) : 0.0;
          S* oplane = out.data() + ((n * g.cout + co) * g.ho) * g.wo;
          for (std::int64_t oh = 0; oh < g.ho; ++oh) {
            for (std::int64_t ow = 0; ow < g.wo; ++ow) {
              double acc = b;
              for (std::int64_t kh = 0; kh < g.kh; ++kh) {
                const std::int64_t ih = oh * g.stride - g.padding + kh;
                if (ih < 0 || ih >= g.h) continue;
                const std::int64_t iw0 = ow * g.stride - g.padding;
                for (std::int64_t kw = 0; kw < g.kw; ++kw) {
                  const std::int64_t iw = iw0 + kw;
                  if (iw < 0 || iw >= g.w) continue;
                  acc += static_cast<double>(plane[ih * g.w + iw]) *
                         static_cast<double>(ker[kh * g.kw + kw]);
                }
              }
              oplane[oh * g.wo + ow] = static_cast<S>(acc);
            }
          }
        }
      }
    }
    assert_all_finite(out, "conv2d");
    return out;
  }

  const auto wd = detail::weight_groups(weight, g);
  const std::int64_t k = g.cg * g.kh * g.kw;
  MatrixRd col(k, g.ho * g.wo);
  MatrixRd om(g.cout_g, g.ho * g.wo);
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (int grp = 0; grp < g.groups; ++grp) {
      detail::im2col_group(x, g, n, grp, col);
      om.noalias() = wd[static_cast<std::size_t>(grp)] * col;
      for (std::int64_t j = 0; j < g.cout_g; ++j) {
        const std::int64_t co = grp * g.cout_g + j;
        const double b = bias ? static_cast<double>((*bias)[co]) : 0.0;
        S* oplane = out.data() + ((n * g.cout + co) * g.ho) * g.wo;
        const double* src = om.data() + j * (g.ho * g.wo);
        for (std::int64_t i = 0; i < g.ho * g.wo; ++i) oplane[i] = static_cast<S>(src[i] + b);
      }
    }
  }
  assert_all_finite(out, "conv2d");
  return out;
}

// Depthwise convolution: channel multiplier 1, groups == Cin == Cout.
// Defined as conv2d with groups = Cin, so the two agree bit for bit.
template <class S>
Tensor<S> depthwise_conv2d(const Tensor<S>& x, const Tensor<S>& weight, int stride, int padding) {
  check_arg(x.rank() == 4 && weight.rank() == 4, "depthwise_conv2d: rank mismatch");
  check_arg(weight.dim(1) == 1, "depthwise_conv2d: weight must be (C,1,Kh,Kw)");
  check_arg(weight.dim(0) == x.dim(1), "depthwise_conv2d: channel count mismatch, input ",
            x.dim(1), " vs weight ", weight.dim(0));
  return conv2d(x, weight, nullptr, stride, padding, static_cast<int>(x.dim(1)));
}

template <class S>
struct Conv2dGrads {
  Tensor<S> input, weight, bias;  // bias empty when the op had none
};

template <class S>
Conv2dGrads<S> conv2d_backward(const Tensor<S>& x, const Tensor<S>& weight, bool has_bias,
                               int stride, int padding, int groups, const Tensor<S>& grad_out) {
  const ConvGeom g = conv_geometry(x, weight, stride, padding, groups);
  check_arg(grad_out.rank() == 4 && grad_out.dim(0) == g.n && grad_out.dim(1) == g.cout &&
                grad_out.dim(2) == g.ho && grad_out.dim(3) == g.wo,
            "conv2d_backward: grad shape ", shape_str(grad_out), " does not match output");
  Conv2dGrads<S> grads;
  grads.input = Tensor<S>(x.shape());
  grads.weight = Tensor<S>(weight.shape());
  if (has_bias) {
    grads.bias = Tensor<S>({g.cout});
    for (std::int64_t co = 0; co < g.cout; ++co) {
      double acc = 0.0;
      for (std::int64_t n = 0; n < g.n; ++n) {
        const S* gp = grad_out.data() + ((n * g.cout + co) * g.ho) * g.wo;
        for (std::int64_t i = 0; i < g.ho * g.wo; ++i) acc += static_cast<double>(gp[i]);
      }
      grads.bias[co] = static_cast<S>(acc);
    }
  }

  if (g.cg == 1) {
    const std::int64_t m = g.cout_g;
    // weight gradient
    for (std::int64_t c = 0; c < g.c; ++c) {
      for (std::int64_t j = 0; j < m; ++j) {
        const std::int64_t co = c * m + j;
        S* gker = grads.weight.data() + co * g.kh * g.kw;
        for (std::int64_t kh = 0; kh < g.kh; ++kh) {
          for (std::int64_t kw = 0; kw < g.kw; ++kw) {
            double acc = 0.0;
            for (std::int64_t n = 0; n < g.n; ++n) {
              const S* plane = x.data() + ((n * g.c + c) * g.h) * g.w;
              const S* gp = grad_out.data() + ((n * g.cout + co) * g.ho) * g.wo;
              for (std::int64_t oh = 0; oh < g.ho; ++oh) {
                const std::int64_t ih = oh * g.stride - g.padding + kh;
                if (ih < 0 || ih >= g.h) continue;
                for (std::int64_t ow = 0; ow < g.wo; ++ow) {
                  const std::int64_t iw = ow * g.stride - g.padding + kw;
                  if (iw < 0 || iw >= g.w) continue;
                  acc += static_cast<double>(gp[oh * g.wo + ow]) *
                         static_cast<double>(plane[ih * g.w + iw]);
                }
              }
            }
            gker[kh * g.kw + kw] = static_cast<S>(acc);
          }
        }
      }
    }
    // input gradient
    std::vector<double> buf(static_cast<std::size_t>(g.h * g.w));
    for (std::int64_t n = 0; n < g.n; ++n) {
      for (std::int64_t c = 0; c < g.c; ++c) {
        std::fill(buf.begin(), buf.end(), 0.0);
        for (std::int64_t j = 0; j < m; ++j) {
          const std::int64_t co = c * m + j;
          const S* ker = weight.data() + co * g.kh * g.kw;
          const S* gp = grad_out.data() + ((n * g.cout + co) * g.ho) * g.wo;
          for (std::int64_t oh = 0; oh < g.ho; ++oh) {
            for (std::int64_t ow = 0; ow < g.wo; ++ow) {
              const double gv = static_cast<double>(gp[oh * g.wo + ow]);
              for (std::int64_t kh = 0; kh < g.kh; ++kh) {
                const std::int64_t ih = oh * g.stride - g.padding + kh;
                if (ih < 0 || ih >= g.h) continue;
                for (std::int64_t kw = 0; kw < g.kw; ++kw) {
                  const std::int64_t iw = ow * g.stride - g.padding + kw;
                  if (iw < 0 || iw >= g.w) continue;
                  buf[static_cast<std::size_t>(ih * g.w + iw)] +=
                      gv * static_cast<double>(ker[kh * g.kw + kw]);
                }
              }
            }
          }
        }
        S* dst = grads.input.data() + ((n * g.c + c) * g.h) * g.w;
        for (std::int64_t i = 0; i < g.h * g.w; ++i) dst[i] = static_cast<S>(buf[static_cast<std::size_t>(i)]);
      }
    }
    return grads;
  }

  const auto wd = detail::weight_groups(weight, g);
  const std::int64_t k = g.cg * g.kh * g.kw;
  std::vector<MatrixRd> dwd(static_cast<std::size_t>(g.groups), MatrixRd::Zero(g.cout_g, k));
  MatrixRd col(k, g.ho * g.wo);
  MatrixRd gd(g.cout_g, g.ho * g.wo);
  MatrixRd dcol(k, g.ho * g.wo);
  std::vector<double> buf(static_cast<std::size_t>(g.cg * g.h * g.w));
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (int grp = 0; grp < g.groups; ++grp) {
      detail::im2col_group(x, g, n, grp, col);
      Eigen::Map<const MatrixR<S>> gm(
          grad_out.data() + ((n * g.cout + grp * g.cout_g) * g.ho) * g.wo, g.cout_g, g.ho * g.wo);
      gd = gm.template cast<double>();
      dwd[static_cast<std::size_t>(grp)].noalias() += gd * col.transpose();
      dcol.noalias() = wd[static_cast<std::size_t>(grp)].transpose() * gd;
      // col2im scatter into a per-(n,group) double buffer
      std::fill(buf.begin(), buf.end(), 0.0);
      for (std::int64_t ci = 0; ci < g.cg; ++ci) {
        for (std::int64_t kh = 0; kh < g.kh; ++kh) {
          for (std::int64_t kw = 0; kw < g.kw; ++kw) {
            const double* src = dcol.data() + ((ci * g.kh + kh) * g.kw + kw) * (g.ho * g.wo);
            for (std::int64_t oh = 0; oh < g.ho; ++oh) {
              const std::int64_t ih = oh * g.stride - g.padding + kh;
              if (ih < 0 || ih >= g.h) continue;
              for (std::int64_t ow = 0; ow < g.wo; ++ow) {
                const std::int64_t iw = ow * g.stride - g.padding + kw;
                if (iw < 0 || iw >= g.w) continue;
                buf[static_cast<std::size_t>((ci * g.h + ih) * g.w + iw)] += src[oh * g.wo + ow];
              }
            }
          }
        }
      }
      S* dst = grads.input.data() + ((n * g.c + grp * g.cg) * g.h) * g.w;
      for (std::int64_t i = 0; i < g.cg * g.h * g.w; ++i)
        dst[i] = static_cast<S>(buf[static_cast<std::size_t>(i)]);
    }
  }
  for (int grp = 0; grp < g.groups; ++grp) {
    const MatrixRd& m = dwd[static_cast<std::size_t>(grp)];
    S* dst = grads.weight.data() + grp * g.cout_g * k;
    for (std::int64_t i = 0; i < g.cout_g * k; ++i) dst[i] = static_cast<S>(m.data()[i]);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Batch normalisation

struct BnSaved {
  std::vector<double> mean, invstd;
};

// Training mode normalises by batch statistics and folds them into the running
// stats: running = (1 - momentum) * running + momentum * batch (variance uses
// the unbiased estimate when count > 1). Eval mode uses the running stats.
template <class S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     Tensor<S>* running_mean, Tensor<S>* running_var, bool training,
                     double momentum, double eps, BnSaved* saved = nullptr) {
  check_arg(x.rank() == 4, "batch_norm: input must be NCHW");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  check_arg(gamma.numel() == c && beta.numel() == c, "batch_norm: gamma/beta length ",
            gamma.numel(), "/", beta.numel(), " != channels ", c);
  check_arg(running_mean && running_var && running_mean->numel() == c && running_var->numel() == c,
            "batch_norm: running stats must have length ", c);
  const std::int64_t cnt = n * h * w;
  check_arg(cnt > 0, "batch_norm: empty input");

  Tensor<S> out(x.shape());
  BnSaved local;
  BnSaved& sv = saved ? *saved : local;
  sv.mean.assign(static_cast<std::size_t>(c), 0.0);
  sv.invstd.assign(static_cast<std::size_t>(c), 0.0);

  for (std::int64_t ch = 0; ch < c; ++ch) {
    double mean, var;
    if (training) {
      double sum = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const S* p = x.data() + ((i * c + ch) * h) * w;
        for (std::int64_t j = 0; j < h * w; ++j) sum += static_cast<double>(p[j]);
      }
      mean = sum / static_cast<double>(cnt);
      double sq = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const S* p = x.data() + ((i * c + ch) * h) * w;
        for (std::int64_t j = 0; j < h * w; ++j) {
          const double d = static_cast<double>(p[j]) - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(cnt);
      const double unbiased = cnt > 1 ? sq / static_cast<double>(cnt - 1) : var;
      (*running_mean)[ch] =
          static_cast<S>((1.0 - momentum) * static_cast<double>((*running_mean)[ch]) + momentum * mean);
      (*running_var)[ch] =
          static_cast<S>((1.0 - momentum) * static_cast<double>((*running_var)[ch]) + momentum * unbiased);
    } else {
      mean = static_cast<double>((*running_mean)[ch]);
      var = static_cast<double>((*running_var)[ch]);
    }
    const double invstd = 1.0 / std::sqrt(var + eps);
    sv.mean[static_cast<std::size_t>(ch)] = mean;
    sv.invstd[static_cast<std::size_t>(ch)] = invstd;
    const double gm = static_cast<double>(gamma[ch]);
    const double bt = static_cast<double>(beta[ch]);
    for (std::int64_t i = 0; i < n; ++i) {
      const S* p = x.data() + ((i * c + ch) * h) * w;
      S* q = out.data() + ((i * c + ch) * h) * w;
      for (std::int64_t j = 0; j < h * w; ++j)
        q[j] = static_cast<S>(gm * (static_cast<double>(p[j]) - mean) * invstd + bt);
    }
  }
  assert_all_finite(out, "batch_norm");
  return out;
}

template <class S>
struct BnGrads {
  Tensor<S> input, gamma, beta;
};

template <class S>
BnGrads<S> batch_norm_backward(const Tensor<S>& x, const Tensor<S>& gamma, const BnSaved& saved,
                               bool training, const Tensor<S>& grad_out) {
  check_arg(x.same_shape(grad_out), "batch_norm_backward: shape mismatch");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const double cnt = static_cast<double>(n * h * w);
  BnGrads<S> grads;
  grads.input = Tensor<S>(x.shape());
  grads.gamma = Tensor<S>({c});
  grads.beta = Tensor<S>({c});
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const double mean = saved.mean[static_cast<std::size_t>(ch)];
    const double invstd = saved.invstd[static_cast<std::size_t>(ch)];
    const double gm = static_cast<double>(gamma[ch]);
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const S* px = x.data() + ((i * c + ch) * h) * w;
      const S* pg = grad_out.data() + ((i * c + ch) * h) * w;
      for (std::int64_t j = 0; j < h * w; ++j) {
        const double dy = static_cast<double>(pg[j]);
        const double xhat = (static_cast<double>(px[j]) - mean) * invstd;
        sum_dy += dy;
        sum_dy_xhat += dy * xhat;
      }
    }
    grads.gamma[ch] = static_cast<S>(sum_dy_xhat);
    grads.beta[ch] = static_cast<S>(sum_dy);
    for (std::int64_t i = 0; i < n; ++i) {
      const S* px = x.data() + ((i * c + ch) * h) * w;
      const S* pg = grad_out.data() + ((i * c + ch) * h) * w;
      S* pd = grads.input.data() + ((i * c + ch) * h) * w;
      for (std::int64_t j = 0; j < h * w; ++j) {
        const double dy = static_cast<double>(pg[j]);
        if (training) {
          const double xhat = (static_cast<double>(px[j]) - mean) * invstd;
          pd[j] = static_cast<S>(gm * invstd / cnt * (cnt * dy - sum_dy - xhat * sum_dy_xhat));
        } else {
          pd[j] = static_cast<S>(dy * gm * invstd);
        }
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Elementwise / pooling / linear

inline double sigmoid_stable(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  Tensor<S> out(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i)
    out[i] = static_cast<S>(sigmoid_stable(static_cast<double>(x[i])));
  assert_all_finite(out, "sigmoid");
  return out;
}

template <class S>
Tensor<S> sigmoid_backward(const Tensor<S>& y, const Tensor<S>& grad_out) {
  Tensor<S> g(y.shape());
  for (std::int64_t i = 0; i < y.numel(); ++i) {
    const double s = static_cast<double>(y[i]);
    g[i] = static_cast<S>(static_cast<double>(grad_out[i]) * s * (1.0 - s));
  }
  return g;
}

// silu(x) = x * sigmoid(x)
template <class S>
Tensor<S> silu(const Tensor<S>& x) {
  Tensor<S> out(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double v = static_cast<double>(x[i]);
    out[i] = static_cast<S>(v * sigmoid_stable(v));
  }
  assert_all_finite(out, "silu");
  return out;
}

template <class S>
Tensor<S> silu_backward(const Tensor<S>& x, const Tensor<S>& grad_out) {
  Tensor<S> g(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double v = static_cast<double>(x[i]);
    const double s = sigmoid_stable(v);
    g[i] = static_cast<S>(static_cast<double>(grad_out[i]) * s * (1.0 + v * (1.0 - s)));
  }
  return g;
}

// (N,C,H,W) -> (N,C,1,1) by arithmetic mean over H,W.
template <class S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
  check_arg(x.rank() == 4, "global_avg_pool: input must be NCHW");
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  check_arg(hw > 0, "global_avg_pool: empty spatial extent");
  Tensor<S> out({n, c, 1, 1});
  for (std::int64_t i = 0; i < n * c; ++i) {
    const S* p = x.data() + i * hw;
    double acc = 0.0;
    for (std::int64_t j = 0; j < hw; ++j) acc += static_cast<double>(p[j]);
    out[i] = static_cast<S>(acc / static_cast<double>(hw));
  }
  assert_all_finite(out, "global_avg_pool");
  return out;
}

template <class S>
Tensor<S> global_avg_pool_backward(const std::vector<std::int64_t>& in_shape,
                                   const Tensor<S>& grad_out) {
  Tensor<S> g(in_shape);
  const std::int64_t n = in_shape[0], c = in_shape[1], hw = in_shape[2] * in_shape[3];
  for (std::int64_t i = 0; i < n * c; ++i) {
    const S v = static_cast<S>(static_cast<double>(grad_out[i]) / static_cast<double>(hw));
    S* p = g.data() + i * hw;
    for (std::int64_t j = 0; j < hw; ++j) p[j] = v;
  }
  return g;
}

// x: (N,F), weight: (O,F), bias: (O). Small layers only; plain loops keep the
// result independent of batch composition bit for bit.
template <class S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& weight,
                 std::type_identity_t<const Tensor<S>*> bias) {
  check_arg(x.rank() == 2 && weight.rank() == 2, "linear: expects 2-d input and weight");
  const std::int64_t n = x.dim(0), f = x.dim(1), o = weight.dim(0);
  check_arg(weight.dim(1) == f, "linear: weight features ", weight.dim(1), " != input features ", f);
  if (bias) check_arg(bias->numel() == o, "linear: bias length mismatch");
  Tensor<S> out({n, o});
  for (std::int64_t i = 0; i < n; ++i) {
    const S* xr = x.data() + i * f;
    for (std::int64_t j = 0; j < o; ++j) {
      const S* wr = weight.data() + j * f;
      double acc = bias ? static_cast<double>((*bias)[j]) : 0.0;
      for (std::int64_t k = 0; k < f; ++k)
        acc += static_cast<double>(xr[k]) * static_cast<double>(wr[k]);
      out.at2(i, j) = static_cast<S>(acc);
    }
  }
  assert_all_finite(out, "linear");
  return out;
}

template <class S>
struct LinearGrads {
  Tensor<S> input, weight, bias;
};

template <class S>
LinearGrads<S> linear_backward(const Tensor<S>& x, const Tensor<S>& weight, bool has_bias,
                               const Tensor<S>& grad_out) {
  const std::int64_t n = x.dim(0), f = x.dim(1), o = weight.dim(0);
  LinearGrads<S> g;
  g.input = Tensor<S>({n, f});
  g.weight = Tensor<S>({o, f});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t k = 0; k < f; ++k) {
      double acc = 0.0;
      for (std::int64_t j = 0; j < o; ++j)
        acc += static_cast<double>(grad_out.at2(i, j)) * static_cast<double>(weight.at2(j, k));
      g.input.at2(i, k) = static_cast<S>(acc);
    }
  for (std::int64_t j = 0; j < o; ++j)
    for (std::int64_t k = 0; k < f; ++k) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < n; ++i)
        acc += static_cast<double>(grad_out.at2(i, j)) * static_cast<double>(x.at2(i, k));
      g.weight.at2(j, k) = static_cast<S>(acc);
    }
  if (has_bias) {
    g.bias = Tensor<S>({o});
    for (std::int64_t j = 0; j < o; ++j) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < n; ++i) acc += static_cast<double>(grad_out.at2(i, j));
      g.bias[j] = static_cast<S>(acc);
    }
  }
  return g;
}

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  check_arg(a.same_shape(b), "add: shape mismatch ", shape_str(a), " vs ", shape_str(b));
  Tensor<S> out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  assert_all_finite(out, "add");
  return out;
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  check_arg(a.same_shape(b), "mul: shape mismatch ", shape_str(a), " vs ", shape_str(b));
  Tensor<S> out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
  assert_all_finite(out, "mul");
  return out;
}

// Per-channel gating: x (N,C,H,W) scaled by gate (N,C,1,1). The only
// broadcast pattern the model needs besides the per-channel affine in BN.
template <class S>
Tensor<S> scale_channels(const Tensor<S>& x, const Tensor<S>& gate) {
  check_arg(x.rank() == 4 && gate.rank() == 4 && gate.dim(0) == x.dim(0) &&
                gate.dim(1) == x.dim(1) && gate.dim(2) == 1 && gate.dim(3) == 1,
            "scale_channels: gate must be (N,C,1,1) matching input ", shape_str(x));
  Tensor<S> out(x.shape());
  const std::int64_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  for (std::int64_t i = 0; i < nc; ++i) {
    const S gv = gate[i];
    const S* p = x.data() + i * hw;
    S* q = out.data() + i * hw;
    for (std::int64_t j = 0; j < hw; ++j) q[j] = p[j] * gv;
  }
  assert_all_finite(out, "scale_channels");
  return out;
}

template <class S>
struct ScaleChannelsGrads {
  Tensor<S> input, gate;
};

template <class S>
ScaleChannelsGrads<S> scale_channels_backward(const Tensor<S>& x, const Tensor<S>& gate,
                                              const Tensor<S>& grad_out) {
  ScaleChannelsGrads<S> g;
  g.input = Tensor<S>(x.shape());
  g.gate = Tensor<S>(gate.shape());
  const std::int64_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  for (std::int64_t i = 0; i < nc; ++i) {
    const double gv = static_cast<double>(gate[i]);
    const S* px = x.data() + i * hw;
    const S* pg = grad_out.data() + i * hw;
    S* pd = g.input.data() + i * hw;
    double acc = 0.0;
    for (std::int64_t j = 0; j < hw; ++j) {
      pd[j] = static_cast<S>(static_cast<double>(pg[j]) * gv);
      acc += static_cast<double>(pg[j]) * static_cast<double>(px[j]);
    }
    g.gate[i] = static_cast<S>(acc);
  }
  return g;
}

template <class S>
Tensor<S> sum_all(const Tensor<S>& x) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(x[i]);
  Tensor<S> out({1});
  out[0] = static_cast<S>(acc);
  assert_all_finite(out, "sum_all");
  return out;
}

// Binary cross-entropy from logits, mean over all elements, in the stable
// form max(z,0) - z*y + log(1 + exp(-|z|)).
template <class S>
Tensor<S> bce_with_logits(const Tensor<S>& logits, const Tensor<S>& labels) {
  check_arg(logits.same_shape(labels), "bce_with_logits: logits ", shape_str(logits),
            " vs labels ", shape_str(labels));
  check_arg(logits.numel() > 0, "bce_with_logits: empty input");
  double acc = 0.0;
  for (std::int64_t i = 0; i < logits.numel(); ++i) {
    const double z = static_cast<double>(logits[i]);
    const double y = static_cast<double>(labels[i]);
    check_arg(y == 0.0 || y == 1.0, "bce_with_logits: label must be 0 or 1, got ", y);
    acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  Tensor<S> out({1});
  out[0] = static_cast<S>(acc / static_cast<double>(logits.numel()));
  assert_all_finite(out, "bce_with_logits");
  return out;
}

template <class S>
Tensor<S> bce_with_logits_backward(const Tensor<S>& logits, const Tensor<S>& labels,
                                   double upstream) {
  Tensor<S> g(logits.shape());
  const double inv_n = 1.0 / static_cast<double>(logits.numel());
  for (std::int64_t i = 0; i < logits.numel(); ++i) {
    const double z = static_cast<double>(logits[i]);
    const double y = static_cast<double>(labels[i]);
    g[i] = static_cast<S>(upstream * (sigmoid_stable(z) - y) * inv_n);
  }
  return g;
}

}  // namespace crpl
