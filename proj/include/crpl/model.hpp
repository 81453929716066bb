#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "crpl/graph.hpp"
#include "crpl/rng.hpp"

namespace crpl {

struct StageSpec {
  int expansion;     // inverted-bottleneck expansion ratio
  int kernel;        // depthwise kernel size (odd)
  int out_channels;  // before width scaling
  int repeats;       // before depth scaling
  int stride;        // first block of the stage
};

// Architecture hyperparameters. Stage output channels are scaled by
// width_mult and rounded to the nearest multiple of 8 (minimum 8); repeats
// are scaled by depth_mult and rounded up. Stem/head channels are taken as
// given (presets bake in the values they want).
struct ModelConfig {
  double width_mult = 1.0;
  double depth_mult = 1.0;
  int resolution = 224;
  std::vector<StageSpec> stages;
  int stem_channels = 32;
  int head_channels = 1280;
  bool use_se = true;
  double se_ratio = 0.25;
  int num_outputs = 1;
};

// Round-half-up to the nearest multiple of 8, floor 8.
inline int round_channels(double c) {
  const int r = static_cast<int>((c + 4.0) / 8.0) * 8;
  return r < 8 ? 8 : r;
}

inline int scaled_channels(int base, double width_mult) {
  return round_channels(base * width_mult);
}

inline int scaled_repeats(int base, double depth_mult) {
  return static_cast<int>(std::ceil(depth_mult * base));
}

inline ModelConfig b0_preset() {
  ModelConfig c;
  c.width_mult = 1.0;
  c.depth_mult = 1.0;
  c.resolution = 224;
  c.stem_channels = 32;
  c.head_channels = 1280;
  c.stages = {{1, 3, 16, 1, 1},  {6, 3, 24, 2, 2},  {6, 5, 40, 2, 2}, {6, 3, 80, 3, 2},
              {6, 5, 112, 3, 1}, {6, 5, 192, 4, 2}, {6, 3, 320, 1, 1}};
  c.use_se = true;
  c.se_ratio = 0.25;
  c.num_outputs = 1;
  return c;
}

// Scaled-down variant sized so the full experiment suite runs in minutes on
// one CPU core.
inline ModelConfig desk_preset() {
  ModelConfig c = b0_preset();
  c.width_mult = 0.25;
  c.depth_mult = 0.5;
  c.stem_channels = 8;
  c.head_channels = 64;
  c.resolution = 64;
  return c;
}

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
ModelConfig preset_config(const std::string& name);  // "b0" | "desk"

// Structural descriptors; fields index into the owning model's parameter and
// buffer tables.
struct ConvDef {
  int w = -1, b = -1;  // -1 = no bias
  int stride = 1, pad = 0, groups = 1;
};
struct BnDef {
  int gamma = -1, beta = -1;  // parameters
  int rmean = -1, rvar = -1;  // buffers
};
struct BlockDef {
  bool has_expand = false;
  ConvDef expand;
  BnDef bn_expand;
  ConvDef dw;
  BnDef bn_dw;
  bool has_se = false;
  ConvDef se_reduce, se_expand;
  ConvDef project;
  BnDef bn_project;
  bool residual = false;
};

// Stem conv(3x3, stride 2) + BN + SiLU; a sequence of inverted-bottleneck
// blocks (1x1 expand, depthwise KxK, optional squeeze-excitation, 1x1
// project, residual when stride is 1 and channels match); 1x1 head conv + BN
// + SiLU; global average pool; linear head. The sigmoid lives outside the
// model, in the loss / predictor.
//
// Immutable during eval-mode inference; training mutates weights and BN
// running stats and is single-owner.
template <class Scalar>
class Model {
 public:
  static constexpr double kBnMomentum = 0.1;
  static constexpr double kBnEps = 1e-3;

  ModelConfig config;
  std::vector<std::string> param_names;
  std::vector<Tensor<Scalar>> param_values;  // trainable
  std::vector<std::string> buffer_names;
  std::vector<Tensor<Scalar>> buffer_values;  // BN running stats

  ConvDef stem;
  BnDef stem_bn;
  std::vector<BlockDef> blocks;
  ConvDef head;
  BnDef head_bn;
  int fc_w = -1, fc_b = -1;

  // Builds the skeleton and initialises weights from init_seed: conv kernels
  // ~ N(0, 2 / (Kh*Kw*Cout)), BN gamma 1 / beta 0, linear U(+-1/sqrt(fan_in)).
  static Model build(const ModelConfig& cfg, std::uint64_t init_seed) {
    validate(cfg);
    Model m;
    m.config = cfg;
    RngStream rng = derive_stream(init_seed, 0, 0, kStreamInit);

    auto add_conv = [&](const std::string& name, int cout, int cin_g, int k, int stride, int pad,
                        int groups, bool bias) {
      ConvDef d;
      d.stride = stride;
      d.pad = pad;
      d.groups = groups;
      Tensor<Scalar> w({cout, cin_g, k, k});
      const double stddev = std::sqrt(2.0 / (static_cast<double>(k) * k * cout));
      for (std::int64_t i = 0; i < w.numel(); ++i)
        w[i] = static_cast<Scalar>(rng.normal() * stddev);
      d.w = m.add_param(name + ".weight", std::move(w));
      if (bias) d.b = m.add_param(name + ".bias", Tensor<Scalar>({cout}));
      return d;
    };
    auto add_bn = [&](const std::string& name, int c) {
      BnDef d;
      d.gamma = m.add_param(name + ".gamma", Tensor<Scalar>::full({c}, Scalar(1)));
      d.beta = m.add_param(name + ".beta", Tensor<Scalar>({c}));
      d.rmean = m.add_buffer(name + ".running_mean", Tensor<Scalar>({c}));
      d.rvar = m.add_buffer(name + ".running_var", Tensor<Scalar>::full({c}, Scalar(1)));
      return d;
    };

    m.stem = add_conv("stem.conv", cfg.stem_channels, 3, 3, 2, 1, 1, false);
    m.stem_bn = add_bn("stem.bn", cfg.stem_channels);

    int in_ch = cfg.stem_channels;
    int bi = 0;
    for (const StageSpec& st : cfg.stages) {
      const int out_ch = scaled_channels(st.out_channels, cfg.width_mult);
      const int reps = scaled_repeats(st.repeats, cfg.depth_mult);
      for (int r = 0; r < reps; ++r, ++bi) {
        const int stride = r == 0 ? st.stride : 1;
        const std::string p = cat("block", bi);
        BlockDef blk;
        const int exp_ch = in_ch * st.expansion;
        blk.has_expand = st.expansion != 1;
        if (blk.has_expand) {
          blk.expand = add_conv(p + ".expand", exp_ch, in_ch, 1, 1, 0, 1, false);
          blk.bn_expand = add_bn(p + ".bn_expand", exp_ch);
        }
        blk.dw =
            add_conv(p + ".dw", exp_ch, 1, st.kernel, stride, (st.kernel - 1) / 2, exp_ch, false);
        blk.bn_dw = add_bn(p + ".bn_dw", exp_ch);
        blk.has_se = cfg.use_se;
        if (blk.has_se) {
          // reduction is computed from the block's input channels
          const int se_ch = std::max(1, static_cast<int>(in_ch * cfg.se_ratio));
          blk.se_reduce = add_conv(p + ".se_reduce", se_ch, exp_ch, 1, 1, 0, 1, true);
          blk.se_expand = add_conv(p + ".se_expand", exp_ch, se_ch, 1, 1, 0, 1, true);
        }
        blk.project = add_conv(p + ".project", out_ch, exp_ch, 1, 1, 0, 1, false);
        blk.bn_project = add_bn(p + ".bn_project", out_ch);
        blk.residual = stride == 1 && in_ch == out_ch;
        m.blocks.push_back(blk);
        in_ch = out_ch;
      }
    }

    m.head = add_conv("head.conv", cfg.head_channels, in_ch, 1, 1, 0, 1, false);
    m.head_bn = add_bn("head.bn", cfg.head_channels);
    {
      Tensor<Scalar> w({cfg.num_outputs, cfg.head_channels});
      Tensor<Scalar> b({cfg.num_outputs});
      const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.head_channels));
      for (std::int64_t i = 0; i < w.numel(); ++i)
        w[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
      for (std::int64_t i = 0; i < b.numel(); ++i)
        b[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
      m.fc_w = m.add_param("fc.weight", std::move(w));
      m.fc_b = m.add_param("fc.bias", std::move(b));
    }
    return m;
  }

  // Wires the forward pass onto an existing graph. Returns the logits node;
  // optionally reports the graph ids of all trainable parameters (in
  // param_values order) so the optimizer can read their gradients.
  typename Graph<Scalar>::ValueId forward_on(
      Graph<Scalar>& g, typename Graph<Scalar>::ValueId input, bool training,
      std::vector<typename Graph<Scalar>::ValueId>* param_ids_out = nullptr) {
    using Id = typename Graph<Scalar>::ValueId;
    const auto& in = g.value(input);
    check_arg(in.rank() == 4 && in.dim(1) == 3, "model forward: input must be (N,3,H,W), got ",
              shape_str(in));
    check_arg(in.dim(2) == config.resolution && in.dim(3) == config.resolution,
              "model forward: input extent ", in.dim(2), "x", in.dim(3),
              " != configured resolution ", config.resolution);

    std::vector<Id> pid(param_values.size());
    for (std::size_t i = 0; i < param_values.size(); ++i)
      pid[i] = g.leaf(param_values[i], true, param_names[i]);
    if (param_ids_out) *param_ids_out = pid;

    auto conv = [&](const ConvDef& d, Id x) {
      return g.conv2d(x, pid[static_cast<std::size_t>(d.w)],
                      d.b >= 0 ? pid[static_cast<std::size_t>(d.b)] : Graph<Scalar>::kNone,
                      d.stride, d.pad, d.groups);
    };
    auto bn = [&](const BnDef& d, Id x) {
      return g.batch_norm(x, pid[static_cast<std::size_t>(d.gamma)],
                          pid[static_cast<std::size_t>(d.beta)],
                          &buffer_values[static_cast<std::size_t>(d.rmean)],
                          &buffer_values[static_cast<std::size_t>(d.rvar)], training, kBnMomentum,
                          kBnEps);
    };

    Id x = g.silu(bn(stem_bn, conv(stem, input)));
    for (const BlockDef& blk : blocks) {
      Id h = x;
      if (blk.has_expand) h = g.silu(bn(blk.bn_expand, conv(blk.expand, h)));
      h = g.silu(bn(blk.bn_dw, conv(blk.dw, h)));
      if (blk.has_se) {
        Id s = g.global_avg_pool(h);
        s = g.silu(conv(blk.se_reduce, s));
        s = g.sigmoid(conv(blk.se_expand, s));
        h = g.scale_channels(h, s);
      }
      h = bn(blk.bn_project, conv(blk.project, h));
      if (blk.residual) h = g.add(h, x);
      x = h;
    }
    x = g.silu(bn(head_bn, conv(head, x)));
    x = g.flatten2(g.global_avg_pool(x));
    return g.linear(x, pid[static_cast<std::size_t>(fc_w)], pid[static_cast<std::size_t>(fc_b)]);
  }

  // Convenience forward returning logits (N, num_outputs).
  Tensor<Scalar> forward(const Tensor<Scalar>& batch, bool training) {
    Graph<Scalar> g(false);
    auto in = g.leaf(batch, false);
    auto out = forward_on(g, in, training);
    return g.value(out);
  }

  std::int64_t trainable_param_count() const {
    std::int64_t n = 0;
    for (const auto& t : param_values) n += t.numel();
    return n;
  }

  template <class T>
  Model<T> cast() const {
    Model<T> m;
    m.config = config;
    m.param_names = param_names;
    m.buffer_names = buffer_names;
    for (const auto& t : param_values) m.param_values.push_back(t.template cast<T>());
    for (const auto& t : buffer_values) m.buffer_values.push_back(t.template cast<T>());
    m.stem = stem;
    m.stem_bn = stem_bn;
    m.blocks = blocks;
    m.head = head;
    m.head_bn = head_bn;
    m.fc_w = fc_w;
    m.fc_b = fc_b;
    return m;
  }

  int param_index(const std::string& name) const {
    for (std::size_t i = 0; i < param_names.size(); ++i)
      if (param_names[i] == name) return static_cast<int>(i);
    return -1;
  }

 private:
  template <class T>
  friend class Model;

  static void validate(const ModelConfig& cfg) {
    check_arg(cfg.width_mult > 0.0, "model config: width_mult must be > 0, got ", cfg.width_mult);
    check_arg(cfg.depth_mult > 0.0, "model config: depth_mult must be > 0, got ", cfg.depth_mult);
    check_arg(cfg.resolution >= 1, "model config: resolution must be >= 1");
    check_arg(!cfg.stages.empty(), "model config: stage table is empty");
    for (const StageSpec& s : cfg.stages) {
      check_arg(s.expansion >= 1 && s.kernel >= 1 && s.kernel % 2 == 1 && s.out_channels >= 1 &&
                    s.repeats >= 1 && (s.stride == 1 || s.stride == 2),
                "model config: invalid stage (", s.expansion, ",", s.kernel, ",", s.out_channels,
                ",", s.repeats, ",", s.stride, ")");
    }
    check_arg(cfg.stem_channels >= 1 && cfg.head_channels >= 1, "model config: bad stem/head");
    check_arg(!cfg.use_se || (cfg.se_ratio > 0.0 && cfg.se_ratio <= 1.0),
              "model config: se_ratio must be in (0,1], got ", cfg.se_ratio);
    check_arg(cfg.num_outputs >= 1, "model config: num_outputs must be >= 1");
  }

  int add_param(std::string name, Tensor<Scalar> t) {
    param_names.push_back(std::move(name));
    param_values.push_back(std::move(t));
    return static_cast<int>(param_values.size() - 1);
  }
  int add_buffer(std::string name, Tensor<Scalar> t) {
    buffer_names.push_back(std::move(name));
    buffer_values.push_back(std::move(t));
    return static_cast<int>(buffer_values.size() - 1);
  }
};

}  // namespace crpl
