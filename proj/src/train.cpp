#include "crpl/train.hpp"

#include <cassert>
#include <cmath>
#include <cstring>
#include <ctime>

#include "crpl/checkpoint.hpp"
#include "crpl/image_io.hpp"

namespace crpl {

void AdamState::step(std::vector<Tensor<float>>& params,
                     const std::vector<const Tensor<float>*>& grads) {
  check_arg(params.size() == m_.size() && grads.size() == params.size(),
            "adam: state/param/grad count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<float>& p = params[i];
    const Tensor<float>& g = *grads[i];
    check_arg(p.same_shape(g) && p.same_shape(m_[i]), "adam: shape mismatch for parameter ", i);
    float* pm = m_[i].data();
    float* pv = v_[i].data();
    float* pp = p.data();
    const float* pg = g.data();
    for (std::int64_t j = 0; j < p.numel(); ++j) {
      const double gj = static_cast<double>(pg[j]);
      const double m = beta1_ * static_cast<double>(pm[j]) + (1.0 - beta1_) * gj;
      const double v = beta2_ * static_cast<double>(pv[j]) + (1.0 - beta2_) * gj * gj;
      pm[j] = static_cast<float>(m);
      pv[j] = static_cast<float>(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      pp[j] = static_cast<float>(static_cast<double>(pp[j]) -
                                 lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

namespace {

struct Snapshot {
  std::vector<Tensor<float>> params, buffers;
};

Snapshot take_snapshot(const Model<float>& m) {
  return Snapshot{m.param_values, m.buffer_values};
}

void restore_snapshot(Model<float>& m, const Snapshot& s) {
  m.param_values = s.params;
  m.buffer_values = s.buffers;
}

std::vector<Image> decode_all(const DatasetManifest& manifest) {
  std::vector<Image> images;
  images.reserve(manifest.samples.size());
  for (const Sample& s : manifest.samples) {
    try {
      images.push_back(load_image(manifest.resolve(s)));
    } catch (const std::exception& e) {
      throw std::runtime_error(cat("sample id ", s.id, ": ", e.what()));
    }
  }
  return images;
}

// Assembles (B,3,R,R) plus (B,1) labels for the given manifest positions.
void make_batch(const DatasetManifest& manifest, const std::vector<Image>& cache,
                const std::vector<std::size_t>& order, std::size_t begin, std::size_t end,
                const AugmentPipeline& pipeline, std::uint64_t seed, std::uint64_t epoch,
                Tensor<float>& batch, Tensor<float>& labels) {
  const std::int64_t b = static_cast<std::int64_t>(end - begin);
  const int r = pipeline_output_resolution(pipeline);
  batch = Tensor<float>({b, 3, r, r});
  labels = Tensor<float>({b, 1});
  for (std::size_t k = begin; k < end; ++k) {
    const std::size_t pos = order[k];
    const Sample& s = manifest.samples[pos];
    const Image img = apply_pipeline(pipeline, cache[pos], seed, epoch,
                                     static_cast<std::uint64_t>(s.id));
    check_runtime(img.numel() == 3 * static_cast<std::int64_t>(r) * r,
                  "pipeline produced unexpected extent for sample id ", s.id);
    std::memcpy(batch.data() + static_cast<std::int64_t>(k - begin) * img.numel(), img.data(),
                static_cast<std::size_t>(img.numel()) * sizeof(float));
    labels[static_cast<std::int64_t>(k - begin)] = static_cast<float>(s.label);
  }
}

double mean_loss(Model<float>& model, const DatasetManifest& manifest,
                 const std::vector<Image>& cache, const AugmentPipeline& eval_pipeline,
                 int batch_size) {
  std::vector<std::size_t> order(manifest.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  double total = 0.0;
  for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(batch_size));
    Tensor<float> batch, labels;
    make_batch(manifest, cache, order, begin, end, eval_pipeline, 0, 0, batch, labels);
    const Tensor<float> logits = model.forward(batch, false);
    total += bce_loss(logits, labels) * static_cast<double>(end - begin);
  }
  return total / static_cast<double>(manifest.samples.size());
}

}  // namespace

RunRecord fit(Model<float>& model, const DatasetManifest& train_manifest, const TrainConfig& cfg,
              const std::filesystem::path& checkpoint_out) {
  check_arg(cfg.epochs >= 1, "fit: epochs must be >= 1, got ", cfg.epochs);
  check_arg(cfg.batch_size >= 1, "fit: batch_size must be >= 1, got ", cfg.batch_size);
  check_arg(!train_manifest.samples.empty(), "fit: empty training manifest");
  check_arg(cfg.pipeline.train_mode, "fit: pipeline must be in train mode");
  check_arg(model.config.num_outputs == 1, "fit: binary training expects a single-logit head");
  check_arg(cfg.selection != TrainConfig::Selection::ValLoss || cfg.val_manifest,
            "fit: ValLoss selection needs a validation manifest");

  const std::clock_t t0 = std::clock();
  const std::vector<Image> cache = decode_all(train_manifest);
  std::vector<Image> val_cache;
  AugmentPipeline eval_pipeline = cfg.pipeline;
  eval_pipeline.train_mode = false;
  if (cfg.selection == TrainConfig::Selection::ValLoss) val_cache = decode_all(*cfg.val_manifest);

  AdamState adam(cfg.lr);
  adam.init(model.param_values);
  const double lr_at_first_epoch = adam.lr();

  RunRecord rec;
  rec.lr = adam.lr();
  double best_loss = 0.0;
  Snapshot best;
  const std::size_t n = train_manifest.samples.size();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    RngStream shuffle_rng =
        derive_stream(cfg.seed, static_cast<std::uint64_t>(epoch), 0, kStreamShuffle);
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.bounded(i))]);

    double epoch_total = 0.0;
    for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(n, begin + static_cast<std::size_t>(cfg.batch_size));
      Tensor<float> batch, labels;
      make_batch(train_manifest, cache, order, begin, end, cfg.pipeline, cfg.seed,
                 static_cast<std::uint64_t>(epoch), batch, labels);

      Graph<float> g;
      auto in = g.leaf(std::move(batch), false);
      std::vector<Graph<float>::ValueId> pids;
      auto logits = model.forward_on(g, in, true, &pids);
      auto loss = g.bce_with_logits(logits, labels);
      g.backward(loss);

      std::vector<const Tensor<float>*> grads(pids.size());
      for (std::size_t i = 0; i < pids.size(); ++i) grads[i] = &g.grad(pids[i]);
      adam.step(model.param_values, grads);

      epoch_total += static_cast<double>(g.value(loss)[0]) * static_cast<double>(end - begin);
    }
    const double train_epoch_loss = epoch_total / static_cast<double>(n);

    // epoch_losses records the selection basis so selected_epoch is always
    // its argmin (first on ties)
    const double selection_loss =
        cfg.selection == TrainConfig::Selection::ValLoss
            ? mean_loss(model, *cfg.val_manifest, val_cache, eval_pipeline, cfg.batch_size)
            : train_epoch_loss;
    rec.epoch_losses.push_back(selection_loss);
    if (epoch == 0 || selection_loss < best_loss) {  // strict: first epoch wins ties
      best_loss = selection_loss;
      best = take_snapshot(model);
      rec.selected_epoch = epoch;
    }
  }

  // the learning rate is constant across the whole run by construction
  check_runtime(adam.lr() == lr_at_first_epoch, "fit: learning rate drifted during the run");

  restore_snapshot(model, best);
  rec.cpu_seconds = static_cast<double>(std::clock() - t0) / CLOCKS_PER_SEC;
  if (!checkpoint_out.empty()) {
    save_checkpoint(model, checkpoint_out);
    rec.checkpoint_path = checkpoint_out.string();
  }
  return rec;
}

}  // namespace crpl
