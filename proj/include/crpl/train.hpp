#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "crpl/augment.hpp"
#include "crpl/dataset.hpp"
#include "crpl/model.hpp"

namespace crpl {

// Mean binary cross-entropy from logits; labels must be 0/1. Computed in the
// stable form max(z,0) - z*y + log(1+exp(-|z|)), so it is finite for any
// finite logit.
template <class S>
double bce_loss(const Tensor<S>& logits, const Tensor<S>& labels) {
  return static_cast<double>(bce_with_logits(logits, labels)[0]);
}

// Adam with bias correction. The learning rate is immutable for the lifetime
// of the state: no schedule, no weight decay.
class AdamState {
 public:
  explicit AdamState(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    check_arg(lr > 0.0, "adam: lr must be > 0, got ", lr);
  }

  void init(const std::vector<Tensor<float>>& params) {
    m_.clear();
    v_.clear();
    for (const auto& p : params) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
    t_ = 0;
  }

  // One update over all parameters; grads must be shaped like params.
  void step(std::vector<Tensor<float>>& params, const std::vector<const Tensor<float>*>& grads);

  double lr() const { return lr_; }
  std::uint64_t steps_taken() const { return t_; }

 private:
  const double lr_, beta1_, beta2_, eps_;
  std::vector<Tensor<float>> m_, v_;
  std::uint64_t t_ = 0;
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  AugmentPipeline pipeline;  // train-mode pipeline
  enum class Selection { TrainLoss, ValLoss } selection = Selection::TrainLoss;
  const DatasetManifest* val_manifest = nullptr;  // required for ValLoss
};

struct RunRecord {
  std::vector<double> epoch_losses;  // mean per-sample loss per epoch
  int selected_epoch = 0;            // argmin of epoch_losses, first on ties
  double cpu_seconds = 0.0;
  std::string checkpoint_path;
  double lr = 0.0;
};

// Runs the full training protocol: per-epoch shuffle keyed by (seed, epoch),
// per-sample augmentation keyed by (seed, epoch, sample id), Adam at a
// constant learning rate, last partial batch kept. After the final epoch the
// model is restored to the snapshot of the epoch with the lowest selection
// loss and, when checkpoint_out is non-empty, saved there.
RunRecord fit(Model<float>& model, const DatasetManifest& train_manifest, const TrainConfig& cfg,
              const std::filesystem::path& checkpoint_out = {});

}  // namespace crpl
