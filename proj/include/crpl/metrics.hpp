#pragma once

#include <json.hpp>

#include <filesystem>
#include <vector>

#include "crpl/augment.hpp"
#include "crpl/dataset.hpp"
#include "crpl/model.hpp"

namespace crpl {

// Probability of the positive class for one decoded image: the eval-mode
// pipeline, a forward pass, then sigmoid of the single logit. (For a binary
// head, softmax over [z, 0] equals sigmoid(z), so the single-logit sigmoid is
// the canonical form.)
double predict_proba(Model<float>& model, const AugmentPipeline& eval_pipeline, const Image& img);

// Arithmetic mean of member probabilities. Threshold at 0.5 when a hard
// label is needed.
double soft_vote(const std::vector<double>& probs);

// Mann-Whitney AUROC: (#(pos > neg) + 0.5 #(pos == neg)) / (P*N), computed
// from tie-averaged ranks in O(n log n). Equals the trapezoidal ROC area.
// Throws if only one class is present (never returns NaN).
double auroc(const std::vector<int>& labels, const std::vector<double>& scores);

struct EnsembleMemberSpec {
  std::filesystem::path checkpoint;
  PipelinePreset preset = PipelinePreset::A;
};

struct EnsembleSpec {
  std::vector<EnsembleMemberSpec> members;  // >= 1
};

// Members with loaded models; each pipeline's output resolution is validated
// against the model's configured resolution.
struct LoadedEnsemble {
  struct Member {
    Model<float> model;
    AugmentPipeline pipeline;  // eval mode
    std::string preset;
  };
  std::vector<Member> members;
};

LoadedEnsemble load_ensemble(const EnsembleSpec& spec);

struct EvalOptions {
  bool timing = true;           // run the single-threaded timing pass
  int warmup_images = 3;        // excluded from the per-image mean
  bool include_decode = false;  // time image decode as part of the per-image cost
  bool dump_member_probs = false;
  bool compute_auroc = true;  // off for pure timing runs on unlabeled data
};

struct EvalReport {
  double auroc = 0.0;
  double per_image_cpu_seconds = 0.0;  // 0 when timing was skipped
  std::int64_t n_images = 0;
  std::vector<double> scores;                     // soft-voted, manifest order
  std::vector<std::vector<double>> member_probs;  // [member][image], optional
};

// Soft-voting evaluation over a manifest. The AUROC pass is deterministic;
// the timing pass measures mean wall time per image of the full
// preprocess+inference path on a strictly single-threaded code path, after
// `warmup_images` warmup images are excluded. Image decode stays outside the
// timed region unless include_decode is set.
EvalReport evaluate(LoadedEnsemble& ensemble, const DatasetManifest& manifest,
                    const EvalOptions& opts = {});

EvalReport evaluate(const EnsembleSpec& spec, const DatasetManifest& manifest,
                    const EvalOptions& opts = {});

nlohmann::json report_to_json(const EvalReport& report);

}  // namespace crpl
