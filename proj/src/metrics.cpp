#include "crpl/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "crpl/checkpoint.hpp"
#include "crpl/image_io.hpp"

namespace crpl {

double predict_proba(Model<float>& model, const AugmentPipeline& eval_pipeline, const Image& img) {
  check_arg(!eval_pipeline.train_mode, "predict_proba: pipeline must be in eval mode");
  check_arg(model.config.num_outputs == 1, "predict_proba: model must have a single-logit head");
  const Image x = apply_pipeline(eval_pipeline, img, 0, 0, 0);
  const int r = pipeline_output_resolution(eval_pipeline);
  Tensor<float> batch({1, 3, r, r});
  std::copy(x.data(), x.data() + x.numel(), batch.data());
  const Tensor<float> logits = model.forward(batch, false);
  return sigmoid_stable(static_cast<double>(logits[0]));
}

double soft_vote(const std::vector<double>& probs) {
  check_arg(!probs.empty(), "soft_vote: empty probability list");
  double acc = 0.0;
  for (double p : probs) {
    check_arg(p >= 0.0 && p <= 1.0, "soft_vote: probability out of [0,1]: ", p);
    acc += p;
  }
  return acc / static_cast<double>(probs.size());
}

double auroc(const std::vector<int>& labels, const std::vector<double>& scores) {
  check_arg(labels.size() == scores.size(), "auroc: ", labels.size(), " labels vs ",
            scores.size(), " scores");
  const std::size_t n = labels.size();
  std::int64_t pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    check_arg(labels[i] == 0 || labels[i] == 1, "auroc: label must be 0 or 1, got ", labels[i]);
    check_arg(std::isfinite(scores[i]), "auroc: non-finite score at index ", i);
    pos += labels[i];
  }
  const std::int64_t neg = static_cast<std::int64_t>(n) - pos;
  check_arg(pos > 0 && neg > 0, "auroc: needs both classes, got ", pos, " positive / ", neg,
            " negative");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // tie-averaged 1-based ranks, summed over positives
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * q);
}

LoadedEnsemble load_ensemble(const EnsembleSpec& spec) {
  check_arg(!spec.members.empty(), "ensemble needs at least one member");
  LoadedEnsemble e;
  for (const EnsembleMemberSpec& ms : spec.members) {
    check_usage(std::filesystem::exists(ms.checkpoint),
                "member checkpoint does not exist: ", ms.checkpoint.string());
    LoadedEnsemble::Member m{load_checkpoint(ms.checkpoint),
                             AugmentPipeline{}, preset_to_string(ms.preset)};
    m.pipeline = make_pipeline(ms.preset, m.model.config.resolution, false);
    check_arg(pipeline_output_resolution(m.pipeline) == m.model.config.resolution,
              "member pipeline resolution does not match model resolution");
    e.members.push_back(std::move(m));
  }
  return e;
}

namespace {

double vote_image(LoadedEnsemble& ensemble, const Image& img, std::vector<double>* member_out) {
  std::vector<double> probs;
  probs.reserve(ensemble.members.size());
  for (auto& m : ensemble.members) probs.push_back(predict_proba(m.model, m.pipeline, img));
  if (member_out) *member_out = probs;
  return soft_vote(probs);
}

}  // namespace

EvalReport evaluate(LoadedEnsemble& ensemble, const DatasetManifest& manifest,
                    const EvalOptions& opts) {
  check_arg(!manifest.samples.empty(), "evaluate: empty manifest");
  EvalReport report;
  report.n_images = static_cast<std::int64_t>(manifest.samples.size());
  if (opts.dump_member_probs) report.member_probs.resize(ensemble.members.size());

  std::vector<int> labels;
  std::vector<Image> cache;
  cache.reserve(manifest.samples.size());
  for (const Sample& s : manifest.samples) {
    cache.push_back(load_image(manifest.resolve(s)));
    labels.push_back(s.label);
  }

  for (std::size_t i = 0; i < cache.size(); ++i) {
    std::vector<double> member;
    report.scores.push_back(
        vote_image(ensemble, cache[i], opts.dump_member_probs ? &member : nullptr));
    for (std::size_t m = 0; m < member.size(); ++m) report.member_probs[m].push_back(member[m]);
  }
  if (opts.compute_auroc) report.auroc = auroc(labels, report.scores);

  if (opts.timing) {
    check_arg(static_cast<int>(manifest.samples.size()) > opts.warmup_images,
              "evaluate: timing needs more than ", opts.warmup_images, " images");
    using Clock = std::chrono::steady_clock;
    double total = 0.0;
    std::int64_t counted = 0;
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
      const auto t0 = Clock::now();
      if (opts.include_decode) {
        const Image img = load_image(manifest.resolve(manifest.samples[i]));
        vote_image(ensemble, img, nullptr);
      } else {
        vote_image(ensemble, cache[i], nullptr);
      }
      const auto t1 = Clock::now();
      if (static_cast<int>(i) >= opts.warmup_images) {
        total += std::chrono::duration<double>(t1 - t0).count();
        ++counted;
      }
    }
    report.per_image_cpu_seconds = total / static_cast<double>(counted);
  }
  return report;
}

EvalReport evaluate(const EnsembleSpec& spec, const DatasetManifest& manifest,
                    const EvalOptions& opts) {
  LoadedEnsemble ensemble = load_ensemble(spec);
  return evaluate(ensemble, manifest, opts);
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json j{{"auroc", report.auroc},
                   {"per_image_cpu_seconds", report.per_image_cpu_seconds},
                   {"n_images", report.n_images}};
  if (!report.member_probs.empty()) j["member_probs"] = report.member_probs;
  return j;
}

}  // namespace crpl
