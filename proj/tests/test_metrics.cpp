#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "crpl/checkpoint.hpp"
#include "crpl/image_io.hpp"
#include "crpl/metrics.hpp"
#include "crpl/synth.hpp"
#include "crpl/train.hpp"
#include "oracles.hpp"

using namespace crpl;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  static std::uint64_t counter = 0;
  const fs::path p =
      fs::temp_directory_path() / cat("crpl_metrics_", tag, "_", ::getpid(), "_", counter++);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("sigmoid probability identities") {
  CHECK(sigmoid_stable(0.0) == 0.5);
  CHECK(sigmoid_stable(100.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sigmoid_stable(-100.0) == doctest::Approx(0.0).epsilon(1e-12));

  // sigmoid(z) equals the first component of a 2-class softmax over [z, 0]
  RngStream rng{1};
  for (int i = 0; i < 500; ++i) {
    const double z = rng.uniform(-30.0, 30.0);
    const double m = std::max(z, 0.0);
    const double softmax0 = std::exp(z - m) / (std::exp(z - m) + std::exp(-m));
    CHECK(std::abs(sigmoid_stable(z) - softmax0) <= 1e-12);
  }
}

TEST_CASE("soft_vote") {
  CHECK(soft_vote({0.2, 0.6, 0.7}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(soft_vote({0.42}) == 0.42);  // single member: identity

  // permutation invariance on random triples
  RngStream rng{2};
  for (int i = 0; i < 100; ++i) {
    std::vector<double> p{rng.uniform(), rng.uniform(), rng.uniform()};
    std::vector<double> q{p[2], p[0], p[1]};
    CHECK(soft_vote(p) == doctest::Approx(soft_vote(q)).epsilon(1e-15));
  }

  CHECK_THROWS_AS(soft_vote({}), std::invalid_argument);
  CHECK_THROWS_AS(soft_vote({1.2}), std::invalid_argument);
}

TEST_CASE("auroc hand values") {
  CHECK(auroc({1, 0}, {0.9, 0.1}) == 1.0);  // perfect ranking
  CHECK(auroc({1, 0}, {0.1, 0.9}) == 0.0);  // inverted ranking
  CHECK(auroc({1, 0, 1, 0}, {0.5, 0.5, 0.5, 0.5}) == 0.5);  // all tied
  CHECK(auroc({0, 1, 1, 0}, {0.1, 0.4, 0.35, 0.8}) == doctest::Approx(0.5));

  CHECK_THROWS_AS(auroc({1, 1}, {0.5, 0.2}), std::invalid_argument);
  CHECK_THROWS_AS(auroc({0, 0}, {0.5, 0.2}), std::invalid_argument);
  CHECK_THROWS_AS(auroc({1, 0}, {0.5}), std::invalid_argument);
  CHECK_THROWS_AS(auroc({1, 0}, {std::nan(""), 0.1}), std::invalid_argument);
}

TEST_CASE("auroc equals the pairwise oracle on 500 random instances") {
  RngStream rng{3};
  for (int inst = 0; inst < 500; ++inst) {
    const int n = 2 + static_cast<int>(rng.bounded(40));
    std::vector<int> labels(static_cast<std::size_t>(n));
    std::vector<double> scores(static_cast<std::size_t>(n));
    labels[0] = 1;  // force both classes
    labels[1] = 0;
    for (int i = 2; i < n; ++i) labels[static_cast<std::size_t>(i)] = rng.uniform() < 0.5;
    const bool quantise = inst % 2 == 0;  // every other instance carries ties
    for (int i = 0; i < n; ++i) {
      double s = rng.uniform();
      if (quantise) s = std::round(s * 10.0) / 10.0;
      scores[static_cast<std::size_t>(i)] = s;
    }
    const double fast = auroc(labels, scores);
    const double slow = oracle::pairwise_auroc(labels, scores);
    CHECK(std::abs(fast - slow) <= 1e-12);
  }
}

TEST_CASE("auroc is invariant under strictly monotone score transforms") {
  RngStream rng{4};
  std::vector<int> labels;
  std::vector<double> scores;
  for (int i = 0; i < 64; ++i) {
    labels.push_back(rng.uniform() < 0.4);
    scores.push_back(rng.uniform(-3.0, 3.0));
  }
  labels[0] = 1;
  labels[1] = 0;
  const double base = auroc(labels, scores);

  std::vector<double> exp_scores = scores, affine = scores;
  for (double& s : exp_scores) s = std::exp(s);
  for (double& s : affine) s = 2.5 * s + 7.0;
  CHECK(auroc(labels, exp_scores) == doctest::Approx(base).epsilon(1e-15));
  CHECK(auroc(labels, affine) == doctest::Approx(base).epsilon(1e-15));
}

TEST_CASE("evaluate: single member, duplication, determinism") {
  const fs::path dir = temp_dir("eval");
  const DatasetManifest data = gen_synthetic(SynthSpec{16, 32, 0.1, 8}, dir / "data");

  ModelConfig cfg = desk_preset();
  cfg.resolution = 32;
  Model<float> model = Model<float>::build(cfg, 9);
  save_checkpoint(model, dir / "m.ckpt");

  EnsembleSpec one;
  one.members.push_back({dir / "m.ckpt", PipelinePreset::B});
  EvalOptions fast;
  fast.timing = false;
  const EvalReport rep1 = evaluate(one, data, fast);
  CHECK(rep1.n_images == 16);
  CHECK(rep1.auroc >= 0.0);
  CHECK(rep1.auroc <= 1.0);

  // an ensemble of one member reproduces the standalone per-image predictions
  AugmentPipeline ep = make_pipeline(PipelinePreset::B, 32, false);
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const double standalone =
        predict_proba(model, ep, load_image(data.resolve(data.samples[i])));
    CHECK(rep1.scores[i] == standalone);
  }

  // duplicating the same member leaves the AUROC unchanged
  EnsembleSpec tri;
  for (int i = 0; i < 3; ++i) tri.members.push_back(one.members[0]);
  const EvalReport rep3 = evaluate(tri, data, fast);
  CHECK(rep3.auroc == rep1.auroc);

  // deterministic across repeated runs
  const EvalReport again = evaluate(one, data, fast);
  CHECK(again.auroc == rep1.auroc);
  for (std::size_t i = 0; i < again.scores.size(); ++i) CHECK(again.scores[i] == rep1.scores[i]);

  // member probabilities dump has one row per member
  EvalOptions dump = fast;
  dump.dump_member_probs = true;
  const EvalReport repd = evaluate(tri, data, dump);
  REQUIRE(repd.member_probs.size() == 3);
  CHECK(repd.member_probs[0] == repd.member_probs[2]);

  // timing needs more images than the warmup allowance
  EvalOptions timed;
  timed.warmup_images = 20;
  CHECK_THROWS_AS(evaluate(one, data, timed), std::invalid_argument);

  // resolution mismatch between member pipeline and model is rejected:
  // a 16x16-configured model cannot consume the 32-pipeline
  ModelConfig small = desk_preset();
  small.resolution = 16;
  save_checkpoint(Model<float>::build(small, 1), dir / "small.ckpt");
  EnsembleSpec mixed;
  mixed.members.push_back({dir / "small.ckpt", PipelinePreset::B});
  const EvalReport repsmall = evaluate(mixed, data, fast);  // pipeline derives from model: fine
  CHECK(repsmall.n_images == 16);

  EnsembleSpec missing;
  missing.members.push_back({dir / "nope.ckpt", PipelinePreset::A});
  CHECK_THROWS_AS(evaluate(missing, data, fast), UsageError);
  fs::remove_all(dir);
}

TEST_CASE("training improves over an untrained model on separable data") {
  const fs::path dir = temp_dir("ordering");
  const DatasetManifest data = gen_synthetic(SynthSpec{128, 32, 0.0, 77}, dir / "data");
  ModelConfig cfg = desk_preset();
  cfg.resolution = 32;

  for (std::uint64_t seed : {2023ull, 2024ull, 2025ull}) {
    auto [train_m, val_m] = split(data, SplitSpec{0.5, seed, true});

    Model<float> untrained = Model<float>::build(cfg, seed);
    save_checkpoint(untrained, dir / "untrained.ckpt");

    Model<float> trained = Model<float>::build(cfg, seed);
    TrainConfig tc;
    tc.epochs = 5;
    tc.batch_size = 16;
    tc.seed = seed;
    tc.pipeline = make_pipeline(PipelinePreset::B, 32, true);
    fit(trained, train_m, tc, dir / "trained.ckpt");

    EvalOptions fast;
    fast.timing = false;
    EnsembleSpec a, b;
    a.members.push_back({dir / "trained.ckpt", PipelinePreset::B});
    b.members.push_back({dir / "untrained.ckpt", PipelinePreset::B});
    const double auc_trained = evaluate(a, val_m, fast).auroc;
    const double auc_untrained = evaluate(b, val_m, fast).auroc;
    CHECK(auc_trained >= auc_untrained);
  }
  fs::remove_all(dir);
}
