#include "crpl/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "crpl/checkpoint.hpp"
#include "crpl/config.hpp"
#include "crpl/train.hpp"

namespace crpl {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i)
    s += (i ? ";" : "") + std::to_string(seeds[i]);
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  check_runtime(out.good(), "cannot write ", path.string());
  out << text;
  check_runtime(out.good(), "write failed for ", path.string());
}

void emit_table(const fs::path& csv_path, const std::string& table) {
  write_text(csv_path, table);
  std::cout << table;
  std::cout << "wrote " << csv_path.string() << "\n";
}

// Materialises the dataset a config describes: either loads the manifest or
// renders the synthetic set (deterministic, so regeneration is idempotent).
DatasetManifest resolve_data(const DataSection& d, const fs::path& default_dir) {
  if (d.kind == DataSection::Kind::Manifest) return load_manifest(d.manifest);
  const fs::path dir = d.dir.empty() ? default_dir : d.dir;
  return gen_synthetic(d.synth, dir);
}

struct TrainedCell {
  RunRecord record;
  double val_auroc = 0.0;
  double cpu_time_s = 0.0;  // per-image eval cost, single member
};

// One training cell: split by `seed`, train with the given augmentation
// options, evaluate the resulting checkpoint on the held-out side.
TrainedCell run_cell(const RunConfig& cfg, const DatasetManifest& data, std::uint64_t seed,
                     const AugmentOptions& aug, const fs::path& ckpt_path, bool time_eval) {
  auto [train_m, val_m] =
      split(data, SplitSpec{cfg.data.train_fraction, seed, cfg.data.stratified});
  Model<float> model = Model<float>::build(cfg.model, seed);
  TrainConfig tc;
  tc.epochs = cfg.train.epochs;
  tc.batch_size = cfg.train.batch_size;
  tc.lr = cfg.train.lr;
  tc.seed = seed;
  tc.pipeline = make_pipeline(cfg.pipelines.preset, model.config.resolution, true, aug);
  TrainedCell cell;
  cell.record = fit(model, train_m, tc, ckpt_path);
  EnsembleSpec spec;
  spec.members.push_back(EnsembleMemberSpec{ckpt_path, cfg.pipelines.preset});
  EvalOptions eo;
  eo.timing = time_eval;
  const EvalReport rep = evaluate(spec, val_m, eo);
  cell.val_auroc = rep.auroc;
  cell.cpu_time_s = rep.per_image_cpu_seconds;
  return cell;
}

// ---------------------------------------------------------------------------

void do_synth(const fs::path& out, int n, int resolution, double difficulty, std::uint64_t seed) {
  SynthSpec spec{n, resolution, difficulty, seed};
  const DatasetManifest m = gen_synthetic(spec, out);
  std::cout << "wrote " << m.samples.size() << " images and manifest.csv under " << out.string()
            << "\n";
}

void do_train(const fs::path& config_path, const std::optional<std::uint64_t>& seed_override,
              fs::path run_dir) {
  json doc = load_json_file(config_path);
  if (seed_override) {
    if (!doc.contains("train")) doc["train"] = json::object();
    doc["train"]["seed"] = *seed_override;
  }
  const RunConfig cfg = parse_run_config_json(doc);
  check_usage(cfg.has_model || !cfg.train.init_checkpoint.empty(),
              "train: config needs a 'model' section or train.init_checkpoint");

  if (run_dir.empty())
    run_dir = fs::path("runs") / cat("train-", cfg.hash.substr(0, 8), "-s", cfg.train.seed);
  fs::create_directories(run_dir);
  write_text(run_dir / "config.json", cfg.canonical.dump(2) + "\n");

  try {
    const DatasetManifest data = resolve_data(cfg.data, run_dir / "data");
    auto [train_m, val_m] =
        split(data, SplitSpec{cfg.data.train_fraction, cfg.data.split_seed, cfg.data.stratified});

    Model<float> model =
        cfg.train.init_checkpoint.empty()
            ? Model<float>::build(cfg.model, cfg.train.seed)
            : load_for_finetune(cfg.train.init_checkpoint,
                                cfg.has_model ? cfg.model.num_outputs : 1, cfg.train.seed);

    TrainConfig tc;
    tc.epochs = cfg.train.epochs;
    tc.batch_size = cfg.train.batch_size;
    tc.lr = cfg.train.lr;
    tc.seed = cfg.train.seed;
    tc.pipeline = make_pipeline(cfg.pipelines.preset, model.config.resolution, true,
                                cfg.pipelines.aug);
    if (cfg.train.selection == "val_loss") {
      tc.selection = TrainConfig::Selection::ValLoss;
      tc.val_manifest = &val_m;
    }
    const fs::path ckpt = run_dir / "model.ckpt";
    const RunRecord rec = fit(model, train_m, tc, ckpt);

    EnsembleSpec spec;
    spec.members.push_back(EnsembleMemberSpec{ckpt, cfg.pipelines.preset});
    EvalOptions eo;
    eo.timing = false;
    const EvalReport rep = evaluate(spec, val_m, eo);

    json run{{"config_hash", cfg.hash},
             {"seed", cfg.train.seed},
             {"lr", rec.lr},
             {"epoch_losses", rec.epoch_losses},
             {"selected_epoch", rec.selected_epoch},
             {"cpu_seconds", rec.cpu_seconds},
             {"checkpoint", ckpt.string()},
             {"val_auroc", rep.auroc}};
    write_text(run_dir / "run.json", run.dump(2) + "\n");

    std::cout << "run dir: " << run_dir.string() << "\n"
              << "selected epoch " << rec.selected_epoch << ", loss "
              << fmt(rec.epoch_losses[static_cast<std::size_t>(rec.selected_epoch)])
              << ", held-out auroc " << fmt(rep.auroc) << "\n";
  } catch (const std::exception& e) {
    write_text(run_dir / "FAILED", cat(e.what(), "\n"));
    throw;
  }
}

void do_eval(const fs::path& ensemble_path, const fs::path& manifest_path,
             const fs::path& report_path, const fs::path& csv_path, bool include_decode,
             bool timing) {
  const EnsembleSpec spec = parse_ensemble_file(ensemble_path);
  const DatasetManifest manifest = load_manifest(manifest_path);
  EvalOptions eo;
  eo.include_decode = include_decode;
  eo.timing = timing;
  const EvalReport rep = evaluate(spec, manifest, eo);
  const json j = report_to_json(rep);
  if (!report_path.empty()) write_text(report_path, j.dump(2) + "\n");
  if (!csv_path.empty())
    write_text(csv_path, cat("auroc,cpu_time_s\n", fmt(rep.auroc), ",",
                             fmt(rep.per_image_cpu_seconds), "\n"));
  std::cout << j.dump(2) << "\n";
}

void do_bench(const fs::path& ensemble_path, const fs::path& manifest_path,
              const fs::path& report_path, bool include_decode) {
  const EnsembleSpec spec = parse_ensemble_file(ensemble_path);
  const DatasetManifest manifest = load_manifest(manifest_path);
  EvalOptions eo;
  eo.include_decode = include_decode;
  eo.compute_auroc = false;
  const EvalReport rep = evaluate(spec, manifest, eo);
  json j{{"per_image_cpu_seconds", rep.per_image_cpu_seconds},
         {"n_images", rep.n_images},
         {"members", spec.members.size()}};
  if (!report_path.empty()) write_text(report_path, j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
}

void do_ablate_augment(const fs::path& config_path, std::vector<std::uint64_t> seeds,
                       fs::path out_dir, bool factorial) {
  const RunConfig cfg = parse_run_config(config_path);
  check_usage(cfg.has_model, "ablate-augment: config needs a 'model' section");
  if (seeds.empty()) seeds = {2023, 2024, 2025};
  if (out_dir.empty()) out_dir = fs::path("runs") / cat("ablate-augment-", cfg.hash.substr(0, 8));
  fs::create_directories(out_dir);
  const DatasetManifest data = resolve_data(cfg.data, out_dir / "data");

  struct Row {
    std::string label;
    bool rr, rf, cj;
  };
  std::vector<Row> rows;
  if (factorial) {
    for (int mask = 0; mask < 8; ++mask) {
      const bool rr = mask & 1, rf = mask & 2, cj = mask & 4;
      std::string label = "base";
      if (rr) label += "+rr";
      if (rf) label += "+rf";
      if (cj) label += "+cj";
      rows.push_back({label, rr, rf, cj});
    }
  } else {
    // cumulative grid
    rows = {{"base", false, false, false},
            {"rr", true, false, false},
            {"rr+rf", true, true, false},
            {"rr+rf+cj", true, true, true}};
  }

  std::string table = "aug,cc_resize,rr,rf,cj,auroc,cpu_time_s";
  for (std::uint64_t s : seeds) table += cat(",auroc_", s);
  table += ",config_hash,seeds\n";
  for (const Row& row : rows) {
    AugmentOptions aug = cfg.pipelines.aug;
    aug.random_rotation = row.rr;
    aug.random_flips = row.rf;
    aug.color_jitter = row.cj;
    std::vector<double> aurocs;
    double time_sum = 0.0;
    for (std::uint64_t seed : seeds) {
      const fs::path cell = out_dir / cat(row.label, "-s", seed);
      fs::create_directories(cell);
      const TrainedCell res = run_cell(cfg, data, seed, aug, cell / "model.ckpt", true);
      aurocs.push_back(res.val_auroc);
      time_sum += res.cpu_time_s;
      std::cout << row.label << " seed " << seed << ": auroc " << fmt(res.val_auroc) << "\n";
    }
    const double mean_auroc = soft_vote(aurocs);  // arithmetic mean
    table += cat(row.label, ",1,", row.rr ? 1 : 0, ",", row.rf ? 1 : 0, ",", row.cj ? 1 : 0, ",",
                 fmt(mean_auroc), ",", fmt(time_sum / static_cast<double>(seeds.size())));
    for (double a : aurocs) table += cat(",", fmt(a));
    table += cat(",", cfg.hash, ",", join_seeds(seeds), "\n");
  }
  emit_table(out_dir / "results.csv", table);
}

void do_ablate_ensemble(const fs::path& config_path, fs::path out_dir) {
  const RunConfig cfg = parse_run_config(config_path);
  check_usage(cfg.has_ensemble && cfg.ensemble.members.size() == 3,
              "ablate-ensemble: config needs ensemble.members with exactly 3 trained checkpoints");
  if (out_dir.empty()) out_dir = fs::path("runs") / cat("ablate-ensemble-", cfg.hash.substr(0, 8));
  fs::create_directories(out_dir);
  const DatasetManifest data = resolve_data(cfg.data, out_dir / "data");
  auto [train_m, val_m] =
      split(data, SplitSpec{cfg.data.train_fraction, cfg.data.split_seed, cfg.data.stratified});
  (void)train_m;

  static const int kSubsets[7][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0},
                                     {1, 0, 1}, {0, 1, 1}, {1, 1, 1}};
  std::string table = "member1,member2,member3,auroc,cpu_time_s,config_hash\n";
  for (const auto& mask : kSubsets) {
    EnsembleSpec sub;
    for (int m = 0; m < 3; ++m)
      if (mask[m]) sub.members.push_back(cfg.ensemble.members[static_cast<std::size_t>(m)]);
    const EvalReport rep = evaluate(sub, val_m, EvalOptions{});
    table += cat(mask[0], ",", mask[1], ",", mask[2], ",", fmt(rep.auroc), ",",
                 fmt(rep.per_image_cpu_seconds), ",", cfg.hash, "\n");
  }
  emit_table(out_dir / "results.csv", table);
}

void do_compare_backbones(const std::vector<fs::path>& config_paths,
                          std::vector<std::uint64_t> seeds, fs::path out_dir) {
  check_usage(!config_paths.empty(), "compare-backbones: needs at least one --config");
  if (seeds.empty()) seeds = {2023, 2024, 2025};
  std::vector<RunConfig> cfgs;
  for (const fs::path& p : config_paths) {
    cfgs.push_back(parse_run_config(p));
    check_usage(cfgs.back().has_model, "compare-backbones: ", p.string(),
                " needs a 'model' section");
  }
  if (out_dir.empty())
    out_dir = fs::path("runs") / cat("compare-", cfgs.front().hash.substr(0, 8));
  fs::create_directories(out_dir);
  // all rows share the first config's dataset and split policy
  const DatasetManifest data = resolve_data(cfgs.front().data, out_dir / "data");

  std::string table = "model";
  for (std::uint64_t s : seeds) table += cat(",auroc_", s);
  table += ",auroc_mean,params,config_hash\n";
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    RunConfig cfg = cfgs[i];
    cfg.data = cfgs.front().data;
    const std::string name = config_paths[i].stem().string();
    std::vector<double> aurocs;
    std::int64_t params = 0;
    for (std::uint64_t seed : seeds) {
      const fs::path cell = out_dir / cat(name, "-s", seed);
      fs::create_directories(cell);
      const TrainedCell res =
          run_cell(cfg, data, seed, cfg.pipelines.aug, cell / "model.ckpt", false);
      aurocs.push_back(res.val_auroc);
      std::cout << name << " seed " << seed << ": auroc " << fmt(res.val_auroc) << "\n";
    }
    params = Model<float>::build(cfg.model, 0).trainable_param_count();
    table += name;
    for (double a : aurocs) table += cat(",", fmt(a));
    table += cat(",", fmt(soft_vote(aurocs)), ",", params, ",", cfg.hash, "\n");
  }
  emit_table(out_dir / "results.csv", table);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"CPU-budget binary image classifier toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic labelled dataset");
  fs::path synth_out;
  int synth_n = 512, synth_res = 64;
  double synth_diff = 0.3;
  std::uint64_t synth_seed = 7;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--n", synth_n, "number of images");
  synth->add_option("--resolution", synth_res, "square image extent (>= 32)");
  synth->add_option("--difficulty", synth_diff, "lesion subtlety in [0,1]");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->callback([&] { do_synth(synth_out, synth_n, synth_res, synth_diff, synth_seed); });

  // train
  auto* train = app.add_subcommand("train", "train one model from a run config");
  fs::path train_cfg, train_out;
  std::optional<std::uint64_t> train_seed;
  train->add_option("--config", train_cfg, "run config JSON")->required();
  train->add_option("--seed", train_seed, "override train.seed");
  train->add_option("--out", train_out, "run directory");
  train->callback([&] { do_train(train_cfg, train_seed, train_out); });

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a soft-voting ensemble on a manifest");
  fs::path eval_ens, eval_manifest, eval_report, eval_csv;
  bool eval_decode = false, eval_no_timing = false;
  eval->add_option("--ensemble", eval_ens, "ensemble spec JSON")->required();
  eval->add_option("--manifest", eval_manifest, "dataset manifest CSV")->required();
  eval->add_option("--report", eval_report, "write report JSON here");
  eval->add_option("--csv", eval_csv, "write a one-row CSV here");
  eval->add_flag("--include-decode", eval_decode, "time image decode as part of the per-image cost");
  eval->add_flag("--no-timing", eval_no_timing, "skip the timing pass");
  eval->callback([&] {
    do_eval(eval_ens, eval_manifest, eval_report, eval_csv, eval_decode, !eval_no_timing);
  });

  // ablate-augment
  auto* abaug = app.add_subcommand("ablate-augment",
                                   "cumulative augmentation grid: train + evaluate each row");
  fs::path abaug_cfg, abaug_out;
  std::vector<std::uint64_t> abaug_seeds;
  bool abaug_fact = false;
  abaug->add_option("--config", abaug_cfg, "run config JSON")->required();
  abaug->add_option("--seeds", abaug_seeds, "seed list")->delimiter(',');
  abaug->add_option("--out", abaug_out, "output directory");
  abaug->add_flag("--factorial", abaug_fact, "full 2^3 grid instead of the cumulative rows");
  abaug->callback([&] { do_ablate_augment(abaug_cfg, abaug_seeds, abaug_out, abaug_fact); });

  // ablate-ensemble
  auto* abens = app.add_subcommand("ablate-ensemble",
                                   "evaluate every non-empty subset of 3 trained members");
  fs::path abens_cfg, abens_out;
  abens->add_option("--config", abens_cfg, "run config JSON with ensemble.members")->required();
  abens->add_option("--out", abens_out, "output directory");
  abens->callback([&] { do_ablate_ensemble(abens_cfg, abens_out); });

  // compare-backbones
  auto* cmp = app.add_subcommand("compare-backbones",
                                 "seed-sweep comparison of model configs on one dataset");
  std::vector<fs::path> cmp_cfgs;
  std::vector<std::uint64_t> cmp_seeds;
  fs::path cmp_out;
  cmp->add_option("--config", cmp_cfgs, "run config JSON (repeatable, one row each)")->required();
  cmp->add_option("--seeds", cmp_seeds, "seed list")->delimiter(',');
  cmp->add_option("--out", cmp_out, "output directory");
  cmp->callback([&] { do_compare_backbones(cmp_cfgs, cmp_seeds, cmp_out); });

  // bench
  auto* bench = app.add_subcommand("bench", "per-image timing of an ensemble (no labels needed)");
  fs::path bench_ens, bench_manifest, bench_report;
  bool bench_decode = false;
  bench->add_option("--ensemble", bench_ens, "ensemble spec JSON")->required();
  bench->add_option("--manifest", bench_manifest, "dataset manifest CSV")->required();
  bench->add_option("--report", bench_report, "write report JSON here");
  bench->add_flag("--include-decode", bench_decode, "time image decode too");
  bench->callback([&] { do_bench(bench_ens, bench_manifest, bench_report, bench_decode); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace crpl
