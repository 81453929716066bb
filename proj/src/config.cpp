#include "crpl/config.hpp"

#include <fstream>

namespace crpl {

using nlohmann::json;

std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

void reject_unknown(const json& obj, const char* where, std::initializer_list<const char*> allowed) {
  check_usage(obj.is_object(), "config section '", where, "' must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    check_usage(ok, "unknown key '", it.key(), "' in config section '", where, "'");
  }
}

DataSection parse_data(const json& j) {
  reject_unknown(j, "data",
                 {"kind", "manifest", "dir", "n", "resolution", "difficulty", "seed",
                  "train_fraction", "split_seed", "stratified"});
  DataSection d;
  const std::string kind = j.value("kind", std::string("synthetic"));
  if (kind == "synthetic") {
    d.kind = DataSection::Kind::Synthetic;
  } else if (kind == "manifest") {
    d.kind = DataSection::Kind::Manifest;
    check_usage(j.contains("manifest"), "data.kind is 'manifest' but data.manifest is missing");
  } else {
    throw UsageError(cat("data.kind must be 'synthetic' or 'manifest', got '", kind, "'"));
  }
  if (j.contains("manifest")) d.manifest = j.at("manifest").get<std::string>();
  if (j.contains("dir")) d.dir = j.at("dir").get<std::string>();
  d.synth.n = j.value("n", d.synth.n);
  d.synth.resolution = j.value("resolution", d.synth.resolution);
  d.synth.difficulty = j.value("difficulty", d.synth.difficulty);
  d.synth.seed = j.value("seed", d.synth.seed);
  d.train_fraction = j.value("train_fraction", d.train_fraction);
  d.split_seed = j.value("split_seed", d.split_seed);
  d.stratified = j.value("stratified", d.stratified);
  return d;
}

TrainSection parse_train(const json& j) {
  reject_unknown(j, "train",
                 {"epochs", "batch_size", "lr", "seed", "selection", "init_checkpoint"});
  TrainSection t;
  t.epochs = j.value("epochs", t.epochs);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.lr = j.value("lr", t.lr);
  t.seed = j.value("seed", t.seed);
  t.selection = j.value("selection", t.selection);
  check_usage(t.selection == "train_loss" || t.selection == "val_loss",
              "train.selection must be 'train_loss' or 'val_loss', got '", t.selection, "'");
  if (j.contains("init_checkpoint")) t.init_checkpoint = j.at("init_checkpoint").get<std::string>();
  return t;
}

std::pair<double, double> parse_range(const json& j, const char* name) {
  check_usage(j.is_array() && j.size() == 2, "pipelines.augment.", name,
              " must be a [lo, hi] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

PipelineSection parse_pipelines(const json& j) {
  reject_unknown(j, "pipelines", {"preset", "augment"});
  PipelineSection p;
  if (j.contains("preset")) p.preset = preset_from_string(j.at("preset").get<std::string>());
  if (j.contains("augment")) {
    const json& a = j.at("augment");
    reject_unknown(a, "pipelines.augment",
                   {"random_flips", "flip_p", "random_rotation", "rotation_max_deg",
                    "color_jitter", "brightness", "contrast", "saturation", "hue"});
    p.aug.random_flips = a.value("random_flips", p.aug.random_flips);
    p.aug.flip_p = a.value("flip_p", p.aug.flip_p);
    p.aug.random_rotation = a.value("random_rotation", p.aug.random_rotation);
    p.aug.rotation_max_deg = a.value("rotation_max_deg", p.aug.rotation_max_deg);
    p.aug.color_jitter = a.value("color_jitter", p.aug.color_jitter);
    if (a.contains("brightness"))
      std::tie(p.aug.jitter.brightness_lo, p.aug.jitter.brightness_hi) =
          parse_range(a.at("brightness"), "brightness");
    if (a.contains("contrast"))
      std::tie(p.aug.jitter.contrast_lo, p.aug.jitter.contrast_hi) =
          parse_range(a.at("contrast"), "contrast");
    if (a.contains("saturation"))
      std::tie(p.aug.jitter.saturation_lo, p.aug.jitter.saturation_hi) =
          parse_range(a.at("saturation"), "saturation");
    if (a.contains("hue"))
      std::tie(p.aug.jitter.hue_lo, p.aug.jitter.hue_hi) = parse_range(a.at("hue"), "hue");
  }
  return p;
}

EnsembleSpec parse_ensemble(const json& j) {
  reject_unknown(j, "ensemble", {"members"});
  check_usage(j.contains("members") && j.at("members").is_array() && !j.at("members").empty(),
              "ensemble.members must be a non-empty array");
  EnsembleSpec spec;
  for (const json& m : j.at("members")) {
    reject_unknown(m, "ensemble.members[]", {"checkpoint", "preset"});
    check_usage(m.contains("checkpoint"), "ensemble member is missing 'checkpoint'");
    EnsembleMemberSpec ms;
    ms.checkpoint = m.at("checkpoint").get<std::string>();
    if (m.contains("preset")) ms.preset = preset_from_string(m.at("preset").get<std::string>());
    spec.members.push_back(std::move(ms));
  }
  return spec;
}

}  // namespace

json load_json_file(const std::filesystem::path& path) {
  check_usage(std::filesystem::exists(path), "config file does not exist: ", path.string());
  std::ifstream in(path);
  check_runtime(in.good(), "cannot read ", path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(cat("invalid JSON in ", path.string(), ": ", e.what()));
  }
}

RunConfig parse_run_config_json(const json& j) {
  reject_unknown(j, "<root>", {"data", "model", "train", "pipelines", "ensemble"});
  RunConfig c;
  if (j.contains("data")) {
    c.data = parse_data(j.at("data"));
    c.has_data = true;
  }
  if (j.contains("model")) {
    c.model = model_config_from_json(j.at("model"));
    c.has_model = true;
  }
  if (j.contains("train")) {
    c.train = parse_train(j.at("train"));
    c.has_train = true;
  }
  if (j.contains("pipelines")) {
    c.pipelines = parse_pipelines(j.at("pipelines"));
    c.has_pipelines = true;
  }
  if (j.contains("ensemble")) {
    c.ensemble = parse_ensemble(j.at("ensemble"));
    c.has_ensemble = true;
  }
  c.canonical = j;
  c.hash = fnv1a64_hex(j.dump());
  return c;
}

RunConfig parse_run_config(const std::filesystem::path& path) {
  return parse_run_config_json(load_json_file(path));
}

EnsembleSpec parse_ensemble_file(const std::filesystem::path& path) {
  const json j = load_json_file(path);
  reject_unknown(j, "<root>", {"members"});
  return parse_ensemble(j);
}

}  // namespace crpl
