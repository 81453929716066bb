#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>

#include "crpl/augment.hpp"
#include "crpl/metrics.hpp"
#include "crpl/model.hpp"
#include "crpl/synth.hpp"

namespace crpl {

// Run configuration file: a JSON object with sections `data`, `model`,
// `train`, `pipelines` and `ensemble` (each optional; commands check for the
// sections they need). Unknown keys anywhere are rejected. The canonical
// (key-sorted) dump of the parsed document is hashed with FNV-1a 64 and the
// hash is carried into every emitted artifact for provenance.

struct DataSection {
  enum class Kind { Synthetic, Manifest } kind = Kind::Synthetic;
  std::filesystem::path manifest;  // Kind::Manifest
  std::filesystem::path dir;       // Kind::Synthetic output dir; empty = under the run dir
  SynthSpec synth;
  double train_fraction = 0.5;
  std::uint64_t split_seed = 0;
  bool stratified = true;
};

struct TrainSection {
  int epochs = 10;
  int batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 2024;
  std::string selection = "train_loss";  // or "val_loss"
  std::filesystem::path init_checkpoint;  // optional fine-tune source
};

struct PipelineSection {
  PipelinePreset preset = PipelinePreset::B;
  AugmentOptions aug;
};

struct RunConfig {
  DataSection data;
  ModelConfig model;
  TrainSection train;
  PipelineSection pipelines;
  EnsembleSpec ensemble;
  bool has_data = false, has_model = false, has_train = false, has_pipelines = false,
       has_ensemble = false;
  nlohmann::json canonical;
  std::string hash;  // 16 hex digits
};

std::string fnv1a64_hex(const std::string& bytes);

// Reads and parses a JSON file; missing file or malformed JSON is a usage
// error.
nlohmann::json load_json_file(const std::filesystem::path& path);

RunConfig parse_run_config_json(const nlohmann::json& j);
RunConfig parse_run_config(const std::filesystem::path& path);

// Standalone ensemble spec file: {"members": [{"checkpoint": ..., "preset": ...}, ...]}.
EnsembleSpec parse_ensemble_file(const std::filesystem::path& path);

}  // namespace crpl
