#include "crpl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "crpl/rng.hpp"

namespace crpl {

DatasetManifest load_manifest(const std::filesystem::path& csv) {
  check_usage(std::filesystem::exists(csv), "manifest does not exist: ", csv.string());
  std::ifstream in(csv);
  check_runtime(in.good(), "cannot read manifest ", csv.string());
  DatasetManifest m;
  m.root = csv.has_parent_path() ? csv.parent_path() : std::filesystem::path(".");
  std::string line;
  check_usage(static_cast<bool>(std::getline(in, line)), "empty manifest: ", csv.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  check_usage(line == "path,label", "manifest ", csv.string(),
              ": expected header 'path,label', got '", line, "'");
  std::int64_t id = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find_last_of(',');
    check_usage(comma != std::string::npos && comma > 0 && comma + 1 < line.size(), "manifest ",
                csv.string(), " row ", id + 2, ": expected 'path,label'");
    const std::string path = line.substr(0, comma);
    const std::string label = line.substr(comma + 1);
    check_usage(label == "0" || label == "1", "manifest ", csv.string(), " row ", id + 2,
                ": label must be 0 or 1, got '", label, "'");
    m.samples.push_back(Sample{std::filesystem::path(path), label == "1" ? 1 : 0, id});
    ++id;
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& csv) {
  std::ofstream out(csv, std::ios::binary);  // binary keeps LF on every platform
  check_runtime(out.good(), "cannot write manifest ", csv.string());
  out << "path,label\n";
  for (const Sample& s : m.samples) out << s.image_path.generic_string() << "," << s.label << "\n";
  check_runtime(out.good(), "write failed for manifest ", csv.string());
}

std::pair<DatasetManifest, DatasetManifest> split(const DatasetManifest& m, const SplitSpec& spec) {
  check_arg(spec.train_fraction > 0.0 && spec.train_fraction < 1.0,
            "split: train_fraction must be in (0,1), got ", spec.train_fraction);
  check_arg(m.samples.size() >= 2, "split: need at least 2 samples, got ", m.samples.size());

  std::vector<std::size_t> train_idx, val_idx;
  auto take = [&](std::vector<std::size_t>& pool, std::uint64_t stream_key) {
    RngStream rng = derive_stream(spec.seed, 0, stream_key, kStreamSplit);
    for (std::size_t i = pool.size(); i > 1; --i)
      std::swap(pool[i - 1], pool[static_cast<std::size_t>(rng.bounded(i))]);
    const auto k = static_cast<std::size_t>(
        std::llround(spec.train_fraction * static_cast<double>(pool.size())));
    for (std::size_t i = 0; i < pool.size(); ++i)
      (i < k ? train_idx : val_idx).push_back(pool[i]);
  };

  if (spec.stratified) {
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < m.samples.size(); ++i)
      by_class[m.samples[i].label].push_back(i);
    for (int c = 0; c < 2; ++c)
      check_arg(by_class[c].size() >= 2, "split: stratification needs >= 2 samples of class ", c,
                ", got ", by_class[c].size());
    for (int c = 0; c < 2; ++c) take(by_class[c], static_cast<std::uint64_t>(c));
  } else {
    std::vector<std::size_t> all(m.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    take(all, 0xA11ull);
  }
  check_arg(!train_idx.empty() && !val_idx.empty(),
            "split: fraction ", spec.train_fraction, " leaves a partition empty");

  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
  DatasetManifest train, val;
  train.root = val.root = m.root;
  for (std::size_t i : train_idx) train.samples.push_back(m.samples[i]);
  for (std::size_t i : val_idx) val.samples.push_back(m.samples[i]);
  return {std::move(train), std::move(val)};
}

}  // namespace crpl
