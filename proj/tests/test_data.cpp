#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <jpeglib.h>

#include <cstdio>
#include <fstream>

#include "crpl/dataset.hpp"
#include "crpl/image_io.hpp"
#include "crpl/metrics.hpp"
#include "crpl/synth.hpp"
#include "oracles.hpp"

using namespace crpl;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  static std::uint64_t counter = 0;
  const fs::path p =
      fs::temp_directory_path() / cat("crpl_test_", tag, "_", ::getpid(), "_", counter++);
  fs::create_directories(p);
  return p;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_solid_jpeg(const fs::path& path, int w, int h, unsigned char r, unsigned char g,
                      unsigned char b) {
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  FILE* f = std::fopen(path.c_str(), "wb");
  REQUIRE(f != nullptr);
  jpeg_stdio_dest(&cinfo, f);
  cinfo.image_width = static_cast<JDIMENSION>(w);
  cinfo.image_height = static_cast<JDIMENSION>(h);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, 95, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
  for (int x = 0; x < w; ++x) {
    row[3 * x] = r;
    row[3 * x + 1] = g;
    row[3 * x + 2] = b;
  }
  unsigned char* rp = row.data();
  while (cinfo.next_scanline < cinfo.image_height) jpeg_write_scanlines(&cinfo, &rp, 1);
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::fclose(f);
}

}  // namespace

TEST_CASE("png round trip") {
  const fs::path dir = temp_dir("png");

  // 1x1 pure red pixel maps to [[1],[0],[0]]
  Image red({3, 1, 1});
  red[0] = 1.0f;
  save_png(dir / "red.png", red);
  Image red_in = load_image(dir / "red.png");
  CHECK(red_in[0] == 1.0f);
  CHECK(red_in[1] == 0.0f);
  CHECK(red_in[2] == 0.0f);

  // all-black image decodes to all zeros
  save_png(dir / "black.png", Image({3, 4, 5}));
  Image black = load_image(dir / "black.png");
  CHECK(black.shape() == std::vector<std::int64_t>{3, 4, 5});
  for (std::int64_t i = 0; i < black.numel(); ++i) CHECK(black[i] == 0.0f);

  // random 8-bit image survives a save/load cycle bit for bit
  RngStream rng{4};
  Image img({3, 9, 7});
  for (std::int64_t i = 0; i < img.numel(); ++i)
    img[i] = static_cast<float>(rng.bounded(256)) / 255.0f;
  save_png(dir / "rand.png", img);
  CHECK(bitwise_equal(load_image(dir / "rand.png"), img));

  // and the encoder is deterministic at the byte level
  save_png(dir / "rand2.png", img);
  CHECK(file_bytes(dir / "rand.png") == file_bytes(dir / "rand2.png"));
  fs::remove_all(dir);
}

TEST_CASE("jpeg decode") {
  const fs::path dir = temp_dir("jpeg");
  write_solid_jpeg(dir / "solid.jpg", 8, 6, 200, 100, 50);
  Image img = load_image(dir / "solid.jpg");
  REQUIRE(img.shape() == std::vector<std::int64_t>{3, 6, 8});
  CHECK(img[0] == doctest::Approx(200 / 255.0).epsilon(0.03));
  CHECK(img.at3(1, 0, 0) == doctest::Approx(100 / 255.0).epsilon(0.05));
  fs::remove_all(dir);
}

TEST_CASE("load_image error paths") {
  const fs::path dir = temp_dir("errs");
  CHECK_THROWS_WITH_AS(load_image(dir / "missing.png"),
                       doctest::Contains("missing.png"), std::runtime_error);

  std::ofstream(dir / "notimage.png") << "this is not an image";
  CHECK_THROWS_AS(load_image(dir / "notimage.png"), std::runtime_error);

  // valid signature, corrupt stream
  std::ofstream(dir / "trunc.png", std::ios::binary)
      << "\x89PNG\r\n\x1a\n garbage that is not a chunk";
  CHECK_THROWS_AS(load_image(dir / "trunc.png"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("manifest csv") {
  const fs::path dir = temp_dir("manifest");
  DatasetManifest m;
  m.root = dir;
  m.samples = {{"a.png", 0, 0}, {"sub/b.png", 1, 1}, {"c.png", 1, 2}};
  save_manifest(m, dir / "manifest.csv");

  const std::string text = file_bytes(dir / "manifest.csv");
  CHECK(text == "path,label\na.png,0\nsub/b.png,1\nc.png,1\n");

  DatasetManifest in = load_manifest(dir / "manifest.csv");
  REQUIRE(in.samples.size() == 3);
  CHECK(in.root == dir);
  CHECK(in.samples[1].image_path == fs::path("sub/b.png"));
  CHECK(in.samples[1].label == 1);
  CHECK(in.samples[2].id == 2);
  CHECK(in.resolve(in.samples[0]) == dir / "a.png");

  CHECK_THROWS_AS(load_manifest(dir / "nope.csv"), UsageError);
  std::ofstream(dir / "badheader.csv") << "file,cls\na.png,0\n";
  CHECK_THROWS_AS(load_manifest(dir / "badheader.csv"), UsageError);
  std::ofstream(dir / "badlabel.csv") << "path,label\na.png,2\n";
  CHECK_THROWS_AS(load_manifest(dir / "badlabel.csv"), UsageError);
  fs::remove_all(dir);
}

namespace {

DatasetManifest fake_manifest(int n0, int n1) {
  DatasetManifest m;
  m.root = ".";
  std::int64_t id = 0;
  for (int i = 0; i < n0 + n1; ++i, ++id)
    m.samples.push_back(Sample{cat("img", id, ".png"), i < n0 ? 0 : 1, id});
  return m;
}

}  // namespace

TEST_CASE("stratified split") {
  // 2 per class at fraction 0.5: one of each class on each side
  auto [t4, v4] = split(fake_manifest(2, 2), SplitSpec{0.5, 1, true});
  auto count = [](const DatasetManifest& m, int label) {
    int c = 0;
    for (const Sample& s : m.samples) c += s.label == label;
    return c;
  };
  CHECK(t4.samples.size() == 2);
  CHECK(count(t4, 0) == 1);
  CHECK(count(t4, 1) == 1);
  CHECK(count(v4, 0) == 1);
  CHECK(count(v4, 1) == 1);

  // identical seeds give identical partitions
  const DatasetManifest m = fake_manifest(90, 112);
  auto [ta, va] = split(m, SplitSpec{0.5, 2024, true});
  auto [tb, vb] = split(m, SplitSpec{0.5, 2024, true});
  REQUIRE(ta.samples.size() == tb.samples.size());
  for (std::size_t i = 0; i < ta.samples.size(); ++i)
    CHECK(ta.samples[i].id == tb.samples[i].id);

  // 90/112 at 0.5 puts 45 and 56 on the train side
  CHECK(count(ta, 0) == 45);
  CHECK(count(ta, 1) == 56);
  CHECK(count(va, 0) == 45);
  CHECK(count(va, 1) == 56);

  // disjoint and exhaustive
  std::vector<bool> seen(m.samples.size(), false);
  for (const Sample& s : ta.samples) seen[static_cast<std::size_t>(s.id)] = true;
  for (const Sample& s : va.samples) {
    CHECK(!seen[static_cast<std::size_t>(s.id)]);
    seen[static_cast<std::size_t>(s.id)] = true;
  }
  for (bool b : seen) CHECK(b);

  // a different seed moves the membership
  auto [tc, vc] = split(m, SplitSpec{0.5, 2025, true});
  bool same = tc.samples.size() == ta.samples.size();
  if (same)
    for (std::size_t i = 0; i < tc.samples.size(); ++i)
      same = same && tc.samples[i].id == ta.samples[i].id;
  CHECK(!same);

  // stratification needs at least 2 samples per class
  CHECK_THROWS_AS(split(fake_manifest(1, 5), SplitSpec{0.5, 1, true}), std::invalid_argument);
  CHECK_THROWS_AS(split(m, SplitSpec{0.0, 1, true}), std::invalid_argument);
  CHECK_THROWS_AS(split(m, SplitSpec{1.0, 1, true}), std::invalid_argument);

  // unstratified path stays disjoint/exhaustive and deterministic
  auto [tu, vu] = split(m, SplitSpec{0.25, 7, false});
  CHECK(tu.samples.size() + vu.samples.size() == m.samples.size());
  auto [tu2, vu2] = split(m, SplitSpec{0.25, 7, false});
  CHECK(tu.samples.size() == tu2.samples.size());
}

TEST_CASE("synthetic generator determinism and balance") {
  const fs::path dir1 = temp_dir("synth1");
  const fs::path dir2 = temp_dir("synth2");
  SynthSpec spec{10, 32, 0.3, 99};
  DatasetManifest m1 = gen_synthetic(spec, dir1);
  DatasetManifest m2 = gen_synthetic(spec, dir2);
  REQUIRE(m1.samples.size() == 10);
  for (int i = 0; i < 10; ++i)
    CHECK(file_bytes(m1.resolve(m1.samples[i])) == file_bytes(m2.resolve(m2.samples[i])));
  CHECK(file_bytes(dir1 / "manifest.csv") == file_bytes(dir2 / "manifest.csv"));

  // labels balanced within one sample
  SynthSpec spec100{100, 32, 0.5, 1};
  DatasetManifest m100 = gen_synthetic(spec100, dir1 / "b");
  int pos = 0;
  for (const Sample& s : m100.samples) pos += s.label;
  CHECK(std::abs(2 * pos - 100) <= 1);

  CHECK_THROWS_AS(gen_synthetic(SynthSpec{4, 16, 0.5, 1}, dir1 / "c"), std::invalid_argument);
  CHECK_THROWS_AS(gen_synthetic(SynthSpec{4, 32, 1.5, 1}, dir1 / "d"), std::invalid_argument);
  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

namespace {

// Threshold blob detector: counts clearly-bright pixels plus clearly-dark
// pixels whose neighbourhood stays inside the disc. Scores lesions, ignores
// vessels and background.
double blob_score(const Image& img) {
  const std::int64_t h = img.dim(1), w = img.dim(2);
  auto luma_at = [&](std::int64_t y, std::int64_t x) {
    return 0.299 * img.at3(0, y, x) + 0.587 * img.at3(1, y, x) + 0.114 * img.at3(2, y, x);
  };
  double score = 0.0;
  for (std::int64_t y = 1; y + 1 < h; ++y)
    for (std::int64_t x = 1; x + 1 < w; ++x) {
      const double l = luma_at(y, x);
      if (l > 0.75) {
        score += 1.0;
      } else if (l > 0.01 && l < 0.10) {
        const double nmin = std::min(std::min(luma_at(y - 1, x), luma_at(y + 1, x)),
                                     std::min(luma_at(y, x - 1), luma_at(y, x + 1)));
        if (nmin > 0.005) score += 1.0;
      }
    }
  return score;
}

}  // namespace

TEST_CASE("difficulty 0 is separable by the blob oracle") {
  const fs::path dir = temp_dir("synth_easy");
  DatasetManifest m = gen_synthetic(SynthSpec{60, 64, 0.0, 2024}, dir);
  std::vector<int> labels;
  std::vector<double> scores;
  for (const Sample& s : m.samples) {
    labels.push_back(s.label);
    scores.push_back(blob_score(load_image(m.resolve(s))));
  }
  CHECK(oracle::pairwise_auroc(labels, scores) == 1.0);
  fs::remove_all(dir);
}
