#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "ionread/imaging.hpp"
#include "ionread/rng.hpp"

using namespace ionread;
using imaging::Frame;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("ionread_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

Frame random_frame(int w, int h, std::mt19937_64& gen) {
  Frame f(w, h);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& p : f.pixels) p = static_cast<std::uint8_t>(d(gen));
  return f;
}

}  // namespace

TEST_CASE("load_pgm maps P5 bytes directly") {
  auto dir = temp_dir("pgm_load");
  std::string bytes = "P5\n2 2\n255\n";
  bytes += '\0';
  bytes += '\xff';
  bytes += '\x07';
  bytes += '\x09';
  write_bytes(dir / "a.pgm", bytes);
  Frame f = imaging::load_pgm(dir / "a.pgm");
  CHECK(f.width == 2);
  CHECK(f.height == 2);
  CHECK(f.pixels == std::vector<std::uint8_t>{0, 255, 7, 9});
}

TEST_CASE("load_pgm accepts header comments and flexible whitespace") {
  auto dir = temp_dir("pgm_comments");
  std::string bytes = "P5\n# a comment\n 2 # inline\n1\t255 ";
  bytes += '\x01';
  bytes += '\x02';
  write_bytes(dir / "c.pgm", bytes);
  Frame f = imaging::load_pgm(dir / "c.pgm");
  CHECK(f.width == 2);
  CHECK(f.height == 1);
  CHECK(f.pixels == std::vector<std::uint8_t>{1, 2});
}

TEST_CASE("load_pgm rejects bad files with the offending field named") {
  auto dir = temp_dir("pgm_bad");

  write_bytes(dir / "maxval.pgm", "P5\n2 2\n65535\n" + std::string(8, 'x'));
  CHECK_THROWS_WITH_AS(imaging::load_pgm(dir / "maxval.pgm"),
                       doctest::Contains("unsupported maxval"), std::runtime_error);

  write_bytes(dir / "magic.pgm", "P6\n2 2\n255\nxxxx");
  CHECK_THROWS_WITH_AS(imaging::load_pgm(dir / "magic.pgm"), doctest::Contains("magic"),
                       std::runtime_error);

  write_bytes(dir / "trunc.pgm", "P5\n4 4\n255\nxx");
  CHECK_THROWS_WITH_AS(imaging::load_pgm(dir / "trunc.pgm"),
                       doctest::Contains("truncated pixel data"), std::runtime_error);

  CHECK_THROWS_AS(imaging::load_pgm(dir / "missing.pgm"), std::runtime_error);
}

TEST_CASE("save_pgm writes canonical single-pixel files") {
  auto dir = temp_dir("pgm_save");
  imaging::save_pgm(Frame(1, 1, 0), dir / "black.pgm");
  CHECK(read_bytes(dir / "black.pgm") == std::string("P5\n1 1\n255\n") + '\0');

  imaging::save_pgm(Frame(2, 1, 255), dir / "white.pgm");
  CHECK(read_bytes(dir / "white.pgm") == std::string("P5\n2 1\n255\n") + "\xff\xff");
}

TEST_CASE("pgm round trip is the identity on random frames") {
  auto dir = temp_dir("pgm_roundtrip");
  auto gen = rng::engine(13);
  for (int trial = 0; trial < 25; ++trial) {
    Frame f = random_frame(200, 32, gen);
    imaging::save_pgm(f, dir / "f.pgm");
    Frame g = imaging::load_pgm(dir / "f.pgm");
    REQUIRE(g == f);
    imaging::save_pgm(g, dir / "g.pgm");
    REQUIRE(read_bytes(dir / "f.pgm") == read_bytes(dir / "g.pgm"));
  }
}

TEST_CASE("manifest round trip and validation") {
  auto dir = temp_dir("manifest");
  imaging::save_pgm(Frame(4, 4, 10), dir / "img0.pgm");
  imaging::save_pgm(Frame(4, 4, 20), dir / "img1.pgm");

  SUBCASE("labeled entries load back") {
    imaging::DatasetManifest m;
    m.n_ions = 10;
    m.name = "toy";
    m.entries = {{"img0.pgm", "0000000000"}, {"img1.pgm", "1111111111"}};
    imaging::save_manifest(m, dir / "manifest.json");
    auto r = imaging::load_manifest(dir / "manifest.json");
    REQUIRE(r.entries.size() == 2);
    CHECK(r.n_ions == 10);
    CHECK(r.entries[0].label == "0000000000");
    CHECK(r.entries[1].label == "1111111111");
  }

  SUBCASE("label length must match n_ions") {
    imaging::DatasetManifest m;
    m.n_ions = 10;
    m.entries = {{"img0.pgm", "01"}};
    imaging::save_manifest(m, dir / "bad.json");
    CHECK_THROWS_WITH_AS(imaging::load_manifest(dir / "bad.json"),
                         doctest::Contains("length"), std::runtime_error);
  }

  SUBCASE("absent labels mean unsupervised mode") {
    imaging::DatasetManifest m;
    m.n_ions = 10;
    m.entries = {{"img0.pgm", std::nullopt}, {"img1.pgm", std::nullopt}};
    imaging::save_manifest(m, dir / "unlabeled.json");
    auto r = imaging::load_manifest(dir / "unlabeled.json");
    REQUIRE(r.entries.size() == 2);
    CHECK(!r.entries[0].label.has_value());
  }

  SUBCASE("missing image file is an error") {
    imaging::DatasetManifest m;
    m.n_ions = 10;
    m.entries = {{"gone.pgm", std::nullopt}};
    imaging::save_manifest(m, dir / "gone.json");
    CHECK_THROWS_WITH_AS(imaging::load_manifest(dir / "gone.json"),
                         doctest::Contains("missing image"), std::runtime_error);
  }
}

TEST_CASE("sample_states draws fair independent bits") {
  const int n_ions = 5, n_frames = 100000;
  auto states = imaging::sample_states(n_ions, n_frames, 99);
  REQUIRE(states.size() == n_frames);
  for (int i = 0; i < n_ions; ++i) {
    long ones = 0;
    for (const auto& s : states) ones += s[i] == '1';
    double freq = static_cast<double>(ones) / n_frames;
    CHECK(freq == doctest::Approx(0.5).epsilon(0.02));  // +-0.01 absolute
  }
}

TEST_CASE("sample_states is reproducible and shaped") {
  CHECK(imaging::sample_states(10, 50, 7) == imaging::sample_states(10, 50, 7));
  CHECK(imaging::sample_states(10, 50, 7) != imaging::sample_states(10, 50, 8));
  auto tiny = imaging::sample_states(1, 4, 3);
  REQUIRE(tiny.size() == 4);
  for (const auto& s : tiny) CHECK(s.size() == 1);
}

TEST_CASE("synth_frame: silent configuration yields an all-zero frame") {
  imaging::SynthParams p;
  p.dark_photon_mean = 0;
  p.background_mean = 0;
  auto layout = imaging::make_layout(p);
  Frame f = imaging::synth_frame(p, layout, std::string(10, '1'), 42);
  for (auto v : f.pixels) CHECK(v == 0);
}

TEST_CASE("synth_frame: bright ions clear the brightness threshold") {
  imaging::SynthParams p;
  auto layout = imaging::make_layout(p);
  auto boxes = localization::anchor_boxes(layout, 16, 16, p.frame_width, p.frame_height);
  const int frames = 1000;
  int ok_frames = 0;
  for (int t = 0; t < frames; ++t) {
    Frame f = imaging::synth_frame(p, layout, std::string(10, '0'), rng::substream(5, t));
    bool all_above = true;
    for (const auto& box : boxes) {
      int mx = 0;
      for (int y = box.y0; y < box.y0 + box.height; ++y)
        for (int x = box.x0; x < box.x0 + box.width; ++x) mx = std::max<int>(mx, f.at(x, y));
      if (mx <= 153) all_above = false;
    }
    ok_frames += all_above;
  }
  CHECK(ok_frames >= 999);  // >= 99.9 % of frames
}

TEST_CASE("synth_frame: a lone bright ion peaks near its center") {
  imaging::SynthParams p;
  p.n_ions = 1;
  p.spacing = imaging::UniformSpacing{100.0, 18.0, 16.0};
  auto layout = imaging::make_layout(p);
  const int frames = 500;
  int near = 0;
  for (int t = 0; t < frames; ++t) {
    Frame f = imaging::synth_frame(p, layout, "0", rng::substream(17, t));
    int bx = 0, by = 0, best = -1;
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x)
        if (f.at(x, y) > best) {
          best = f.at(x, y);
          bx = x;
          by = y;
        }
    double d = std::hypot(bx - 100.0, by - 16.0);
    if (d <= 3 * p.psf_sigma) ++near;
  }
  CHECK(near >= 495);  // >= 99 % of frames
}

TEST_CASE("synth_frame: bright boxes outshine dark boxes by far") {
  imaging::SynthParams p;
  auto layout = imaging::make_layout(p);
  auto boxes = localization::anchor_boxes(layout, 16, 16, p.frame_width, p.frame_height);
  const int frames = 10000;
  auto states = imaging::sample_states(p.n_ions, frames, 21);

  double sum[2] = {0, 0}, sum2[2] = {0, 0};
  long count[2] = {0, 0};
  for (int t = 0; t < frames; ++t) {
    Frame f = imaging::synth_frame(p, layout, states[t], rng::substream(23, t));
    for (int i = 0; i < p.n_ions; ++i) {
      int mx = 0;
      for (int y = boxes[i].y0; y < boxes[i].y0 + boxes[i].height; ++y)
        for (int x = boxes[i].x0; x < boxes[i].x0 + boxes[i].width; ++x)
          mx = std::max<int>(mx, f.at(x, y));
      int cls = states[t][i] == '0' ? 0 : 1;
      sum[cls] += mx;
      sum2[cls] += static_cast<double>(mx) * mx;
      count[cls]++;
    }
  }
  REQUIRE(count[0] > 1000);
  REQUIRE(count[1] > 1000);
  double mean0 = sum[0] / count[0], mean1 = sum[1] / count[1];
  double var0 = sum2[0] / count[0] - mean0 * mean0;
  double var1 = sum2[1] / count[1] - mean1 * mean1;
  double se = std::sqrt(var0 / count[0] + var1 / count[1]);
  CHECK(mean0 - mean1 > 5 * se);
}

TEST_CASE("synth_frame is deterministic per substream and validates inputs") {
  imaging::SynthParams p;
  auto layout = imaging::make_layout(p);
  auto states = imaging::sample_states(10, 1, 1)[0];
  CHECK(imaging::synth_frame(p, layout, states, 77) == imaging::synth_frame(p, layout, states, 77));
  CHECK(imaging::synth_frame(p, layout, states, 77) != imaging::synth_frame(p, layout, states, 78));
  CHECK_THROWS_AS(imaging::synth_frame(p, layout, "01", 1), std::invalid_argument);

  imaging::SynthParams bad = p;
  bad.bright_photon_mean = 1.0;
  bad.dark_photon_mean = 2.0;
  CHECK_THROWS_AS(imaging::synth_frame(bad, layout, states, 1), std::invalid_argument);
}

TEST_CASE("synth_dataset writes frames plus a loadable labeled manifest") {
  auto dir = temp_dir("synth_dataset");

  SUBCASE("zero frames give an empty manifest") {
    auto m = imaging::synth_dataset(imaging::SynthParams{}, 0, dir, 3);
    CHECK(m.entries.empty());
    CHECK(imaging::load_manifest(dir / "manifest.json").entries.empty());
  }

  SUBCASE("sampled labels round trip and match the RNG substream") {
    imaging::SynthParams p;
    auto m = imaging::synth_dataset(p, 25, dir, 11, std::nullopt, "h1-small");
    REQUIRE(m.entries.size() == 25);
    auto loaded = imaging::load_manifest(dir / "manifest.json");
    auto expected = imaging::sample_states(p.n_ions, 25, rng::substream(11, 0));
    for (int i = 0; i < 25; ++i) REQUIRE(loaded.entries[i].label == expected[i]);
    auto frames = imaging::load_frames(loaded, dir / "manifest.json");
    REQUIRE(frames.size() == 25);
    auto layout = imaging::make_layout(p);
    CHECK(frames[7] == imaging::synth_frame(p, layout, expected[7], rng::substream(11, 8)));
  }

  SUBCASE("forced all-bright labels") {
    auto m =
        imaging::synth_dataset(imaging::SynthParams{}, 5, dir, 4, std::string(10, '0'), "ab");
    for (const auto& e : m.entries) CHECK(e.label == std::string(10, '0'));
  }
}

TEST_CASE("load_pgm survives random junk without crashing") {
  auto dir = temp_dir("pgm_junk");
  auto gen = rng::engine(66);
  std::uniform_int_distribution<int> byte(0, 255), len(0, 64);
  for (int trial = 0; trial < 200; ++trial) {
    std::string bytes;
    if (trial % 3 == 0) bytes = "P5";  // sometimes a plausible prefix
    int n = len(gen);
    for (int i = 0; i < n; ++i) bytes += static_cast<char>(byte(gen));
    write_bytes(dir / "junk.pgm", bytes);
    try {
      Frame f = imaging::load_pgm(dir / "junk.pgm");
      CHECK(f.pixels.size() == static_cast<std::size_t>(f.width) * f.height);
    } catch (const std::runtime_error&) {
      // rejection is the expected outcome for junk
    }
  }
}

TEST_CASE("synth_frames is identical across worker counts") {
  imaging::SynthParams p;
  auto layout = imaging::make_layout(p);
  auto states = imaging::sample_states(10, 24, 101);
  auto serial = imaging::synth_frames(p, layout, states, 55, 1);
  auto parallel = imaging::synth_frames(p, layout, states, 55, 3);
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) REQUIRE(serial[i] == parallel[i]);
}

TEST_CASE("equilibrium spacing layout stays inside the frame and is ordered") {
  imaging::SynthParams p;
  imaging::EquilibriumSpacing eq;
  eq.trap.ion_mass = 171 * 1.66053906660e-27;
  eq.trap.trap_frequency = 2 * M_PI * 150e3;
  p.spacing = eq;
  auto layout = imaging::make_layout(p);
  REQUIRE(layout.centers.size() == 10);
  CHECK(layout.centers.front()[0] == doctest::Approx(eq.margin));
  CHECK(layout.centers.back()[0] == doctest::Approx(p.frame_width - eq.margin));
  for (std::size_t i = 1; i < layout.centers.size(); ++i)
    CHECK(layout.centers[i][0] > layout.centers[i - 1][0]);
  // equilibrium chains bunch toward the middle
  double edge_gap = layout.centers[1][0] - layout.centers[0][0];
  double mid_gap = layout.centers[5][0] - layout.centers[4][0];
  CHECK(mid_gap < edge_gap);
}
