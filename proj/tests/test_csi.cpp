#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "csihar/csi.hpp"

using namespace csihar;

namespace {

CsiRecording series_recording(std::vector<double> values, double rate = 150.0) {
  CsiRecording rec;
  rec.frames = values.size();
  rec.subcarriers = 1;
  rec.antennas = 1;
  rec.sample_rate = rate;
  rec.magnitudes = std::move(values);
  return rec;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

void spit(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("validate rejects malformed recordings") {
  CsiRecording rec = series_recording({1.0, 2.0, 3.0});
  CHECK_NOTHROW(validate(rec));

  CsiRecording bad_rate = rec;
  bad_rate.sample_rate = 0.0;
  CHECK_THROWS_AS(validate(bad_rate), std::invalid_argument);

  CsiRecording bad_size = rec;
  bad_size.magnitudes.pop_back();
  CHECK_THROWS_AS(validate(bad_size), std::invalid_argument);

  CsiRecording negative = rec;
  negative.magnitudes[1] = -0.25;
  CHECK_THROWS_AS(validate(negative), std::invalid_argument);

  CsiRecording non_finite = rec;
  non_finite.magnitudes[2] = std::nan("");
  CHECK_THROWS_AS(validate(non_finite), std::invalid_argument);
}

TEST_CASE("downsample aggregates disjoint frame groups") {
  CsiRecording rec = series_recording({1, 2, 3, 4, 5});
  CsiRecording mean = downsample(rec, 5, DownsampleMode::Mean);
  REQUIRE(mean.frames == 1);
  CHECK(mean.magnitudes[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(mean.sample_rate == doctest::Approx(30.0));

  CsiRecording jagged = series_recording({1, 9, 2, 8, 3});
  CHECK(downsample(jagged, 5, DownsampleMode::Median).magnitudes[0] == 3.0);
  CHECK(downsample(jagged, 5, DownsampleMode::Min).magnitudes[0] == 1.0);
  CHECK(downsample(jagged, 5, DownsampleMode::Max).magnitudes[0] == 9.0);
}

TEST_CASE("downsample drops remainder frames and keeps labels") {
  CsiRecording rec = series_recording({1, 2, 3, 4, 5, 6, 7});
  rec.label = Activity::Waving;
  CsiRecording out = downsample(rec, 3, DownsampleMode::Max);
  REQUIRE(out.frames == 2);
  CHECK(out.magnitudes[0] == 3.0);
  CHECK(out.magnitudes[1] == 6.0);
  CHECK(out.label == Activity::Waving);
}

TEST_CASE("downsample factor 1 is the identity") {
  auto [rec, pose] = synth_recording(Activity::Running,
                                     {2.0, 150.0, 8, 2, 0.05}, 11);
  for (auto mode : {DownsampleMode::Mean, DownsampleMode::Median,
                    DownsampleMode::Min, DownsampleMode::Max}) {
    CsiRecording out = downsample(rec, 1, mode);
    CHECK(out.frames == rec.frames);
    CHECK(out.sample_rate == rec.sample_rate);
    CHECK(out.magnitudes == rec.magnitudes);
  }
}

TEST_CASE("downsample rejects bad factors") {
  CsiRecording rec = series_recording({1, 2, 3});
  CHECK_THROWS_AS(downsample(rec, 0, DownsampleMode::Mean),
                  std::invalid_argument);
  CHECK_THROWS_AS(downsample(rec, 4, DownsampleMode::Mean),
                  std::invalid_argument);
}

TEST_CASE("every downsampled frame sits between the min and max statistics") {
  auto [rec, pose] = synth_recording(Activity::Jumping,
                                     {3.0, 150.0, 8, 2, 0.1}, 5);
  CsiRecording lo = downsample(rec, 5, DownsampleMode::Min);
  CsiRecording mid = downsample(rec, 5, DownsampleMode::Mean);
  CsiRecording med = downsample(rec, 5, DownsampleMode::Median);
  CsiRecording hi = downsample(rec, 5, DownsampleMode::Max);
  for (std::size_t i = 0; i < lo.magnitudes.size(); ++i) {
    CHECK(lo.magnitudes[i] <= mid.magnitudes[i] + 1e-12);
    CHECK(mid.magnitudes[i] <= hi.magnitudes[i] + 1e-12);
    CHECK(lo.magnitudes[i] <= med.magnitudes[i]);
    CHECK(med.magnitudes[i] <= hi.magnitudes[i]);
  }
}

TEST_CASE("downsample mode names round-trip") {
  for (auto mode : {DownsampleMode::Mean, DownsampleMode::Median,
                    DownsampleMode::Min, DownsampleMode::Max}) {
    CHECK(downsample_mode_from_string(to_string(mode)) == mode);
  }
  CHECK_THROWS_AS(downsample_mode_from_string("mode9"), std::invalid_argument);
}

TEST_CASE("fidelity metrics match the hand-computed tent fixture") {
  CsiRecording orig = series_recording({1, 2, 3, 4, 5, 5, 4, 3, 2, 1});

  CsiRecording mean = downsample(orig, 5, DownsampleMode::Mean);
  REQUIRE(mean.magnitudes == std::vector<double>{3.0, 3.0});
  FidelityReport r_mean = fidelity_metrics(orig, mean);
  CHECK(r_mean.mse_mean == doctest::Approx(0.0).epsilon(1e-20));
  CHECK(r_mean.mse_norm1_diff == doctest::Approx(64.0).epsilon(1e-12));

  CsiRecording mx = downsample(orig, 5, DownsampleMode::Max);
  REQUIRE(mx.magnitudes == std::vector<double>{5.0, 5.0});
  FidelityReport r_max = fidelity_metrics(orig, mx);
  CHECK(r_max.mse_mean == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("windowed fidelity averages per-window reports") {
  CsiRecording orig = series_recording({1, 2, 3, 4, 5, 5, 4, 3, 2, 1});
  CsiRecording mean = downsample(orig, 5, DownsampleMode::Mean);
  FidelityReport r = fidelity_metrics(orig, mean, 5);
  REQUIRE(r.window_len == 5);
  REQUIRE(r.per_window.size() == 2);
  // Each window of [1..5] vs [3]: means equal, stds sqrt(2) vs 0, norm1 4 vs 0.
  for (const auto& w : r.per_window) {
    CHECK(w[0] == doctest::Approx(0.0).epsilon(1e-20));
    CHECK(w[1] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(w[2] == doctest::Approx(16.0).epsilon(1e-12));
  }
  CHECK(r.mse_mean == doctest::Approx(0.0).epsilon(1e-20));
  CHECK(r.mse_std == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.mse_norm1_diff == doctest::Approx(16.0).epsilon(1e-12));
}

TEST_CASE("mean downsampling preserves long-run means to float noise") {
  auto [rec, pose] = synth_recording(Activity::Walking,
                                     {8.0, 150.0, 8, 2, 0.05}, 23);
  REQUIRE(rec.frames % 5 == 0);
  CsiRecording mean = downsample(rec, 5, DownsampleMode::Mean);
  FidelityReport r = fidelity_metrics(rec, mean);
  CHECK(r.mse_mean <= 1e-20);
  FidelityReport r_max = fidelity_metrics(rec, downsample(rec, 5, DownsampleMode::Max));
  CHECK(r_max.mse_mean > r.mse_mean);
}

TEST_CASE("fidelity metrics reject mismatched inputs") {
  CsiRecording orig = series_recording({1, 2, 3, 4, 5, 6});
  CsiRecording down = downsample(orig, 2, DownsampleMode::Mean);
  CsiRecording wrong_geom = down;
  wrong_geom.subcarriers = 2;
  wrong_geom.antennas = 1;
  wrong_geom.frames = 3;
  wrong_geom.magnitudes = {1, 2, 3, 4, 5, 6};
  CHECK_THROWS_AS(fidelity_metrics(orig, wrong_geom), std::invalid_argument);
  CsiRecording longer = series_recording({1, 2, 3, 4, 5, 6, 7});
  CHECK_THROWS_AS(fidelity_metrics(orig, longer), std::invalid_argument);
  CHECK_THROWS_AS(fidelity_metrics(orig, down, 1), std::invalid_argument);
  CHECK_THROWS_AS(fidelity_metrics(orig, down, 99), std::invalid_argument);
}

TEST_CASE("fft magnitude of an impulse is flat") {
  std::vector<double> mag = fft_magnitude({1.0, 0.0, 0.0, 0.0});
  REQUIRE(mag.size() == 4);
  for (double m : mag) CHECK(m == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fft magnitude zero-pads to the next power of two") {
  std::vector<double> mag = fft_magnitude(std::vector<double>(12, 1.0));
  CHECK(mag.size() == 16);
  CHECK(mag[0] == doctest::Approx(12.0).epsilon(1e-12));
  CHECK_THROWS_AS(fft_magnitude({}), std::invalid_argument);
}

TEST_CASE("fft magnitude matches a direct DFT") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> series(32);
  for (double& v : series) v = dist(rng);
  std::vector<double> mag = fft_magnitude(series);
  for (std::size_t k = 0; k < 32; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t n = 0; n < 32; ++n) {
      double ang = -2.0 * 3.14159265358979323846 * static_cast<double>(k * n) / 32.0;
      re += series[n] * std::cos(ang);
      im += series[n] * std::sin(ang);
    }
    CHECK(mag[k] == doctest::Approx(std::hypot(re, im)).epsilon(1e-9));
  }
}

TEST_CASE("constant signals agree at DC and everywhere else in spectrum") {
  CsiRecording orig = series_recording(std::vector<double>(1024, 2.5));
  CsiRecording down = downsample(orig, 4, DownsampleMode::Mean);
  REQUIRE(down.frames == 256);
  std::vector<double> mse = spectrum_mse(orig, down);
  REQUIRE(mse.size() == 129);
  for (double v : mse) CHECK(v <= 1e-18);
}

TEST_CASE("a 1 Hz tone stays the dominant non-DC bin after downsampling") {
  std::vector<double> values(1200);
  for (std::size_t f = 0; f < values.size(); ++f) {
    double t = static_cast<double>(f) / 150.0;
    values[f] = 2.0 + std::sin(2.0 * 3.14159265358979323846 * t);
  }
  CsiRecording orig = series_recording(values);
  CsiRecording down = downsample(orig, 5, DownsampleMode::Mean);

  // Mean-subtract so the DC component cannot leak past the tone once the
  // series is zero-padded.
  auto dominant_hz = [](const CsiRecording& rec) {
    std::vector<double> series(rec.frames);
    double mean = 0.0;
    for (std::size_t f = 0; f < rec.frames; ++f) mean += rec.magnitudes[f];
    mean /= static_cast<double>(rec.frames);
    for (std::size_t f = 0; f < rec.frames; ++f) {
      series[f] = rec.magnitudes[f] - mean;
    }
    std::vector<double> mag = fft_magnitude(series);
    std::size_t best = 1;
    for (std::size_t k = 1; k <= mag.size() / 2; ++k) {
      if (mag[k] > mag[best]) best = k;
    }
    return static_cast<double>(best) * rec.sample_rate /
           static_cast<double>(mag.size());
  };

  CHECK(std::fabs(dominant_hz(orig) - 1.0) < 0.2);
  CHECK(std::fabs(dominant_hz(down) - 1.0) < 0.2);

  std::vector<double> mse = spectrum_mse(orig, down);
  CHECK(mse.size() == 129);
  for (double v : mse) {
    CHECK(v >= 0.0);
    CHECK(std::isfinite(v));
  }
}

TEST_CASE("spectrum_mse rejects degenerate inputs") {
  CsiRecording tiny = series_recording({1.0});
  CHECK_THROWS_AS(spectrum_mse(tiny, tiny), std::invalid_argument);
}

TEST_CASE("windowing yields 26 windows for the reference geometry") {
  std::vector<double> values(12000);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<double>(i);
  CsiRecording rec = series_recording(values);
  rec.label = Activity::Squatting;

  std::vector<CsiWindow> windows = make_windows(rec, 450, 450);
  REQUIRE(windows.size() == 26);
  CHECK(windows[0].start_frame == 0);
  CHECK(windows[25].start_frame == 25 * 450);
  CHECK(windows[3].values[0] == 3 * 450);
  CHECK(windows[3].label == Activity::Squatting);

  CsiRecording down = downsample(rec, 5, DownsampleMode::Mean);
  REQUIRE(down.frames == 2400);
  CHECK(down.sample_rate == doctest::Approx(30.0));
  CHECK(make_windows(down, 90, 90).size() == 26);
}

TEST_CASE("windowing edge cases") {
  CsiRecording rec = series_recording({1, 2, 3, 4});
  CHECK(make_windows(rec, 4, 1).size() == 1);
  CHECK(make_windows(rec, 2, 1).size() == 3);
  CHECK_THROWS_AS(make_windows(rec, 5, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_windows(rec, 2, 0), std::invalid_argument);
}

TEST_CASE("synthetic walking capture has the reference frame counts") {
  SynthConfig config;
  config.subcarriers = 8;
  config.antennas = 2;
  auto [rec, pose] = synth_recording(Activity::Walking, config, 1);
  CHECK(rec.frames == 12000);
  CHECK(rec.sample_rate == doctest::Approx(150.0));
  CHECK(rec.label == Activity::Walking);
  CHECK(pose.frames == 2400);
  CHECK(pose.frame_rate == doctest::Approx(30.0));
  CHECK_NOTHROW(validate(rec));
}

TEST_CASE("synthesis is deterministic per seed") {
  SynthConfig config{4.0, 150.0, 8, 2, 0.05};
  auto [rec_a, pose_a] = synth_recording(Activity::Clapping, config, 99);
  auto [rec_b, pose_b] = synth_recording(Activity::Clapping, config, 99);
  CHECK(rec_a.magnitudes == rec_b.magnitudes);
  CHECK(pose_a.coords == pose_b.coords);
  auto [rec_c, pose_c] = synth_recording(Activity::Clapping, config, 100);
  CHECK(rec_a.magnitudes != rec_c.magnitudes);
}

TEST_CASE("zero-noise clapping keeps leg-linked bands constant") {
  SynthConfig config{4.0, 150.0, 16, 2, 0.0};
  auto [rec, pose] = synth_recording(Activity::Clapping, config, 3);
  // Bands are four consecutive subcarrier quarters; the last two follow the
  // leg groups, which clapping leaves still.
  for (std::size_t s = 8; s < 16; ++s) {
    for (std::size_t a = 0; a < 2; ++a) {
      double first = rec.at(0, s, a);
      for (std::size_t f = 1; f < rec.frames; ++f) {
        CHECK(rec.at(f, s, a) == first);
      }
    }
  }
  double lo = 1e9, hi = -1e9;
  for (std::size_t f = 0; f < rec.frames; ++f) {
    lo = std::min(lo, rec.at(f, 0, 0));
    hi = std::max(hi, rec.at(f, 0, 0));
  }
  CHECK(hi - lo > 0.5);
}

TEST_CASE("synthesis rejects bad configs") {
  SynthConfig config;
  config.duration_s = 0.0;
  CHECK_THROWS_AS(synth_recording(Activity::Walking, config, 1),
                  std::invalid_argument);
  config = SynthConfig{};
  config.noise_sigma = -0.1;
  CHECK_THROWS_AS(synth_recording(Activity::Walking, config, 1),
                  std::invalid_argument);
  config = SynthConfig{};
  CHECK_THROWS_AS(synth_recording(static_cast<Activity>(42), config, 1),
                  std::invalid_argument);
}

TEST_CASE("recording codec round-trips bitwise") {
  SynthConfig config{2.0, 150.0, 6, 3, 0.05};
  auto [rec, pose] = synth_recording(Activity::Wiping, config, 17);
  auto path = temp_file("csihar_roundtrip.csi");
  save_recording(rec, path.string());
  CsiRecording loaded = load_recording(path.string());
  CHECK(loaded.frames == rec.frames);
  CHECK(loaded.subcarriers == rec.subcarriers);
  CHECK(loaded.antennas == rec.antennas);
  CHECK(loaded.sample_rate == rec.sample_rate);
  CHECK(loaded.label == rec.label);
  CHECK(loaded.magnitudes == rec.magnitudes);
  std::filesystem::remove(path);
}

TEST_CASE("recording codec preserves the unlabeled state") {
  CsiRecording rec = series_recording({0.5, 1.5, 2.5});
  auto path = temp_file("csihar_unlabeled.csi");
  save_recording(rec, path.string());
  CsiRecording loaded = load_recording(path.string());
  CHECK_FALSE(loaded.label.has_value());
  std::filesystem::remove(path);
}

TEST_CASE("recording codec reports malformed files with byte offsets") {
  CsiRecording rec = series_recording({1.0, 2.0, 3.0, 4.0});
  rec.label = Activity::Jumping;
  auto path = temp_file("csihar_malformed.csi");
  save_recording(rec, path.string());
  std::string bytes = slurp(path);

  std::string wrong_magic = bytes;
  wrong_magic[0] = 'X';
  spit(path, wrong_magic);
  CHECK_THROWS_WITH_AS(load_recording(path.string()),
                       doctest::Contains("bad magic at byte 0"),
                       std::runtime_error);

  std::string truncated = bytes.substr(0, bytes.size() - 5);
  spit(path, truncated);
  CHECK_THROWS_WITH_AS(load_recording(path.string()),
                       doctest::Contains("truncated at byte"),
                       std::runtime_error);

  std::string trailing = bytes + "!";
  spit(path, trailing);
  CHECK_THROWS_WITH_AS(load_recording(path.string()),
                       doctest::Contains("trailing data"),
                       std::runtime_error);

  std::string bad_label = bytes;
  bad_label[20] = static_cast<char>(200);
  spit(path, bad_label);
  CHECK_THROWS_WITH_AS(load_recording(path.string()),
                       doctest::Contains("unknown label code 200"),
                       std::runtime_error);

  CHECK_THROWS_AS(load_recording(temp_file("csihar_missing.csi").string()),
                  std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("pose csv round-trips exactly") {
  SynthConfig config{1.0, 150.0, 4, 1, 0.0};
  auto [rec, pose] = synth_recording(Activity::Squatting, config, 9);
  auto path = temp_file("csihar_pose.csv");
  save_pose(pose, path.string());
  PoseSequence loaded = load_pose(path.string());
  CHECK(loaded.frames == pose.frames);
  CHECK(loaded.frame_rate == doctest::Approx(30.0));
  CHECK(loaded.coords == pose.coords);
  std::filesystem::remove(path);
}

TEST_CASE("pose csv loader diagnoses malformed rows") {
  auto path = temp_file("csihar_pose_bad.csv");
  {
    SynthConfig config{0.2, 150.0, 4, 1, 0.0};
    auto [rec, pose] = synth_recording(Activity::Waving, config, 2);
    save_pose(pose, path.string());
  }
  std::string text = slurp(path);

  spit(path, "nope\n" + text);
  CHECK_THROWS_WITH_AS(load_pose(path.string()),
                       doctest::Contains("unexpected header"),
                       std::runtime_error);

  std::size_t first_newline = text.find('\n');
  std::string header = text.substr(0, first_newline + 1);
  spit(path, header + "0,1,2\n");
  CHECK_THROWS_WITH_AS(load_pose(path.string()), doctest::Contains("row 2"),
                       std::runtime_error);

  spit(path, header);
  PoseSequence empty = load_pose(path.string());
  CHECK(empty.frames == 0);
  std::filesystem::remove(path);
}
