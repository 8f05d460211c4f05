#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "csihar/models.hpp"

using namespace csihar;

namespace {

Tensor sample_window(Activity activity, std::size_t subcarriers,
                     std::size_t antennas, std::uint64_t seed,
                     double noise = 0.05) {
  SynthConfig config;
  config.duration_s = 3.0;
  config.subcarriers = subcarriers;
  config.antennas = antennas;
  config.noise_sigma = noise;
  auto [rec, pose] = synth_recording(activity, config, seed);
  CsiRecording down = downsample(rec, 5, DownsampleMode::Mean);
  return window_tensor(make_windows(down, 90, 90).at(0));
}

ModelParams zeroed(const ModelParams& base) {
  std::vector<Tensor> tensors;
  tensors.reserve(base.tensors.size());
  for (const Tensor& t : base.tensors) {
    tensors.push_back(Tensor::zeros(t.shape(), t.requires_grad()));
  }
  return with_tensors(base, std::move(tensors));
}

void check_distribution(const Tensor& dist, std::size_t arity) {
  REQUIRE(dist.shape() == std::vector<std::size_t>{arity});
  double sum = 0.0;
  for (double p : dist.values()) {
    CHECK(p >= 0.0);
    sum += p;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

}  // namespace

TEST_CASE("channel schedule follows the divide-by-1.5 rule") {
  CHECK(channel_schedule({65, 3, 3}) == std::vector<std::size_t>{28, 43, 65});
  CHECK(channel_schedule({9, 2, 3}) == std::vector<std::size_t>{6, 9});
  CHECK(channel_schedule({3, 3, 3}) == std::vector<std::size_t>{1, 2, 3});
  CHECK_THROWS_AS(channel_schedule({4, 4, 3}), std::invalid_argument);
  CHECK_THROWS_AS(channel_schedule({2, 3, 3}), std::invalid_argument);
  CHECK_THROWS_AS(channel_schedule({65, 3, 4}), std::invalid_argument);
  CHECK_THROWS_AS(channel_schedule({65, 0, 3}), std::invalid_argument);
}

TEST_CASE("antenna average mixes the antenna axis") {
  Tape tape;

  Tensor equal({2, 1, 3}, {5.0, 5.0, 5.0, 2.0, 2.0, 2.0});
  Tensor norm({3}, {0.2, 0.3, 0.5});
  Tensor avg = antenna_average(tape, equal, norm);
  CHECK(avg.shape() == std::vector<std::size_t>{2, 1});
  CHECK(avg.values()[0] == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(avg.values()[1] == doctest::Approx(2.0).epsilon(1e-12));

  Tensor ramp({1, 1, 4}, {1.0, 2.0, 3.0, 4.0});
  Tensor quarter = Tensor::full({4}, 0.25);
  CHECK(antenna_average(tape, ramp, quarter).values()[0] ==
        doctest::Approx(2.5).epsilon(1e-12));

  Tensor single({2, 2, 1}, {1.0, 2.0, 3.0, 4.0});
  Tensor one = Tensor::full({1}, 1.0);
  CHECK(antenna_average(tape, single, one).values() ==
        std::vector<double>{1.0, 2.0, 3.0, 4.0});

  CHECK_THROWS_AS(antenna_average(tape, ramp, norm), std::invalid_argument);
  CHECK_THROWS_AS(antenna_average(tape, norm, norm), std::invalid_argument);
}

TEST_CASE("model II produces a 7-class distribution") {
  SnnModelSpec spec;
  spec.hidden_dim = 6;
  ModelParams params = init_snn_params(spec, 8, 2, 42);
  Tensor window = sample_window(Activity::Running, 8, 2, 1);

  Tape tape;
  Tensor dist = snn_forward(tape, window, spec, params);
  check_distribution(dist, 7);

  Tape tape2;
  Tensor again = snn_forward(tape2, window, spec, params);
  CHECK(again.values() == dist.values());
}

TEST_CASE("zero weights and zero input give a uniform distribution") {
  SnnModelSpec spec;
  spec.hidden_dim = 5;
  ModelParams params = zeroed(init_snn_params(spec, 4, 1, 7));
  Tensor window = Tensor::zeros({90, 4, 1});

  Tape tape;
  Tensor dist = snn_forward(tape, window, spec, params);
  for (double p : dist.values()) {
    CHECK(p == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  }

  CnnSpec cnn{5, 3, 3};
  ModelParams cnn_params = zeroed(init_cnn_params(cnn, 90, 8, 2, 7));
  Tape tape2;
  Tensor cnn_dist =
      cnn_forward(tape2, Tensor::zeros({90, 8, 2}), cnn, cnn_params);
  for (double p : cnn_dist.values()) {
    CHECK(p == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  }
}

TEST_CASE("model I flattens a single spiking pass") {
  SnnModelSpec spec;
  spec.variant = SnnVariant::ModelI;
  spec.hidden_dim = 3;
  ModelParams params = init_snn_params(spec, 4, 1, 11);
  CHECK(params.at("w1").shape() == std::vector<std::size_t>{360, 3});
  Tensor window = sample_window(Activity::Jumping, 4, 1, 2);
  Tape tape;
  check_distribution(snn_forward(tape, window, spec, params), 7);
}

TEST_CASE("feature head emits window and per-interval distributions") {
  SnnModelSpec spec;
  spec.variant = SnnVariant::FeatureHead;
  spec.feature_arity = 3;
  ModelParams params = init_snn_params(spec, 8, 2, 13);
  CHECK(params.at("w1").shape() == std::vector<std::size_t>{8, 3});
  CHECK(params.names.size() == 3);

  Tensor window = sample_window(Activity::Squatting, 8, 2, 3);
  Tape tape;
  SnnOutputs out = snn_outputs(tape, window, spec, params);
  check_distribution(out.distribution, 3);
  REQUIRE(out.interval_distributions.size() == 10);
  for (const Tensor& d : out.interval_distributions) {
    check_distribution(d, 3);
  }
  CHECK(out.first_layer_spikes >= 0.0);
}

TEST_CASE("snn rejects wrong window geometry") {
  SnnModelSpec spec;
  ModelParams params = init_snn_params(spec, 4, 1, 3);
  Tape tape;
  CHECK_THROWS_AS(snn_forward(tape, Tensor::zeros({89, 4, 1}), spec, params),
                  std::invalid_argument);
  CHECK_THROWS_AS(snn_forward(tape, Tensor::zeros({90, 4}), spec, params),
                  std::invalid_argument);
}

TEST_CASE("spec validation rejects degenerate configs") {
  SnnModelSpec spec;
  spec.hidden_dim = 0;
  CHECK_THROWS_AS(validate(spec), std::invalid_argument);
  spec = SnnModelSpec{};
  spec.step = 0;
  CHECK_THROWS_AS(validate(spec), std::invalid_argument);
  spec = SnnModelSpec{};
  spec.variant = SnnVariant::FeatureHead;
  spec.feature_arity = 1;
  CHECK_THROWS_AS(validate(spec), std::invalid_argument);
  spec = SnnModelSpec{};
  spec.lif.beta = 1.5;
  CHECK_THROWS_AS(validate(spec), std::invalid_argument);
}

TEST_CASE("raising every input current never loses first-layer spikes") {
  SnnModelSpec spec;
  spec.hidden_dim = 4;
  ModelParams params = init_snn_params(spec, 8, 2, 21);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto activity = static_cast<Activity>(seed % kActivityCount);
    Tensor window = sample_window(activity, 8, 2, seed);
    std::vector<double> boosted = window.values();
    for (double& v : boosted) v += 0.2;
    Tensor window_up(window.shape(), std::move(boosted));

    Tape tape;
    SnnOutputs base = snn_outputs(tape, window, spec, params);
    Tape tape2;
    SnnOutputs up = snn_outputs(tape2, window_up, spec, params);
    CHECK(up.first_layer_spikes >= base.first_layer_spikes);
  }
}

TEST_CASE("conv2d matches a hand-computed 3x3 example") {
  Tape tape;
  // Single channel 3x3 input, identity-ish kernel picking the north pixel.
  Tensor input({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor weight({1, 1, 3, 3}, {0, 1, 0, 0, 0, 0, 0, 0, 0});
  Tensor bias({1}, {0.5});
  Tensor out = conv2d(tape, input, weight, bias);
  REQUIRE(out.shape() == std::vector<std::size_t>{1, 3, 3});
  // Kernel offset (ky=0) reads the row above each pixel; top row sees padding.
  CHECK(out.values() == std::vector<double>{0.5, 0.5, 0.5, 1.5, 2.5, 3.5, 4.5,
                                            5.5, 6.5});
}

TEST_CASE("maxpool2d picks block maxima and drops odd edges") {
  Tape tape;
  Tensor input({1, 3, 4}, {1, 5, 2, 0, 3, 4, 8, 1, 9, 9, 9, 9});
  Tensor out = maxpool2d(tape, input);
  REQUIRE(out.shape() == std::vector<std::size_t>{1, 1, 2});
  CHECK(out.values() == std::vector<double>{5, 8});
  CHECK_THROWS_AS(maxpool2d(tape, Tensor::zeros({1, 1, 4})),
                  std::invalid_argument);
}

TEST_CASE("cnn forward yields a normalized 7-class distribution") {
  CnnSpec spec{9, 3, 3};
  ModelParams params = init_cnn_params(spec, 90, 8, 2, 5);
  Tensor window = sample_window(Activity::Waving, 8, 2, 4);
  Tape tape;
  Tensor dist = cnn_forward(tape, window, spec, params);
  check_distribution(dist, 7);

  Tape tape2;
  CHECK(cnn_forward(tape2, window, spec, params).values() == dist.values());
}

TEST_CASE("model II gradients agree with finite differences") {
  SnnModelSpec spec;
  spec.hidden_dim = 4;
  ModelParams base = init_snn_params(spec, 8, 2, 99);
  Tensor window = sample_window(Activity::Walking, 8, 2, 9);
  Tensor target({7}, {0, 0, 1, 0, 0, 0, 0});

  auto f = [&](Tape& tape, const std::vector<Tensor>& p) {
    ModelParams params = with_tensors(base, p);
    Tensor dist = snn_forward(tape, window, spec, params, SpikeMode::Smooth);
    Tensor diff = tape.sub(dist, target);
    return tape.sum(tape.mul(diff, diff));
  };
  CHECK(gradient_check(f, base.tensors) <= 1e-4);
}

TEST_CASE("feature head gradients agree with finite differences") {
  SnnModelSpec spec;
  spec.variant = SnnVariant::FeatureHead;
  spec.feature_arity = 2;
  ModelParams base = init_snn_params(spec, 4, 1, 55);
  Tensor window = sample_window(Activity::Clapping, 4, 1, 8);

  auto f = [&](Tape& tape, const std::vector<Tensor>& p) {
    ModelParams params = with_tensors(base, p);
    SnnOutputs out = snn_outputs(tape, window, spec, params, SpikeMode::Smooth);
    Tensor score = tape.sum(tape.mul(out.distribution, Tensor({2}, {1.0, -1.0})));
    Tensor k3 = tape.sum(out.interval_distributions.at(3));
    return tape.add(score, k3);
  };
  CHECK(gradient_check(f, base.tensors) <= 1e-4);
}

TEST_CASE("model I gradients agree with finite differences") {
  SnnModelSpec spec;
  spec.variant = SnnVariant::ModelI;
  spec.hidden_dim = 3;
  ModelParams base = init_snn_params(spec, 2, 1, 77);
  Tensor window = sample_window(Activity::Wiping, 2, 1, 6);
  Tensor target({7}, {1, 0, 0, 0, 0, 0, 0});

  auto f = [&](Tape& tape, const std::vector<Tensor>& p) {
    ModelParams params = with_tensors(base, p);
    Tensor dist = snn_forward(tape, window, spec, params, SpikeMode::Smooth);
    Tensor diff = tape.sub(dist, target);
    return tape.sum(tape.mul(diff, diff));
  };
  CHECK(gradient_check(f, base.tensors) <= 1e-4);
}

TEST_CASE("cnn gradients agree with finite differences") {
  CnnSpec spec{5, 3, 3};
  ModelParams base = init_cnn_params(spec, 90, 8, 2, 31);
  Tensor window = sample_window(Activity::Squatting, 8, 2, 12);
  Tensor target({7}, {0, 0, 0, 0, 0, 0, 1});

  auto f = [&](Tape& tape, const std::vector<Tensor>& p) {
    ModelParams params = with_tensors(base, p);
    Tensor dist = cnn_forward(tape, window, spec, params);
    Tensor diff = tape.sub(dist, target);
    return tape.sum(tape.mul(diff, diff));
  };
  CHECK(gradient_check(f, base.tensors) <= 1e-4);
}

TEST_CASE("parameter init is deterministic per seed") {
  SnnModelSpec spec;
  ModelParams a = init_snn_params(spec, 8, 2, 5);
  ModelParams b = init_snn_params(spec, 8, 2, 5);
  ModelParams c = init_snn_params(spec, 8, 2, 6);
  REQUIRE(a.tensors.size() == b.tensors.size());
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    CHECK(a.tensors[i].values() == b.tensors[i].values());
  }
  CHECK(a.at("w1").values() != c.at("w1").values());
  CHECK(a.at("antenna_weights").values() == std::vector<double>{0.5, 0.5});
}

TEST_CASE("checkpoints round-trip bitwise and validate structure") {
  SnnModelSpec spec;
  spec.hidden_dim = 4;
  ModelParams params = init_snn_params(spec, 6, 2, 123);
  auto path =
      (std::filesystem::temp_directory_path() / "csihar_params.spkw").string();
  save_params(params, path);

  ModelParams other = init_snn_params(spec, 6, 2, 456);
  apply_checkpoint(other, path);
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    CHECK(other.tensors[i].values() == params.tensors[i].values());
    CHECK(other.tensors[i].shape() == params.tensors[i].shape());
  }

  ModelParams wrong_shape = init_snn_params(spec, 7, 2, 1);
  CHECK_THROWS_WITH_AS(apply_checkpoint(wrong_shape, path),
                       doctest::Contains("shape mismatch"),
                       std::runtime_error);

  SnnModelSpec fh;
  fh.variant = SnnVariant::FeatureHead;
  ModelParams wrong_count = init_snn_params(fh, 6, 2, 1);
  CHECK_THROWS_WITH_AS(apply_checkpoint(wrong_count, path),
                       doctest::Contains("tensors"), std::runtime_error);

  std::ofstream bad(path, std::ios::binary);
  bad.write("NOPE", 4);
  bad.close();
  CHECK_THROWS_WITH_AS(load_param_tensors(path),
                       doctest::Contains("bad magic at byte 0"),
                       std::runtime_error);
  std::filesystem::remove(path);
}
