#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "csihar/lif.hpp"

using namespace csihar;

namespace {

std::vector<double> column(const SpikeState& s, std::size_t n) {
  std::vector<double> out;
  for (const auto& row : s.spikes) out.push_back(row[n]);
  return out;
}

}  // namespace

TEST_CASE("zero input never spikes even without leakage") {
  LifConfig cfg{1.0, 1.0, LifReset::Zero};
  auto state = lif_forward({{0.0}, {0.0}, {0.0}, {0.0}}, cfg);
  CHECK(column(state, 0) == std::vector<double>{0, 0, 0, 0});
  CHECK(state.potentials[0] == 0.0);
}

TEST_CASE("hand simulated trace, zero reset") {
  LifConfig cfg{0.9, 1.0, LifReset::Zero};
  auto state = lif_forward({{0.5}, {0.5}, {0.5}, {0.5}}, cfg);
  CHECK(column(state, 0) == std::vector<double>{0, 0, 1, 0});
  CHECK(state.potentials[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("hand simulated trace, subtract reset") {
  LifConfig cfg{0.9, 1.0, LifReset::Subtract};
  auto state = lif_forward({{0.5}, {0.5}, {0.5}, {0.5}}, cfg);
  CHECK(column(state, 0) == std::vector<double>{0, 0, 1, 0});
  CHECK(state.potentials[0] == doctest::Approx(0.8195).epsilon(1e-12));
}

TEST_CASE("reset modes diverge once the carried surplus matters") {
  std::vector<std::vector<double>> currents{{0.8}, {0.8}, {0.8},
                                            {0.0}, {3.0}, {0.3}};
  auto zero = lif_forward(currents, {0.5, 1.0, LifReset::Zero});
  auto sub = lif_forward(currents, {0.5, 1.0, LifReset::Subtract});
  CHECK(column(zero, 0) == std::vector<double>{0, 1, 0, 0, 1, 0});
  CHECK(column(sub, 0) == std::vector<double>{0, 1, 0, 0, 1, 1});
  CHECK(zero.potentials[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(sub.potentials[0] == doctest::Approx(0.4125).epsilon(1e-12));
}

TEST_CASE("neurons evolve independently") {
  LifConfig cfg{0.8, 1.0, LifReset::Subtract};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(0.0, 1.5);
  std::vector<std::vector<double>> both(12, std::vector<double>(2));
  std::vector<std::vector<double>> left(12, std::vector<double>(1));
  std::vector<std::vector<double>> right(12, std::vector<double>(1));
  for (std::size_t t = 0; t < 12; ++t) {
    both[t][0] = left[t][0] = dist(rng);
    both[t][1] = right[t][0] = dist(rng);
  }
  auto joint = lif_forward(both, cfg);
  auto l = lif_forward(left, cfg);
  auto r = lif_forward(right, cfg);
  CHECK(column(joint, 0) == column(l, 0));
  CHECK(column(joint, 1) == column(r, 0));
  CHECK(joint.potentials[0] == l.potentials[0]);
  CHECK(joint.potentials[1] == r.potentials[0]);
}

TEST_CASE("splitting a run and carrying state reproduces the whole run") {
  LifConfig cfg{0.9, 0.7, LifReset::Zero};
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> dist(-0.2, 1.2);
  std::vector<std::vector<double>> currents(20, std::vector<double>(3));
  for (auto& row : currents)
    for (double& v : row) v = dist(rng);

  auto whole = lif_forward(currents, cfg);
  for (std::size_t cut : {1u, 7u, 13u, 19u}) {
    std::vector<std::vector<double>> head(currents.begin(),
                                          currents.begin() + cut);
    std::vector<std::vector<double>> tail(currents.begin() + cut,
                                          currents.end());
    auto first = lif_forward(head, cfg);
    auto second = lif_forward(tail, cfg, first.potentials);
    std::vector<std::vector<double>> glued = first.spikes;
    glued.insert(glued.end(), second.spikes.begin(), second.spikes.end());
    CHECK(glued == whole.spikes);
    CHECK(second.potentials == whole.potentials);
  }
}

TEST_CASE("sub-threshold constant current never spikes under subtract reset") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> beta_dist(0.05, 0.99);
  std::uniform_real_distribution<double> thr_dist(0.2, 3.0);
  std::uniform_real_distribution<double> frac(0.0, 0.95);
  for (int trial = 0; trial < 50; ++trial) {
    double beta = beta_dist(rng);
    double thr = thr_dist(rng);
    double current = frac(rng) * thr * (1.0 - beta);
    LifConfig cfg{beta, thr, LifReset::Subtract};
    std::vector<std::vector<double>> currents(200, {current});
    auto state = lif_forward(currents, cfg);
    for (const auto& row : state.spikes) CHECK(row[0] == 0.0);
  }
}

TEST_CASE("non-finite current is rejected") {
  LifConfig cfg{0.9, 1.0, LifReset::Zero};
  std::vector<std::vector<double>> bad{{0.1}, {std::nan("")}};
  CHECK_THROWS_AS(lif_forward(bad, cfg), std::domain_error);
  CHECK_THROWS_AS(lif_forward({{1e300 * 1e300}}, cfg), std::domain_error);
}

TEST_CASE("config bounds are enforced") {
  CHECK_THROWS_AS(validate(LifConfig{0.0, 1.0, LifReset::Zero}),
                  std::invalid_argument);
  CHECK_THROWS_AS(validate(LifConfig{1.1, 1.0, LifReset::Zero}),
                  std::invalid_argument);
  CHECK_THROWS_AS(validate(LifConfig{0.9, 0.0, LifReset::Zero}),
                  std::invalid_argument);
}

TEST_CASE("surrogate has unit peak and known half-value point") {
  CHECK(surrogate_grad(0.0) == 1.0);
  CHECK(surrogate_grad(1.0 / std::numbers::pi) == doctest::Approx(0.5));
  CHECK(surrogate_grad(-1.0 / std::numbers::pi) == doctest::Approx(0.5));
  CHECK(surrogate_grad(1e6) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(surrogate_grad(-1e6) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("spike op: binary forward, surrogate backward") {
  Tape tape;
  Tensor shifted({4}, {-0.6, 0.0, 0.3, 2.0}, true);
  Tensor s = spike_threshold(tape, shifted);
  CHECK(s.values() == std::vector<double>{0, 0, 1, 1});

  tape.backward(tape.sum(s));
  auto g = tape.grad(shifted);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(g[i] == doctest::Approx(surrogate_grad(shifted.values()[i])));
  }
}

TEST_CASE("tape cell matches the plain simulator step for step") {
  LifConfig cfg{0.85, 0.9, LifReset::Subtract};
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(-0.3, 1.4);
  std::vector<std::vector<double>> currents(15, std::vector<double>(4));
  for (auto& row : currents)
    for (double& v : row) v = dist(rng);

  auto oracle = lif_forward(currents, cfg);

  Tape tape;
  LifCell cell(cfg, 4);
  Tensor u = cell.initial_potential();
  for (std::size_t t = 0; t < currents.size(); ++t) {
    Tensor in({4}, currents[t]);
    auto [spikes, next] = cell.step(tape, in, u);
    u = next;
    CHECK(spikes.values() == oracle.spikes[t]);
  }
  for (std::size_t n = 0; n < 4; ++n) {
    CHECK(u.values()[n] == doctest::Approx(oracle.potentials[n]).epsilon(1e-12));
  }
}

TEST_CASE("smooth mode makes a two step cell pass finite differences") {
  LifConfig cfg{0.9, 1.0, LifReset::Zero};
  Tensor w({3, 3}, {0.4, -0.2, 0.9, 0.1, 0.8, -0.5, 0.3, 0.2, 0.7}, true);
  Tensor x1({3}, {0.9, 0.1, 0.4});
  Tensor x2({3}, {0.2, 1.1, 0.6});

  auto f = [&](Tape& t, const std::vector<Tensor>& p) {
    LifCell cell(cfg, 3, SpikeMode::Smooth);
    Tensor u = cell.initial_potential();
    auto s1 = cell.step(t, t.matmul(x1, p[0]), u);
    auto s2 = cell.step(t, t.matmul(x2, p[0]), s1.potential);
    return t.sum(t.add(s1.spikes, s2.spikes));
  };
  CHECK(gradient_check(f, {w}) <= 1e-6);
}

TEST_CASE("surrogate training lowers loss on a rate coded toy task") {
  constexpr std::size_t kInputs = 8;
  constexpr std::size_t kSteps = 6;
  std::mt19937_64 rng(41);
  std::normal_distribution<double> noise(0.0, 0.05);

  std::vector<std::pair<std::vector<double>, int>> samples;
  for (int i = 0; i < 16; ++i) {
    int label = i % 2;
    std::vector<double> x(kInputs);
    for (std::size_t n = 0; n < kInputs; ++n) {
      bool active = label == 0 ? n < kInputs / 2 : n >= kInputs / 2;
      x[n] = (active ? 0.9 : 0.1) + noise(rng);
    }
    samples.push_back({std::move(x), label});
  }

  std::uniform_real_distribution<double> init(-0.3, 0.3);
  std::vector<double> w0(kInputs * 2);
  for (double& v : w0) v = init(rng);
  Tensor w({kInputs, 2}, std::move(w0), true);

  LifConfig cfg{0.9, 1.0, LifReset::Zero};
  auto epoch_loss = [&](Tensor weights, bool update, double lr) {
    double total = 0.0;
    for (const auto& [x, label] : samples) {
      Tape tape;
      LifCell cell(cfg, 2);
      Tensor in({kInputs}, x);
      Tensor current = tape.matmul(in, weights);
      Tensor u = cell.initial_potential();
      Tensor counts = Tensor::zeros({2});
      for (std::size_t t = 0; t < kSteps; ++t) {
        auto r = cell.step(tape, current, u);
        u = r.potential;
        counts = tape.add(counts, r.spikes);
      }
      Tensor probs = tape.softmax(counts);
      Tensor target({2}, {label == 0 ? 1.0 : 0.0, label == 1 ? 1.0 : 0.0});
      Tensor diff = tape.sub(probs, target);
      Tensor loss = tape.sum(tape.mul(diff, diff));
      total += loss.item();
      if (update) {
        tape.backward(loss);
        weights = sgd_step(weights, tape.grad(weights), lr);
      }
    }
    return std::make_pair(total / samples.size(), weights);
  };

  auto [loss0, w_unused] = epoch_loss(w, false, 0.0);
  Tensor cur = w;
  for (int epoch = 0; epoch < 20; ++epoch) {
    cur = epoch_loss(cur, true, 0.5).second;
  }
  auto [loss20, w_final] = epoch_loss(cur, false, 0.0);
  CHECK(loss20 < loss0);
}
