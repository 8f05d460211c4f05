#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "csihar/tensor.hpp"

using csihar::Tape;
using csihar::Tensor;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                     double radius = 1.0) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::uniform_real_distribution<double> dist(-radius, radius);
  std::vector<double> vals(n);
  for (double& v : vals) v = dist(rng);
  return Tensor(std::move(shape), std::move(vals), true);
}

}  // namespace

TEST_CASE("tensor construction validates shape against value count") {
  CHECK_NOTHROW(Tensor({2, 3}, std::vector<double>(6, 0.0)));
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5, 0.0)),
                  std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}).item(), std::invalid_argument);
  CHECK(Tensor::scalar(4.5).item() == 4.5);
}

TEST_CASE("elementwise ops and fan-out gradient accumulation") {
  Tape tape;
  Tensor a({3}, {1.0, -2.0, 3.0}, true);
  Tensor b({3}, {4.0, 5.0, -6.0}, true);
  Tensor y = tape.sum(tape.add(tape.mul(a, b), a));
  CHECK(y.item() == doctest::Approx(1 * 4 + 1 - 10 - 2 + 3 * -6 + 3));

  tape.backward(y);
  auto ga = tape.grad(a);
  auto gb = tape.grad(b);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(ga[i] == doctest::Approx(b.values()[i] + 1.0));
    CHECK(gb[i] == doctest::Approx(a.values()[i]));
  }
}

TEST_CASE("same tensor used for both operands is not double counted") {
  Tape tape;
  Tensor x({2}, {3.0, -1.5}, true);
  Tensor y = tape.sum(tape.mul(x, x));
  tape.backward(y);
  auto g = tape.grad(x);
  CHECK(g[0] == doctest::Approx(6.0));
  CHECK(g[1] == doctest::Approx(-3.0));
}

TEST_CASE("matmul forward matches a hand computed product") {
  Tape tape;
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor b({3, 2}, {7, 8, 9, 10, 11, 12}, true);
  Tensor c = tape.matmul(a, b);
  REQUIRE(c.shape() == std::vector<std::size_t>{2, 2});
  CHECK(c.values() == std::vector<double>{58, 64, 139, 154});

  tape.backward(tape.sum(c));
  CHECK(tape.grad(a) == std::vector<double>{15, 19, 23, 15, 19, 23});
  CHECK(tape.grad(b) == std::vector<double>{5, 5, 7, 7, 9, 9});
}

TEST_CASE("matmul rejects mismatched inner dimensions with both shapes") {
  Tape tape;
  Tensor a({2, 3}, std::vector<double>(6, 1.0));
  Tensor b({2, 2}, std::vector<double>(4, 1.0));
  try {
    tape.matmul(a, b);
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("(2x3)") != std::string::npos);
    CHECK(msg.find("(2x2)") != std::string::npos);
  }
}

TEST_CASE("matmul squeezes rank-1 operands") {
  Tape tape;
  Tensor v({3}, {1, 2, 3}, true);
  Tensor m({3, 2}, {1, 0, 0, 1, 1, 1}, true);
  Tensor row = tape.matmul(v, m);
  REQUIRE(row.shape() == std::vector<std::size_t>{2});
  CHECK(row.values() == std::vector<double>{4, 5});

  Tensor w({2}, {1, -1}, true);
  Tensor col = tape.matmul(m, w);
  REQUIRE(col.shape() == std::vector<std::size_t>{3});
  CHECK(col.values() == std::vector<double>{1, -1, 0});

  Tensor dot = tape.matmul(v, v);
  CHECK(dot.item() == doctest::Approx(14.0));
}

TEST_CASE("softmax sums to one, is shift invariant and overflow safe") {
  Tape tape;
  Tensor x({4}, {0.3, -1.2, 2.0, 0.0});
  auto s = tape.softmax(x).values();
  double total = s[0] + s[1] + s[2] + s[3];
  CHECK(std::abs(total - 1.0) < 1e-12);

  Tensor shifted({4}, {0.3 + 100, -1.2 + 100, 2.0 + 100, 0.0 + 100});
  auto s2 = tape.softmax(shifted).values();
  for (std::size_t i = 0; i < 4; ++i) CHECK(s2[i] == doctest::Approx(s[i]));

  Tensor huge({3}, {1e4, 1e4, 1e4});
  auto s3 = tape.softmax(huge).values();
  for (double v : s3) {
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(1.0 / 3.0));
  }
}

TEST_CASE("gradients accumulate across backward calls until reset") {
  Tape tape;
  Tensor w({2}, {1.0, 2.0}, true);
  Tensor x1({2}, {1.0, 0.0});
  Tensor x2({2}, {0.0, 1.0});
  tape.backward(tape.matmul(w, x1));
  tape.backward(tape.matmul(w, x2));
  auto g = tape.grad(w);
  CHECK(g[0] == doctest::Approx(1.0));
  CHECK(g[1] == doctest::Approx(1.0));

  tape.zero_grad();
  CHECK(tape.grad(w) == std::vector<double>{0.0, 0.0});

  tape.reset();
  CHECK(tape.node_count() == 0);
}

TEST_CASE("parameters untouched by the loss get a zero gradient") {
  Tape tape;
  Tensor used({2}, {1.0, 1.0}, true);
  Tensor unused({3}, {5.0, 5.0, 5.0}, true);
  tape.backward(tape.sum(used));
  CHECK(tape.grad(unused) == std::vector<double>(3, 0.0));
}

TEST_CASE("broadcast add of a bias row") {
  Tape tape;
  Tensor m({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor bias({3}, {10, 20, 30}, true);
  Tensor out = tape.add(m, bias);
  CHECK(out.values() == std::vector<double>{11, 22, 33, 14, 25, 36});
  tape.backward(tape.sum(out));
  CHECK(tape.grad(bias) == std::vector<double>{2, 2, 2});
}

TEST_CASE("gradient_check approves every primitive op") {
  std::mt19937_64 rng(7);

  auto check = [&](auto f, std::vector<Tensor> params) {
    double err = csihar::gradient_check(f, params);
    CHECK(err <= 1e-6);
  };

  Tensor a = random_tensor({4}, rng);
  Tensor b = random_tensor({4}, rng);
  check(
      [](Tape& t, const std::vector<Tensor>& p) {
        return t.sum(t.mul(t.add(p[0], p[1]), t.sub(p[0], p[1])));
      },
      {a, b});

  Tensor m1 = random_tensor({3, 4}, rng);
  Tensor m2 = random_tensor({4, 2}, rng);
  check(
      [](Tape& t, const std::vector<Tensor>& p) {
        return t.mean(t.matmul(p[0], p[1]));
      },
      {m1, m2});

  Tensor sx = random_tensor({5}, rng);
  check(
      [](Tape& t, const std::vector<Tensor>& p) {
        Tensor s = t.softmax(p[0]);
        Tensor w({5}, {0.1, -0.4, 2.0, 0.3, 1.1});
        return t.sum(t.mul(s, w));
      },
      {sx});

  Tensor pos({3}, {0.5, 0.9, 0.2}, true);
  check(
      [](Tape& t, const std::vector<Tensor>& p) {
        return t.sum(t.log_clamped(p[0]));
      },
      {pos});

  Tensor c1 = random_tensor({3}, rng);
  Tensor c2 = random_tensor({2}, rng);
  check(
      [](Tape& t, const std::vector<Tensor>& p) {
        Tensor joined = t.concat({p[0], p[1], p[0]});
        return t.sum(t.relu(t.scalar_mul(joined, 1.7)));
      },
      {c1, c2});

  Tensor r = random_tensor({6}, rng);
  check(
      [](Tape& t, const std::vector<Tensor>& p) {
        Tensor grid = t.reshape(p[0], {3, 2});
        Tensor mid = t.slice_rows(grid, 1, 2);
        return t.sum(t.mul(t.reshape(mid, {4}), t.reshape(mid, {4})));
      },
      {r});
}

TEST_CASE("reshape and slice_rows validate their arguments") {
  Tape t;
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(t.reshape(a, {4}), std::invalid_argument);
  CHECK_THROWS_AS(t.slice_rows(a, 1, 2), std::invalid_argument);
  CHECK_THROWS_AS(t.slice_rows(a, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(t.slice_rows(t.reshape(a, {6}), 0, 1), std::invalid_argument);
  Tensor row = t.slice_rows(a, 1, 1);
  CHECK(row.shape() == std::vector<std::size_t>{1, 3});
  CHECK(row.values() == std::vector<double>{4, 5, 6});
}

TEST_CASE("gradient_check approves a two layer network with softmax head") {
  std::mt19937_64 rng(11);
  Tensor w1 = random_tensor({6, 5}, rng, 0.8);
  Tensor b1 = random_tensor({5}, rng, 0.1);
  Tensor w2 = random_tensor({5, 3}, rng, 0.8);
  Tensor b2 = random_tensor({3}, rng, 0.1);
  Tensor x({6}, {0.2, -0.1, 0.7, 0.4, -0.9, 0.3});

  auto f = [x](Tape& t, const std::vector<Tensor>& p) {
    Tensor h = t.relu(t.add(t.matmul(x, p[0]), p[1]));
    Tensor logits = t.add(t.matmul(h, p[2]), p[3]);
    Tensor probs = t.softmax(logits);
    Tensor target({3}, {0.0, 1.0, 0.0});
    Tensor diff = t.sub(probs, target);
    return t.sum(t.mul(diff, diff));
  };
  CHECK(csihar::gradient_check(f, {w1, b1, w2, b2}) <= 1e-4);
}

TEST_CASE("sgd_step moves parameters against the gradient") {
  Tensor p({2}, {1.0, -1.0}, true);
  Tensor next = csihar::sgd_step(p, {0.5, -2.0}, 0.1);
  CHECK(next.values()[0] == doctest::Approx(0.95));
  CHECK(next.values()[1] == doctest::Approx(-0.8));
  CHECK(next.requires_grad());
  CHECK_THROWS_AS(csihar::sgd_step(p, {1.0}, 0.1), std::invalid_argument);
}
