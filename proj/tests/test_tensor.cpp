#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "aoseg/adam.hpp"
#include "aoseg/gradcheck.hpp"
#include "aoseg/ops.hpp"

using namespace aoseg;

namespace {

template <class S>
Tensor<S> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<S> t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i)
    t.values()[i] = static_cast<S>(rng.uniform(lo, hi));
  return t;
}

template <class S>
Tensor<S> ones_like_weights(int n, int h, int w) {
  return Tensor<S>({n, 1, h, w}, S(1));
}

// Random one-hot target with the same layout as the logits.
template <class S>
Tensor<S> random_onehot(int n, int c, int h, int w, Rng& rng) {
  Tensor<S> t({n, c, h, w});
  for (int i = 0; i < n; ++i)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        t.at4(i, rng.uniform_int(c), y, x) = S(1);
  return t;
}

}  // namespace

TEST_CASE("conv2d hand-computed sums on all-ones input") {
  Tensor<float> x({1, 1, 3, 3}, 1.0f);
  Tensor<float> k({1, 1, 3, 3}, 1.0f);
  Tensor<float> b({1});
  Tensor<float> y = conv2d(x, k, b, 1);
  CHECK(y.shape() == Shape{1, 1, 3, 3});
  CHECK(y.at4(0, 0, 1, 1) == 9.0f);  // all nine taps inside
  CHECK(y.at4(0, 0, 0, 0) == 4.0f);  // corner sees a 2x2 window
  CHECK(y.at4(0, 0, 0, 2) == 4.0f);
  CHECK(y.at4(0, 0, 2, 0) == 4.0f);
  CHECK(y.at4(0, 0, 2, 2) == 4.0f);
  CHECK(y.at4(0, 0, 0, 1) == 6.0f);  // edge sees a 2x3 window
}

TEST_CASE("conv2d with 1x1 identity kernel is exactly the identity") {
  Rng rng(7);
  Tensor<float> x = random_tensor<float>({2, 3, 4, 5}, rng);
  Tensor<float> k({3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) k.at4(c, c, 0, 0) = 1.0f;
  Tensor<float> b({3});
  Tensor<float> y = conv2d(x, k, b, 0);
  for (std::int64_t i = 0; i < x.size(); ++i) CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("conv2d with all-zero kernel yields zeros") {
  Rng rng(8);
  Tensor<float> x = random_tensor<float>({1, 2, 4, 4}, rng);
  Tensor<float> k({4, 2, 3, 3});
  Tensor<float> b({4});
  Tensor<float> y = conv2d(x, k, b, 1);
  CHECK((y.values() == 0.0f).all());
}

TEST_CASE("conv2d rejects channel mismatch naming both shapes") {
  Tensor<float> x({1, 4, 8, 8});
  Tensor<float> k({8, 3, 3, 3});
  Tensor<float> b({8});
  CHECK_THROWS_WITH_AS(conv2d(x, k, b, 1),
                       doctest::Contains("[1,4,8,8]"), Error);
  CHECK_THROWS_WITH_AS(conv2d(x, k, b, 1),
                       doctest::Contains("[8,3,3,3]"), Error);
}

TEST_CASE("conv2d rejects even kernels and wrong padding") {
  Tensor<float> x({1, 1, 4, 4});
  Tensor<float> b({1});
  CHECK_THROWS_AS(conv2d(x, Tensor<float>({1, 1, 2, 2}), b, 1), Error);
  CHECK_THROWS_AS(conv2d(x, Tensor<float>({1, 1, 3, 3}), b, 0), Error);
}

TEST_CASE("activation values at reference points") {
  Tensor<float> z({3});
  z.values()[0] = 0.0f;
  z.values()[1] = std::log(3.0f);
  z.values()[2] = -100.0f;
  Tensor<float> s = sigmoid(z);
  CHECK(s.values()[0] == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(s.values()[1] == doctest::Approx(0.75).epsilon(1e-6));
  CHECK(s.values()[2] >= 0.0f);  // stable on the far tail
  CHECK(tanh_act(z).values()[0] == 0.0f);
  CHECK(relu(z).values()[2] == 0.0f);

  Rng rng(3);
  Tensor<float> r = random_tensor<float>({64}, rng, -5.0, 5.0);
  Tensor<float> sr = sigmoid(r);
  CHECK((sr.values() > 0.0f).all());
  CHECK((sr.values() < 1.0f).all());
  Tensor<float> tr = tanh_act(r);
  CHECK((tr.values() > -1.0f).all());
  CHECK((tr.values() < 1.0f).all());
}

TEST_CASE("elementwise identities") {
  Rng rng(11);
  Tensor<float> x = random_tensor<float>({2, 3, 2, 2}, rng);
  Tensor<float> ones({2, 3, 2, 2}, 1.0f);
  Tensor<float> zeros({2, 3, 2, 2});
  CHECK((mul_hadamard(x, ones).values() == x.values()).all());
  CHECK((mul_hadamard(x, zeros).values() == 0.0f).all());
  CHECK((add(x, zeros).values() == x.values()).all());
  CHECK_THROWS_AS(add(x, Tensor<float>({2, 3, 2, 3})), Error);
}

TEST_CASE("concat_channels preserves order and sums channel extents") {
  Rng rng(12);
  Tensor<float> a = random_tensor<float>({2, 2, 3, 3}, rng);
  Tensor<float> b = random_tensor<float>({2, 3, 3, 3}, rng);
  Tensor<float> y = concat_channels(a, b);
  CHECK(y.shape() == Shape{2, 5, 3, 3});
  for (int n = 0; n < 2; ++n) {
    CHECK(y.at4(n, 0, 1, 2) == a.at4(n, 0, 1, 2));
    CHECK(y.at4(n, 1, 0, 0) == a.at4(n, 1, 0, 0));
    CHECK(y.at4(n, 2, 2, 1) == b.at4(n, 0, 2, 1));
    CHECK(y.at4(n, 4, 0, 2) == b.at4(n, 2, 0, 2));
  }
  CHECK_THROWS_AS(concat_channels(a, Tensor<float>({2, 3, 4, 3})), Error);
}

TEST_CASE("maxpool2 and upsample2 reference cases") {
  Tensor<float> x = Tensor<float>::from({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor<float> p = maxpool2(x);
  CHECK(p.shape() == Shape{1, 1, 1, 1});
  CHECK(p.values()[0] == 4.0f);

  Tensor<float> u = upsample2(Tensor<float>::from({1, 1, 1, 1}, {5}));
  CHECK(u.shape() == Shape{1, 1, 2, 2});
  CHECK((u.values() == 5.0f).all());

  Tensor<float> c({1, 2, 4, 4}, 3.25f);
  Tensor<float> roundtrip = upsample2(maxpool2(c));
  CHECK((roundtrip.values() == 3.25f).all());

  CHECK_THROWS_AS(maxpool2(Tensor<float>({1, 1, 3, 4})), Error);
}

TEST_CASE("maxpool2 backward routes gradient to first-encountered argmax") {
  Tensor<float> x = Tensor<float>::from({1, 1, 2, 2}, {7, 7, 3, 7});
  x.set_tracked(true);
  Graph<float> g;
  Tensor<float> loss = sum(maxpool2(x, &g), &g);
  g.backward(loss);
  CHECK(x.grad()[0] == 1.0f);  // scan order (0,0),(0,1),(1,0),(1,1); ties keep the first
  CHECK(x.grad()[1] == 0.0f);
  CHECK(x.grad()[2] == 0.0f);
  CHECK(x.grad()[3] == 0.0f);
}

TEST_CASE("softmax cross entropy closed forms") {
  const int n = 1, c = 3, h = 2, w = 2;
  Tensor<float> w1 = ones_like_weights<float>(n, h, w);
  Rng rng(21);
  Tensor<float> target = random_onehot<float>(n, c, h, w, rng);

  SUBCASE("uniform logits give ln 3") {
    Tensor<float> logits({n, c, h, w}, 0.7f);
    Tensor<float> loss = softmax_cross_entropy(logits, target, w1);
    CHECK(loss.values()[0] == doctest::Approx(std::log(3.0)).epsilon(1e-6));
  }

  SUBCASE("saturated correct prediction is numerically zero") {
    Tensor<float> logits({n, c, h, w});
    logits.values() = target.values() * 50.0f;
    Tensor<float> loss = softmax_cross_entropy(logits, target, w1);
    CHECK(loss.values()[0] < 1e-9f);
  }

  SUBCASE("weight normalization makes doubling a no-op") {
    Tensor<float> logits = random_tensor<float>({n, c, h, w}, rng);
    Tensor<float> w2({n, 1, h, w}, 2.0f);
    Tensor<float> l1 = softmax_cross_entropy(logits, target, w1);
    Tensor<float> l2 = softmax_cross_entropy(logits, target, w2);
    CHECK(l1.values()[0] == l2.values()[0]);
  }

  SUBCASE("all-zero weights are a degenerate batch") {
    Tensor<float> logits = random_tensor<float>({n, c, h, w}, rng);
    Tensor<float> w0({n, 1, h, w});
    CHECK_THROWS_WITH_AS(softmax_cross_entropy(logits, target, w0),
                         doctest::Contains("degenerate"), Error);
  }
}

TEST_CASE("softmax_channels sums to one per pixel") {
  Rng rng(31);
  Tensor<float> logits = random_tensor<float>({2, 4, 3, 3}, rng, -5.0, 5.0);
  Tensor<float> probs = softmax_channels(logits);
  for (int n = 0; n < 2; ++n)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) {
        double s = 0.0;
        for (int c = 0; c < 4; ++c) s += probs.at4(n, c, y, x);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
      }
}

TEST_CASE("backward reference adjoints") {
  SUBCASE("loss = sum(x) gives all-ones gradient") {
    Rng rng(41);
    Tensor<float> x = random_tensor<float>({3, 2, 2, 2}, rng);
    x.set_tracked(true);
    Graph<float> g;
    Tensor<float> loss = sum(x, &g);
    g.backward(loss);
    CHECK((x.grad() == 1.0f).all());
  }

  SUBCASE("loss = sum(x*x) at x=[1,2] gives [2,4]") {
    Tensor<float> x = Tensor<float>::from({2}, {1, 2});
    x.set_tracked(true);
    Graph<float> g;
    Tensor<float> loss = sum(mul_hadamard(x, x, &g), &g);
    g.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
  }

  SUBCASE("loss = sum(sigmoid(x)) at 0 gives 0.25") {
    Tensor<float> x({5});
    x.set_tracked(true);
    Graph<float> g;
    Tensor<float> loss = sum(sigmoid(x, &g), &g);
    g.backward(loss);
    for (int i = 0; i < 5; ++i) CHECK(x.grad()[i] == doctest::Approx(0.25).epsilon(1e-6));
  }

  SUBCASE("backward twice without reset is an error") {
    Tensor<float> x({2}, 1.0f);
    x.set_tracked(true);
    Graph<float> g;
    Tensor<float> loss = sum(x, &g);
    g.backward(loss);
    CHECK_THROWS_WITH_AS(g.backward(loss), doctest::Contains("reset"), Error);
    g.reset();
  }
}

TEST_CASE("finite differences: sum is exact to rounding in double") {
  Rng rng(51);
  Tensor<double> x = random_tensor<double>({3, 4}, rng);
  double err = finite_difference_check(
      [&](Graph<double>* g) { return sum(x, g); }, x, 1e-4);
  CHECK(err < 1e-10);
}

TEST_CASE("finite differences: softmax-CE on random logits") {
  Rng rng(52);
  const int n = 2, c = 3, h = 2, w = 2;
  Tensor<float> target = random_onehot<float>(n, c, h, w, rng);
  Tensor<float> weights = ones_like_weights<float>(n, h, w);
  Tensor<float> logits = random_tensor<float>({n, c, h, w}, rng);
  double err = finite_difference_check(
      [&](Graph<float>* g) { return softmax_cross_entropy(logits, target, weights, g); },
      logits, 1e-4);
  CHECK(err < 1e-3);
}

TEST_CASE("finite differences: one conv2d layer") {
  Rng rng(53);
  Tensor<float> x = random_tensor<float>({1, 2, 4, 4}, rng);
  Tensor<float> k = random_tensor<float>({3, 2, 3, 3}, rng);
  Tensor<float> b = random_tensor<float>({3}, rng);
  auto loss = [&](Graph<float>* g) { return sum(conv2d(x, k, b, 1, g), g); };
  CHECK(finite_difference_check(loss, k, 1e-3) < 1e-3);
  CHECK(finite_difference_check(loss, x, 1e-3) < 1e-3);
  CHECK(finite_difference_check(loss, b, 1e-3) < 1e-3);
}

// Random values kept away from relu/maxpool kinks: quantized to a coarse
// grid plus an offset that makes every 2x2 pooling block pairwise distinct
// by at least 0.04, far beyond any finite-difference step.
template <class S>
Tensor<S> separated_tensor(Shape shape, Rng& rng) {
  Tensor<S> t(shape);
  const int h = shape[2], w = shape[3];
  std::int64_t i = 0;
  for (int n = 0; n < shape[0]; ++n)
    for (int c = 0; c < shape[1]; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x, ++i) {
          const double grid = 0.2 * std::round(5.0 * rng.uniform(-1.0, 1.0));
          const double off = 0.05 * ((y % 2) * 2 + (x % 2));
          t.values()[i] = static_cast<S>(grid + off + 0.01);
        }
  return t;
}

// Gradient correctness for every differentiable op over randomized small
// tensors. Run in double (tight bound) and float (32-bit bound).
template <class S>
static void run_op_gradient_trials(double tol, double eps) {
  Rng rng(60);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + rng.uniform_int(2);
    const int c = 1 + rng.uniform_int(3);
    const int h = 2 * (1 + rng.uniform_int(2));
    const int w = 2 * (1 + rng.uniform_int(2));
    Tensor<S> x = random_tensor<S>({n, c, h, w}, rng);
    Tensor<S> xsep = separated_tensor<S>({n, c, h, w}, rng);
    Tensor<S> y = random_tensor<S>({n, c, h, w}, rng);
    Tensor<S> k = random_tensor<S>({2, c, 3, 3}, rng);
    Tensor<S> b = random_tensor<S>({2}, rng);
    Tensor<S> target = random_onehot<S>(n, c, h, w, rng);
    Tensor<S> wts = random_tensor<S>({n, 1, h, w}, rng, 0.25, 1.0);

    auto check = [&](auto fn, Tensor<S>& wrt) {
      CHECK(finite_difference_check(fn, wrt, eps) < tol);
    };
    check([&](Graph<S>* g) { return sum(sigmoid(x, g), g); }, x);
    check([&](Graph<S>* g) { return sum(tanh_act(x, g), g); }, x);
    check([&](Graph<S>* g) { return sum(relu(xsep, g), g); }, xsep);
    check([&](Graph<S>* g) { return sum(mul_hadamard(add(x, y, g), y, g), g); }, x);
    check([&](Graph<S>* g) { return sum(mul_hadamard(add(x, y, g), y, g), g); }, y);
    check([&](Graph<S>* g) { return sum(concat_channels(x, y, g), g); }, y);
    check([&](Graph<S>* g) { return scale(sum(maxpool2(xsep, g), g), S(0.5), g); }, xsep);
    check([&](Graph<S>* g) { return sum(upsample2(x, g), g); }, x);
    check([&](Graph<S>* g) { return sum(conv2d(x, k, b, 1, g), g); }, k);
    check([&](Graph<S>* g) { return softmax_cross_entropy(x, target, wts, g); }, x);
    check([&](Graph<S>* g) { return softmax_cross_entropy(x, target, wts, g); }, wts);
  }
}

TEST_CASE("op gradients pass finite-difference checks in double") {
  run_op_gradient_trials<double>(1e-6, 1e-5);
}

TEST_CASE("op gradients pass finite-difference checks in float") {
  run_op_gradient_trials<float>(1e-3, 3e-3);
}

TEST_CASE("finite_difference_check validates eps range") {
  Tensor<float> x({2}, 1.0f);
  CHECK_THROWS_AS(finite_difference_check(
                      [&](Graph<float>* g) { return sum(x, g); }, x, 1e-7),
                  Error);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Tensor<float> p = Tensor<float>::from({3}, {1.0f, -2.0f, 0.5f});
  p.set_tracked(true);
  std::vector<Tensor<float>> params{p};
  AdamState<float> st;
  adam_step(params, st, AdamConfig{});
  CHECK(p.values()[0] == 1.0f);
  CHECK(p.values()[1] == -2.0f);
  CHECK(p.values()[2] == 0.5f);
}

TEST_CASE("adam: bias-corrected first step moves by about lr") {
  Tensor<float> p({1}, 1.0f);
  p.set_tracked(true);
  p.grad()[0] = 1.0f;
  std::vector<Tensor<float>> params{p};
  AdamState<float> st;
  AdamConfig cfg;
  cfg.lr = 0.001;
  adam_step(params, st, cfg);
  CHECK(p.values()[0] == doctest::Approx(1.0 - 0.001).epsilon(1e-6));
}

TEST_CASE("adam: identical seeds give bitwise identical parameters") {
  auto run = [] {
    Rng rng(99);
    Tensor<float> p = random_tensor<float>({16}, rng);
    p.set_tracked(true);
    std::vector<Tensor<float>> params{p};
    AdamState<float> st;
    AdamConfig cfg;
    for (int i = 0; i < 25; ++i) {
      for (std::int64_t j = 0; j < p.size(); ++j)
        p.grad()[j] = static_cast<float>(rng.uniform(-1.0, 1.0));
      adam_step(params, st, cfg);
      p.zero_grad();
    }
    return p;
  };
  Tensor<float> a = run();
  Tensor<float> b = run();
  CHECK((a.values() == b.values()).all());
}

TEST_CASE("adam rejects nonpositive learning rate") {
  Tensor<float> p({1}, 1.0f);
  p.set_tracked(true);
  std::vector<Tensor<float>> params{p};
  AdamState<float> st;
  AdamConfig cfg;
  cfg.lr = 0.0;
  CHECK_THROWS_AS(adam_step(params, st, cfg), Error);
}

TEST_CASE("determinism: repeated conv2d forward is bitwise identical") {
  Rng rng(77);
  Tensor<float> x = random_tensor<float>({2, 4, 8, 8}, rng);
  Tensor<float> k = random_tensor<float>({4, 4, 3, 3}, rng);
  Tensor<float> b = random_tensor<float>({4}, rng);
  Tensor<float> y1 = conv2d(x, k, b, 1);
  Tensor<float> y2 = conv2d(x, k, b, 1);
  CHECK((y1.values() == y2.values()).all());
}

TEST_CASE("assert_finite flags NaN") {
  Tensor<float> x({2}, 1.0f);
  CHECK_NOTHROW(assert_finite(x, "x"));
  x.values()[1] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(assert_finite(x, "x"), Error);
}
