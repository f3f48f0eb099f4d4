#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aoseg/gradcheck.hpp"
#include "aoseg/train.hpp"
#include "aoseg/unet.hpp"

using namespace aoseg;

namespace {

Tensor<float> random_image(int n, int c, int h, int w, Rng& rng) {
  Tensor<float> t({n, c, h, w});
  for (std::int64_t i = 0; i < t.size(); ++i)
    t.values()[i] = static_cast<float>(rng.uniform(0.0, 1.0));
  return t;
}

}  // namespace

TEST_CASE("build_unet is deterministic for a fixed seed") {
  UNetConfig cfg;
  UNetParams<float> a = build_unet<float>(cfg, 123);
  UNetParams<float> b = build_unet<float>(cfg, 123);
  auto pa = a.named_params(), pb = b.named_params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK((pa[i].tensor.values() == pb[i].tensor.values()).all());
  }
  UNetParams<float> c = build_unet<float>(cfg, 124);
  CHECK_FALSE((a.enc[0][0].kernel.values() == c.enc[0][0].kernel.values()).all());
}

TEST_CASE("default config encoder ladder is 16/32/64") {
  UNetParams<float> p = build_unet<float>(UNetConfig{}, 1);
  CHECK(p.enc[0][0].kernel.shape() == Shape{16, 1, 3, 3});
  CHECK(p.enc[0][1].kernel.shape() == Shape{16, 16, 3, 3});
  CHECK(p.enc[1][0].kernel.shape() == Shape{32, 16, 3, 3});
  CHECK(p.enc[2][0].kernel.shape() == Shape{64, 32, 3, 3});
  CHECK(p.enc[2][1].kernel.shape() == Shape{64, 64, 3, 3});
  CHECK(p.head.kernel.shape() == Shape{3, 16, 1, 1});
  CHECK(p.parameter_count() > 0);
}

TEST_CASE("unet_forward shape contract on 64x64") {
  UNetParams<float> p = build_unet<float>(UNetConfig{}, 2);
  Rng rng(5);
  Tensor<float> img = random_image(1, 1, 64, 64, rng);
  UNetOutput<float> out = unet_forward(p, img);
  CHECK(out.features.shape() == Shape{1, 16, 64, 64});
  CHECK(out.logits.shape() == Shape{1, 3, 64, 64});
}

TEST_CASE("all-zero input with zero biases gives all-zero logits") {
  UNetParams<float> p = build_unet<float>(UNetConfig{}, 3);
  Tensor<float> img({1, 1, 64, 64});
  UNetOutput<float> out = unet_forward(p, img);
  CHECK((out.logits.values() == 0.0f).all());
}

TEST_CASE("indivisible spatial extent is rejected") {
  UNetParams<float> p = build_unet<float>(UNetConfig{}, 4);
  Tensor<float> img({1, 1, 66, 64});
  CHECK_THROWS_WITH_AS(unet_forward(p, img), doctest::Contains("divisible"), Error);
}

TEST_CASE("features are exactly the penultimate activation") {
  UNetParams<float> p = build_unet<float>(UNetConfig{}, 6);
  Rng rng(6);
  Tensor<float> img = random_image(1, 1, 32, 32, rng);
  UNetOutput<float> out = unet_forward(p, img);
  Tensor<float> relogits = conv2d(out.features, p.head.kernel, p.head.bias, 0);
  CHECK((relogits.values() == out.logits.values()).all());
}

TEST_CASE("cross-entropy gradient w.r.t. every U-Net parameter on an 8x8 input") {
  UNetConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 4;
  cfg.feature_channels = 4;
  UNetParams<float> p = build_unet<float>(cfg, 7);
  Rng rng(7);
  Tensor<float> img = random_image(1, 1, 8, 8, rng);
  Tensor<float> target({1, 3, 8, 8});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) target.at4(0, rng.uniform_int(3), y, x) = 1.0f;
  Tensor<float> weights({1, 1, 8, 8}, 1.0f);
  auto loss = [&](Graph<float>* g) {
    UNetOutput<float> out = unet_forward(p, img, g);
    return softmax_cross_entropy(out.logits, target, weights, g);
  };
  for (auto& nt : p.named_params()) {
    Tensor<float> t = nt.tensor;
    double err = finite_difference_check(loss, t, 3e-3);
    INFO(nt.name);
    CHECK(err < 1e-3);
  }
}

TEST_CASE("translating the input by the pooling period translates the logits") {
  UNetConfig cfg;
  UNetParams<float> p = build_unet<float>(cfg, 8);
  Rng rng(8);
  const int h = 64, w = 64, shift = cfg.divisor();  // 4 px
  Tensor<float> img = random_image(1, 1, h, w, rng);
  Tensor<float> shifted({1, 1, h, w});
  for (int y = shift; y < h; ++y)
    for (int x = 0; x < w; ++x) shifted.at4(0, 0, y, x) = img.at4(0, 0, y - shift, x);

  Tensor<float> out = unet_forward(p, img).logits;
  Tensor<float> out_shifted = unet_forward(p, shifted).logits;

  const int margin = receptive_field_radius(cfg) + 1;
  REQUIRE(h - margin - shift > margin);
  for (int c = 0; c < 3; ++c)
    for (int y = margin + shift; y < h - margin; ++y)
      for (int x = margin; x < w - margin; ++x)
        CHECK(out_shifted.at4(0, c, y, x) == out.at4(0, c, y - shift, x));
}

TEST_CASE("train_unet_static overfits a single disk sample") {
  const int h = 32, w = 32;
  AnnotatedImage sample;
  sample.height = h;
  sample.width = w;
  sample.image.assign(h * w, 0.1f);
  sample.label.assign(h * w, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dy = y - 15.5, dx = x - 15.5;
      if (dy * dy + dx * dx < 64.0) {
        sample.image[y * w + x] = 0.9f;
        sample.label[y * w + x] = 1;
      }
    }

  UNetConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 8;
  cfg.feature_channels = 8;
  UNetParams<float> p = build_unet<float>(cfg, 9);

  StageConfig tc;
  tc.iterations = 200;
  tc.batch = 1;
  tc.augment = false;
  tc.seed = 9;
  std::vector<TrainLogRow> log = train_unet_static(p, {sample}, tc);
  REQUIRE(log.size() == 200);

  std::vector<std::uint8_t> pred = unet_predict_frame(p, sample.image.data(), h, w);
  std::int64_t inter = 0, a = 0, b = 0;
  for (int i = 0; i < h * w; ++i) {
    a += sample.label[i] == 1;
    b += pred[i] == 1;
    inter += (sample.label[i] == 1 && pred[i] == 1);
  }
  const double dice = 2.0 * inter / static_cast<double>(a + b);
  CHECK(dice > 0.95);
}

TEST_CASE("lr schedule decays by 10x at the configured fraction") {
  StageConfig tc;
  tc.iterations = 100;
  tc.schedule.base_lr = 1e-3;
  tc.schedule.decay_fraction = 0.25;
  CHECK(tc.schedule.lr_at(0, 100) == doctest::Approx(1e-3));
  CHECK(tc.schedule.lr_at(24, 100) == doctest::Approx(1e-3));
  CHECK(tc.schedule.lr_at(25, 100) == doctest::Approx(1e-4));
  CHECK(tc.schedule.lr_at(99, 100) == doctest::Approx(1e-4));
}

TEST_CASE("train_unet_static rejects an empty dataset") {
  UNetParams<float> p = build_unet<float>(UNetConfig{}, 10);
  StageConfig tc;
  CHECK_THROWS_AS(train_unet_static(p, {}, tc), Error);
}

TEST_CASE("train_unet_static is deterministic across runs") {
  const int h = 16, w = 16;
  AnnotatedImage sample;
  sample.height = h;
  sample.width = w;
  sample.image.assign(h * w, 0.2f);
  sample.label.assign(h * w, 0);
  for (int y = 6; y < 10; ++y)
    for (int x = 6; x < 10; ++x) {
      sample.image[y * w + x] = 0.8f;
      sample.label[y * w + x] = 2;
    }
  UNetConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 4;
  cfg.feature_channels = 4;
  auto run = [&] {
    UNetParams<float> p = build_unet<float>(cfg, 11);
    StageConfig tc;
    tc.iterations = 30;
    tc.batch = 2;
    tc.seed = 11;
    train_unet_static(p, {sample}, tc);
    return p;
  };
  UNetParams<float> a = run(), b = run();
  auto pa = a.named_params(), pb = b.named_params();
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK((pa[i].tensor.values() == pb[i].tensor.values()).all());
}
