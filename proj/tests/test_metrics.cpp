#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "aoseg/metrics.hpp"

using namespace aoseg;

namespace {

Mask make_mask(int h, int w, std::vector<std::pair<int, int>> on = {}) {
  Mask m;
  m.height = h;
  m.width = w;
  m.v.assign(static_cast<std::size_t>(h) * w, 0);
  for (auto [y, x] : on) m.v[y * w + x] = 1;
  return m;
}

Mask random_mask(int h, int w, Rng& rng, double density) {
  Mask m;
  m.height = h;
  m.width = w;
  m.v.resize(static_cast<std::size_t>(h) * w);
  for (auto& v : m.v) v = rng.uniform() < density ? 1 : 0;
  return m;
}

// Brute-force oracles, written independently of the implementation.
double dice_brute(const Mask& a, const Mask& b) {
  std::int64_t na = 0, nb = 0, ni = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      const bool va = a.v[y * a.width + x], vb = b.v[y * b.width + x];
      na += va;
      nb += vb;
      ni += va && vb;
    }
  if (na + nb == 0) return 1.0;
  return 2.0 * ni / static_cast<double>(na + nb);
}

std::vector<std::pair<int, int>> contour_brute(const Mask& m) {
  std::vector<std::pair<int, int>> pts;
  auto inside = [&](int y, int x) {
    return y >= 0 && y < m.height && x >= 0 && x < m.width && m.v[y * m.width + x];
  };
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (inside(y, x) && (!inside(y - 1, x) || !inside(y + 1, x) || !inside(y, x - 1) ||
                           !inside(y, x + 1)))
        pts.emplace_back(y, x);
  return pts;
}

double mcd_brute(const Mask& a, const Mask& b, double spacing) {
  auto ca = contour_brute(a), cb = contour_brute(b);
  auto directed = [](const auto& from, const auto& to) {
    double acc = 0.0;
    for (auto [fy, fx] : from) {
      double best = std::numeric_limits<double>::infinity();
      for (auto [ty, tx] : to) {
        const double dy = fy - ty, dx = fx - tx;
        best = std::min(best, std::sqrt(dy * dy + dx * dx));
      }
      acc += best;
    }
    return acc / static_cast<double>(from.size());
  };
  return 0.5 * (directed(ca, cb) + directed(cb, ca)) * spacing;
}

double area_brute(const LabelSequence& labels, int t, int cls, double spacing) {
  std::int64_t n = 0;
  for (std::int64_t i = 0; i < labels.frame_size(); ++i) n += labels.frame(t)[i] == cls;
  return static_cast<double>(n) * spacing * spacing;
}

double kappa_brute(double am, double a0, double ap) {
  const double d1 = (ap - am) / 2.0;
  const double d2 = ap - 2.0 * a0 + am;
  return std::abs(d2) / std::pow(1.0 + d1 * d1, 1.5);
}

}  // namespace

TEST_CASE("dice reference cases") {
  Mask a = make_mask(4, 4, {{1, 1}, {1, 2}, {2, 1}, {2, 2}});
  CHECK(dice(a, a) == 1.0);

  Mask b = make_mask(4, 4, {{0, 0}});
  CHECK(dice(a, b) == 0.0);

  // 2x2 block against the same block shifted one column: overlap 2 px
  Mask s = make_mask(4, 4, {{1, 2}, {1, 3}, {2, 2}, {2, 3}});
  CHECK(dice(a, s) == 0.5);

  Mask empty1 = make_mask(4, 4), empty2 = make_mask(4, 4);
  CHECK(dice(empty1, empty2) == 1.0);
  CHECK(dice(empty1, a) == 0.0);

  CHECK_THROWS_AS(dice(a, make_mask(4, 5)), Error);
}

TEST_CASE("dice is symmetric and translation invariant") {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    Mask a = random_mask(12, 12, rng, 0.4);
    Mask b = random_mask(12, 12, rng, 0.4);
    CHECK(dice(a, b) == dice(b, a));

    Mask at = make_mask(14, 14), bt = make_mask(14, 14);
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 12; ++x) {
        at.v[(y + 2) * 14 + (x + 1)] = a.v[y * 12 + x];
        bt.v[(y + 2) * 14 + (x + 1)] = b.v[y * 12 + x];
      }
    CHECK(dice(at, bt) == dice(a, b));
  }
}

TEST_CASE("dice matches the brute-force oracle on random masks") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    Mask a = random_mask(16, 16, rng, 0.35);
    Mask b = random_mask(16, 16, rng, 0.35);
    CHECK(dice(a, b) == dice_brute(a, b));
  }
}

TEST_CASE("mean contour distance reference cases") {
  Mask a = make_mask(8, 8, {{2, 2}});
  Mask b = make_mask(8, 8, {{2, 5}});  // 3 px apart
  CHECK(mean_contour_distance(a, b, 1.6) == doctest::Approx(4.8));
  CHECK(mean_contour_distance(a, a, 1.6) == 0.0);
  CHECK(mean_contour_distance(a, b, 1.6) == mean_contour_distance(b, a, 1.6));

  Mask empty = make_mask(8, 8);
  CHECK_THROWS_WITH_AS(mean_contour_distance(empty, b, 1.0), doctest::Contains("first"),
                       Error);
  CHECK_THROWS_WITH_AS(mean_contour_distance(a, empty, 1.0), doctest::Contains("second"),
                       Error);
}

TEST_CASE("mean contour distance matches the brute-force oracle") {
  Rng rng(13);
  int done = 0;
  while (done < 10) {
    Mask a = random_mask(16, 16, rng, 0.3);
    Mask b = random_mask(16, 16, rng, 0.3);
    if (a.empty_mask() || b.empty_mask()) continue;
    CHECK(mean_contour_distance(a, b, 1.6) == mcd_brute(a, b, 1.6));
    ++done;
  }
}

TEST_CASE("area series: counts times squared spacing") {
  LabelSequence lab;
  lab.frames = 3;
  lab.height = 5;
  lab.width = 5;
  lab.num_classes = 3;
  lab.provenance.assign(3, 0);
  lab.data.assign(75, 0);
  for (int t = 0; t < 3; ++t)
    for (int i = 0; i < 10; ++i) lab.frame(t)[i] = 1;

  std::vector<double> a1 = area_series(lab, 1, 1.6);
  for (double v : a1) CHECK(v == doctest::Approx(25.6));
  std::vector<double> a2 = area_series(lab, 2, 1.6);
  for (double v : a2) CHECK(v == 0.0);
  for (int t = 0; t < 3; ++t) CHECK(a1[t] == area_brute(lab, t, 1, 1.6));
  CHECK_THROWS_AS(area_series(lab, 7, 1.6), Error);
}

TEST_CASE("curvature reference cases") {
  SUBCASE("constant area has zero curvature") {
    CurvatureSeries c = curvature_series({5, 5, 5, 5, 5});
    for (double k : c.kappa) CHECK(k == 0.0);
    CHECK(c.mean == 0.0);
  }

  SUBCASE("linear area has zero curvature") {
    std::vector<double> a;
    for (int t = 0; t < 8; ++t) a.push_back(3.0 * t + 7.0);
    CurvatureSeries c = curvature_series(a);
    for (double k : c.kappa) CHECK(k == 0.0);
  }

  SUBCASE("quadratic vertex gives exactly 2") {
    // A(t) = (t - 3)^2 has its vertex at t = 3, where A' = 0 and A'' = 2
    std::vector<double> a;
    for (int t = 0; t < 7; ++t) a.push_back((t - 3.0) * (t - 3.0));
    CurvatureSeries c = curvature_series(a);
    CHECK(c.offset == 1);
    CHECK(c.kappa[3 - c.offset] == 2.0);
  }

  SUBCASE("series shorter than 3 is rejected") {
    CHECK_THROWS_AS(curvature_series({1.0, 2.0}), Error);
  }

  SUBCASE("constant shift leaves curvature unchanged") {
    Rng rng(5);
    std::vector<double> a, b;
    for (int t = 0; t < 10; ++t) {
      a.push_back(rng.uniform(10, 20));
      b.push_back(a.back() + 137.5);
    }
    CurvatureSeries ca = curvature_series(a), cb = curvature_series(b);
    for (std::size_t i = 0; i < ca.kappa.size(); ++i)
      CHECK(ca.kappa[i] == doctest::Approx(cb.kappa[i]).epsilon(1e-12));
  }

  SUBCASE("cyclic mode covers every frame and matches the oracle") {
    Rng rng(6);
    std::vector<double> a;
    for (int t = 0; t < 9; ++t) a.push_back(rng.uniform(0, 5));
    CurvatureSeries c = curvature_series(a, true);
    CHECK(c.offset == 0);
    CHECK(c.kappa.size() == 9);
    for (int t = 0; t < 9; ++t)
      CHECK(c.kappa[t] == kappa_brute(a[(t + 8) % 9], a[t], a[(t + 1) % 9]));
  }

  SUBCASE("non-cyclic mode matches the oracle on interior frames") {
    Rng rng(7);
    std::vector<double> a;
    for (int t = 0; t < 9; ++t) a.push_back(rng.uniform(0, 5));
    CurvatureSeries c = curvature_series(a, false);
    CHECK(c.kappa.size() == 7);
    for (int t = 1; t < 8; ++t) CHECK(c.kappa[t - 1] == kappa_brute(a[t - 1], a[t], a[t + 1]));
  }
}

TEST_CASE("evaluate_method on a perfect prediction") {
  const int h = 16, w = 16, frames = 6;
  LabelSequence truth;
  truth.frames = frames;
  truth.height = h;
  truth.width = w;
  truth.num_classes = 3;
  truth.provenance.assign(frames, 1);
  truth.data.assign(static_cast<std::size_t>(frames) * h * w, 0);
  for (int t = 0; t < frames; ++t)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double r1 = std::hypot(y - 5.0, x - 5.0);
        const double r2 = std::hypot(y - 11.0, x - 11.0);
        if (r1 < 3.0 + 0.3 * t) truth.frame(t)[y * w + x] = 1;
        else if (r2 < 2.5) truth.frame(t)[y * w + x] = 2;
      }

  SparseAnnotations ref;
  ref.total_frames = frames;
  ref.height = h;
  ref.width = w;
  ref.num_classes = 3;
  for (int s : {0, 3})
    ref.frames[s] = std::vector<std::uint8_t>(truth.frame(s), truth.frame(s) + h * w);

  MetricsReport report = evaluate_method(truth, ref, 1.6, false, &truth);
  for (const StructureMetrics* m : {&report.aao, &report.dao}) {
    CHECK(m->dice == 1.0);
    CHECK(m->mcd_mm == 0.0);
    CHECK(m->area_err_mm2 == 0.0);
    CHECK(m->area_series_mm2.size() == frames);
  }
  CHECK(report.aao.mean_curvature > 0.0);  // the disk grows nonlinearly in pixels
  REQUIRE(report.dense_dice.has_value());
  for (const auto& row : *report.dense_dice) {
    CHECK(row[0] == 1.0);
    CHECK(row[1] == 1.0);
  }
}
