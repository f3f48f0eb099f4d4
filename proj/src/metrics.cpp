#include "aoseg/metrics.hpp"

#include <cmath>

namespace aoseg {

namespace {

std::vector<std::pair<int, int>> contour_points(const Mask& m) {
  std::vector<std::pair<int, int>> pts;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.v[y * m.width + x]) continue;
      const bool boundary =
          y == 0 || !m.v[(y - 1) * m.width + x] || y == m.height - 1 ||
          !m.v[(y + 1) * m.width + x] || x == 0 || !m.v[y * m.width + x - 1] ||
          x == m.width - 1 || !m.v[y * m.width + x + 1];
      if (boundary) pts.emplace_back(y, x);
    }
  return pts;
}

double directed_mean_distance(const std::vector<std::pair<int, int>>& from,
                              const std::vector<std::pair<int, int>>& to) {
  double acc = 0.0;
  for (const auto& [fy, fx] : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [ty, tx] : to) {
      const double dy = fy - ty, dx = fx - tx;
      best = std::min(best, std::sqrt(dy * dy + dx * dx));
    }
    acc += best;
  }
  return acc / static_cast<double>(from.size());
}

}  // namespace

Mask mask_of_class(const LabelSequence& labels, int frame, int class_id) {
  Mask m;
  m.height = labels.height;
  m.width = labels.width;
  m.v.resize(labels.frame_size());
  const std::uint8_t* f = labels.frame(frame);
  for (std::int64_t i = 0; i < labels.frame_size(); ++i)
    m.v[i] = f[i] == class_id ? 1 : 0;
  return m;
}

double dice(const Mask& a, const Mask& b) {
  if (a.height != b.height || a.width != b.width)
    throw Error("dice: mask shapes differ (" + std::to_string(a.height) + "x" +
                std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                std::to_string(b.width) + ")");
  std::int64_t na = 0, nb = 0, inter = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    na += a.v[i] != 0;
    nb += b.v[i] != 0;
    inter += (a.v[i] != 0 && b.v[i] != 0);
  }
  if (na + nb == 0) return 1.0;  // both empty
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

double mean_contour_distance(const Mask& a, const Mask& b, double spacing_mm) {
  if (a.height != b.height || a.width != b.width)
    throw Error("mean_contour_distance: mask shapes differ");
  if (a.empty_mask())
    throw Error("mean_contour_distance: first mask is empty");
  if (b.empty_mask())
    throw Error("mean_contour_distance: second mask is empty");
  const auto ca = contour_points(a);
  const auto cb = contour_points(b);
  return 0.5 * (directed_mean_distance(ca, cb) + directed_mean_distance(cb, ca)) *
         spacing_mm;
}

std::vector<double> area_series(const LabelSequence& labels, int class_id,
                                double spacing_mm) {
  if (class_id < 0 || class_id >= labels.num_classes)
    throw Error("area_series: class " + std::to_string(class_id) + " out of range");
  std::vector<double> out(labels.frames);
  for (int t = 0; t < labels.frames; ++t) {
    std::int64_t count = 0;
    const std::uint8_t* f = labels.frame(t);
    for (std::int64_t i = 0; i < labels.frame_size(); ++i) count += f[i] == class_id;
    out[t] = static_cast<double>(count) * spacing_mm * spacing_mm;
  }
  return out;
}

CurvatureSeries curvature_series(const std::vector<double>& area, bool cyclic) {
  const int n = static_cast<int>(area.size());
  if (n < 3)
    throw Error("curvature_series: need at least 3 frames, got " + std::to_string(n));
  CurvatureSeries out;
  out.offset = cyclic ? 0 : 1;
  const int count = cyclic ? n : n - 2;
  out.kappa.resize(count);
  double acc = 0.0;
  for (int i = 0; i < count; ++i) {
    const int t = i + out.offset;
    const int tp = cyclic ? (t + 1) % n : t + 1;
    const int tm = cyclic ? (t + n - 1) % n : t - 1;
    const double d1 = (area[tp] - area[tm]) / 2.0;
    const double d2 = area[tp] - 2.0 * area[t] + area[tm];
    const double k = std::abs(d2) / std::pow(1.0 + d1 * d1, 1.5);
    out.kappa[i] = k;
    acc += k;
  }
  out.mean = acc / count;
  return out;
}

MetricsReport evaluate_method(const LabelSequence& predicted,
                              const SparseAnnotations& reference, double spacing_mm,
                              bool cyclic_curvature, const LabelSequence* dense_truth) {
  predicted.validate();
  reference.validate();
  if (predicted.frames != reference.total_frames || predicted.height != reference.height ||
      predicted.width != reference.width)
    throw Error("evaluate_method: prediction does not cover the reference sequence");

  const double worst_mcd =
      std::sqrt(static_cast<double>(predicted.height) * predicted.height +
                static_cast<double>(predicted.width) * predicted.width) *
      spacing_mm;

  MetricsReport report;
  for (int structure : {kClassAAo, kClassDAo}) {
    StructureMetrics sm;
    double dice_acc = 0.0, mcd_acc = 0.0, area_acc = 0.0;
    int n_annot = 0;
    for (const auto& [s, labels] : reference.frames) {
      Mask pred = mask_of_class(predicted, s, structure);
      Mask ref;
      ref.height = reference.height;
      ref.width = reference.width;
      ref.v.resize(labels.size());
      for (std::size_t i = 0; i < labels.size(); ++i)
        ref.v[i] = labels[i] == structure ? 1 : 0;

      dice_acc += dice(pred, ref);
      mcd_acc += (pred.empty_mask() || ref.empty_mask())
                     ? worst_mcd
                     : mean_contour_distance(pred, ref, spacing_mm);
      std::int64_t np = 0, nr = 0;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        np += pred.v[i] != 0;
        nr += ref.v[i] != 0;
      }
      area_acc += std::abs(static_cast<double>(np) - static_cast<double>(nr)) *
                  spacing_mm * spacing_mm;
      ++n_annot;
    }
    sm.dice = dice_acc / n_annot;
    sm.mcd_mm = mcd_acc / n_annot;
    sm.area_err_mm2 = area_acc / n_annot;
    sm.area_series_mm2 = area_series(predicted, structure, spacing_mm);
    sm.mean_curvature = curvature_series(sm.area_series_mm2, cyclic_curvature).mean;
    (structure == kClassAAo ? report.aao : report.dao) = sm;
  }

  if (dense_truth) {
    dense_truth->validate();
    if (dense_truth->frames != predicted.frames)
      throw Error("evaluate_method: dense truth frame count mismatch");
    std::vector<std::array<double, 2>> per_frame(predicted.frames);
    for (int t = 0; t < predicted.frames; ++t)
      for (int structure : {kClassAAo, kClassDAo})
        per_frame[t][structure - 1] = dice(mask_of_class(predicted, t, structure),
                                           mask_of_class(*dense_truth, t, structure));
    report.dense_dice = std::move(per_frame);
  }
  return report;
}

}  // namespace aoseg
