// Segmentation accuracy (Dice, mean contour distance, area error) and
// temporal smoothness (curvature of the time-area curve).

#pragma once

#include <optional>

#include "aoseg/sequence.hpp"

namespace aoseg {

// Segmented structures: class indices into label maps.
inline constexpr int kClassBackground = 0;
inline constexpr int kClassAAo = 1;
inline constexpr int kClassDAo = 2;

struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> v;  // 0/1

  bool empty_mask() const {
    for (auto b : v)
      if (b) return false;
    return true;
  }
};

Mask mask_of_class(const LabelSequence& labels, int frame, int class_id);

// 2|A^B| / (|A|+|B|); both-empty defined as 1, empty-vs-nonempty as 0.
double dice(const Mask& a, const Mask& b);

// Symmetric mean nearest-neighbor distance between the two contours
// (pixels with at least one 4-neighbor outside the mask; the image border
// counts as outside), scaled to millimetres. Both masks must be nonempty.
double mean_contour_distance(const Mask& a, const Mask& b, double spacing_mm);

// A(t) = pixel count * spacing^2, in mm^2.
std::vector<double> area_series(const LabelSequence& labels, int class_id, double spacing_mm);

struct CurvatureSeries {
  std::vector<double> kappa;  // aligned to frame `offset`
  int offset = 0;             // 1 for non-cyclic (endpoints excluded), 0 for cyclic
  double mean = 0.0;
};

// kappa(t) = |A''(t)| / (1 + A'(t)^2)^1.5 with central differences at unit
// frame step. Non-cyclic mode excludes the endpoints from the series and
// the mean; cyclic mode wraps and covers every frame.
CurvatureSeries curvature_series(const std::vector<double>& area, bool cyclic = false);

struct StructureMetrics {
  double dice = 0.0;            // mean over annotated frames
  double mcd_mm = 0.0;          // mean over annotated frames
  double area_err_mm2 = 0.0;    // mean |A_pred - A_ref| over annotated frames
  double mean_curvature = 0.0;  // from the full predicted series
  std::vector<double> area_series_mm2;  // full predicted series
};

struct MetricsReport {
  StructureMetrics aao;
  StructureMetrics dao;
  // per-frame Dice against dense truth, when available (index [frame][structure])
  std::optional<std::vector<std::array<double, 2>>> dense_dice;
};

// Accuracy at the annotated frames, smoothness over the whole sequence.
// When predicted and reference masks cannot both support a contour
// (either empty), the contour distance falls back to the image diagonal.
MetricsReport evaluate_method(const LabelSequence& predicted,
                              const SparseAnnotations& reference, double spacing_mm,
                              bool cyclic_curvature = false,
                              const LabelSequence* dense_truth = nullptr);

}  // namespace aoseg
