// Non-rigid frame-to-frame motion estimation on a cubic B-spline control
// grid (free-form deformation), with displacement-field composition and
// pull-back warping of images and label maps.
//
// Field convention: for target pixel p the source sample point is
// p + d(p), i.e. fields pull intensities from the moving frame onto the
// fixed frame's grid. Out-of-bounds samples clamp to the border.

#pragma once

#include <Eigen/Core>
#include <cstdint>

#include "aoseg/common.hpp"

namespace aoseg {

using Frame = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense per-pixel (dy, dx) displacement in pixels.
struct DisplacementField {
  int height = 0;
  int width = 0;
  std::vector<float> d;  // interleaved per pixel: dy then dx

  DisplacementField() = default;
  DisplacementField(int h, int w)
      : height(h), width(w), d(static_cast<std::size_t>(2) * h * w, 0.0f) {}

  float& dy(int y, int x) { return d[2 * (static_cast<std::size_t>(y) * width + x)]; }
  float& dx(int y, int x) { return d[2 * (static_cast<std::size_t>(y) * width + x) + 1]; }
  float dy(int y, int x) const { return d[2 * (static_cast<std::size_t>(y) * width + x)]; }
  float dx(int y, int x) const { return d[2 * (static_cast<std::size_t>(y) * width + x) + 1]; }
};

struct RegConfig {
  int control_spacing = 8;        // pixels, finest level
  int pyramid_levels = 3;         // spacing halves per level, coarse to fine
  int iterations_per_level = 50;
  double step_size = 2.0;         // initial descent step in pixels
  double bending_weight = 0.01;   // lambda for the bending-energy penalty
  double max_displacement_factor = 0.25;  // cap = factor * min(H, W)

  void validate() const {
    if (control_spacing < 2) throw Error("registration: control spacing must be >= 2");
    if (pyramid_levels < 1) throw Error("registration: pyramid levels must be >= 1");
    if (iterations_per_level < 1) throw Error("registration: iterations must be >= 1");
    if (step_size <= 0.0) throw Error("registration: step size must be positive");
    if (bending_weight < 0.0) throw Error("registration: bending weight must be >= 0");
  }
};

struct RegResult {
  DisplacementField field;
  bool warning = false;  // SSD failed to improve across a full level
  double ssd_initial = 0.0;
  double ssd_final = 0.0;
};

// Minimizes SSD(fixed, warp(moving, d)) + lambda * bending(d) over the
// control grid, coarse to fine. The returned field never has a higher
// final SSD than the identity field.
RegResult register_pair(const Frame& fixed, const Frame& moving, const RegConfig& cfg);

// (outer o inner)(p) = inner(p + outer(p)) + outer(p), bilinear sampling
// of the inner field. Composing with the zero field is the identity.
DisplacementField compose(const DisplacementField& outer, const DisplacementField& inner);

// Bilinear pull-back warp with border clamping.
Frame warp_image(const Frame& image, const DisplacementField& d);

// Warps each class indicator bilinearly, then takes the per-pixel argmax;
// ties resolve toward the lowest class index.
std::vector<std::uint8_t> warp_labels(const std::uint8_t* labels, int h, int w,
                                      int num_classes, const DisplacementField& d);

// Sum over interior pixels of squared second differences
// (d_yy^2 + 2 d_xy^2 + d_xx^2) of both components; zero for affine fields.
double bending_energy(const DisplacementField& d);

double ssd(const Frame& a, const Frame& b);

Frame frame_from(const float* pixels, int h, int w);

}  // namespace aoseg
