#include "aoseg/registration.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace aoseg {

namespace {

using Arr2d = Eigen::ArrayXXd;

// Uniform cubic B-spline basis at fraction f in [0, 1).
inline void bspline_weights(double f, double w[4]) {
  const double f2 = f * f, f3 = f2 * f;
  w[0] = (1.0 - 3.0 * f + 3.0 * f2 - f3) / 6.0;
  w[1] = (4.0 - 6.0 * f2 + 3.0 * f3) / 6.0;
  w[2] = (1.0 + 3.0 * f + 3.0 * f2 - 3.0 * f3) / 6.0;
  w[3] = f3 / 6.0;
}

// Per-axis sample plan: control base index and 4 basis weights per pixel.
struct AxisPlan {
  std::vector<int> base;
  std::vector<std::array<double, 4>> wgt;
};

AxisPlan plan_axis(int n, int spacing) {
  AxisPlan p;
  p.base.resize(n);
  p.wgt.resize(n);
  for (int i = 0; i < n; ++i) {
    const int b = i / spacing;
    const double f = static_cast<double>(i - b * spacing) / spacing;
    p.base[i] = b;  // control array rows b .. b+3 (grid margin absorbs the -1)
    bspline_weights(f, p.wgt[i].data());
  }
  return p;
}

inline int grid_extent(int n, int spacing) { return (n - 1) / spacing + 4; }

// dense += spline(coef) for one component.
void add_spline(const Arr2d& coef, const AxisPlan& py, const AxisPlan& px, Arr2d& dense) {
  const int h = static_cast<int>(dense.rows()), w = static_cast<int>(dense.cols());
  for (int y = 0; y < h; ++y) {
    const int by = py.base[y];
    const auto& wy = py.wgt[y];
    for (int x = 0; x < w; ++x) {
      const int bx = px.base[x];
      const auto& wx = px.wgt[x];
      double v = 0.0;
      for (int b = 0; b < 4; ++b)
        for (int a = 0; a < 4; ++a) v += wy[b] * wx[a] * coef(by + b, bx + a);
      dense(y, x) += v;
    }
  }
}

// coef_grad += scatter of per-pixel gradients through the basis weights.
void scatter_spline(const Arr2d& pixel_grad, const AxisPlan& py, const AxisPlan& px,
                    Arr2d& coef_grad) {
  const int h = static_cast<int>(pixel_grad.rows()), w = static_cast<int>(pixel_grad.cols());
  for (int y = 0; y < h; ++y) {
    const int by = py.base[y];
    const auto& wy = py.wgt[y];
    for (int x = 0; x < w; ++x) {
      const double gv = pixel_grad(y, x);
      if (gv == 0.0) continue;
      const int bx = px.base[x];
      const auto& wx = px.wgt[x];
      for (int b = 0; b < 4; ++b)
        for (int a = 0; a < 4; ++a) coef_grad(by + b, bx + a) += wy[b] * wx[a] * gv;
    }
  }
}

inline double bilinear_f(const Frame& img, double y, double x) {
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const int iy = std::min(static_cast<int>(y), h > 1 ? h - 2 : 0);
  const int ix = std::min(static_cast<int>(x), w > 1 ? w - 2 : 0);
  const double fy = y - iy, fx = x - ix;
  const int y1 = h > 1 ? iy + 1 : iy, x1 = w > 1 ? ix + 1 : ix;
  return (1.0 - fy) * ((1.0 - fx) * img(iy, ix) + fx * img(iy, x1)) +
         fy * ((1.0 - fx) * img(y1, ix) + fx * img(y1, x1));
}

inline double bilinear_d(const Arr2d& img, double y, double x) {
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const int iy = std::min(static_cast<int>(y), h > 1 ? h - 2 : 0);
  const int ix = std::min(static_cast<int>(x), w > 1 ? w - 2 : 0);
  const double fy = y - iy, fx = x - ix;
  const int y1 = h > 1 ? iy + 1 : iy, x1 = w > 1 ? ix + 1 : ix;
  return (1.0 - fy) * ((1.0 - fx) * img(iy, ix) + fx * img(iy, x1)) +
         fy * ((1.0 - fx) * img(y1, ix) + fx * img(y1, x1));
}

// Sum of squared second differences of one component over interior pixels.
double bending_sum(const Arr2d& u) {
  const int h = static_cast<int>(u.rows()), w = static_cast<int>(u.cols());
  double acc = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 1; x + 1 < w; ++x) {
      const double uxx = u(y, x - 1) - 2.0 * u(y, x) + u(y, x + 1);
      acc += uxx * uxx;
    }
  for (int y = 1; y + 1 < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double uyy = u(y - 1, x) - 2.0 * u(y, x) + u(y + 1, x);
      acc += uyy * uyy;
    }
  for (int y = 1; y + 1 < h; ++y)
    for (int x = 1; x + 1 < w; ++x) {
      const double uxy =
          (u(y + 1, x + 1) - u(y + 1, x - 1) - u(y - 1, x + 1) + u(y - 1, x - 1)) / 4.0;
      acc += 2.0 * uxy * uxy;
    }
  return acc;
}

// grad += scale * d(bending_sum)/d(u).
void bending_grad_add(const Arr2d& u, double scale, Arr2d& grad) {
  const int h = static_cast<int>(u.rows()), w = static_cast<int>(u.cols());
  for (int y = 0; y < h; ++y)
    for (int x = 1; x + 1 < w; ++x) {
      const double t = scale * 2.0 * (u(y, x - 1) - 2.0 * u(y, x) + u(y, x + 1));
      grad(y, x - 1) += t;
      grad(y, x) -= 2.0 * t;
      grad(y, x + 1) += t;
    }
  for (int y = 1; y + 1 < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double t = scale * 2.0 * (u(y - 1, x) - 2.0 * u(y, x) + u(y + 1, x));
      grad(y - 1, x) += t;
      grad(y, x) -= 2.0 * t;
      grad(y + 1, x) += t;
    }
  for (int y = 1; y + 1 < h; ++y)
    for (int x = 1; x + 1 < w; ++x) {
      const double uxy =
          (u(y + 1, x + 1) - u(y + 1, x - 1) - u(y - 1, x + 1) + u(y - 1, x - 1)) / 4.0;
      const double t = scale * uxy;  // 2 * 2*uxy * (1/4)
      grad(y + 1, x + 1) += t;
      grad(y + 1, x - 1) -= t;
      grad(y - 1, x + 1) -= t;
      grad(y - 1, x - 1) += t;
    }
}

struct LevelState {
  const Frame* fixed = nullptr;
  const Frame* moving = nullptr;
  const Arr2d* mv_gy = nullptr;
  const Arr2d* mv_gx = nullptr;
  const Arr2d* carried_dy = nullptr;
  const Arr2d* carried_dx = nullptr;
  AxisPlan py, px;
  double lambda = 0.0;
};

void dense_field(const LevelState& st, const Arr2d& cy, const Arr2d& cx, Arr2d& dy,
                 Arr2d& dx) {
  dy = *st.carried_dy;
  dx = *st.carried_dx;
  add_spline(cy, st.py, st.px, dy);
  add_spline(cx, st.py, st.px, dx);
}

// Cost (SSD + lambda * bending) of the dense field; SSD reported separately.
std::pair<double, double> field_cost(const LevelState& st, const Arr2d& dy, const Arr2d& dx) {
  const Frame& fx = *st.fixed;
  const Frame& mv = *st.moving;
  const int h = static_cast<int>(fx.rows()), w = static_cast<int>(fx.cols());
  double ssd_acc = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double r = bilinear_f(mv, y + dy(y, x), x + dx(y, x)) - fx(y, x);
      ssd_acc += r * r;
    }
  const double be = bending_sum(dy) + bending_sum(dx);
  return {ssd_acc + st.lambda * be, ssd_acc};
}

// Cost plus gradient with respect to the control coefficients.
std::pair<double, double> field_cost_grad(const LevelState& st, const Arr2d& cy,
                                          const Arr2d& cx, Arr2d& gcy, Arr2d& gcx) {
  const Frame& fx = *st.fixed;
  const Frame& mv = *st.moving;
  const int h = static_cast<int>(fx.rows()), w = static_cast<int>(fx.cols());
  Arr2d dy, dx;
  dense_field(st, cy, cx, dy, dx);

  Arr2d pgy = Arr2d::Zero(h, w), pgx = Arr2d::Zero(h, w);
  double ssd_acc = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double sy = y + dy(y, x), sx = x + dx(y, x);
      const double r = bilinear_f(mv, sy, sx) - fx(y, x);
      ssd_acc += r * r;
      pgy(y, x) = 2.0 * r * bilinear_d(*st.mv_gy, sy, sx);
      pgx(y, x) = 2.0 * r * bilinear_d(*st.mv_gx, sy, sx);
    }
  const double be = bending_sum(dy) + bending_sum(dx);
  bending_grad_add(dy, st.lambda, pgy);
  bending_grad_add(dx, st.lambda, pgx);

  gcy.setZero();
  gcx.setZero();
  scatter_spline(pgy, st.py, st.px, gcy);
  scatter_spline(pgx, st.py, st.px, gcx);
  return {ssd_acc + st.lambda * be, ssd_acc};
}

}  // namespace

double ssd(const Frame& a, const Frame& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error("ssd: frame sizes differ");
  return (a - b).cast<double>().square().sum();
}

Frame frame_from(const float* pixels, int h, int w) {
  Frame f(h, w);
  std::copy_n(pixels, static_cast<std::size_t>(h) * w, f.data());
  return f;
}

double bending_energy(const DisplacementField& d) {
  Arr2d uy(d.height, d.width), ux(d.height, d.width);
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x) {
      uy(y, x) = d.dy(y, x);
      ux(y, x) = d.dx(y, x);
    }
  return bending_sum(uy) + bending_sum(ux);
}

RegResult register_pair(const Frame& fixed, const Frame& moving, const RegConfig& cfg) {
  cfg.validate();
  if (fixed.rows() != moving.rows() || fixed.cols() != moving.cols())
    throw Error("register_pair: frame sizes differ");
  const int h = static_cast<int>(fixed.rows()), w = static_cast<int>(fixed.cols());

  // Central-difference gradient images of the moving frame, clamped at borders.
  Arr2d mv_gy(h, w), mv_gx(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      mv_gy(y, x) = (moving(std::min(y + 1, h - 1), x) - moving(std::max(y - 1, 0), x)) / 2.0;
      mv_gx(y, x) = (moving(y, std::min(x + 1, w - 1)) - moving(y, std::max(x - 1, 0))) / 2.0;
    }

  RegResult res;
  res.ssd_initial = ssd(fixed, moving);
  Arr2d carried_dy = Arr2d::Zero(h, w), carried_dx = Arr2d::Zero(h, w);
  double current_ssd = res.ssd_initial;

  for (int level = 0; level < cfg.pyramid_levels; ++level) {
    const int spacing = cfg.control_spacing << (cfg.pyramid_levels - 1 - level);
    LevelState st;
    st.fixed = &fixed;
    st.moving = &moving;
    st.mv_gy = &mv_gy;
    st.mv_gx = &mv_gx;
    st.carried_dy = &carried_dy;
    st.carried_dx = &carried_dx;
    st.py = plan_axis(h, spacing);
    st.px = plan_axis(w, spacing);
    st.lambda = cfg.bending_weight;
    const int gh = grid_extent(h, spacing), gw = grid_extent(w, spacing);

    Arr2d cy = Arr2d::Zero(gh, gw), cx = Arr2d::Zero(gh, gw);
    Arr2d gcy(gh, gw), gcx(gh, gw);
    const double level_start_ssd = current_ssd;
    Arr2d best_cy = cy, best_cx = cx;
    double best_ssd = level_start_ssd;

    auto [cost, cur_ssd] = field_cost_grad(st, cy, cx, gcy, gcx);
    double step = cfg.step_size;
    for (int it = 0; it < cfg.iterations_per_level; ++it) {
      const double ginf = std::max(gcy.abs().maxCoeff(), gcx.abs().maxCoeff());
      if (ginf <= 0.0) break;
      const double scale_by = step / ginf;
      Arr2d cand_cy = cy - scale_by * gcy;
      Arr2d cand_cx = cx - scale_by * gcx;
      Arr2d dy, dx;
      dense_field(st, cand_cy, cand_cx, dy, dx);
      auto [cand_cost, cand_ssd] = field_cost(st, dy, dx);
      if (cand_cost < cost) {
        cy.swap(cand_cy);
        cx.swap(cand_cx);
        cost = cand_cost;
        cur_ssd = cand_ssd;
        if (cand_ssd < best_ssd) {
          best_ssd = cand_ssd;
          best_cy = cy;
          best_cx = cx;
        }
        std::tie(cost, cur_ssd) = field_cost_grad(st, cy, cx, gcy, gcx);
        step = std::min(step * 1.2, 4.0 * spacing);
      } else {
        step *= 0.5;
        if (step < 1e-4) break;
      }
    }

    if (cur_ssd > level_start_ssd) {
      // fall back to the best field seen at this level
      res.warning = true;
      cy = best_cy;
      cx = best_cx;
      cur_ssd = best_ssd;
    }
    add_spline(cy, st.py, st.px, carried_dy);
    add_spline(cx, st.py, st.px, carried_dx);
    current_ssd = cur_ssd;
  }

  res.ssd_final = current_ssd;
  res.field = DisplacementField(h, w);
  const double cap = cfg.max_displacement_factor * std::min(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double vy = carried_dy(y, x), vx = carried_dx(y, x);
      const double mag = std::sqrt(vy * vy + vx * vx);
      if (mag > cap) {
        vy *= cap / mag;
        vx *= cap / mag;
      }
      res.field.dy(y, x) = static_cast<float>(vy);
      res.field.dx(y, x) = static_cast<float>(vx);
    }
  return res;
}

DisplacementField compose(const DisplacementField& outer, const DisplacementField& inner) {
  if (outer.height != inner.height || outer.width != inner.width)
    throw Error("compose: field sizes differ");
  const int h = outer.height, w = outer.width;
  DisplacementField out(h, w);
  auto sample = [&](bool want_dy, double y, double x) {
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    const int iy = std::min(static_cast<int>(y), h > 1 ? h - 2 : 0);
    const int ix = std::min(static_cast<int>(x), w > 1 ? w - 2 : 0);
    const double fy = y - iy, fx = x - ix;
    const int y1 = h > 1 ? iy + 1 : iy, x1 = w > 1 ? ix + 1 : ix;
    auto v = [&](int yy, int xx) {
      return static_cast<double>(want_dy ? inner.dy(yy, xx) : inner.dx(yy, xx));
    };
    return (1.0 - fy) * ((1.0 - fx) * v(iy, ix) + fx * v(iy, x1)) +
           fy * ((1.0 - fx) * v(y1, ix) + fx * v(y1, x1));
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double oy = outer.dy(y, x), ox = outer.dx(y, x);
      out.dy(y, x) = static_cast<float>(oy + sample(true, y + oy, x + ox));
      out.dx(y, x) = static_cast<float>(ox + sample(false, y + oy, x + ox));
    }
  return out;
}

Frame warp_image(const Frame& image, const DisplacementField& d) {
  if (static_cast<int>(image.rows()) != d.height || static_cast<int>(image.cols()) != d.width)
    throw Error("warp_image: image and field sizes differ");
  Frame out(d.height, d.width);
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x)
      out(y, x) = static_cast<float>(bilinear_f(image, y + d.dy(y, x), x + d.dx(y, x)));
  return out;
}

std::vector<std::uint8_t> warp_labels(const std::uint8_t* labels, int h, int w,
                                      int num_classes, const DisplacementField& d) {
  if (h != d.height || w != d.width)
    throw Error("warp_labels: label map and field sizes differ");
  std::vector<std::uint8_t> out(static_cast<std::size_t>(h) * w);
  std::vector<double> score(num_classes);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double sy = std::clamp(y + static_cast<double>(d.dy(y, x)), 0.0,
                             static_cast<double>(h - 1));
      double sx = std::clamp(x + static_cast<double>(d.dx(y, x)), 0.0,
                             static_cast<double>(w - 1));
      const int iy = std::min(static_cast<int>(sy), h > 1 ? h - 2 : 0);
      const int ix = std::min(static_cast<int>(sx), w > 1 ? w - 2 : 0);
      const double fy = sy - iy, fx = sx - ix;
      const int y1 = h > 1 ? iy + 1 : iy, x1 = w > 1 ? ix + 1 : ix;
      std::fill(score.begin(), score.end(), 0.0);
      score[labels[iy * w + ix]] += (1.0 - fy) * (1.0 - fx);
      score[labels[iy * w + x1]] += (1.0 - fy) * fx;
      score[labels[y1 * w + ix]] += fy * (1.0 - fx);
      score[labels[y1 * w + x1]] += fy * fx;
      int best = 0;
      for (int c = 1; c < num_classes; ++c)
        if (score[c] > score[best]) best = c;
      out[y * w + x] = static_cast<std::uint8_t>(best);
    }
  return out;
}

}  // namespace aoseg
