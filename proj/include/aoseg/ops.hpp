// Differentiable tensor operations: exactly the set the segmentation
// network needs. Every op takes an optional Graph*; when given, the op
// records a closure that propagates adjoints to its tracked inputs.
//
// Convolutions lower to im2col + a single-threaded Eigen GEMM per batch
// item; all other reductions accumulate in double with fixed iteration
// order, so repeated runs on the same inputs are bit-identical.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "aoseg/tensor.hpp"

namespace aoseg {

namespace detail {

template <class S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

inline void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank)
    throw Error(std::string(op) + ": expected rank " + std::to_string(rank) +
                " tensor, got shape " + shape_str(s));
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b)
    throw Error(std::string(op) + ": shape mismatch between " + shape_str(a) +
                " and " + shape_str(b));
}

// Patch matrix for one batch item: rows index (ci, ky, kx), columns index
// output pixels in row-major (y, x) order. Out-of-image taps are zero.
template <class S>
void im2col(const Tensor<S>& input, int n, int kh, int kw, int pad, RowMat<S>& cols) {
  const Shape& is = input.shape();
  const int cin = is[1], h = is[2], w = is[3];
  const S* base = input.data() + static_cast<std::int64_t>(n) * cin * h * w;
  int r = 0;
  for (int ci = 0; ci < cin; ++ci) {
    const S* plane = base + static_cast<std::int64_t>(ci) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx, ++r) {
        S* dst = cols.data() + static_cast<std::int64_t>(r) * h * w;
        const int dy = ky - pad, dx = kx - pad;
        for (int y = 0; y < h; ++y, dst += w) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, S(0));
            continue;
          }
          const S* srow = plane + static_cast<std::int64_t>(sy) * w;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          std::fill(dst, dst + x0, S(0));
          for (int x = x0; x < x1; ++x) dst[x] = srow[x + dx];
          std::fill(dst + std::max(x0, x1), dst + w, S(0));
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds patch-space gradients back into the
// input gradient plane, same loop order as the forward fill.
template <class S>
void col2im_add(const RowMat<S>& dcols, int cin, int h, int w, int kh, int kw, int pad,
                S* grad_base) {
  int r = 0;
  for (int ci = 0; ci < cin; ++ci) {
    S* plane = grad_base + static_cast<std::int64_t>(ci) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx, ++r) {
        const S* src = dcols.data() + static_cast<std::int64_t>(r) * h * w;
        const int dy = ky - pad, dx = kx - pad;
        for (int y = 0; y < h; ++y, src += w) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          S* grow = plane + static_cast<std::int64_t>(sy) * w;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          for (int x = x0; x < x1; ++x) grow[x + dx] += src[x];
        }
      }
    }
  }
}

}  // namespace detail

// 2-D cross-correlation with "same" zero padding (the only mode used).
// input [N,Cin,H,W] * kernel [Cout,Cin,kH,kW] + bias [Cout] -> [N,Cout,H,W].
template <class S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& kernel, const Tensor<S>& bias,
                 int padding, Graph<S>* g = nullptr) {
  using detail::RowMat;
  detail::require_rank(input.shape(), 4, "conv2d(input)");
  detail::require_rank(kernel.shape(), 4, "conv2d(kernel)");
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  const int n = is[0], cin = is[1], h = is[2], w = is[3];
  const int cout = ks[0], kh = ks[2], kw = ks[3];
  if (ks[1] != cin)
    throw Error("conv2d: input channels " + shape_str(is) +
                " incompatible with kernel " + shape_str(ks));
  if (kh % 2 == 0 || kw % 2 == 0)
    throw Error("conv2d: kernel extents must be odd, got " + shape_str(ks));
  if (padding != (kh - 1) / 2 || padding != (kw - 1) / 2)
    throw Error("conv2d: padding " + std::to_string(padding) +
                " does not give same-size output for kernel " + shape_str(ks));
  if (bias.shape() != Shape{cout})
    throw Error("conv2d: bias shape " + shape_str(bias.shape()) + " must be [" +
                std::to_string(cout) + "]");

  const int krows = cin * kh * kw;
  const std::int64_t pixels = static_cast<std::int64_t>(h) * w;
  Tensor<S> out({n, cout, h, w});
  Eigen::Map<const RowMat<S>> kmat(kernel.data(), cout, krows);
  Eigen::Map<const detail::VecX<S>> bvec(bias.data(), cout);
  RowMat<S> cols(krows, pixels);
  for (int b = 0; b < n; ++b) {
    detail::im2col(input, b, kh, kw, padding, cols);
    Eigen::Map<RowMat<S>> outm(out.data() + static_cast<std::int64_t>(b) * cout * pixels,
                               cout, pixels);
    outm.noalias() = kmat * cols;
    outm.colwise() += bvec;
  }

  if (g) {
    out.set_tracked(true);
    Tensor<S> in_c = input, k_c = kernel, b_c = bias, out_c = out;
    g->record([in_c, k_c, b_c, out_c, padding]() mutable {
      const Shape& is2 = in_c.shape();
      const Shape& ks2 = k_c.shape();
      const int n2 = is2[0], cin2 = is2[1], h2 = is2[2], w2 = is2[3];
      const int cout2 = ks2[0], kh2 = ks2[2], kw2 = ks2[3];
      const int krows2 = cin2 * kh2 * kw2;
      const std::int64_t px = static_cast<std::int64_t>(h2) * w2;
      Eigen::Map<const RowMat<S>> km(k_c.data(), cout2, krows2);
      RowMat<S> cols2(krows2, px);
      RowMat<S> dcols(krows2, px);
      for (int b = 0; b < n2; ++b) {
        Eigen::Map<const RowMat<S>> dout(
            out_c.grad().data() + static_cast<std::int64_t>(b) * cout2 * px, cout2, px);
        if (b_c.tracked()) {
          Eigen::Map<detail::VecX<S>> bg(b_c.grad().data(), cout2);
          bg += dout.rowwise().sum();
        }
        if (k_c.tracked()) {
          detail::im2col(in_c, b, kh2, kw2, padding, cols2);
          Eigen::Map<RowMat<S>> kg(k_c.grad().data(), cout2, krows2);
          kg.noalias() += dout * cols2.transpose();
        }
        if (in_c.tracked()) {
          dcols.noalias() = km.transpose() * dout;
          detail::col2im_add(dcols, cin2, h2, w2, kh2, kw2, padding,
                             in_c.grad().data() + static_cast<std::int64_t>(b) * cin2 * px);
        }
      }
    });
  }
  return out;
}

// Elementwise logistic function, numerically stable on both tails.
template <class S>
Tensor<S> sigmoid(const Tensor<S>& t, Graph<S>* g = nullptr) {
  Tensor<S> out(t.shape());
  out.values() = t.values().unaryExpr([](S x) {
    if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
    const S e = std::exp(x);
    return e / (S(1) + e);
  });
  if (g) {
    out.set_tracked(true);
    Tensor<S> in_c = t, out_c = out;
    g->record([in_c, out_c]() mutable {
      if (in_c.tracked())
        in_c.grad() += out_c.grad() * out_c.values() * (S(1) - out_c.values());
    });
  }
  return out;
}

template <class S>
Tensor<S> tanh_act(const Tensor<S>& t, Graph<S>* g = nullptr) {
  Tensor<S> out(t.shape());
  out.values() = t.values().tanh();
  if (g) {
    out.set_tracked(true);
    Tensor<S> in_c = t, out_c = out;
    g->record([in_c, out_c]() mutable {
      if (in_c.tracked())
        in_c.grad() += out_c.grad() * (S(1) - out_c.values().square());
    });
  }
  return out;
}

template <class S>
Tensor<S> relu(const Tensor<S>& t, Graph<S>* g = nullptr) {
  Tensor<S> out(t.shape());
  out.values() = t.values().max(S(0));
  if (g) {
    out.set_tracked(true);
    Tensor<S> in_c = t, out_c = out;
    g->record([in_c, out_c]() mutable {
      if (in_c.tracked())
        in_c.grad() += (in_c.values() > S(0)).select(out_c.grad(), ArrayX<S>::Zero(in_c.size()));
    });
  }
  return out;
}

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b, Graph<S>* g = nullptr) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  Tensor<S> out(a.shape());
  out.values() = a.values() + b.values();
  if (g) {
    out.set_tracked(true);
    Tensor<S> a_c = a, b_c = b, out_c = out;
    g->record([a_c, b_c, out_c]() mutable {
      if (a_c.tracked()) a_c.grad() += out_c.grad();
      if (b_c.tracked()) b_c.grad() += out_c.grad();
    });
  }
  return out;
}

template <class S>
Tensor<S> mul_hadamard(const Tensor<S>& a, const Tensor<S>& b, Graph<S>* g = nullptr) {
  detail::require_same_shape(a.shape(), b.shape(), "mul_hadamard");
  Tensor<S> out(a.shape());
  out.values() = a.values() * b.values();
  if (g) {
    out.set_tracked(true);
    Tensor<S> a_c = a, b_c = b, out_c = out;
    g->record([a_c, b_c, out_c]() mutable {
      if (a_c.tracked()) a_c.grad() += out_c.grad() * b_c.values();
      if (b_c.tracked()) b_c.grad() += out_c.grad() * a_c.values();
    });
  }
  return out;
}

// Concatenates along the channel axis; inputs agree on all other extents.
template <class S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b, Graph<S>* g = nullptr) {
  detail::require_rank(a.shape(), 4, "concat_channels");
  detail::require_rank(b.shape(), 4, "concat_channels");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as[0] != bs[0] || as[2] != bs[2] || as[3] != bs[3])
    throw Error("concat_channels: incompatible shapes " + shape_str(as) + " and " +
                shape_str(bs));
  const int n = as[0], ca = as[1], cb = bs[1], h = as[2], w = as[3];
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  Tensor<S> out({n, ca + cb, h, w});
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.data() + i * ca * plane, ca * plane, out.data() + i * (ca + cb) * plane);
    std::copy_n(b.data() + i * cb * plane, cb * plane,
                out.data() + i * (ca + cb) * plane + ca * plane);
  }
  if (g) {
    out.set_tracked(true);
    Tensor<S> a_c = a, b_c = b, out_c = out;
    g->record([a_c, b_c, out_c, n, ca, cb, plane]() mutable {
      for (int i = 0; i < n; ++i) {
        const S* og = out_c.grad().data() + i * (ca + cb) * plane;
        if (a_c.tracked()) {
          S* ag = a_c.grad().data() + i * ca * plane;
          for (std::int64_t j = 0; j < ca * plane; ++j) ag[j] += og[j];
        }
        if (b_c.tracked()) {
          S* bg = b_c.grad().data() + i * cb * plane;
          for (std::int64_t j = 0; j < cb * plane; ++j) bg[j] += og[ca * plane + j];
        }
      }
    });
  }
  return out;
}

// 2x2 max pooling with stride 2. Backward routes the adjoint to the argmax
// position; ties go to the first position in (y, x) scan order.
template <class S>
Tensor<S> maxpool2(const Tensor<S>& t, Graph<S>* g = nullptr) {
  detail::require_rank(t.shape(), 4, "maxpool2");
  const Shape& s = t.shape();
  const int n = s[0], c = s[1], h = s[2], w = s[3];
  if (h % 2 != 0 || w % 2 != 0)
    throw Error("maxpool2: spatial extents must be even, got " + shape_str(s));
  Tensor<S> out({n, c, h / 2, w / 2});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
  std::int64_t o = 0;
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; y += 2)
        for (int x = 0; x < w; x += 2, ++o) {
          std::int64_t best = t.index4(i, ch, y, x);
          S bv = t.values()[best];
          const int dys[3] = {0, 1, 1};
          const int dxs[3] = {1, 0, 1};
          for (int k = 0; k < 3; ++k) {
            std::int64_t idx = t.index4(i, ch, y + dys[k], x + dxs[k]);
            if (t.values()[idx] > bv) {
              bv = t.values()[idx];
              best = idx;
            }
          }
          out.values()[o] = bv;
          (*argmax)[o] = best;
        }
  if (g) {
    out.set_tracked(true);
    Tensor<S> in_c = t, out_c = out;
    g->record([in_c, out_c, argmax]() mutable {
      if (!in_c.tracked()) return;
      for (std::int64_t i = 0; i < out_c.size(); ++i)
        in_c.grad()[(*argmax)[i]] += out_c.grad()[i];
    });
  }
  return out;
}

// Nearest-neighbor 2x upsampling.
template <class S>
Tensor<S> upsample2(const Tensor<S>& t, Graph<S>* g = nullptr) {
  detail::require_rank(t.shape(), 4, "upsample2");
  const Shape& s = t.shape();
  const int n = s[0], c = s[1], h = s[2], w = s[3];
  Tensor<S> out({n, c, 2 * h, 2 * w});
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const S v = t.at4(i, ch, y, x);
          out.at4(i, ch, 2 * y, 2 * x) = v;
          out.at4(i, ch, 2 * y, 2 * x + 1) = v;
          out.at4(i, ch, 2 * y + 1, 2 * x) = v;
          out.at4(i, ch, 2 * y + 1, 2 * x + 1) = v;
        }
  if (g) {
    out.set_tracked(true);
    Tensor<S> in_c = t, out_c = out;
    g->record([in_c, out_c, n, c, h, w]() mutable {
      if (!in_c.tracked()) return;
      for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch)
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
              in_c.grad()[in_c.index4(i, ch, y, x)] +=
                  out_c.grad()[out_c.index4(i, ch, 2 * y, 2 * x)] +
                  out_c.grad()[out_c.index4(i, ch, 2 * y, 2 * x + 1)] +
                  out_c.grad()[out_c.index4(i, ch, 2 * y + 1, 2 * x)] +
                  out_c.grad()[out_c.index4(i, ch, 2 * y + 1, 2 * x + 1)];
    });
  }
  return out;
}

// Per-pixel softmax over channels followed by the negative log-likelihood
// of the one-hot target, averaged over pixels with the given non-negative
// weights and normalized by the weight sum. Stabilized by max subtraction;
// all reductions accumulate in double.
template <class S>
Tensor<S> softmax_cross_entropy(const Tensor<S>& logits, const Tensor<S>& target,
                                const Tensor<S>& pixel_weights, Graph<S>* g = nullptr) {
  detail::require_rank(logits.shape(), 4, "softmax_cross_entropy");
  detail::require_same_shape(logits.shape(), target.shape(), "softmax_cross_entropy");
  const Shape& s = logits.shape();
  const int n = s[0], c = s[1], h = s[2], w = s[3];
  if (pixel_weights.shape() != Shape{n, 1, h, w})
    throw Error("softmax_cross_entropy: weight shape " + shape_str(pixel_weights.shape()) +
                " must be " + shape_str({n, 1, h, w}));
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;

  double wsum = 0.0, acc = 0.0;
  for (int i = 0; i < n; ++i) {
    for (std::int64_t p = 0; p < plane; ++p) {
      const double wv = static_cast<double>(pixel_weights.values()[i * plane + p]);
      if (wv < 0.0)
        throw Error("softmax_cross_entropy: negative pixel weight");
      double m = -std::numeric_limits<double>::infinity();
      for (int ch = 0; ch < c; ++ch)
        m = std::max(m, static_cast<double>(logits.values()[(i * c + ch) * plane + p]));
      double sumexp = 0.0, zdot = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        const double z = static_cast<double>(logits.values()[(i * c + ch) * plane + p]);
        sumexp += std::exp(z - m);
        zdot += static_cast<double>(target.values()[(i * c + ch) * plane + p]) * z;
      }
      acc += wv * (m + std::log(sumexp) - zdot);
      wsum += wv;
    }
  }
  if (wsum <= 0.0)
    throw Error("softmax_cross_entropy: pixel weight sum is zero (degenerate batch)");

  Tensor<S> out({1});
  const double loss = acc / wsum;
  out.values()[0] = static_cast<S>(loss);

  if (g) {
    out.set_tracked(true);
    Tensor<S> lg_c = logits, tg_c = target, pw_c = pixel_weights, out_c = out;
    g->record([lg_c, tg_c, pw_c, out_c, n, c, plane, wsum, loss]() mutable {
      const double gout = static_cast<double>(out_c.grad()[0]);
      for (int i = 0; i < n; ++i) {
        for (std::int64_t p = 0; p < plane; ++p) {
          const double wv = static_cast<double>(pw_c.values()[i * plane + p]);
          double m = -std::numeric_limits<double>::infinity();
          for (int ch = 0; ch < c; ++ch)
            m = std::max(m, static_cast<double>(lg_c.values()[(i * c + ch) * plane + p]));
          double sumexp = 0.0, nll = 0.0;
          for (int ch = 0; ch < c; ++ch)
            sumexp += std::exp(static_cast<double>(lg_c.values()[(i * c + ch) * plane + p]) - m);
          if (lg_c.tracked() || tg_c.tracked()) {
            const double coeff = gout * wv / wsum;
            for (int ch = 0; ch < c; ++ch) {
              const std::int64_t idx = (i * c + ch) * plane + p;
              const double z = static_cast<double>(lg_c.values()[idx]);
              const double soft = std::exp(z - m) / sumexp;
              const double tv = static_cast<double>(tg_c.values()[idx]);
              if (lg_c.tracked())
                lg_c.grad()[idx] += static_cast<S>(coeff * (soft - tv));
              if (tg_c.tracked())
                tg_c.grad()[idx] += static_cast<S>(-coeff * z);
              nll += tv * z;
            }
          }
          if (pw_c.tracked()) {
            double zdot = 0.0;
            for (int ch = 0; ch < c; ++ch) {
              const std::int64_t idx = (i * c + ch) * plane + p;
              zdot += static_cast<double>(tg_c.values()[idx]) *
                      static_cast<double>(lg_c.values()[idx]);
            }
            const double pix_nll = m + std::log(sumexp) - zdot;
            pw_c.grad()[i * plane + p] += static_cast<S>(gout * (pix_nll - loss) / wsum);
          }
        }
      }
    });
  }
  return out;
}

// Sum of all elements, accumulated in double.
template <class S>
Tensor<S> sum(const Tensor<S>& t, Graph<S>* g = nullptr) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < t.size(); ++i) acc += static_cast<double>(t.values()[i]);
  Tensor<S> out({1});
  out.values()[0] = static_cast<S>(acc);
  if (g) {
    out.set_tracked(true);
    Tensor<S> in_c = t, out_c = out;
    g->record([in_c, out_c]() mutable {
      if (in_c.tracked()) in_c.grad() += out_c.grad()[0];
    });
  }
  return out;
}

// Multiplication by a compile-time-known constant.
template <class S>
Tensor<S> scale(const Tensor<S>& t, S factor, Graph<S>* g = nullptr) {
  Tensor<S> out(t.shape());
  out.values() = t.values() * factor;
  if (g) {
    out.set_tracked(true);
    Tensor<S> in_c = t, out_c = out;
    g->record([in_c, out_c, factor]() mutable {
      if (in_c.tracked()) in_c.grad() += out_c.grad() * factor;
    });
  }
  return out;
}

// Per-pixel channel softmax; inference only (no tape entry).
template <class S>
Tensor<S> softmax_channels(const Tensor<S>& logits) {
  detail::require_rank(logits.shape(), 4, "softmax_channels");
  const Shape& s = logits.shape();
  const int n = s[0], c = s[1];
  const std::int64_t plane = static_cast<std::int64_t>(s[2]) * s[3];
  Tensor<S> out(s);
  for (int i = 0; i < n; ++i) {
    for (std::int64_t p = 0; p < plane; ++p) {
      double m = -std::numeric_limits<double>::infinity();
      for (int ch = 0; ch < c; ++ch)
        m = std::max(m, static_cast<double>(logits.values()[(i * c + ch) * plane + p]));
      double sumexp = 0.0;
      for (int ch = 0; ch < c; ++ch)
        sumexp += std::exp(static_cast<double>(logits.values()[(i * c + ch) * plane + p]) - m);
      for (int ch = 0; ch < c; ++ch) {
        const std::int64_t idx = (i * c + ch) * plane + p;
        out.values()[idx] =
            static_cast<S>(std::exp(static_cast<double>(logits.values()[idx]) - m) / sumexp);
      }
    }
  }
  return out;
}

}  // namespace aoseg
