// Central-difference gradient verification. This is the independent oracle
// used by the test suites: it compares tape adjoints against numeric
// derivatives obtained purely from repeated forward evaluations.

#pragma once

#include <functional>

#include "aoseg/tensor.hpp"

namespace aoseg {

// loss_fn(graph) must evaluate the scalar loss as a pure function of the
// current values of `x` (and anything else it closes over): with a graph
// it records the tape, with nullptr it just computes the value.
//
// Returns max over elements of |analytic - central_difference| / max(1, |analytic|).
template <class S, class F>
double finite_difference_check(F&& loss_fn, Tensor<S>& x, double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-2))
    throw Error("finite_difference_check: eps must lie in [1e-6, 1e-2]");

  x.set_tracked(true);
  x.zero_grad();
  Graph<S> g;
  Tensor<S> loss = loss_fn(&g);
  g.backward(loss);
  Eigen::ArrayXd analytic = x.grad().template cast<double>();

  double worst = 0.0;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const S orig = x.values()[i];
    const S xp = orig + static_cast<S>(eps);
    const S xm = orig - static_cast<S>(eps);
    x.values()[i] = xp;
    const double fp = static_cast<double>(loss_fn(static_cast<Graph<S>*>(nullptr)).values()[0]);
    x.values()[i] = xm;
    const double fm = static_cast<double>(loss_fn(static_cast<Graph<S>*>(nullptr)).values()[0]);
    x.values()[i] = orig;
    const double denom = static_cast<double>(xp) - static_cast<double>(xm);
    const double fd = (fp - fm) / denom;
    const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace aoseg
