// Paired t-test on per-subject metric differences.

#pragma once

#include <vector>

#include "aoseg/common.hpp"

namespace aoseg {

// Regularized incomplete beta function I_x(a, b).
double reg_inc_beta(double a, double b, double x);

// Two-sided p-value of Student's t with df degrees of freedom.
double students_t_two_sided_p(double t, double df);

struct PairedTTest {
  int n = 0;
  double mean_a = 0.0;
  double mean_b = 0.0;
  double mean_diff = 0.0;  // a - b
  double t = 0.0;
  double p = 1.0;
};

// Paired test of a against b (difference a - b); needs n >= 2.
PairedTTest paired_ttest(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace aoseg
