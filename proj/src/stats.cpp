#include "aoseg/stats.hpp"

#include <cmath>

namespace aoseg {

namespace {

// Continued fraction for the incomplete beta function (modified Lentz).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14, kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double reg_inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log(1.0 - x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double students_t_two_sided_p(double t, double df) {
  if (df <= 0.0) throw Error("students_t: degrees of freedom must be positive");
  return reg_inc_beta(df / 2.0, 0.5, df / (df + t * t));
}

PairedTTest paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error("paired_ttest: sample sizes differ");
  const int n = static_cast<int>(a.size());
  if (n < 2) throw Error("paired_ttest: need at least 2 pairs");

  PairedTTest r;
  r.n = n;
  double sum_a = 0.0, sum_b = 0.0, sum_d = 0.0;
  for (int i = 0; i < n; ++i) {
    sum_a += a[i];
    sum_b += b[i];
    sum_d += a[i] - b[i];
  }
  r.mean_a = sum_a / n;
  r.mean_b = sum_b / n;
  r.mean_diff = sum_d / n;

  double ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = (a[i] - b[i]) - r.mean_diff;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / (n - 1));
  if (sd == 0.0) {
    r.t = r.mean_diff == 0.0 ? 0.0 : (r.mean_diff > 0 ? 1e30 : -1e30);
    r.p = r.mean_diff == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = r.mean_diff / (sd / std::sqrt(static_cast<double>(n)));
  r.p = students_t_two_sided_p(r.t, n - 1.0);
  return r;
}

}  // namespace aoseg
