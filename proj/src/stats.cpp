#include "zrptag/stats.hpp"

#include <algorithm>
#include <cmath>

#include "zrptag/errors.hpp"

namespace zrptag::stats {

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), "ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = a.size(), nb = b.size();
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return d;
}

double ks_critical(double alpha, long n, long m) {
  require(alpha > 0.0 && alpha < 1.0 && n > 0 && m > 0, "ks_critical: bad arguments");
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  return c * std::sqrt(static_cast<double>(n + m) / (static_cast<double>(n) * m));
}

double ks_pvalue(double d, long n, long m) {
  const double ne = static_cast<double>(n) * m / (n + m);
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  if (lambda < 1e-3) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

double quantile(std::vector<double> v, double p) {
  require(!v.empty(), "quantile: empty sample");
  std::sort(v.begin(), v.end());
  const double h = (v.size() - 1) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

double iqr(const std::vector<double>& v) { return quantile(v, 0.75) - quantile(v, 0.25); }

double mean(const std::vector<double>& v) {
  require(!v.empty(), "mean: empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / v.size();
}

double variance(const std::vector<double>& v) {
  require(v.size() >= 2, "variance: need two values");
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / (v.size() - 1);
}

double standard_error(const std::vector<double>& v) { return std::sqrt(variance(v) / v.size()); }

std::pair<double, double> jackknife(long replicas, const std::function<double(long)>& stat) {
  require(replicas >= 2, "jackknife: need two replicas");
  const double full = stat(-1);
  std::vector<double> loo(replicas);
  for (long r = 0; r < replicas; ++r) loo[r] = stat(r);
  const double m = mean(loo);
  double s = 0.0;
  for (double x : loo) s += (x - m) * (x - m);
  const double se = std::sqrt((replicas - 1.0) / replicas * s);
  return {full, se};
}

}  // namespace zrptag::stats
