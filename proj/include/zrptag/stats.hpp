#pragma once

#include <functional>
#include <utility>
#include <vector>

namespace zrptag::stats {

/// sup_x |F_a(x) - F_b(x)| of the two empirical distribution functions.
double ks_two_sample(std::vector<double> a, std::vector<double> b);

/// Asymptotic critical value c(alpha) sqrt((n + m)/(n m)),
/// c(alpha) = sqrt(-ln(alpha/2)/2).
double ks_critical(double alpha, long n, long m);

/// p-value from the Kolmogorov series at lambda = (sqrt(ne) + 0.12 + 0.11/sqrt(ne)) d,
/// ne = nm/(n+m).
double ks_pvalue(double d, long n, long m);

/// Linear-interpolation quantile (type 7).
double quantile(std::vector<double> v, double p);
double iqr(const std::vector<double>& v);

double mean(const std::vector<double>& v);
/// Unbiased sample variance.
double variance(const std::vector<double>& v);
/// Standard error of the mean.
double standard_error(const std::vector<double>& v);

/// Jackknife estimate and standard error of a statistic of R replicas;
/// `stat(skip)` evaluates the statistic without replica `skip` (-1: all).
std::pair<double, double> jackknife(long replicas, const std::function<double(long)>& stat);

}  // namespace zrptag::stats
