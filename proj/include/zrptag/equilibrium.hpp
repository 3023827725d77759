#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zrptag/environment.hpp"
#include "zrptag/rng.hpp"

namespace zrptag {

/// Zero-range rate g with structural flags checked on 0..k_val.
///
/// Beyond the stored table g is extended linearly with its last increment,
/// so table rates keep a well-defined tail.
class RateFunction {
 public:
  static constexpr long default_k_val = 10000;

  /// g(n) = c n.
  static RateFunction linear(double c = 1.0);
  /// g(n) = n + a 1{n >= 1}.
  static RateFunction conclin(double a);
  /// Table g(0..K); g(0) must be 0 and g(n) > 0 for n >= 1.
  static RateFunction from_table(std::vector<double> values, std::string name = "table");
  /// linear, affine2, conclin:<a>, or a CSV file with rows n,g(n).
  static RateFunction from_name(const std::string& name);

  double operator()(long n) const;
  /// g(n)! = g(1) ... g(n), as a logarithm.
  double log_factorial(long n) const;

  const std::string& name() const { return name_; }
  /// True when g(n) = c n exactly, in which case Phi(rho) = c rho.
  bool is_linear() const { return linear_slope_ > 0.0; }
  double linear_slope() const { return linear_slope_; }

  double g_star() const { return g_star_; }    ///< sup |g(k+1) - g(k)|
  double g_lower() const { return g_lower_; }  ///< inf_{k >= 1} g(k)/k
  bool attractive() const { return flag_a_; }  ///< (A): nondecreasing
  bool lipschitz() const { return flag_lg_; }  ///< (LG)
  bool growing() const { return flag_m_; }     ///< (M)
  long m_step() const { return m_; }
  double a0() const { return a0_; }
  long k_val() const { return k_val_; }
  /// min_{j > n} g(j), with the (M) lower bound g_* j past the horizon.
  double tail_min(long n) const;

 private:
  RateFunction() = default;
  void validate();

  std::string name_;
  std::vector<double> table_;  // g(0..K)
  double tail_slope_ = 0.0;
  double linear_slope_ = 0.0;
  std::vector<double> log_fact_;    // 0..k_val
  std::vector<double> suffix_min_;  // min_{j >= n} g(j), n = 1..k_val
  double g_star_ = 0.0, g_lower_ = 0.0, a0_ = 0.0;
  long m_ = 1, k_val_ = default_k_val;
  bool flag_a_ = false, flag_lg_ = false, flag_m_ = false;
};

/// Single-site law P_phi(n) = phi^n / (Z g(n)!) truncated at n_max.
struct SingleSiteLaw {
  double phi = 0.0;
  Eigen::VectorXd weights;  ///< normalized P_phi(0..n_max)
  double log_z = 0.0;       ///< log of the partition function
  double mean = 0.0;        ///< R(phi)
  double variance = 0.0;    ///< sigma^2
  double tail_bound = 0.0;  ///< certified bound on the omitted normalized mass

  double z() const { return std::exp(log_z); }
  long n_max() const { return static_cast<long>(weights.size()) - 1; }
};

/// Series truncation: 1e-16 relative weight for 5 terms and tail < 1e-14.
SingleSiteLaw partition_and_mean(const RateFunction& g, double phi);

/// Phi(rho) = R^{-1}(rho), |R(Phi) - rho| <= 1e-11.
double homogenized_rate(const RateFunction& g, double rho);

/// Phi'(rho) = Phi(rho) / sigma^2(rho); g(1) at rho = 0.
double homogenized_rate_derivative(const RateFunction& g, double rho);

/// Monotone cubic table of Phi on [0, rho_max] with exact node values and
/// slopes Phi/sigma^2 passed through the Fritsch-Carlson limiter.
class PhiTable {
 public:
  PhiTable(const RateFunction& g, double rho_max, int nodes = 513);

  double operator()(double rho) const;
  double derivative(double rho) const;
  /// Phi(rho)/rho with the limit g(1) at 0.
  double chi(double rho) const;
  double rho_max() const { return rho_max_; }
  /// Largest Phi' over the nodes (CFL input).
  double max_derivative() const { return slope_.maxCoeff(); }

 private:
  double rho_max_;
  double h_;
  double linear_ = 0.0;
  double g1_ = 0.0;
  Eigen::VectorXd value_, slope_;
};

/// Torus fugacities phi_k with max phi = 1 (times an optional multiplier c).
struct FugacityProfile {
  Eigen::VectorXd phi;
  Eigen::VectorXd rho;  ///< R(phi_k); empty until with_density
  double residual = 0.0;
  double ratio = 1.0;     ///< phi_max / phi_min
  double max_diff = 0.0;  ///< N max_k |phi_k - phi_{k+1}|
  double multiplier = 1.0;
  std::string method;
};

/// Max-norm residual of p+_{k-1} phi_{k-1} + p-_{k+1} phi_{k+1} = phi_k.
double fugacity_residual(const RealizedEnvironment& env, const Eigen::VectorXd& phi);

/// Dense nullspace for N <= dense_limit, shifted inverse iteration on the
/// sparse cyclic matrix otherwise.
FugacityProfile solve_fugacities(const RealizedEnvironment& env, int dense_limit = 1024);

/// Scales phi by c and fills rho_k = R(c phi_k).
FugacityProfile with_density(FugacityProfile profile, const RateFunction& g, double c = 1.0);

/// Occupancies xi on T_N and the tagged site X with xi(X) >= 1.
struct TaggedConfiguration {
  std::vector<std::int32_t> xi;
  long tagged = 0;
  long total = 0;

  long n() const { return static_cast<long>(xi.size()); }
  bool valid() const;
};

/// Inverse-CDF sampler over a finite weight table.
class DiscreteSampler {
 public:
  explicit DiscreteSampler(const Eigen::VectorXd& weights);
  long operator()(Rng& rng) const;
  long size() const { return static_cast<long>(cdf_.size()); }

 private:
  std::vector<double> cdf_;
};

enum class InitialKind { NuN, LocalEquilibrium, Product, FixedSite };

struct InitialMeasure {
  InitialKind kind = InitialKind::NuN;
  std::function<double(double)> rho0;  ///< for LocalEquilibrium, Product, FixedSite
  double rho_minus = 0.0;              ///< declared lower bound of rho0
  long x0 = 0;                         ///< for FixedSite
  std::string describe() const;
};

/// Precomputed per-site tables; sample() is const and takes the caller's RNG.
class InitialSampler {
 public:
  /// `profile` must carry rho (see with_density) for NuN.
  InitialSampler(const InitialMeasure& measure, const RateFunction& g, const FugacityProfile& profile);

  TaggedConfiguration sample(Rng& rng) const;
  /// Site fugacities used for the product part.
  const Eigen::VectorXd& fugacities() const { return phi_; }
  /// Site means of the product part.
  const Eigen::VectorXd& means() const { return mean_; }

 private:
  InitialMeasure measure_;
  Eigen::VectorXd phi_, mean_;
  std::vector<std::shared_ptr<const DiscreteSampler>> site_;        // P_phi_k
  std::vector<std::shared_ptr<const DiscreteSampler>> size_biased_;  // n P_phi_k(n) / rho_k
  std::vector<std::shared_ptr<const DiscreteSampler>> positive_;     // P_phi_k(. | n >= 1)
  std::shared_ptr<const DiscreteSampler> tag_site_;
};

}  // namespace zrptag
