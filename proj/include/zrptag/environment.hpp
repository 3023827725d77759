#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include <Eigen/Dense>

namespace zrptag {

enum class DisorderLaw { Rademacher, Uniform };

/// Bounded, mean-zero i.i.d. disorder r_1..r_N with variance sigma^2.
struct DisorderSample {
  Eigen::VectorXd r;
  double sigma = 1.0;
  double bound = 1.0;
  std::uint64_t seed = 0;
  DisorderLaw law = DisorderLaw::Rademacher;
};

/// Draws r_1..r_N. The values are the first N entries of one stream keyed by
/// `seed`, so increasing N extends the same disorder sequence.
DisorderSample sample_disorder(int n, double sigma, std::uint64_t seed,
                               DisorderLaw law = DisorderLaw::Rademacher);

/// Mollifier psi on [-1, 1] with unit mass.
struct Kernel {
  enum class Id { Box, C1 };
  Id id = Id::Box;

  static Kernel box() { return {Id::Box}; }
  /// Biweight (15/16)(1 - x^2)^2; C^1 after extension by zero.
  static Kernel c1() { return {Id::C1}; }
  static Kernel from_name(const std::string& name);

  std::string name() const;
  /// Smoothness class recorded in metadata.
  std::string smoothness() const;
  double psi(double x) const;
  double dpsi(double x) const;
  double d2psi(double x) const;
  /// Gauss-Legendre quadrature of psi over [-1, 1].
  double integral() const;
};

/// Piecewise-linear walk W^N with W(k/N) = s_k / (sigma sqrt N), extended to
/// the whole line with periodic increments: W(u + 1) = W(u) + W(1).
class InterpolatedWalk {
 public:
  InterpolatedWalk() = default;
  /// `nodes` holds W(0), W(1/N), ..., W(1); nodes(0) must be 0.
  explicit InterpolatedWalk(Eigen::VectorXd nodes);

  static InterpolatedWalk from_disorder(const DisorderSample& d);

  int n() const { return static_cast<int>(nodes_.size()) - 1; }
  double total() const { return nodes_(n()); }
  const Eigen::VectorXd& nodes() const { return nodes_; }

  /// W(j/N) for any integer j.
  double at_index(long j) const;
  double operator()(double u) const;
  /// Integral of W over [0, u] for any real u (negative u gives minus the
  /// integral over [u, 0]).
  double integral_to(double u) const;

  /// (psi_eps * W)(x) = (1/eps) int psi((u - x)/eps) W(u) du.
  double smoothed(double x, double eps, const Kernel& k) const;
  /// d/dx (psi_eps * W)(x) = W'_eps(x).
  double smoothed_derivative(double x, double eps, const Kernel& k) const;
  /// Bulk part of the second derivative, (1/eps^3) int W psi''; exact for
  /// kernels vanishing with their derivative at +-1.
  double smoothed_second_derivative(double x, double eps, const Kernel& k) const;

 private:
  /// int over [a, b] of W(u) f(u) du, exact for polynomial f of degree <= 4
  /// (three-point Gauss-Legendre on every linear piece).
  template <class F>
  double weighted_integral(double a, double b, F&& f) const;

  Eigen::VectorXd nodes_;
  Eigen::VectorXd prefix_;  // integral of W over [0, j/N], j = 0..N
};

enum class EnvKind { Deterministic, RegularizedNoise, Bridge };

std::string to_string(EnvKind k);

/// Site drifts alpha_k^N (site k at position k/N, k = 0..N-1) plus the
/// continuum drift alpha(u) and its potential int_0^u alpha. Immutable after
/// construction and cheap to copy (continuum evaluators are shared).
class RealizedEnvironment {
 public:
  int n() const { return static_cast<int>(alpha_n_.size()); }
  EnvKind kind() const { return kind_; }
  double eps() const { return eps_; }
  const Kernel& kernel() const { return kernel_; }
  const Eigen::VectorXd& alpha_n() const { return alpha_n_; }
  double alpha_n(long k) const;
  /// Continuum drift at u (1-periodic).
  double alpha(double u) const { return alpha_fn_(u); }
  /// int_0^u alpha for any real u.
  double potential(double u) const { return potential_fn_(u); }
  /// int over the torus of alpha.
  double alpha_integral() const { return alpha_integral_; }
  double max_abs_alpha_n() const { return alpha_n_.cwiseAbs().maxCoeff(); }
  /// Jump probabilities 1/2 +- alpha_k/N.
  double p_plus(long k) const { return 0.5 + alpha_n(k) / n(); }
  double p_minus(long k) const { return 0.5 - alpha_n(k) / n(); }

  /// Realized walk for noise-derived environments, nullptr otherwise.
  const InterpolatedWalk* walk() const { return walk_.get(); }
  const std::string& name() const { return name_; }
  double sigma() const { return sigma_; }
  std::uint64_t seed() const { return seed_; }
  double bound_constant() const { return bound_c_; }

  friend RealizedEnvironment build_regularized(const DisorderSample&, int, double, const Kernel&,
                                               double);
  friend RealizedEnvironment build_bridge(const RealizedEnvironment&);
  friend RealizedEnvironment build_deterministic(std::function<double(double)>, int, std::string);
  friend RealizedEnvironment environment_from_sites(Eigen::VectorXd, std::string);

 private:
  void validate() const;

  EnvKind kind_ = EnvKind::Deterministic;
  Eigen::VectorXd alpha_n_;
  std::function<double(double)> alpha_fn_;
  std::function<double(double)> potential_fn_;
  std::shared_ptr<const InterpolatedWalk> walk_;
  Kernel kernel_;
  double eps_ = 0.0;
  double sigma_ = 0.0;
  double bound_c_ = 0.0;
  double alpha_integral_ = 0.0;
  std::uint64_t seed_ = 0;
  std::string name_;
};

/// alpha_k^N = sqrt(N) q_k^N from the discrete summation-by-parts sum on the
/// walk W^N; alpha(u) = W'_eps(u) from the same walk. `bound_c` is the C of
/// the monitored bound max|alpha_k^N| <= C/eps.
RealizedEnvironment build_regularized(const DisorderSample& disorder, int n, double eps,
                                      const Kernel& kernel, double bound_c = 8.0);

/// Removes the discrete mean from alpha_k^N and the torus mean from alpha(u).
RealizedEnvironment build_bridge(const RealizedEnvironment& env);

/// alpha_k^N = alpha(k/N). `alpha` must be continuous and 1-periodic.
RealizedEnvironment build_deterministic(std::function<double(double)> alpha, int n,
                                        std::string name = "custom");

/// Environment given only by site values; the continuum drift is their
/// periodic linear interpolation.
RealizedEnvironment environment_from_sites(Eigen::VectorXd alpha_n, std::string name = "sites");

/// Named deterministic drifts: zero, sin, cos, const:<a>, sin:<amp>, cos:<amp>.
std::function<double(double)> named_drift(const std::string& name);

/// Neumaier compensated sum.
double compensated_sum(const Eigen::Ref<const Eigen::VectorXd>& v);

}  // namespace zrptag
