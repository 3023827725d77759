#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zrptag/environment.hpp"
#include "zrptag/equilibrium.hpp"
#include "zrptag/pde.hpp"
#include "zrptag/rng.hpp"

namespace zrptag {

/// A(y) = floor(y) * increment + value(y - floor(y)), the exponent of the
/// scale density exp(-4 A).
struct Potential {
  std::function<double(double)> value;  ///< on [0, 1], value(0) = 0
  double increment = 0.0;               ///< A(y + 1) - A(y)
  /// Spacing of the breakpoints of A' (table nodes are aligned to it); 0 when
  /// A is smooth.
  double spacing = 0.0;
  std::string label;

  double operator()(double y) const {
    const double m = std::floor(y);
    return m * increment + value(y - m);
  }
};

Potential zero_potential();
/// int_0^y alpha for an environment's continuum drift (epsilon > 0).
Potential regularized_potential(const RealizedEnvironment& env);
/// floor(y) W(1) + W(y - floor y).
Potential singular_potential(std::shared_ptr<const InterpolatedWalk> w);
/// W(frac y) - W(1) frac y.
Potential bridge_potential(std::shared_ptr<const InterpolatedWalk> w);

/// Tabulated scale function s(x) = int_0^x exp(-4 A(y)) dy on [-L, L]:
/// cubic Hermite with exact slopes, node values by five-point Gauss-Legendre.
class ScaleFunction {
 public:
  ScaleFunction(Potential a, double half_range, double cell = 0.0);

  double operator()(double x) const;
  double derivative(double x) const { return std::exp(-4.0 * a_(x)); }
  /// Newton on the cubic piece with bisection safeguard.
  double inverse(double y) const;
  double half_range() const { return l_; }
  double lo() const { return s_(0); }
  double hi() const { return s_(s_.size() - 1); }
  const Potential& potential() const { return a_; }
  long nodes() const { return static_cast<long>(s_.size()); }
  /// max over nodes and midpoints of |s(s^-1(y)) - y|.
  double round_trip_error() const;

 private:
  long locate(double x) const;
  double piece(long i, double t) const;

  Potential a_;
  double l_, h_;
  Eigen::VectorXd s_, d_;
};

/// sup over a uniform grid of [-r, r] of |s1 - s2|.
double sup_distance(const ScaleFunction& s1, const ScaleFunction& s2, double r = 2.0, long points = 4001);

/// chi(t, x); `lo`/`hi` bound its admissible range.
struct ChiField {
  std::function<double(double, double)> fn;
  double constant = 0.0;  ///< > 0 short-circuits fn
  double lo = 0.0, hi = INFINITY;

  double operator()(double t, double x) const { return constant > 0.0 ? constant : fn(t, x); }
  static ChiField uniform(double c);
  /// Phi(rho)/rho from a density field; admissible range [g_*/2, 2 g*].
  static ChiField from_field(std::shared_ptr<const DensityField> field, std::shared_ptr<const PhiTable> phi,
                             const RateFunction& g);
};

/// Sampled Brownian path (r_i, B_i), r_0 = 0, B_0 = 0.
struct BrownianPath {
  std::vector<double> r, b;
  static BrownianPath uniform(double r_max, long steps, Rng& rng);
  /// Inserts Brownian-bridge midpoints into every step.
  BrownianPath refined(Rng& rng) const;
};

/// T(r) = int_0^r exp(8 A(u)) / chi(r', u) dr' on the B grid (trapezoid), with
/// u = s^-1(s(z) + B_r'); chi takes the Brownian clock r' as first argument.
struct TimeChange {
  std::vector<double> r, t, u;

  double forward(double r_query) const;
  double inverse(double t_query) const;
};

TimeChange time_change(const BrownianPath& b, const ScaleFunction& s, const ChiField& chi, double z);

/// x(t) = s^-1(s(z) + B(T^-1(t))) at the requested times (linear in r
/// between grid points); errors beyond the tabulated T range.
std::vector<double> ito_mckean_path(const BrownianPath& b, const TimeChange& tc, const ScaleFunction& s,
                                    double z, const std::vector<double>& times);

using StartLaw = std::function<double(Rng&)>;
StartLaw point_start(double z);
StartLaw uniform_start();

struct SdeRunConfig {
  std::vector<double> times;  ///< increasing output times
  long paths = 10000;
  double dt = 0.0;            ///< EM step (0: the guard bound)
  double dtau = 1e-4;         ///< Ito-McKean target physical-time step
  std::uint64_t seed = 1;
  bool keep_paths = false;
};

/// Lifted positions, one row per path and one column per output time.
struct SdeSamples {
  Eigen::MatrixXd lifted;
  std::vector<double> times;
  double dt = 0.0;
  long steps = 0;
  /// Torus projections of column j.
  std::vector<double> torus(long j) const;
  std::vector<double> column(long j) const;
};

/// Largest EM step allowed: (0.1 / max(1, 2 g* max|alpha|))^2.
double euler_maruyama_guard(double g_star, double max_abs_alpha);

/// dx = 2 chi alpha dt + sqrt(chi) dB with alpha from `drift`.
SdeSamples euler_maruyama(const std::function<double(double)>& drift, double max_abs_alpha, const ChiField& chi,
                          double g_star, const StartLaw& start, const SdeRunConfig& cfg);

/// Ito-McKean construction with B sampled on an adaptive grid, dr = dtau
/// chi exp(-8 A), so each step advances physical time by about dtau; output
/// times are located by Brownian-bridge interpolation. Rebuilds the scale
/// table with doubled range on overflow, up to L = 16.
SdeSamples ito_mckean(const Potential& a, const ChiField& chi, const StartLaw& start, const SdeRunConfig& cfg,
                      double initial_half_range = 4.0);

struct SinaiConfig {
  double sigma = 1.0;     ///< disorder scale (Rademacher r = +-sigma)
  double n_env = 16.0;    ///< u_k = 1/2 + r_k / sqrt(sigma^2 n_env)
  double c = 0.1;         ///< clip u_k to [c, 1 - c]
  bool disorder = true;   ///< false: u_k = 1/2 (simple random walk)
  std::vector<long> checkpoints{1000, 100000, 10000000};
  long environments = 200;
  std::uint64_t seed = 1;
};

/// sigma_env^2 U_n / (log n)^2 per environment (rows) and checkpoint
/// (columns), one walk per environment, with sigma_env^2 = Var log((1-u)/u).
struct SinaiSamples {
  Eigen::MatrixXd scaled;
  Eigen::MatrixXd raw;
  double sigma_env2 = 0.0;
};

SinaiSamples sinai_reference(const SinaiConfig& cfg);

/// Brox marginals: Ito-McKean with the singular potential of `w`, chi = 1.
SdeSamples brox_reference(std::shared_ptr<const InterpolatedWalk> w, const StartLaw& start, const SdeRunConfig& cfg);

}  // namespace zrptag
