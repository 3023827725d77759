#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zrptag/environment.hpp"
#include "zrptag/equilibrium.hpp"

namespace zrptag {

struct PdeConfig {
  long m = 256;          ///< cells; node i sits at x_i = i/m
  double dt = 0.0;       ///< 0 picks the largest stable step
  double horizon = 0.1;  ///< T
  double cfl = 0.4;
  bool limiter = true;   ///< van Leer reconstruction of the upwinded Phi
  bool semi_implicit = false;
  /// Keep every k-th step (0: at most ~2000 stored rows).
  long store_every = 0;
};

/// rho(t_j, x_i) on a uniform periodic grid.
struct DensityField {
  long m = 0;
  std::vector<double> times;
  Eigen::MatrixXd values;  ///< row j = time t_j
  std::vector<double> mass;
  double rho_minus = 0.0;  ///< min of the initial data
  double rho_plus = 0.0;   ///< max of the initial data
  double min = 0.0, max = 0.0;
  double mass_drift = 0.0;  ///< max_j |mass_j - mass_0| / mass_0
  long steps = 0;
  double dt = 0.0;

  double horizon() const { return times.back(); }
  /// Bilinear in (t, x), periodic in x.
  double evaluate(double t, double x) const;
  /// rho(t, .) at the grid nodes (linear in t between stored rows).
  Eigen::VectorXd row_at(double t) const;
};

/// Uniform-in-time constant field rho on [0, horizon].
DensityField constant_field(double rho, double horizon, long m = 8);

/// Finite-volume solver for d_t rho = (1/2) d_xx Phi(rho) - 2 d_x(alpha Phi(rho)).
class PdeSolver {
 public:
  PdeSolver(const RealizedEnvironment& env, std::shared_ptr<const PhiTable> phi);

  /// Largest dt allowed by the diffusive CFL bound and the advective bound.
  double stable_dt(const PdeConfig& cfg) const;
  DensityField solve(const Eigen::VectorXd& rho0, const PdeConfig& cfg) const;
  DensityField solve(const std::function<double(double)>& rho0, const PdeConfig& cfg) const;

  const PhiTable& phi() const { return *phi_; }

 private:
  void rhs(const Eigen::VectorXd& rho, const Eigen::VectorXd& alpha_face, bool limiter, bool with_diffusion,
           Eigen::VectorXd& out) const;

  const RealizedEnvironment* env_;
  std::shared_ptr<const PhiTable> phi_;
};

/// chi = Phi(rho)/rho at (t, x); rejects rho below half of min(rho_minus, min).
double chi(const DensityField& field, const PhiTable& phi, double t, double x);

/// Named initial profiles: const:<c>, sine:<a>,<b> (a + b sin 2 pi x).
std::function<double(double)> named_profile(const std::string& name);

}  // namespace zrptag
