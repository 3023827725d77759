#pragma once

#include <map>
#include <vector>

#include <Eigen/Dense>

#include "zrptag/environment.hpp"
#include "zrptag/equilibrium.hpp"

namespace zrptag {

/// States (x, xi) with sum xi = K and xi(x) >= 1 on a small torus.
class FiniteStateSpace {
 public:
  struct State {
    std::vector<int> xi;
    int x = 0;
    bool operator<(const State& o) const { return x != o.x ? x < o.x : xi < o.xi; }
  };

  static constexpr long max_states = 1000000;

  FiniteStateSpace(int n, int k);

  int n() const { return n_; }
  int particles() const { return k_; }
  long size() const { return static_cast<long>(states_.size()); }
  const State& operator[](long i) const { return states_[i]; }
  /// Index of a state; -1 if absent.
  long index(const State& s) const;

 private:
  int n_, k_;
  std::vector<State> states_;
  std::map<State, long> index_;
};

/// Generator matrix Q of the joint process (row = source state), without the
/// N^2 speed-up.
Eigen::MatrixXd joint_generator(const FiniteStateSpace& space, const RealizedEnvironment& env,
                                const RateFunction& g);

/// L^2(nu) adjoint assembled from the closed-form rates
/// g(xi(y)) p^-+_{y+-1} phi_{y+-1} / phi_y (with the 1/xi(x) and (xi(x)-1)/xi(x)
/// splits at the tagged site).
Eigen::MatrixXd adjoint_generator(const FiniteStateSpace& space, const RealizedEnvironment& env,
                                  const RateFunction& g, const Eigen::VectorXd& phi);

/// nu(x, xi) proportional to xi(x) prod_k phi_k^xi(k) / g(xi(k))!, normalized.
Eigen::VectorXd conditioned_invariant(const FiniteStateSpace& space, const RateFunction& g,
                                      const Eigen::VectorXd& phi);

/// || nu Q ||_inf.
double stationarity_defect(const Eigen::VectorXd& nu, const Eigen::MatrixXd& q);

/// max_ij |nu_i Q_ij - nu_j Q_ji|.
double symmetry_defect(const Eigen::VectorXd& nu, const Eigen::MatrixXd& q);

/// Stationary vector of Q by dense nullspace of Q^T, normalized to sum 1.
Eigen::VectorXd stationary_vector(const Eigen::MatrixXd& q);

/// sum_k log(p+_k / p-_k); the walk on the cycle (and nu) is reversible
/// exactly when this vanishes.
double cycle_affinity(const RealizedEnvironment& env);

}  // namespace zrptag
