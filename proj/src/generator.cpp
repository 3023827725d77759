#include "zrptag/generator.hpp"

#include <cmath>
#include <sstream>

#include "zrptag/errors.hpp"

namespace zrptag {

namespace {

void compositions(int n, int k, std::vector<int>& cur, int pos, std::vector<std::vector<int>>& out) {
  if (pos == n - 1) {
    cur[pos] = k;
    out.push_back(cur);
    return;
  }
  for (int v = 0; v <= k; ++v) {
    cur[pos] = v;
    compositions(n, k - v, cur, pos + 1, out);
  }
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

FiniteStateSpace::FiniteStateSpace(int n, int k) : n_(n), k_(k) {
  require(n >= 3, "FiniteStateSpace: N must be at least 3");
  require(k >= 1, "FiniteStateSpace: need at least one particle");
  if (binomial(n + k - 1, k) * n > static_cast<double>(max_states)) {
    std::ostringstream os;
    os << "FiniteStateSpace: N = " << n << ", K = " << k << " exceeds " << max_states << " states";
    throw std::invalid_argument(os.str());
  }
  std::vector<std::vector<int>> configs;
  std::vector<int> cur(n);
  compositions(n, k, cur, 0, configs);
  for (int x = 0; x < n; ++x)
    for (const auto& xi : configs)
      if (xi[x] >= 1) states_.push_back({xi, x});
  for (long i = 0; i < size(); ++i) index_.emplace(states_[i], i);
}

long FiniteStateSpace::index(const State& s) const {
  const auto it = index_.find(s);
  return it == index_.end() ? -1 : it->second;
}

namespace {

FiniteStateSpace::State moved(const FiniteStateSpace::State& s, int from, int to, bool tagged) {
  FiniteStateSpace::State t = s;
  --t.xi[from];
  ++t.xi[to];
  if (tagged) t.x = to;
  return t;
}

// Fills rows of q from per-site rates: rate(y, dir) for a non-tagged move out
// of y toward y + dir (with the tagged-site split applied by the caller).
template <class Rate>
Eigen::MatrixXd assemble(const FiniteStateSpace& space, Rate&& rate) {
  const long m = space.size();
  const int n = space.n();
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(m, m);
  for (long i = 0; i < m; ++i) {
    const auto& s = space[i];
    for (int y = 0; y < n; ++y) {
      if (s.xi[y] == 0) continue;
      for (int dir : {+1, -1}) {
        const int to = (y + dir + n) % n;
        const double r = rate(y, dir, s.xi[y]);
        if (y != s.x) {
          const long j = space.index(moved(s, y, to, false));
          q(i, j) += r;
        } else {
          const double xx = s.xi[y];
          if (s.xi[y] >= 2) q(i, space.index(moved(s, y, to, false))) += r * (xx - 1.0) / xx;
          q(i, space.index(moved(s, y, to, true))) += r / xx;
        }
      }
    }
    q(i, i) = -q.row(i).sum();
  }
  return q;
}

}  // namespace

Eigen::MatrixXd joint_generator(const FiniteStateSpace& space, const RealizedEnvironment& env,
                                const RateFunction& g) {
  require(env.n() == space.n(), "joint_generator: environment size mismatch");
  return assemble(space, [&](int y, int dir, int occ) {
    return g(occ) * (dir > 0 ? env.p_plus(y) : env.p_minus(y));
  });
}

Eigen::MatrixXd adjoint_generator(const FiniteStateSpace& space, const RealizedEnvironment& env,
                                  const RateFunction& g, const Eigen::VectorXd& phi) {
  require(env.n() == space.n() && phi.size() == space.n(), "adjoint_generator: size mismatch");
  const int n = space.n();
  return assemble(space, [&](int y, int dir, int occ) {
    const int nb = (y + dir + n) % n;
    const double p = dir > 0 ? env.p_minus(nb) : env.p_plus(nb);
    return g(occ) * p * phi(nb) / phi(y);
  });
}

Eigen::VectorXd conditioned_invariant(const FiniteStateSpace& space, const RateFunction& g,
                                      const Eigen::VectorXd& phi) {
  require(phi.size() == space.n(), "conditioned_invariant: size mismatch");
  Eigen::VectorXd lw(space.size());
  for (long i = 0; i < space.size(); ++i) {
    const auto& s = space[i];
    double l = std::log(static_cast<double>(s.xi[s.x]));
    for (int k = 0; k < space.n(); ++k) l += s.xi[k] * std::log(phi(k)) - g.log_factorial(s.xi[k]);
    lw(i) = l;
  }
  Eigen::VectorXd w = (lw.array() - lw.maxCoeff()).exp();
  return w / compensated_sum(w);
}

double stationarity_defect(const Eigen::VectorXd& nu, const Eigen::MatrixXd& q) {
  return (q.transpose() * nu).cwiseAbs().maxCoeff();
}

double symmetry_defect(const Eigen::VectorXd& nu, const Eigen::MatrixXd& q) {
  const Eigen::MatrixXd s = nu.asDiagonal() * q;
  return (s - s.transpose()).cwiseAbs().maxCoeff();
}

Eigen::VectorXd stationary_vector(const Eigen::MatrixXd& q) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(q.transpose());
  const Eigen::MatrixXd ker = lu.kernel();
  if (ker.cols() != 1) throw NumericalError("stationary_vector: chain is not irreducible");
  Eigen::VectorXd v = ker.col(0);
  return v / v.sum();
}

double cycle_affinity(const RealizedEnvironment& env) {
  double s = 0.0;
  for (long k = 0; k < env.n(); ++k) s += std::log(env.p_plus(k) / env.p_minus(k));
  return s;
}

}  // namespace zrptag
