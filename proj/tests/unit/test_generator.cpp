#include <doctest.h>

#include <cmath>

#include "zrptag/errors.hpp"
#include "zrptag/generator.hpp"
#include "zrptag/harness.hpp"
#include "zrptag/rng.hpp"

using namespace zrptag;

namespace {

RealizedEnvironment sites(std::initializer_list<double> a) {
  Eigen::VectorXd v(static_cast<long>(a.size()));
  long i = 0;
  for (double x : a) v(i++) = x;
  return environment_from_sites(v);
}

long state(const FiniteStateSpace& sp, std::vector<int> xi, int x) {
  FiniteStateSpace::State s;
  s.xi = std::move(xi);
  s.x = x;
  return sp.index(s);
}

}  // namespace

TEST_CASE("state space enumeration") {
  // N * C(N + K - 2, K - 1) states
  CHECK(FiniteStateSpace(3, 2).size() == 9);
  CHECK(FiniteStateSpace(4, 3).size() == 40);
  CHECK(FiniteStateSpace(5, 3).size() == 75);
  const FiniteStateSpace sp(4, 3);
  for (long i = 0; i < sp.size(); ++i) {
    const auto& s = sp[i];
    int total = 0;
    for (int v : s.xi) total += v;
    CHECK(total == 3);
    CHECK(s.xi[s.x] >= 1);
    CHECK(sp.index(s) == i);
  }
  CHECK(state(sp, {0, 3, 0, 0}, 0) == -1);
  CHECK_THROWS_AS(FiniteStateSpace(2, 2), std::invalid_argument);
  CHECK_THROWS_AS(FiniteStateSpace(3, 0), std::invalid_argument);
  CHECK_THROWS_AS(FiniteStateSpace(40, 30), std::invalid_argument);
}

TEST_CASE("generator entries by hand") {
  const auto env = sites({0.3, -0.6, 0.9});
  const FiniteStateSpace one(3, 1);
  const auto q1 = joint_generator(one, env, RateFunction::linear());
  for (int x = 0; x < 3; ++x) {
    const long i = state(one, {x == 0, x == 1, x == 2}, x);
    const int r = (x + 1) % 3, l = (x + 2) % 3;
    CHECK(q1(i, state(one, {r == 0, r == 1, r == 2}, r)) == doctest::Approx(0.5 + env.alpha_n(x) / 3));
    CHECK(q1(i, state(one, {l == 0, l == 1, l == 2}, l)) == doctest::Approx(0.5 - env.alpha_n(x) / 3));
  }

  const FiniteStateSpace sp(3, 2);
  const auto g = concave_test_rate();
  const auto q = joint_generator(sp, env, g);
  const double pp0 = 0.5 + 0.1, pm0 = 0.5 - 0.1;
  // two particles at 0, tagged among them: each move out splits g(2) in halves
  const long i = state(sp, {2, 0, 0}, 0);
  CHECK(q(i, state(sp, {1, 1, 0}, 1)) == doctest::Approx(1.6 / 2 * pp0));
  CHECK(q(i, state(sp, {1, 1, 0}, 0)) == doctest::Approx(1.6 / 2 * pp0));
  CHECK(q(i, state(sp, {1, 0, 1}, 2)) == doctest::Approx(1.6 / 2 * pm0));
  CHECK(q(i, state(sp, {1, 0, 1}, 0)) == doctest::Approx(1.6 / 2 * pm0));
  CHECK(q(i, i) == doctest::Approx(-1.6));
  // tagged alone at 1, other particle at 2
  const long j = state(sp, {0, 1, 1}, 1);
  CHECK(q(j, state(sp, {0, 0, 2}, 2)) == doctest::Approx(0.5 - 0.2));
  CHECK(q(j, state(sp, {1, 0, 1}, 0)) == doctest::Approx(0.5 + 0.2));
  CHECK(q(j, state(sp, {1, 1, 0}, 1)) == doctest::Approx(0.5 + 0.3));
  CHECK(q(j, state(sp, {0, 2, 0}, 1)) == doctest::Approx(0.5 - 0.3));
}

TEST_CASE("generator rows are conservative") {
  const auto env = sites({0.4, -0.1, 0.25, -0.7});
  const FiniteStateSpace sp(4, 3);
  for (const auto& g : {RateFunction::linear(), concave_test_rate(), RateFunction::from_name("affine2")}) {
    const auto q = joint_generator(sp, env, g);
    CHECK(q.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-14);
    for (long i = 0; i < q.rows(); ++i)
      for (long j = 0; j < q.cols(); ++j)
        if (i != j) CHECK(q(i, j) >= 0.0);
  }
}

TEST_CASE("conditioned invariant measure is stationary") {
  Rng rng(17);
  for (auto [n, k] : {std::pair{3, 2}, std::pair{4, 3}, std::pair{5, 3}}) {
    const FiniteStateSpace sp(n, k);
    Eigen::VectorXd a(n);
    for (int i = 0; i < n; ++i) a(i) = 0.2 * n * (2 * rng.uniform() - 1);
    const auto env = environment_from_sites(a);
    const auto phi = solve_fugacities(env).phi;
    for (const auto& g : {RateFunction::linear(), concave_test_rate()}) {
      const auto q = joint_generator(sp, env, g);
      const auto nu = conditioned_invariant(sp, g, phi);
      CHECK(nu.sum() == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(stationarity_defect(nu, q) <= 1e-12);
      CHECK((nu - stationary_vector(q)).cwiseAbs().maxCoeff() <= 1e-10);
      // L2(nu) adjoint: nu_i Q*_ij = nu_j Q_ji
      const auto qs = adjoint_generator(sp, env, g, phi);
      const Eigen::MatrixXd lhs = nu.asDiagonal() * qs;
      const Eigen::MatrixXd rhs = (nu.asDiagonal() * q).transpose();
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK(qs.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("single walker invariant law is proportional to the fugacities") {
  const auto env = sites({0.5, -0.2, 0.1, -0.9, 0.3});
  const FiniteStateSpace sp(5, 1);
  const auto phi = solve_fugacities(env).phi;
  const auto nu = stationary_vector(joint_generator(sp, env, RateFunction::linear()));
  for (int x = 0; x < 5; ++x) {
    std::vector<int> xi(5, 0);
    xi[x] = 1;
    CHECK(nu(state(sp, xi, x)) == doctest::Approx(phi(x) / phi.sum()).epsilon(1e-10));
  }
}

TEST_CASE("reversibility follows the cycle affinity") {
  const auto g = concave_test_rate();
  const FiniteStateSpace sp(4, 3);
  // alternating drifts with opposite signs: p+ / p- products telescope to 1
  const auto rev = sites({0.3, -0.3, 0.3, -0.3});
  CHECK(std::abs(cycle_affinity(rev)) <= 1e-15);
  const auto qr = joint_generator(sp, rev, g);
  CHECK(symmetry_defect(conditioned_invariant(sp, g, solve_fugacities(rev).phi), qr) <= 1e-12);

  const auto zero_sum = sites({0.6, -0.1, -0.2, -0.3});
  CHECK(std::abs(zero_sum.alpha_n().sum()) <= 1e-15);
  CHECK(std::abs(cycle_affinity(zero_sum)) > 1e-4);
  const auto qz = joint_generator(sp, zero_sum, g);
  const auto nuz = conditioned_invariant(sp, g, solve_fugacities(zero_sum).phi);
  CHECK(stationarity_defect(nuz, qz) <= 1e-12);
  CHECK(symmetry_defect(nuz, qz) > 1e-6);

  double aff = 0.0;
  for (int k = 0; k < 4; ++k) aff += std::log(zero_sum.p_plus(k) / zero_sum.p_minus(k));
  CHECK(cycle_affinity(zero_sum) == doctest::Approx(aff).epsilon(1e-14));
}

TEST_CASE("stationary vector needs an irreducible chain") {
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(3, 3);
  q(0, 1) = 1.0;
  q(0, 0) = -1.0;
  CHECK_THROWS_AS(stationary_vector(q), NumericalError);
}
