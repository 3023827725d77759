#include <doctest.h>

#include <cmath>
#include <numbers>

#include "zrptag/environment.hpp"
#include "zrptag/equilibrium.hpp"
#include "zrptag/errors.hpp"
#include "zrptag/harness.hpp"
#include "zrptag/stats.hpp"

using namespace zrptag;

namespace {

// Z, mean and variance by plain summation of phi^n / g(n)! up to n = 400.
struct Series {
  long double z = 0, mean = 0, var = 0;
};

Series brute_series(const RateFunction& g, double phi) {
  Series s;
  long double term = 1.0L, m2 = 0.0L;
  for (long n = 0; n <= 400; ++n) {
    if (n > 0) term *= phi / g(n);
    s.z += term;
    s.mean += n * term;
    m2 += static_cast<long double>(n) * n * term;
  }
  s.mean /= s.z;
  s.var = m2 / s.z - s.mean * s.mean;
  return s;
}

// Stationary profile of the single walk on the cycle from the constant-flux
// recursion p+_k phi_k - p-_{k+1} phi_{k+1} = J, closed by phi_N = phi_0.
Eigen::VectorXd flux_oracle(const RealizedEnvironment& env) {
  const long n = env.n();
  // phi_k = a_k + b_k J with phi_0 = 1
  std::vector<long double> a(n + 1), b(n + 1);
  a[0] = 1.0L;
  b[0] = 0.0L;
  for (long k = 0; k < n; ++k) {
    const long double pp = env.p_plus(k), pm = env.p_minus(k + 1);
    a[k + 1] = pp * a[k] / pm;
    b[k + 1] = (pp * b[k] - 1.0L) / pm;
  }
  const long double j = (1.0L - a[n]) / b[n];
  Eigen::VectorXd phi(n);
  for (long k = 0; k < n; ++k) phi(k) = static_cast<double>(a[k] + b[k] * j);
  return phi / phi.maxCoeff();
}

}  // namespace

TEST_CASE("rate function flags and constants") {
  const auto lin = RateFunction::linear();
  CHECK(lin.is_linear());
  CHECK(lin.attractive());
  CHECK(lin.lipschitz());
  CHECK(lin.growing());
  CHECK(lin.g_star() == 1.0);
  CHECK(lin.g_lower() == 1.0);
  CHECK(RateFunction::from_name("affine2")(7) == 14.0);
  const auto cc = concave_test_rate();
  CHECK_FALSE(cc.is_linear());
  CHECK(cc.attractive());
  CHECK(cc.growing());
  CHECK(cc.g_star() == doctest::Approx(1.0));
  CHECK(cc(7) == doctest::Approx(3.2));
  const auto cl = RateFunction::conclin(0.5);
  CHECK(cl(0) == 0.0);
  CHECK(cl(1) == 1.5);
  CHECK(cl(4) == 4.5);
  double inf_ratio = 2.0;
  for (long k = 1; k <= 20000; ++k) inf_ratio = std::min(inf_ratio, cl(k) / k);
  CHECK(cl.g_lower() >= inf_ratio * (1 - 1e-12));
  CHECK(cl.g_lower() == doctest::Approx(1.0).epsilon(1e-4));
  const auto dec = RateFunction::from_table({0.0, 2.0, 1.0, 1.5});
  CHECK_FALSE(dec.attractive());
  CHECK_THROWS_AS(RateFunction::from_table({1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(RateFunction::from_table({0.0, 0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(RateFunction::from_name("nonsense-rate"), std::invalid_argument);
  CHECK(lin.log_factorial(5) == doctest::Approx(std::log(120.0)));
}

TEST_CASE("single-site law examples") {
  const auto lin = RateFunction::linear();
  const auto l1 = partition_and_mean(lin, 1.0);
  CHECK(l1.z() == doctest::Approx(std::exp(1.0)).epsilon(1e-13));
  CHECK(l1.mean == doctest::Approx(1.0).epsilon(1e-13));
  const auto l0 = partition_and_mean(lin, 0.0);
  CHECK(l0.z() == 1.0);
  CHECK(l0.mean == 0.0);
  CHECK(l0.weights(0) == 1.0);
  const auto two = RateFunction::linear(2.0);
  const auto l3 = partition_and_mean(two, 3.0);
  const Series s = brute_series(two, 3.0);
  CHECK(l3.z() == doctest::Approx(std::exp(1.5)).epsilon(1e-13));
  CHECK(l3.z() == doctest::Approx(static_cast<double>(s.z)).epsilon(1e-13));
  CHECK(l3.mean == doctest::Approx(1.5).epsilon(1e-13));
  CHECK(l3.variance == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("single-site law invariants") {
  for (const auto& g : {RateFunction::linear(), concave_test_rate(), RateFunction::conclin(0.7)}) {
    double prev = -1.0;
    for (double phi : {0.05, 0.3, 1.0, 1.7, 3.0, 8.0}) {
      const auto law = partition_and_mean(g, phi);
      CHECK(std::abs(law.weights.sum() - 1.0) <= 1e-12);
      CHECK(law.tail_bound < 1e-14);
      const Eigen::VectorXd n = Eigen::VectorXd::LinSpaced(law.weights.size(), 0, law.weights.size() - 1);
      const double mean = law.weights.dot(n);
      const double var = law.weights.dot(n.cwiseProduct(n)) - mean * mean;
      CHECK(law.mean == doctest::Approx(mean).epsilon(1e-12));
      CHECK(law.variance == doctest::Approx(var).epsilon(1e-10));
      const Series s = brute_series(g, phi);
      CHECK(law.mean == doctest::Approx(static_cast<double>(s.mean)).epsilon(1e-11));
      CHECK(law.mean > prev);
      prev = law.mean;
    }
  }
}

TEST_CASE("divergent series is an explicit error") {
  const auto flat = RateFunction::from_table({0.0, 1.0, 1.0});
  CHECK_THROWS_AS(partition_and_mean(flat, 1.5), NumericalError);
  CHECK_THROWS(partition_and_mean(RateFunction::linear(), -1.0));
}

TEST_CASE("homogenized rate examples") {
  const auto lin = RateFunction::linear();
  for (double rho = 0.0; rho <= 10.0; rho += 0.25) CHECK(std::abs(homogenized_rate(lin, rho) - rho) <= 1e-10);
  CHECK(homogenized_rate(lin, 0.0) == 0.0);
  CHECK(homogenized_rate(RateFunction::linear(2.0), 1.25) == doctest::Approx(2.5).epsilon(1e-12));
  CHECK_THROWS_AS(homogenized_rate(lin, -0.1), std::invalid_argument);
}

TEST_CASE("homogenized rate round trip, derivative and bounds") {
  for (const auto& g : {concave_test_rate(), RateFunction::conclin(0.5), RateFunction::conclin(-0.5)}) {
    for (int i = 0; i <= 40; ++i) {
      const double rho = 1e-3 * std::pow(1e4, i / 40.0);
      const double phi = homogenized_rate(g, rho);
      CHECK(std::abs(partition_and_mean(g, phi).mean - rho) <= 1e-11 * std::max(1.0, rho));
      CHECK(phi >= g.g_lower() * rho * (1 - 1e-12));
      CHECK(phi <= g.g_star() * rho * (1 + 1e-12));
    }
    for (int i = 0; i < 20; ++i) {
      const double rho = 0.1 + 4.9 * i / 19.0;
      const double h = 1e-4 * rho;
      const double fd = (homogenized_rate(g, rho + h) - homogenized_rate(g, rho - h)) / (2 * h);
      CHECK(homogenized_rate_derivative(g, rho) == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("Phi table") {
  const PhiTable lin(RateFunction::linear(2.0), 10.0);
  CHECK(lin(3.3) == doctest::Approx(6.6).epsilon(1e-15));
  CHECK(lin.chi(0.0) == 2.0);
  const auto g = concave_test_rate();
  const PhiTable t(g, 8.0);
  for (int i = 1; i < 200; ++i) {
    const double rho = 8.0 * (i + 0.37) / 200.0;
    CHECK(t(rho) == doctest::Approx(homogenized_rate(g, rho)).epsilon(1e-7));
  }
  CHECK(t.chi(0.0) == doctest::Approx(g(1)));
  for (int i = 1; i < 100; ++i) CHECK(t(8.0 * i / 100.0) > t(8.0 * (i - 1) / 100.0));
}

TEST_CASE("fugacities: null environment") {
  const auto env = build_deterministic(named_drift("zero"), 64, "zero");
  const auto p = solve_fugacities(env);
  CHECK((p.phi.array() - 1.0).abs().maxCoeff() <= 1e-13);
  CHECK(p.residual <= 1e-13);
}

TEST_CASE("fugacities: four-site example against the flux recursion") {
  Eigen::VectorXd a(4);
  a << 0.0, -1.0, 0.0, 1.0;
  const auto env = environment_from_sites(a);
  const auto p = solve_fugacities(env);
  CHECK(p.residual <= 1e-13);
  CHECK(p.phi.minCoeff() > 0.0);
  CHECK(p.phi.maxCoeff() == 1.0);
  CHECK((p.phi - flux_oracle(env)).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK(fugacity_residual(env, p.phi) == doctest::Approx(p.residual));
}

TEST_CASE("fugacities: dense and sparse paths agree with the flux recursion") {
  for (int n : {200, 1500}) {
    const auto env = build_regularized(sample_disorder(n, 1.0, 31), n, 0.1, Kernel::box());
    const auto p = solve_fugacities(env);
    CHECK(p.residual <= 1e-12);
    const Eigen::VectorXd oracle = flux_oracle(env);
    // balance system conditioning grows like N^2
    CHECK(fugacity_residual(env, oracle) <= 1e-13);
    CHECK((p.phi - oracle).cwiseAbs().maxCoeff() <= 4e-16 * n * n);
    CHECK(p.ratio == doctest::Approx(1.0 / p.phi.minCoeff()));
    double md = 0.0;
    for (int k = 0; k < n; ++k) md = std::max(md, std::abs(p.phi(k) - p.phi((k + 1) % n)));
    CHECK(p.max_diff == doctest::Approx(n * md));
  }
  const auto env = build_regularized(sample_disorder(300, 1.0, 31), 300, 0.1, Kernel::box());
  CHECK(solve_fugacities(env, 0).method != solve_fugacities(env, 1024).method);
  CHECK((solve_fugacities(env, 0).phi - solve_fugacities(env, 1024).phi).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("fugacity densities and multiplier") {
  Eigen::VectorXd a(5);
  a << 0.3, -0.1, -0.2, 0.4, 0.0;
  const auto env = environment_from_sites(a);
  const auto g = concave_test_rate();
  const auto p = with_density(solve_fugacities(env), g, 2.0);
  CHECK(p.multiplier == 2.0);
  CHECK(p.phi.maxCoeff() == doctest::Approx(2.0));
  for (int k = 0; k < 5; ++k) CHECK(p.rho(k) == doctest::Approx(partition_and_mean(g, p.phi(k)).mean));
}

TEST_CASE("initial sampling: product part and size-biased tagged site") {
  const int n = 10;
  const auto env = build_deterministic(named_drift("zero"), n, "zero");
  const auto g = RateFunction::linear();
  InitialMeasure m;
  m.kind = InitialKind::LocalEquilibrium;
  m.rho0 = [](double) { return 2.0; };
  m.rho_minus = 2.0;
  const InitialSampler sampler(m, g, solve_fugacities(env));
  CHECK(sampler.fugacities()(3) == doctest::Approx(2.0));
  Rng rng(8);
  std::vector<double> others, tagged;
  const long samples = 20000;
  for (long i = 0; i < samples; ++i) {
    const auto c = sampler.sample(rng);
    REQUIRE(c.valid());
    for (long k = 0; k < n; ++k)
      if (k != c.tagged) others.push_back(c.xi[k]);
    tagged.push_back(c.xi[c.tagged]);
  }
  CHECK(std::abs(stats::mean(others) - 2.0) <= 3.0 * stats::standard_error(others));
  // size-biased mean rho + sigma^2/rho = 3 for Poisson(2)
  CHECK(std::abs(stats::mean(tagged) - 3.0) <= 3.0 * stats::standard_error(tagged));
  CHECK(*std::min_element(tagged.begin(), tagged.end()) >= 1.0);
  // xi(x) - 1 ~ Poisson(2), identity on the weight table
  const auto law = partition_and_mean(g, 2.0);
  for (long k = 1; k < 15; ++k) {
    const double sb = k * law.weights(k) / law.mean;
    const double shifted = std::exp(-2.0 + (k - 1) * std::log(2.0) - std::lgamma(static_cast<double>(k)));
    CHECK(sb == doctest::Approx(shifted).epsilon(1e-12));
  }
  // empirical frequency of xi(x) = 1 against e^{-2}
  const double f1 = std::count(tagged.begin(), tagged.end(), 1.0) / static_cast<double>(samples);
  CHECK(std::abs(f1 - std::exp(-2.0)) <= 4.0 * std::sqrt(std::exp(-2.0) / samples));
}

TEST_CASE("initial sampling: nu_N, fixed site and errors") {
  Eigen::VectorXd a(6);
  a << 0.5, -0.2, 0.1, -0.4, 0.0, 0.3;
  const auto env = environment_from_sites(a);
  const auto g = concave_test_rate();
  InitialMeasure nu;
  nu.kind = InitialKind::NuN;
  CHECK_THROWS_AS(InitialSampler(nu, g, solve_fugacities(env)), std::invalid_argument);
  const InitialSampler s(nu, g, with_density(solve_fugacities(env), g));
  Rng rng(3);
  for (int i = 0; i < 200; ++i) CHECK(s.sample(rng).valid());

  InitialMeasure fixed;
  fixed.kind = InitialKind::FixedSite;
  fixed.rho0 = [](double x) { return 1.0 + 0.5 * std::sin(2 * std::numbers::pi * x); };
  fixed.rho_minus = 0.5;
  fixed.x0 = 4;
  const InitialSampler fs(fixed, g, solve_fugacities(env));
  for (int i = 0; i < 100; ++i) {
    const auto c = fs.sample(rng);
    CHECK(c.tagged == 4);
    CHECK(c.xi[4] >= 1);
  }
  InitialMeasure bad = fixed;
  bad.rho_minus = 0.0;
  CHECK_THROWS_AS(InitialSampler(bad, g, solve_fugacities(env)), std::invalid_argument);
  bad.rho_minus = 0.8;
  CHECK_THROWS_AS(InitialSampler(bad, g, solve_fugacities(env)), std::invalid_argument);
}
