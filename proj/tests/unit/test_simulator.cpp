#include <doctest.h>

#include <cmath>
#include <map>

#include "zrptag/errors.hpp"
#include "zrptag/generator.hpp"
#include "zrptag/harness.hpp"
#include "zrptag/simulator.hpp"
#include "zrptag/stats.hpp"

using namespace zrptag;

namespace {

RealizedEnvironment zero_env(int n) { return build_deterministic(named_drift("zero"), n, "zero"); }

TaggedConfiguration config(std::vector<std::int32_t> xi, long tagged) {
  TaggedConfiguration c;
  c.total = 0;
  for (auto v : xi) c.total += v;
  c.xi = std::move(xi);
  c.tagged = tagged;
  return c;
}

}  // namespace

TEST_CASE("lone walker: diffusive displacement and clock") {
  const int n = 64;
  const auto env = zero_env(n);
  const auto g = RateFunction::linear();
  const TaggedZrpSimulator sim(env, g);
  SimulationConfig cfg;
  cfg.horizon = 0.1;
  cfg.record_times = {0.05, 0.1};
  std::vector<double> disp, events;
  for (long r = 0; r < 4000; ++r) {
    Rng rng(21, r);
    std::vector<std::int32_t> xi(n, 0);
    xi[5] = 1;
    const auto rec = sim.run(config(xi, 5), cfg, rng);
    REQUIRE(rec.t.size() == 2);
    CHECK(rec.qv[1] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(rec.lifted[1] - 5 == rec.j_plus[1] - rec.j_minus[1]);
    disp.push_back(static_cast<double>(rec.lifted[1] - 5) / n);
    events.push_back(static_cast<double>(rec.events));
  }
  // Var = t; Var of the sample variance ~ 2 t^2 / R
  CHECK(std::abs(stats::variance(disp) - 0.1) <= 4.0 * 0.1 * std::sqrt(2.0 / disp.size()));
  CHECK(std::abs(stats::mean(disp)) <= 4.0 * std::sqrt(0.1 / disp.size()));
  // Poisson(N^2 t) jumps
  CHECK(std::abs(stats::mean(events) - n * n * 0.1) <= 4.0 * std::sqrt(n * n * 0.1 / events.size()));
}

TEST_CASE("particle and site selection agree in law for linear g") {
  const int n = 32;
  const auto env = build_deterministic(named_drift("sin"), n, "sin");
  const auto g = RateFunction::linear();
  const TaggedZrpSimulator sim(env, g);
  SimulationConfig cfg;
  cfg.horizon = 0.05;
  cfg.record_times = {0.05};
  std::vector<double> a, b;
  for (auto sel : {EventSelector::Particle, EventSelector::Fenwick}) {
    cfg.selector = sel;
    for (long r = 0; r < 1500; ++r) {
      Rng rng(sel == EventSelector::Particle ? 1 : 2, r);
      std::vector<std::int32_t> xi(n, 1);
      xi[0] = 3;
      const auto rec = sim.run(config(xi, 0), cfg, rng);
      (sel == EventSelector::Particle ? a : b).push_back(static_cast<double>(rec.lifted[0]) / n);
    }
  }
  CHECK(stats::ks_two_sample(a, b) < stats::ks_critical(0.001, 1500, 1500));
}

TEST_CASE("conservation and occupancy under debug checks") {
  const int n = 16;
  Eigen::VectorXd al(n);
  for (int k = 0; k < n; ++k) al(k) = 2.0 * std::sin(0.7 * k);
  const auto env = environment_from_sites(al);
  const auto g = concave_test_rate();
  const TaggedZrpSimulator sim(env, g);
  SimulationConfig cfg;
  cfg.horizon = 0.2;
  cfg.record_times = {0.1, 0.2};
  cfg.snapshot_times = {0.0, 0.1, 0.2};
  cfg.debug_checks = true;
  Rng rng(4);
  std::vector<std::int32_t> xi(n, 0);
  xi[3] = 20;
  xi[9] = 12;
  const auto rec = sim.run(config(xi, 9), cfg, rng);
  REQUIRE(rec.snapshots.size() == 3);
  for (const auto& s : rec.snapshots) {
    long total = 0;
    for (auto v : s.xi) total += v;
    CHECK(total == 32);
    CHECK(s.xi[s.tagged] >= 1);
  }
  CHECK(rec.max_occupancy.back() >= 20);
  CHECK(std::is_sorted(rec.max_occupancy.begin(), rec.max_occupancy.end()));
  CHECK(rec.initial_site == 9);
  CHECK(rec.total == 32);
}

TEST_CASE("occupation law on a three-site torus matches the generator") {
  const int n = 3, k = 2;
  Eigen::VectorXd al(n);
  al << 0.6, -0.3, 0.45;
  const auto env = environment_from_sites(al);
  const auto g = concave_test_rate();
  const FiniteStateSpace sp(n, k);
  const auto pi = stationary_vector(joint_generator(sp, env, g));
  const TaggedZrpSimulator sim(env, g);
  SimulationConfig cfg;
  cfg.horizon = 3.0;
  cfg.snapshot_times = {3.0};
  const long reps = 20000;
  std::vector<double> counts(sp.size(), 0.0);
  for (long r = 0; r < reps; ++r) {
    Rng rng(99, r);
    const auto rec = sim.run(config({2, 0, 0}, 0), cfg, rng);
    FiniteStateSpace::State s;
    s.xi.assign(rec.snapshots[0].xi.begin(), rec.snapshots[0].xi.end());
    s.x = static_cast<int>(rec.snapshots[0].tagged);
    counts[sp.index(s)] += 1.0;
  }
  for (long i = 0; i < sp.size(); ++i) {
    const double f = counts[i] / reps;
    CHECK(std::abs(f - pi(i)) <= 4.5 * std::sqrt(pi(i) * (1 - pi(i)) / reps));
  }
}

TEST_CASE("block averages") {
  const std::vector<std::int32_t> xi{1, 2, 3, 4};
  const auto id = block_average(xi, 0);
  CHECK(id(2) == 3.0);
  const auto b1 = block_average(xi, 1);
  CHECK(b1(0) == doctest::Approx(7.0 / 3));
  CHECK(b1(3) == doctest::Approx(8.0 / 3));
  CHECK(b1.sum() == doctest::Approx(10.0));
  const std::vector<std::int32_t> big(100, 2);
  CHECK((empirical_density(big, 0.05).array() - 2.0).abs().maxCoeff() == 0.0);
  std::vector<std::int32_t> spike(100, 0);
  spike[0] = 11;
  const auto e = empirical_density(spike, 0.05);
  CHECK(e(0) == doctest::Approx(1.0));
  CHECK(e(5) == doctest::Approx(1.0));
  CHECK(e(95) == doctest::Approx(1.0));
  CHECK(e(6) == 0.0);
}

TEST_CASE("martingale mean and quadratic variation") {
  const int n = 64;
  const auto env = build_deterministic(named_drift("sin"), n, "sin");
  const auto g = RateFunction::linear();
  const TaggedZrpSimulator sim(env, g);
  InitialMeasure m;
  m.kind = InitialKind::LocalEquilibrium;
  m.rho0 = [](double) { return 1.0; };
  m.rho_minus = 1.0;
  const InitialSampler sampler(m, g, solve_fugacities(env));
  SimulationConfig cfg;
  cfg.horizon = 0.1;
  cfg.record_times = {0.1};
  cfg.seed = 12;
  const auto runs = run_replicas(sim, sampler, cfg, 3000);
  std::vector<double> mart, qv;
  for (const auto& r : runs) {
    mart.push_back(r.martingale(0, n));
    qv.push_back(r.qv[0]);
  }
  CHECK(std::abs(stats::mean(mart)) <= 4.0 * stats::standard_error(mart));
  const double v = stats::variance(mart);
  CHECK(std::abs(v - stats::mean(qv)) <= 4.0 * v * std::sqrt(2.0 / mart.size()));
}

TEST_CASE("replicas are reproducible and independent of the thread count") {
  const int n = 32;
  const auto env = build_deterministic(named_drift("sin"), n, "sin");
  const auto g = concave_test_rate();
  const TaggedZrpSimulator sim(env, g);
  InitialMeasure m;
  m.kind = InitialKind::LocalEquilibrium;
  m.rho0 = [](double x) { return 1.0 + 0.5 * std::cos(2 * M_PI * x); };
  m.rho_minus = 0.5;
  const InitialSampler sampler(m, g, solve_fugacities(env));
  SimulationConfig cfg;
  cfg.horizon = 0.05;
  cfg.record_times = {0.02, 0.05};
  cfg.seed = 3;
  const auto a = run_replicas(sim, sampler, cfg, 12, 1);
  const auto b = run_replicas(sim, sampler, cfg, 12, 4);
  REQUIRE(a.size() == 12);
  for (long r = 0; r < 12; ++r) {
    CHECK(a[r].lifted == b[r].lifted);
    CHECK(a[r].qv == b[r].qv);
    CHECK(a[r].events == b[r].events);
  }
  CHECK(a[0].events != a[1].events);
}

TEST_CASE("replacement statistic") {
  const int n = 64;
  const auto env = build_deterministic(named_drift("sin"), n, "sin");
  InitialMeasure m;
  m.kind = InitialKind::LocalEquilibrium;
  m.rho0 = [](double) { return 1.5; };
  m.rho_minus = 1.5;
  SimulationConfig cfg;
  cfg.horizon = 0.05;
  cfg.record_times = {0.05};
  cfg.replacement_window = 6;

  const auto lin = RateFunction::linear(2.0);
  auto phi_lin = std::make_shared<const PhiTable>(lin, 20.0);
  const TaggedZrpSimulator sl(env, lin, phi_lin);
  const auto rl = run_replicas(sl, InitialSampler(m, lin, solve_fugacities(env)), cfg, 50);
  const auto [vl, sel] = replacement_statistic(rl, 0);
  CHECK(vl <= 1e-12);

  const auto g = concave_test_rate();
  auto phi = std::make_shared<const PhiTable>(g, 20.0);
  const TaggedZrpSimulator sc(env, g, phi);
  const auto rc = run_replicas(sc, InitialSampler(m, g, solve_fugacities(env)), cfg, 200);
  const auto [vc, sec] = replacement_statistic(rc, 0);
  CHECK(vc > 0.0);
  CHECK(vc < 0.05);
  CHECK(sec > 0.0);

  CHECK_THROWS_AS(TaggedZrpSimulator(env, g).run(config(std::vector<std::int32_t>(n, 1), 0), cfg, *std::make_unique<Rng>(1)),
                  std::invalid_argument);
}

TEST_CASE("maximal occupancy exceedance") {
  const int n = 32;
  const auto env = zero_env(n);
  const auto g = RateFunction::linear();
  InitialMeasure m;
  m.kind = InitialKind::LocalEquilibrium;
  m.rho0 = [](double) { return 1.0; };
  m.rho_minus = 1.0;
  SimulationConfig cfg;
  cfg.horizon = 0.02;
  cfg.record_times = {0.02};
  const auto runs = run_replicas(TaggedZrpSimulator(env, g), InitialSampler(m, g, solve_fugacities(env)), cfg, 40);
  CHECK(max_occupancy_exceedance(runs, 0, 0.0).first == 1.0);
  CHECK(max_occupancy_exceedance(runs, 0, 1e6).first == 0.0);
  const auto [f, se] = max_occupancy_exceedance(runs, 0, 4.0);
  CHECK(f >= 0.0);
  CHECK(f <= 1.0);
  CHECK(se == doctest::Approx(std::sqrt(f * (1 - f) / 40)));
}

TEST_CASE("simulator refusals") {
  Eigen::VectorXd al(4);
  al << 3.0, 0.0, 0.0, -3.0;
  CHECK_THROWS_AS(TaggedZrpSimulator(environment_from_sites(al), RateFunction::linear()), std::invalid_argument);
  const auto env = zero_env(8);
  const auto g = concave_test_rate();
  SimulationConfig cfg;
  cfg.selector = EventSelector::Particle;
  Rng rng(1);
  CHECK_THROWS_AS(TaggedZrpSimulator(env, g).run(config(std::vector<std::int32_t>(8, 1), 0), cfg, rng),
                  std::invalid_argument);
}

TEST_CASE("replacement statistic: zero at t = 0 and decreasing in N") {
  const auto g = concave_test_rate();
  auto phi = std::make_shared<const PhiTable>(g, 20.0);
  InitialMeasure m;
  m.kind = InitialKind::LocalEquilibrium;
  m.rho0 = [](double) { return 1.5; };
  m.rho_minus = 1.5;
  std::vector<double> values, ses;
  for (int n : {64, 128, 256}) {
    const auto env = build_deterministic(named_drift("zero"), n, "zero");
    SimulationConfig cfg;
    cfg.horizon = 0.02;
    cfg.record_times = {0.0, 0.02};
    cfg.replacement_window = std::max(1L, static_cast<long>(std::floor(0.05 * n)));
    cfg.seed = 40 + n;
    const auto runs = run_replicas(TaggedZrpSimulator(env, g, phi), InitialSampler(m, g, solve_fugacities(env)), cfg, 100);
    CHECK(replacement_statistic(runs, 0).first == 0.0);
    const auto [v, se] = replacement_statistic(runs, 1);
    values.push_back(v);
    ses.push_back(se);
  }
  CAPTURE(values[0]);
  CAPTURE(values[1]);
  CAPTURE(values[2]);
  CHECK(non_increasing(values, ses));
  CHECK(values[2] < values[0]);
}
