#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "zrptag/harness.hpp"

using namespace zrptag;

namespace {

const ComparisonReport& find(const ExperimentOutput& out, const std::string& prefix) {
  for (const auto& r : out.reports)
    if (r.metric.rfind(prefix, 0) == 0) return r;
  FAIL("no report " << prefix);
  throw std::logic_error("unreachable");
}

}  // namespace

TEST_CASE("environment specs") {
  EnvSpec s;
  s.kind = "bridge";
  s.eps = 0.05;
  s.seed = 44;
  const auto back = EnvSpec::from_json(s.to_json());
  CHECK(back.kind == "bridge");
  CHECK(back.eps == 0.05);
  CHECK(back.seed == 44);
  const auto b = make_environment(back, 256);
  CHECK(std::abs(b.alpha_n().sum()) <= 1e-12);
  s.kind = "noise";
  const auto nz = make_environment(s, 256);
  CHECK(std::abs(nz.alpha_n().sum()) > 1e-6);
  s.kind = "det:sin";
  CHECK(make_environment(s, 8).alpha_n()(2) == doctest::Approx(1.0));
  s.kind = "sites";
  s.sites = {0.1, -0.1, 0.0};
  CHECK(make_environment(s, 3).alpha_n()(0) == 0.1);
  CHECK_THROWS_AS(make_environment(s, 4), std::invalid_argument);
  s.kind = "fractal";
  CHECK_THROWS_AS(make_environment(s, 4), std::invalid_argument);
  s.kind = "noise";
  s.law = "cauchy";
  CHECK_THROWS_AS(make_environment(s, 64), std::invalid_argument);
}

TEST_CASE("trend verdicts") {
  CHECK(non_increasing({3, 2, 1}, {0, 0, 0}));
  CHECK_FALSE(non_increasing({1, 2}, {0, 0}));
  CHECK(non_increasing({1.0, 1.4}, {0.3, 0.3}));
  CHECK_FALSE(non_increasing({1.0, 1.5}, {0.3, 0.3}));
}

TEST_CASE("reports and exit verdict") {
  ExperimentOutput out;
  ComparisonReport a;
  a.metric = "x";
  a.pass = true;
  out.reports.push_back(a);
  ComparisonReport b;
  b.metric = "y";
  b.pass = false;
  b.required = false;
  out.reports.push_back(b);
  CHECK(out.all_pass());
  out.reports[1].required = true;
  CHECK_FALSE(out.all_pass());
  const auto j = a.to_json();
  for (const char* key : {"metric", "value", "threshold", "pass", "sample_sizes", "runtime", "standard_error"})
    CHECK(j.contains(key));
}

TEST_CASE("oracle suite: default cases") {
  const auto out = oracle_suite(OracleConfig{});
  CHECK(out.reports.size() == 4 * default_oracle_cases(5).size());
  for (const auto& r : out.reports) {
    if (r.metric.rfind("stationarity", 0) == 0 || r.metric.rfind("adjoint", 0) == 0) CHECK_MESSAGE(r.pass, r.metric);
    if (r.metric.rfind("reversible_iff_zero_affinity", 0) == 0) CHECK_MESSAGE(r.pass, r.metric);
  }
  CHECK(out.tables.at("oracle_residuals").rows.size() == default_oracle_cases(5).size());
}

TEST_CASE("oracle suite: single case and refusal") {
  OracleConfig cfg;
  cfg.cases = {OracleCase{3, 2, "linear", {0.3, -0.1, -0.2}}};
  const auto out = oracle_suite(cfg);
  CHECK(find(out, "stationarity").value <= 1e-10);
  cfg.cases = {OracleCase{40, 30, "linear", std::vector<double>(40, 0.0)}};
  CHECK_THROWS_AS(oracle_suite(cfg), std::invalid_argument);
  cfg.cases = {OracleCase{3, 2, "linear", {0.3}}};
  CHECK_THROWS_AS(oracle_suite(cfg), std::invalid_argument);
}

TEST_CASE("hydro comparison: constant profile without drift") {
  HydroConfig cfg;
  cfg.env.kind = "det:zero";
  cfg.rho0 = "const:1";
  cfg.ladder = {64, 128};
  cfg.replicas = 20;
  cfg.t = 0.05;
  const auto out = hydro_compare(cfg);
  for (int n : {64, 128}) {
    const auto& r = find(out, "hydro_l1[N=" + std::to_string(n) + "]");
    CHECK_MESSAGE(r.pass, r.metric << " " << r.value << " vs " << r.threshold);
    CHECK(r.standard_error > 0.0);
    CHECK(r.sample_sizes.at("replicas") == 20);
  }
  CHECK(out.tables.count("hydro_ladder") == 1);
  cfg.pde_m = 99;
  CHECK_THROWS_AS(hydro_compare(cfg), std::invalid_argument);
}

TEST_CASE("tagged comparison: refusal, degenerate start and null case") {
  TaggedConfig cfg;
  cfg.env.kind = "det:zero";
  cfg.n = 64;
  cfg.replicas = 199;
  CHECK_THROWS_AS(tagged_compare(cfg), std::invalid_argument);

  cfg.replicas = 200;
  cfg.paths = 1000;
  cfg.initial = "fixed_site:16";
  cfg.times = {0.0, 0.05};
  const auto out = tagged_compare(cfg);
  const auto& r0 = find(out, "tagged_ks[t=0");
  CHECK(r0.value == 0.0);
  CHECK(r0.pass);
  const auto& r1 = find(out, "tagged_ks[t=0.05");
  CHECK_MESSAGE(r1.pass, r1.value << " vs " << r1.threshold);
  CHECK(r1.threshold == doctest::Approx(1.3581 * std::sqrt(1200.0 / 200000.0)).epsilon(1e-3));

  cfg.initial = "somewhere";
  CHECK_THROWS_AS(tagged_compare(cfg), std::invalid_argument);
}

TEST_CASE("epsilon continuation without disorder is identically zero") {
  EpsConfig cfg;
  cfg.zero_walk = true;
  cfg.eps = {0.2, 0.1, 0.05};
  cfg.paths = 300;
  cfg.em_eps = 0.0;
  const auto out = epsilon_continuation(cfg);
  const auto& s = find(out, "scale_sup_ladder");
  CHECK(s.pass);
  CHECK(s.value == 0.0);
  const auto& k = find(out, "ks_ladder");
  CHECK(k.pass);
  CHECK(k.value == 0.0);
  cfg.eps = {0.1, 0.2};
  CHECK_THROWS_AS(epsilon_continuation(cfg), std::invalid_argument);
}

TEST_CASE("config round trips and dispatch") {
  TaggedConfig t;
  t.times = {0.1, 0.3};
  t.initial = "fixed_site:3";
  const auto t2 = TaggedConfig::from_json(t.to_json());
  CHECK(t2.times == t.times);
  CHECK(t2.initial == t.initial);
  HydroConfig h;
  h.ladder = {32, 64};
  CHECK(HydroConfig::from_json(h.to_json()).ladder == h.ladder);
  EpsConfig e;
  e.eps = {0.3, 0.1};
  CHECK(EpsConfig::from_json(e.to_json()).eps == e.eps);
  OracleConfig o;
  o.cases = {OracleCase{3, 2, "affine2", {0.1, 0.2, -0.3}}};
  const auto o2 = OracleConfig::from_json(o.to_json());
  REQUIRE(o2.cases.size() == 1);
  CHECK(o2.cases[0].g == "affine2");
  CHECK(o2.cases[0].alpha == o.cases[0].alpha);
  CHECK_THROWS_AS(run_experiment(json{{"kind", "weather"}}), std::invalid_argument);
  json oc = o.to_json();
  oc["kind"] = "oracle";
  CHECK(run_experiment(oc).reports.size() == 4);
}

TEST_CASE("results directory") {
  const auto dir = std::filesystem::temp_directory_path() / "zrptag_harness_test";
  std::filesystem::remove_all(dir);
  OracleConfig o;
  o.cases = {OracleCase{3, 2, "linear", {0.3, -0.1, -0.2}}};
  const auto out = oracle_suite(o);
  write_results(dir.string(), o.to_json(), out);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  CHECK(std::filesystem::exists(dir / "oracle_residuals.csv"));
  std::ifstream rf(dir / "report.json");
  const json report = json::parse(rf);
  CHECK(report.at("reports").size() == 4);
  std::ifstream mf(dir / "manifest.json");
  const json manifest = json::parse(mf);
  CHECK(manifest.at("git_describe") == build_version());
  CHECK(manifest.at("config") == o.to_json());
  std::filesystem::remove_all(dir);
}

TEST_CASE("helpers") {
  CHECK(rate_by_name("concave")(2) == doctest::Approx(1.6));
  CHECK(rate_by_name("linear")(3) == 3.0);
  const auto start = density_start([](double x) { return x < 0.5 ? 1.0 : 0.0; });
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    const double x = start(rng);
    CHECK(x >= 0.0);
    CHECK(x <= 0.5 + 1e-9);
  }
  CHECK_THROWS(density_start([](double) { return 0.0; }));
}
