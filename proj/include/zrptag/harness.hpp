#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "zrptag/diffusion.hpp"
#include "zrptag/environment.hpp"
#include "zrptag/equilibrium.hpp"
#include "zrptag/pde.hpp"
#include "zrptag/simulator.hpp"

namespace zrptag {

using json = nlohmann::json;

/// How to realize an environment at a given N.
struct EnvSpec {
  std::string kind = "noise";  ///< noise | bridge | det:<drift name> | sites
  double eps = 0.1;
  std::string kernel = "box";
  std::uint64_t seed = 1;
  double sigma = 1.0;
  std::string law = "rademacher";  ///< rademacher | uniform
  double bound_c = 8.0;
  std::vector<double> sites;  ///< for kind = sites

  static EnvSpec from_json(const json& j);
  json to_json() const;
};

RealizedEnvironment make_environment(const EnvSpec& spec, int n);

struct ComparisonReport {
  std::string metric;
  double value = 0.0;
  double threshold = 0.0;
  std::string comparator = "<=";  ///< how value is tested against threshold
  bool pass = false;
  bool required = true;  ///< informational reports do not affect the exit code
  double standard_error = 0.0;
  json sample_sizes = json::object();
  double runtime = 0.0;
  json details = json::object();

  json to_json() const;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

struct ExperimentOutput {
  std::vector<ComparisonReport> reports;
  std::map<std::string, CsvTable> tables;
  json seeds = json::object();

  bool all_pass() const;
};

/// Monotone non-increase up to one combined standard error per rung.
bool non_increasing(const std::vector<double>& values, const std::vector<double>& se);

struct HydroConfig {
  EnvSpec env;
  std::string g = "linear";
  std::string rho0 = "sine:1,0.5";
  std::vector<int> ladder{128, 256, 512};
  long replicas = 20;
  double t = 0.1;
  double theta = 0.05;
  long pde_m = 0;  ///< 0: M = N
  std::uint64_t seed = 1;

  static HydroConfig from_json(const json& j);
  json to_json() const;
};

/// Replica-mean eta^{theta N} against the PDE solution block-averaged with the
/// same window, L1 over the torus, for every N of the ladder.
ExperimentOutput hydro_compare(const HydroConfig& cfg);

struct TaggedConfig {
  EnvSpec env;
  std::string g = "linear";
  std::string rho0 = "const:1";
  int n = 512;
  long replicas = 500;
  long paths = 10000;
  std::vector<double> times{0.2};
  std::string initial = "local_equilibrium";  ///< or fixed_site:<x0>
  double level = 0.05;     ///< KS level for the critical value
  double threshold = 0.0;  ///< > 0 replaces the critical value
  long pde_m = 256;
  std::uint64_t seed = 1;

  static TaggedConfig from_json(const json& j);
  json to_json() const;
};

/// Two-sample KS between X^N_t/N and Euler-Maruyama samples of the limit SDE.
ExperimentOutput tagged_compare(const TaggedConfig& cfg);

struct EpsConfig {
  int n_walk = 1024;
  std::uint64_t walk_seed = 7;
  double sigma = 1.0;
  bool zero_walk = false;
  std::string kernel = "box";
  std::vector<double> eps{0.2, 0.1, 0.05, 0.025};
  double range = 2.0;
  long paths = 2000;
  double t = 0.3;
  double z = 0.3;
  double dtau = 1e-4;
  std::uint64_t seed = 11;
  /// Ito-McKean against Euler-Maruyama at this rung (<= 0: off).
  double em_eps = 0.1;
  long em_paths = 10000;
  double em_level = 0.01;

  static EpsConfig from_json(const json& j);
  json to_json() const;
};

/// (a) sup_{[-range, range]} |s_eps - s_0| ladder; (b) KS(x^eps_t, x^0_t)
/// ladder with shared Brownian seeds.
ExperimentOutput epsilon_continuation(const EpsConfig& cfg);

struct OracleCase {
  int n = 3;
  int k = 2;
  std::string g = "linear";
  std::vector<double> alpha;
};

struct OracleConfig {
  std::vector<OracleCase> cases;
  long pairs = 20;
  std::uint64_t seed = 5;

  static OracleConfig from_json(const json& j);
  json to_json() const;
};

/// (N, K) in {(3,2), (4,3), (5,3)} times g in {linear, affine2, concave}
/// times three random site drifts, plus their bridges and one zero-affinity
/// drift per state space.
std::vector<OracleCase> default_oracle_cases(std::uint64_t seed);

/// Exact finite-state checks (an empty case list runs the default cases): stationarity, adjoint identity, reversibility.
ExperimentOutput oracle_suite(const OracleConfig& cfg);

/// Nonlinear (A)+(LG)+(M) test rate: table 0, 1, 1.6, 2, 2.3, 2.6 with slope
/// 0.3 beyond.
RateFunction concave_test_rate();

/// Rate by name, including "concave".
RateFunction rate_by_name(const std::string& name);

/// Samples a start point with density proportional to rho0 on the torus.
StartLaw density_start(const std::function<double(double)>& rho0, long grid = 4096);

/// Writes manifest.json, report.json and one CSV per table into `dir`.
void write_results(const std::string& dir, const json& config, const ExperimentOutput& out);

/// Dispatches on config["kind"]: hydro, tagged, eps, oracle.
ExperimentOutput run_experiment(const json& config);

/// git describe of the source tree at build time.
std::string build_version();

}  // namespace zrptag
