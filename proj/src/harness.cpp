#include "zrptag/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "zrptag/errors.hpp"
#include "zrptag/generator.hpp"
#include "zrptag/stats.hpp"

#ifndef ZRPTAG_GIT_DESCRIBE
#define ZRPTAG_GIT_DESCRIBE "unknown"
#endif

namespace zrptag {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

template <class T>
void get(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

Eigen::VectorXd periodic_block(const Eigen::VectorXd& v, long half_width) {
  const long n = v.size();
  Eigen::VectorXd prefix(n + 1);
  prefix(0) = 0.0;
  for (long k = 0; k < n; ++k) prefix(k + 1) = prefix(k) + v(k);
  const double total = prefix(n);
  auto sum_to = [&](long j) {  // sum of v over [0, j) for any integer j
    const long q = j >= 0 ? j / n : -((-j + n - 1) / n);
    return q * total + prefix(j - q * n);
  };
  Eigen::VectorXd out(n);
  for (long k = 0; k < n; ++k)
    out(k) = (sum_to(k + half_width + 1) - sum_to(k - half_width)) / (2.0 * half_width + 1.0);
  return out;
}

/// Standard deviation of the Kolmogorov limit law, used as the Monte Carlo
/// scale of a two-sample KS distance.
constexpr double kolmogorov_sd = 0.2603;

double ks_scale(long n, long m) {
  return kolmogorov_sd * std::sqrt(static_cast<double>(n + m) / (static_cast<double>(n) * m));
}

double max_abs_continuum(const RealizedEnvironment& env) {
  double m = env.max_abs_alpha_n();
  for (int i = 0; i < 4096; ++i) m = std::max(m, std::abs(env.alpha((i + 0.5) / 4096.0)));
  return m;
}

}  // namespace

// ---------------------------------------------------------------- configs

EnvSpec EnvSpec::from_json(const json& j) {
  EnvSpec s;
  get(j, "kind", s.kind);
  get(j, "eps", s.eps);
  get(j, "kernel", s.kernel);
  get(j, "seed", s.seed);
  get(j, "sigma", s.sigma);
  get(j, "law", s.law);
  get(j, "bound_c", s.bound_c);
  get(j, "sites", s.sites);
  return s;
}

json EnvSpec::to_json() const {
  json j{{"kind", kind}, {"eps", eps}, {"kernel", kernel}, {"seed", seed},
         {"sigma", sigma}, {"law", law}, {"bound_c", bound_c}};
  if (!sites.empty()) j["sites"] = sites;
  return j;
}

RealizedEnvironment make_environment(const EnvSpec& spec, int n) {
  if (spec.kind == "noise" || spec.kind == "bridge") {
    DisorderLaw law;
    if (spec.law == "rademacher")
      law = DisorderLaw::Rademacher;
    else if (spec.law == "uniform")
      law = DisorderLaw::Uniform;
    else
      throw std::invalid_argument("unknown disorder law '" + spec.law + "'");
    const auto d = sample_disorder(n, spec.sigma, spec.seed, law);
    auto env = build_regularized(d, n, spec.eps, Kernel::from_name(spec.kernel), spec.bound_c);
    return spec.kind == "bridge" ? build_bridge(env) : env;
  }
  if (spec.kind.rfind("det:", 0) == 0) {
    const std::string name = spec.kind.substr(4);
    return build_deterministic(named_drift(name), n, name);
  }
  if (spec.kind == "sites") {
    require(static_cast<int>(spec.sites.size()) == n, "make_environment: site list length differs from N");
    return environment_from_sites(Eigen::Map<const Eigen::VectorXd>(spec.sites.data(), n));
  }
  throw std::invalid_argument("unknown environment kind '" + spec.kind + "'");
}

json ComparisonReport::to_json() const {
  return json{{"metric", metric},
              {"value", value},
              {"threshold", threshold},
              {"comparator", comparator},
              {"pass", pass},
              {"required", required},
              {"standard_error", standard_error},
              {"sample_sizes", sample_sizes},
              {"runtime", runtime},
              {"details", details}};
}

bool ExperimentOutput::all_pass() const {
  return std::all_of(reports.begin(), reports.end(), [](const ComparisonReport& r) { return r.pass || !r.required; });
}

bool non_increasing(const std::vector<double>& values, const std::vector<double>& se) {
  require(values.size() == se.size(), "non_increasing: size mismatch");
  for (std::size_t i = 1; i < values.size(); ++i) {
    const double tol = std::hypot(se[i - 1], se[i]);
    if (values[i] > values[i - 1] + tol) return false;
  }
  return true;
}

HydroConfig HydroConfig::from_json(const json& j) {
  HydroConfig c;
  if (j.contains("env")) c.env = EnvSpec::from_json(j.at("env"));
  get(j, "g", c.g);
  get(j, "rho0", c.rho0);
  get(j, "ladder", c.ladder);
  get(j, "replicas", c.replicas);
  get(j, "t", c.t);
  get(j, "theta", c.theta);
  get(j, "pde_m", c.pde_m);
  get(j, "seed", c.seed);
  return c;
}

json HydroConfig::to_json() const {
  return json{{"kind", "hydro"}, {"env", env.to_json()}, {"g", g},           {"rho0", rho0},
              {"ladder", ladder}, {"replicas", replicas}, {"t", t},           {"theta", theta},
              {"pde_m", pde_m},   {"seed", seed}};
}

TaggedConfig TaggedConfig::from_json(const json& j) {
  TaggedConfig c;
  if (j.contains("env")) c.env = EnvSpec::from_json(j.at("env"));
  get(j, "g", c.g);
  get(j, "rho0", c.rho0);
  get(j, "n", c.n);
  get(j, "replicas", c.replicas);
  get(j, "paths", c.paths);
  get(j, "times", c.times);
  get(j, "initial", c.initial);
  get(j, "level", c.level);
  get(j, "threshold", c.threshold);
  get(j, "pde_m", c.pde_m);
  get(j, "seed", c.seed);
  return c;
}

json TaggedConfig::to_json() const {
  return json{{"kind", "tagged"}, {"env", env.to_json()}, {"g", g},         {"rho0", rho0},
              {"n", n},           {"replicas", replicas}, {"paths", paths}, {"times", times},
              {"initial", initial}, {"level", level},     {"threshold", threshold},
              {"pde_m", pde_m},   {"seed", seed}};
}

EpsConfig EpsConfig::from_json(const json& j) {
  EpsConfig c;
  get(j, "n_walk", c.n_walk);
  get(j, "walk_seed", c.walk_seed);
  get(j, "sigma", c.sigma);
  get(j, "zero_walk", c.zero_walk);
  get(j, "kernel", c.kernel);
  get(j, "eps", c.eps);
  get(j, "range", c.range);
  get(j, "paths", c.paths);
  get(j, "t", c.t);
  get(j, "z", c.z);
  get(j, "dtau", c.dtau);
  get(j, "seed", c.seed);
  get(j, "em_eps", c.em_eps);
  get(j, "em_paths", c.em_paths);
  get(j, "em_level", c.em_level);
  return c;
}

json EpsConfig::to_json() const {
  return json{{"kind", "eps"},   {"n_walk", n_walk}, {"walk_seed", walk_seed}, {"sigma", sigma},
              {"zero_walk", zero_walk}, {"kernel", kernel}, {"eps", eps},   {"range", range},
              {"paths", paths},  {"t", t},           {"z", z},               {"dtau", dtau},
              {"seed", seed},    {"em_eps", em_eps}, {"em_paths", em_paths}, {"em_level", em_level}};
}

OracleConfig OracleConfig::from_json(const json& j) {
  OracleConfig c;
  get(j, "pairs", c.pairs);
  get(j, "seed", c.seed);
  if (j.contains("cases")) {
    for (const auto& e : j.at("cases")) {
      OracleCase oc;
      get(e, "n", oc.n);
      get(e, "k", oc.k);
      get(e, "g", oc.g);
      get(e, "alpha", oc.alpha);
      c.cases.push_back(oc);
    }
  }
  return c;
}

json OracleConfig::to_json() const {
  json cs = json::array();
  for (const auto& c : cases) cs.push_back({{"n", c.n}, {"k", c.k}, {"g", c.g}, {"alpha", c.alpha}});
  return json{{"kind", "oracle"}, {"pairs", pairs}, {"seed", seed}, {"cases", cs}};
}

RateFunction concave_test_rate() {
  return RateFunction::from_table({0.0, 1.0, 1.6, 2.0, 2.3, 2.6}, "concave");
}

RateFunction rate_by_name(const std::string& name) {
  if (name == "concave") return concave_test_rate();
  return RateFunction::from_name(name);
}

StartLaw density_start(const std::function<double(double)>& rho0, long grid) {
  require(grid >= 1, "density_start: empty grid");
  auto cdf = std::make_shared<std::vector<double>>(grid + 1, 0.0);
  for (long i = 0; i < grid; ++i) {
    const double w = rho0((i + 0.5) / grid);
    require(w >= 0.0, "density_start: negative density");
    (*cdf)[i + 1] = (*cdf)[i] + w;
  }
  require((*cdf)[grid] > 0.0, "density_start: zero mass");
  return [cdf, grid](Rng& rng) {
    const double u = rng.uniform() * cdf->back();
    const long i = std::clamp<long>(std::upper_bound(cdf->begin(), cdf->end(), u) - cdf->begin() - 1, 0, grid - 1);
    const double w = (*cdf)[i + 1] - (*cdf)[i];
    const double f = w > 0.0 ? (u - (*cdf)[i]) / w : 0.5;
    return (i + std::clamp(f, 0.0, 1.0)) / grid;
  };
}

// ---------------------------------------------------------------- hydro

ExperimentOutput hydro_compare(const HydroConfig& cfg) {
  require(!cfg.ladder.empty(), "hydro_compare: empty N ladder");
  require(cfg.replicas >= 2, "hydro_compare: need at least two replicas");
  require(cfg.t > 0.0 && cfg.theta > 0.0, "hydro_compare: t and theta must be positive");
  const RateFunction g = rate_by_name(cfg.g);
  const auto rho0 = named_profile(cfg.rho0);

  ExperimentOutput out;
  out.seeds = {{"env", cfg.env.seed}, {"replicas", cfg.seed}};
  CsvTable ladder{{"n", "l1", "se", "noise_floor"}, {}};
  std::vector<double> l1s, ses;

  for (int n : cfg.ladder) {
    const auto t0 = Clock::now();
    const RealizedEnvironment env = make_environment(cfg.env, n);
    const long m = cfg.pde_m > 0 ? cfg.pde_m : n;
    if (m != n) throw std::invalid_argument("hydro_compare: PDE grid must match the lattice (pde_m = N)");

    double rmin = INFINITY, rmax = 0.0;
    for (int k = 0; k < n; ++k) {
      const double r = rho0(static_cast<double>(k) / n);
      rmin = std::min(rmin, r);
      rmax = std::max(rmax, r);
    }
    auto phi = std::make_shared<const PhiTable>(g, std::max(4.0, 2.5 * rmax));

    PdeConfig pc;
    pc.m = m;
    pc.horizon = cfg.t;
    const DensityField field = PdeSolver(env, phi).solve(rho0, pc);
    const Eigen::VectorXd pde = field.row_at(cfg.t);

    InitialMeasure im;
    im.kind = InitialKind::LocalEquilibrium;
    im.rho0 = rho0;
    im.rho_minus = rmin;
    const InitialSampler sampler(im, g, solve_fugacities(env));
    SimulationConfig sc;
    sc.horizon = cfg.t;
    sc.snapshot_times = {cfg.t};
    sc.seed = cfg.seed + static_cast<std::uint64_t>(n);
    const TaggedZrpSimulator sim(env, g);
    const auto runs = run_replicas(sim, sampler, sc, cfg.replicas);

    const long ell = std::max<long>(1, static_cast<long>(std::floor(cfg.theta * n)));
    const Eigen::VectorXd pde_blk = periodic_block(pde, ell);
    Eigen::MatrixXd eta(cfg.replicas, n);
    for (long r = 0; r < cfg.replicas; ++r) eta.row(r) = block_average(runs[r].snapshots.at(0).xi, ell).transpose();
    const Eigen::RowVectorXd sum = eta.colwise().sum();

    auto l1 = [&](long skip) {
      Eigen::RowVectorXd mean = sum;
      double count = static_cast<double>(cfg.replicas);
      if (skip >= 0) {
        mean -= eta.row(skip);
        count -= 1.0;
      }
      mean /= count;
      return (mean.transpose() - pde_blk).cwiseAbs().mean();
    };
    const auto [value, se] = stats::jackknife(cfg.replicas, l1);

    const Eigen::RowVectorXd mean = sum / static_cast<double>(cfg.replicas);
    const Eigen::RowVectorXd var =
        (eta.rowwise() - mean).colwise().squaredNorm() / static_cast<double>(cfg.replicas - 1);
    const Eigen::RowVectorXd site_se = (var / static_cast<double>(cfg.replicas)).cwiseSqrt();
    const double floor_se = site_se.mean();

    ComparisonReport rep;
    rep.metric = "hydro_l1[N=" + std::to_string(n) + "]";
    rep.value = value;
    rep.threshold = 3.0 * floor_se;
    rep.comparator = "<=";
    rep.pass = value <= rep.threshold;
    rep.required = false;
    rep.standard_error = se;
    rep.sample_sizes = {{"replicas", cfg.replicas}, {"n", n}, {"m", m}, {"window", ell}};
    rep.runtime = seconds_since(t0);
    rep.details = {{"noise_floor", floor_se}, {"t", cfg.t}, {"pde_mass_drift", field.mass_drift},
                   {"pde_steps", field.steps}, {"note", "threshold is 3 x mean per-site standard error"}};
    out.reports.push_back(rep);

    ladder.rows.push_back({static_cast<double>(n), value, se, floor_se});
    CsvTable prof{{"x", "eta_mean", "eta_se", "pde_block", "pde"}, {}};
    for (int k = 0; k < n; ++k)
      prof.rows.push_back({static_cast<double>(k) / n, mean(k), site_se(k), pde_blk(k), pde(k)});
    out.tables["hydro_profile_N" + std::to_string(n)] = std::move(prof);
    l1s.push_back(value);
    ses.push_back(se);
  }

  ComparisonReport trend;
  trend.metric = "hydro_trend";
  trend.pass = non_increasing(l1s, ses);
  trend.value = l1s.back();
  trend.threshold = l1s.front();
  trend.comparator = "non-increasing";
  trend.standard_error = ses.back();
  trend.sample_sizes = {{"replicas", cfg.replicas}, {"ladder", cfg.ladder}};
  for (const auto& r : out.reports) trend.runtime += r.runtime;
  trend.details = {{"l1", l1s}, {"se", ses}};
  out.reports.push_back(trend);
  out.tables["hydro_ladder"] = std::move(ladder);
  return out;
}

// ---------------------------------------------------------------- tagged

ExperimentOutput tagged_compare(const TaggedConfig& cfg) {
  if (cfg.replicas < 200) throw std::invalid_argument("tagged_compare: fewer than 200 replicas (power too low)");
  require(cfg.paths >= 1 && !cfg.times.empty(), "tagged_compare: need paths and times");
  require(std::is_sorted(cfg.times.begin(), cfg.times.end()) && cfg.times.front() >= 0.0,
          "tagged_compare: times must be increasing and non-negative");
  const auto t0 = Clock::now();
  const RateFunction g = rate_by_name(cfg.g);
  const auto rho0 = named_profile(cfg.rho0);
  const int n = cfg.n;
  const RealizedEnvironment env = make_environment(cfg.env, n);
  const double horizon = std::max(cfg.times.back(), 1e-12);

  double rmin = INFINITY, rmax = 0.0;
  for (int k = 0; k < 4096; ++k) {
    const double r = rho0((k + 0.5) / 4096.0);
    rmin = std::min(rmin, r);
    rmax = std::max(rmax, r);
  }
  auto phi = std::make_shared<const PhiTable>(g, std::max(4.0, 2.5 * rmax));

  // PDE first; for linear g the field does not enter chi.
  ChiField chi;
  json pde_info = json::object();
  if (g.is_linear()) {
    chi = ChiField::uniform(g.linear_slope());
  } else {
    PdeConfig pc;
    pc.m = cfg.pde_m;
    pc.horizon = horizon;
    auto field = std::make_shared<const DensityField>(PdeSolver(env, phi).solve(rho0, pc));
    pde_info = {{"mass_drift", field->mass_drift}, {"steps", field->steps}, {"m", field->m}};
    chi = ChiField::from_field(field, phi, g);
  }

  InitialMeasure im;
  im.rho0 = rho0;
  im.rho_minus = rmin;
  StartLaw start;
  if (cfg.initial == "local_equilibrium") {
    im.kind = InitialKind::LocalEquilibrium;
    start = density_start(rho0);
  } else if (cfg.initial.rfind("fixed_site:", 0) == 0) {
    im.kind = InitialKind::FixedSite;
    im.x0 = std::stol(cfg.initial.substr(11));
    start = point_start(static_cast<double>(im.x0) / n);
  } else {
    throw std::invalid_argument("unknown initial law '" + cfg.initial + "'");
  }
  const InitialSampler sampler(im, g, solve_fugacities(env));
  SimulationConfig sc;
  sc.horizon = horizon;
  sc.record_times = cfg.times;
  sc.seed = cfg.seed;
  const auto runs = run_replicas(TaggedZrpSimulator(env, g), sampler, sc, cfg.replicas);
  const double particle_seconds = seconds_since(t0);

  SdeRunConfig rc;
  rc.times = cfg.times;
  rc.paths = cfg.paths;
  rc.seed = cfg.seed ^ 0x5DE5DE5DEULL;
  const SdeSamples sde =
      euler_maruyama([&env](double x) { return env.alpha(x); }, max_abs_continuum(env), chi, g.g_star(), start, rc);

  ExperimentOutput out;
  out.seeds = {{"env", cfg.env.seed}, {"particles", cfg.seed}, {"sde", rc.seed}};
  CsvTable ks_table{{"t", "ks", "critical", "pvalue"}, {}};
  CsvTable q_table{{"t", "p", "particle", "sde"}, {}};
  const double crit = stats::ks_critical(cfg.level, cfg.replicas, cfg.paths);
  for (std::size_t j = 0; j < cfg.times.size(); ++j) {
    std::vector<double> xs(cfg.replicas);
    for (long r = 0; r < cfg.replicas; ++r) xs[r] = runs[r].x[j];
    const std::vector<double> ys = sde.torus(static_cast<long>(j));
    const double d = stats::ks_two_sample(xs, ys);
    ComparisonReport rep;
    rep.metric = "tagged_ks[t=" + fmt(cfg.times[j]) + "]";
    rep.value = d;
    rep.threshold = cfg.threshold > 0.0 ? cfg.threshold : crit;
    rep.comparator = "<";
    rep.pass = d < rep.threshold;
    rep.standard_error = ks_scale(cfg.replicas, cfg.paths);
    rep.sample_sizes = {{"replicas", cfg.replicas}, {"paths", cfg.paths}, {"n", n}};
    rep.runtime = seconds_since(t0);
    rep.details = {{"critical_value", crit}, {"level", cfg.level}, {"pvalue", stats::ks_pvalue(d, cfg.replicas, cfg.paths)},
                   {"em_dt", sde.dt}, {"particle_seconds", particle_seconds}, {"pde", pde_info}};
    out.reports.push_back(rep);
    ks_table.rows.push_back({cfg.times[j], d, crit, stats::ks_pvalue(d, cfg.replicas, cfg.paths)});
    for (double p : {0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95})
      q_table.rows.push_back({cfg.times[j], p, stats::quantile(xs, p), stats::quantile(ys, p)});
  }
  out.tables["tagged_ks"] = std::move(ks_table);
  out.tables["tagged_quantiles"] = std::move(q_table);
  return out;
}

// ---------------------------------------------------------------- epsilon

ExperimentOutput epsilon_continuation(const EpsConfig& cfg) {
  require(!cfg.eps.empty(), "epsilon_continuation: empty ladder");
  for (std::size_t i = 1; i < cfg.eps.size(); ++i)
    if (!(cfg.eps[i] < cfg.eps[i - 1])) throw std::invalid_argument("epsilon_continuation: ladder not decreasing");
  const auto t0 = Clock::now();

  DisorderSample d = sample_disorder(cfg.n_walk, cfg.sigma, cfg.walk_seed);
  if (cfg.zero_walk) d.r.setZero();
  auto walk = std::make_shared<const InterpolatedWalk>(InterpolatedWalk::from_disorder(d));
  const Kernel kernel = Kernel::from_name(cfg.kernel);

  const Potential a0 = singular_potential(walk);
  const double l = std::max(4.0, cfg.range + 1.0);
  const ScaleFunction s0(a0, l);

  SdeRunConfig rc;
  rc.times = {cfg.t};
  rc.paths = cfg.paths;
  rc.dtau = cfg.dtau;
  rc.seed = cfg.seed;
  const ChiField chi = ChiField::uniform(1.0);
  const StartLaw start = point_start(cfg.z);
  const SdeSamples x0 = ito_mckean(a0, chi, start, rc);
  const std::vector<double> x0col = x0.column(0);

  ExperimentOutput out;
  out.seeds = {{"walk", cfg.walk_seed}, {"brownian", cfg.seed}};
  CsvTable s_table{{"eps", "sup"}, {}};
  CsvTable k_table{{"eps", "ks", "se"}, {}};
  std::vector<double> sups, kss, kses;
  std::vector<double> zero(cfg.eps.size(), 0.0);
  for (double eps : cfg.eps) {
    const RealizedEnvironment env = build_regularized(d, cfg.n_walk, eps, kernel);
    const Potential ae = regularized_potential(env);
    const ScaleFunction se(ae, l);
    sups.push_back(sup_distance(se, s0, cfg.range));
    const SdeSamples xe = ito_mckean(ae, chi, start, rc);
    kss.push_back(stats::ks_two_sample(xe.column(0), x0col));
    kses.push_back(ks_scale(cfg.paths, cfg.paths));
    s_table.rows.push_back({eps, sups.back()});
    k_table.rows.push_back({eps, kss.back(), kses.back()});
  }
  const bool nonzero_walk = d.r.cwiseAbs().maxCoeff() > 0.0;

  ComparisonReport sr;
  sr.metric = "scale_sup_ladder";
  // Quadrature tolerance on the rungs; strict positivity only for a nonzero walk.
  const std::vector<double> quad_tol(sups.size(), 1e-9 / std::sqrt(2.0));
  const bool positive = std::all_of(sups.begin(), sups.end(), [](double v) { return v > 0.0; });
  sr.pass = non_increasing(sups, quad_tol) && (nonzero_walk ? positive : sups.front() <= 1e-12);
  sr.value = sups.back();
  sr.threshold = sups.front();
  sr.comparator = "non-increasing";
  sr.standard_error = 0.0;
  sr.sample_sizes = {{"rungs", cfg.eps.size()}, {"n_walk", cfg.n_walk}};
  sr.runtime = seconds_since(t0);
  sr.details = {{"eps", cfg.eps}, {"sup", sups}, {"range", cfg.range}, {"nonzero_walk", nonzero_walk}};
  out.reports.push_back(sr);

  ComparisonReport kr;
  kr.metric = "ks_ladder";
  kr.pass = nonzero_walk ? non_increasing(kss, kses) : *std::max_element(kss.begin(), kss.end()) == 0.0;
  kr.value = kss.back();
  kr.threshold = kss.front();
  kr.comparator = "non-increasing";
  kr.standard_error = kses.back();
  kr.sample_sizes = {{"paths", cfg.paths}, {"rungs", cfg.eps.size()}};
  kr.runtime = seconds_since(t0);
  kr.details = {{"eps", cfg.eps}, {"ks", kss}, {"se", kses}, {"t", cfg.t}, {"z", cfg.z}, {"dtau", cfg.dtau}};
  out.reports.push_back(kr);

  if (cfg.em_eps > 0.0) {
    const auto t1 = Clock::now();
    const RealizedEnvironment env = build_regularized(d, cfg.n_walk, cfg.em_eps, kernel);
    SdeRunConfig ec = rc;
    ec.paths = cfg.em_paths;
    const SdeSamples im = ito_mckean(regularized_potential(env), chi, start, ec);
    ec.seed = cfg.seed ^ 0xE3E3E3ULL;
    const SdeSamples em =
        euler_maruyama([&env](double x) { return env.alpha(x); }, max_abs_continuum(env), chi, 1.0, start, ec);
    ComparisonReport er;
    er.metric = "ito_mckean_vs_em[eps=" + fmt(cfg.em_eps) + "]";
    er.value = stats::ks_two_sample(im.column(0), em.column(0));
    er.threshold = stats::ks_critical(cfg.em_level, cfg.em_paths, cfg.em_paths);
    er.comparator = "<";
    er.pass = er.value < er.threshold;
    er.standard_error = ks_scale(cfg.em_paths, cfg.em_paths);
    er.sample_sizes = {{"ito_mckean", cfg.em_paths}, {"euler_maruyama", cfg.em_paths}};
    er.runtime = seconds_since(t1);
    er.details = {{"level", cfg.em_level}, {"em_dt", em.dt}, {"dtau", cfg.dtau},
                  {"pvalue", stats::ks_pvalue(er.value, cfg.em_paths, cfg.em_paths)}};
    out.reports.push_back(er);
  }
  out.tables["eps_scale"] = std::move(s_table);
  out.tables["eps_ks"] = std::move(k_table);
  return out;
}

// ---------------------------------------------------------------- oracle

std::vector<OracleCase> default_oracle_cases(std::uint64_t seed) {
  std::vector<OracleCase> cases;
  Rng rng(seed, 0x0AC1E);
  for (auto [n, k] : {std::pair{3, 2}, std::pair{4, 3}, std::pair{5, 3}}) {
    for (const char* g : {"linear", "affine2", "concave"}) {
      for (int e = 0; e < 3; ++e) {
        OracleCase c{n, k, g, std::vector<double>(n)};
        for (auto& a : c.alpha) a = 0.2 * n * (2.0 * rng.uniform() - 1.0);
        cases.push_back(c);
        double mean = 0.0;
        for (double a : c.alpha) mean += a / n;
        for (auto& a : c.alpha) a -= mean;
        cases.push_back(c);
      }
    }
    OracleCase flat{n, k, "linear", std::vector<double>(n, 0.0)};
    flat.alpha[0] = 0.3;
    flat.alpha[1] = -0.3;
    cases.push_back(flat);
  }
  return cases;
}

ExperimentOutput oracle_suite(const OracleConfig& cfg) {
  const std::vector<OracleCase> cases = cfg.cases.empty() ? default_oracle_cases(cfg.seed) : cfg.cases;
  require(cfg.pairs >= 1, "oracle_suite: need at least one test pair");
  ExperimentOutput out;
  out.seeds = {{"cases", cfg.seed}, {"pairs", cfg.seed + 1}};
  CsvTable table{{"case", "n", "k", "stationarity", "adjoint", "symmetry", "sum_alpha", "affinity"}, {}};
  Rng rng(cfg.seed + 1);

  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const auto t0 = Clock::now();
    const OracleCase& c = cases[ci];
    require(static_cast<int>(c.alpha.size()) == c.n, "oracle_suite: drift length differs from N");
    const FiniteStateSpace space(c.n, c.k);
    const RealizedEnvironment env =
        environment_from_sites(Eigen::Map<const Eigen::VectorXd>(c.alpha.data(), c.n), "oracle");
    const RateFunction g = rate_by_name(c.g);
    const Eigen::VectorXd phi = solve_fugacities(env).phi;
    const Eigen::VectorXd nu = conditioned_invariant(space, g, phi);
    const Eigen::MatrixXd q = joint_generator(space, env, g);
    const Eigen::MatrixXd qs = adjoint_generator(space, env, g, phi);

    const double stat = stationarity_defect(nu, q);
    double adj = 0.0;
    for (long p = 0; p < cfg.pairs; ++p) {
      Eigen::VectorXd f(space.size()), h(space.size());
      for (long i = 0; i < space.size(); ++i) {
        f(i) = 2.0 * rng.uniform() - 1.0;
        h(i) = 2.0 * rng.uniform() - 1.0;
      }
      const double lhs = nu.dot(f.cwiseProduct(q * h));
      const double rhs = nu.dot((qs * f).cwiseProduct(h));
      adj = std::max(adj, std::abs(lhs - rhs));
    }
    const double sym = symmetry_defect(nu, q);
    const double sum_alpha = compensated_sum(env.alpha_n());
    const double affinity = cycle_affinity(env);
    const bool symmetric = sym <= 1e-12;

    std::ostringstream tag;
    tag << "[case=" << ci << ",N=" << c.n << ",K=" << c.k << ",g=" << c.g << "]";
    const json sizes{{"states", space.size()}, {"n", c.n}, {"k", c.k}};
    const double runtime = seconds_since(t0);
    auto make = [&](std::string metric, double value, double threshold, std::string op, bool pass) {
      ComparisonReport r;
      r.metric = std::move(metric) + tag.str();
      r.value = value;
      r.threshold = threshold;
      r.comparator = std::move(op);
      r.pass = pass;
      r.sample_sizes = sizes;
      r.runtime = runtime;
      return r;
    };
    out.reports.push_back(make("stationarity", stat, 1e-10, "<=", stat <= 1e-10));
    auto ar = make("adjoint", adj, 1e-10, "<=", adj <= 1e-10);
    ar.sample_sizes["pairs"] = cfg.pairs;
    out.reports.push_back(ar);
    const bool sum_zero = std::abs(sum_alpha) <= 1e-12;
    auto rs = make("reversible_iff_zero_sum", sym, 1e-12, sum_zero ? "<=" : ">", symmetric == sum_zero);
    rs.details = {{"sum_alpha", sum_alpha}, {"affinity", affinity}};
    out.reports.push_back(rs);
    const bool aff_zero = std::abs(affinity) <= 1e-12;
    auto ra = make("reversible_iff_zero_affinity", sym, 1e-12, aff_zero ? "<=" : ">", symmetric == aff_zero);
    ra.required = false;
    ra.details = {{"sum_alpha", sum_alpha}, {"affinity", affinity}};
    out.reports.push_back(ra);
    table.rows.push_back({static_cast<double>(ci), static_cast<double>(c.n), static_cast<double>(c.k), stat, adj, sym,
                          sum_alpha, affinity});
  }
  out.tables["oracle_residuals"] = std::move(table);
  return out;
}

// ---------------------------------------------------------------- output

void write_results(const std::string& dir, const json& config, const ExperimentOutput& out) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path root(dir);
  {
    std::ofstream f(root / "manifest.json");
    f << std::setw(2) << json{{"config", config}, {"seeds", out.seeds}, {"git_describe", build_version()}} << "\n";
  }
  {
    json reps = json::array();
    for (const auto& r : out.reports) reps.push_back(r.to_json());
    std::ofstream f(root / "report.json");
    f << std::setw(2) << json{{"pass", out.all_pass()}, {"reports", reps}} << "\n";
  }
  for (const auto& [name, table] : out.tables) {
    std::ofstream f(root / (name + ".csv"));
    f << std::setprecision(17);
    for (std::size_t i = 0; i < table.header.size(); ++i) f << (i ? "," : "") << table.header[i];
    f << "\n";
    for (const auto& row : table.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
      f << "\n";
    }
  }
}

ExperimentOutput run_experiment(const json& config) {
  const std::string kind = config.value("kind", "");
  if (kind == "hydro") return hydro_compare(HydroConfig::from_json(config));
  if (kind == "tagged") return tagged_compare(TaggedConfig::from_json(config));
  if (kind == "eps") return epsilon_continuation(EpsConfig::from_json(config));
  if (kind == "oracle") return oracle_suite(OracleConfig::from_json(config));
  throw std::invalid_argument("unknown experiment kind '" + kind + "'");
}

std::string build_version() { return ZRPTAG_GIT_DESCRIBE; }

}  // namespace zrptag
