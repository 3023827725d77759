#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "zrptag/diffusion.hpp"
#include "zrptag/environment.hpp"
#include "zrptag/equilibrium.hpp"
#include "zrptag/harness.hpp"
#include "zrptag/pde.hpp"
#include "zrptag/simulator.hpp"
#include "zrptag/stats.hpp"

using namespace zrptag;
namespace fs = std::filesystem;

namespace {

json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return json::parse(f);
}

void write_json(const std::string& path, const json& j) {
  std::ofstream f(path);
  f << std::setw(2) << j << "\n";
}

std::vector<std::vector<double>> read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (numeric) rows.push_back(std::move(row));  // header lines are skipped
  }
  return rows;
}

/// Environment from an `env` JSON sidecar (rebuilt exactly) or a `k,alpha_k` CSV.
/// A finite `eps` overrides the sidecar's mollification scale.
RealizedEnvironment load_environment(const std::string& path, double eps = NAN) {
  if (fs::path(path).extension() == ".json") {
    const json j = read_json(path);
    EnvSpec spec = EnvSpec::from_json(j);
    if (std::isfinite(eps)) spec.eps = eps;
    return make_environment(spec, j.at("n").get<int>());
  }
  const auto rows = read_csv(path);
  if (rows.empty()) throw std::runtime_error(path + ": no rows");
  Eigen::VectorXd a(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) a(static_cast<long>(i)) = rows[i].at(1);
  return environment_from_sites(a, path);
}

/// Named profile, or a CSV `x,rho` interpolated linearly on the torus.
std::function<double(double)> load_profile(const std::string& spec) {
  if (spec.rfind("const:", 0) == 0 || spec.rfind("sine:", 0) == 0) return named_profile(spec);
  auto rows = read_csv(spec);
  if (rows.empty()) throw std::runtime_error(spec + ": no rows");
  std::sort(rows.begin(), rows.end());
  auto xs = std::make_shared<std::vector<double>>(), ys = std::make_shared<std::vector<double>>();
  for (const auto& r : rows) {
    xs->push_back(r.at(0));
    ys->push_back(r.at(1));
  }
  xs->push_back(xs->front() + 1.0);
  ys->push_back(ys->front());
  return [xs, ys](double x) {
    x -= std::floor(x);
    if (x < xs->front()) x += 1.0;
    const auto i = std::min<std::size_t>(std::upper_bound(xs->begin(), xs->end(), x) - xs->begin(), xs->size() - 1);
    const double x0 = (*xs)[i - 1], x1 = (*xs)[i];
    const double w = x1 > x0 ? (x - x0) / (x1 - x0) : 0.0;
    return (1.0 - w) * (*ys)[i - 1] + w * (*ys)[i];
  };
}

/// Density field from a `pde` CSV (t, x, rho).
DensityField load_field(const std::string& path) {
  const auto rows = read_csv(path);
  std::map<double, std::vector<std::pair<double, double>>> by_t;
  for (const auto& r : rows) by_t[r.at(0)].push_back({r.at(1), r.at(2)});
  if (by_t.empty()) throw std::runtime_error(path + ": no rows");
  DensityField f;
  f.m = static_cast<long>(by_t.begin()->second.size());
  f.values.resize(static_cast<long>(by_t.size()), f.m);
  long j = 0;
  for (auto& [t, row] : by_t) {
    if (static_cast<long>(row.size()) != f.m) throw std::runtime_error(path + ": ragged field");
    std::sort(row.begin(), row.end());
    f.times.push_back(t);
    for (long i = 0; i < f.m; ++i) f.values(j, i) = row[i].second;
    f.mass.push_back(f.values.row(j).mean());
    ++j;
  }
  f.rho_minus = f.values.row(0).minCoeff();
  f.rho_plus = f.values.row(0).maxCoeff();
  f.min = f.values.minCoeff();
  f.max = f.values.maxCoeff();
  return f;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
  return v;
}

InitialMeasure initial_from_json(const json& j) {
  InitialMeasure m;
  const std::string kind = j.value("kind", "nu");
  if (kind == "nu")
    m.kind = InitialKind::NuN;
  else if (kind == "local_equilibrium")
    m.kind = InitialKind::LocalEquilibrium;
  else if (kind == "product")
    m.kind = InitialKind::Product;
  else if (kind == "fixed_site")
    m.kind = InitialKind::FixedSite;
  else
    throw std::invalid_argument("unknown initial kind '" + kind + "'");
  if (m.kind != InitialKind::NuN) {
    m.rho0 = load_profile(j.value("rho0", std::string("const:1")));
    double lo = INFINITY;
    for (int i = 0; i < 4096; ++i) lo = std::min(lo, m.rho0((i + 0.5) / 4096.0));
    m.rho_minus = j.value("rho_minus", lo);
  }
  m.x0 = j.value("x0", 0L);
  return m;
}

int cmd_env(int n, double eps, std::uint64_t seed, const std::string& kernel, const std::string& kind, double sigma,
            const std::string& law, const std::string& out) {
  EnvSpec spec;
  spec.kind = kind;
  spec.eps = eps;
  spec.seed = seed;
  spec.kernel = kernel;
  spec.sigma = sigma;
  spec.law = law;
  const RealizedEnvironment env = make_environment(spec, n);
  std::ofstream csv(out + ".csv");
  csv << std::setprecision(17) << "k,alpha_k\n";
  for (int k = 0; k < n; ++k) csv << k << "," << env.alpha_n(k) << "\n";
  json meta = spec.to_json();
  meta["n"] = n;
  meta["max_abs_alpha"] = env.max_abs_alpha_n();
  meta["smoothness"] = Kernel::from_name(kernel).smoothness();
  meta["env_kind"] = to_string(env.kind());
  meta["alpha_integral"] = env.alpha_integral();
  write_json(out + ".json", meta);
  std::cout << "wrote " << out << ".csv and " << out << ".json (max|alpha| = " << env.max_abs_alpha_n() << ")\n";
  return 0;
}

int cmd_fugacity(const std::string& env_path, const std::string& g_name, double c, const std::string& out) {
  const RealizedEnvironment env = load_environment(env_path);
  const RateFunction g = rate_by_name(g_name);
  const FugacityProfile p = with_density(solve_fugacities(env), g, c);
  std::ofstream csv(out + ".csv");
  csv << std::setprecision(17) << "k,phi_k,rho_k\n";
  for (long k = 0; k < p.phi.size(); ++k) csv << k << "," << p.phi(k) << "," << p.rho(k) << "\n";
  write_json(out + ".json", {{"residual", p.residual}, {"ratio", p.ratio}, {"maxdiff", p.max_diff},
                             {"multiplier", p.multiplier}, {"method", p.method}, {"g", g.name()}});
  std::cout << "residual " << p.residual << ", ratio " << p.ratio << ", maxdiff " << p.max_diff << "\n";
  return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out_override) {
  const json cfg = read_json(config_path);
  const int n = cfg.at("n").get<int>();
  const RealizedEnvironment env = make_environment(EnvSpec::from_json(cfg.value("env", json::object())), n);
  const RateFunction g = rate_by_name(cfg.value("g", std::string("linear")));
  const InitialMeasure im = initial_from_json(cfg.value("initial", json::object()));
  FugacityProfile profile = solve_fugacities(env);
  if (im.kind == InitialKind::NuN) profile = with_density(profile, g, cfg.value("initial", json::object()).value("c", 1.0));
  const InitialSampler sampler(im, g, profile);

  SimulationConfig sc;
  sc.horizon = cfg.value("horizon", 0.1);
  sc.record_times = cfg.value("record_times", std::vector<double>{sc.horizon});
  sc.snapshot_times = cfg.value("snapshot_times", std::vector<double>{});
  sc.replacement_window = cfg.value("window", 0L);
  sc.debug_checks = cfg.value("debug_checks", false);
  sc.seed = cfg.value("seed", std::uint64_t{1});
  const std::string sel = cfg.value("selector", std::string("auto"));
  sc.selector = sel == "fenwick" ? EventSelector::Fenwick : sel == "particle" ? EventSelector::Particle : EventSelector::Auto;
  const long replicas = cfg.value("replicas", 1L);
  const double theta = cfg.value("theta", 0.05);
  std::shared_ptr<const PhiTable> phi;
  if (sc.replacement_window > 0) phi = std::make_shared<const PhiTable>(g, cfg.value("rho_max", 20.0));

  const TaggedZrpSimulator sim(env, g, phi);
  const auto runs = run_replicas(sim, sampler, sc, replicas);

  const std::string dir = out_override.empty() ? cfg.value("output", std::string("simulate_out")) : out_override;
  fs::create_directories(dir);
  json timings = json::array();
  for (long r = 0; r < replicas; ++r) {
    const auto& rec = runs[r];
    std::ofstream f(fs::path(dir) / ("replica_" + std::to_string(r) + ".csv"));
    f << std::setprecision(17) << "t,x,j_plus,j_minus,drift,qv" << (sc.replacement_window > 0 ? ",replacement" : "")
      << "\n";
    for (std::size_t j = 0; j < rec.t.size(); ++j) {
      f << rec.t[j] << "," << rec.x[j] << "," << rec.j_plus[j] << "," << rec.j_minus[j] << "," << rec.drift[j] << ","
        << rec.qv[j];
      if (sc.replacement_window > 0) f << "," << rec.replacement[j];
      f << "\n";
    }
    if (!rec.snapshots.empty()) {
      std::ofstream s(fs::path(dir) / ("snapshots_" + std::to_string(r) + ".csv"));
      s << std::setprecision(17) << "t,x,eta\n";
      for (const auto& snap : rec.snapshots) {
        const Eigen::VectorXd eta = empirical_density(snap.xi, theta);
        for (long k = 0; k < eta.size(); ++k) s << snap.t << "," << static_cast<double>(k) / n << "," << eta(k) << "\n";
      }
    }
    timings.push_back({{"replica", r}, {"seconds", rec.seconds}, {"events", rec.events}});
  }
  write_json((fs::path(dir) / "manifest.json").string(),
             {{"config", cfg}, {"seeds", {{"master", sc.seed}, {"streams", "replica id"}}},
              {"initial", im.describe()}, {"timings", timings}, {"git_describe", build_version()}});
  std::cout << "wrote " << replicas << " replicas to " << dir << "\n";
  return 0;
}

int cmd_pde(const std::string& env_path, const std::string& g_name, const std::string& rho0_spec, long m, double dt,
            double t, long store_every, bool semi_implicit, const std::string& out) {
  const RealizedEnvironment env = load_environment(env_path);
  const RateFunction g = rate_by_name(g_name);
  const auto rho0 = load_profile(rho0_spec);
  double rmax = 0.0;
  for (long i = 0; i < m; ++i) rmax = std::max(rmax, rho0(static_cast<double>(i) / m));
  auto phi = std::make_shared<const PhiTable>(g, std::max(4.0, 2.5 * rmax));
  PdeConfig pc;
  pc.m = m;
  pc.dt = dt;
  pc.horizon = t;
  pc.store_every = store_every;
  pc.semi_implicit = semi_implicit;
  const DensityField f = PdeSolver(env, phi).solve(rho0, pc);
  std::ofstream csv(out + ".csv");
  csv << std::setprecision(17) << "t,x,rho\n";
  for (std::size_t j = 0; j < f.times.size(); ++j)
    for (long i = 0; i < f.m; ++i) csv << f.times[j] << "," << static_cast<double>(i) / f.m << "," << f.values(j, i) << "\n";
  write_json(out + ".json", {{"mass_drift", f.mass_drift}, {"min", f.min}, {"max", f.max}, {"steps", f.steps},
                             {"dt", f.dt}, {"m", f.m}});
  std::cout << "steps " << f.steps << ", mass drift " << f.mass_drift << ", range [" << f.min << ", " << f.max << "]\n";
  return 0;
}

struct SdeArgs {
  std::string mode = "em";
  double eps = NAN;  ///< overrides the env sidecar's eps
  long paths = 1000;
  double dt = 0.0;
  double dtau = 1e-4;
  std::string times = "0.1";
  std::string field;
  std::string env;
  std::string g = "linear";
  double z = NAN;
  std::uint64_t seed = 1;
  long environments = 200;
  std::string out = "sde";
};

void write_marginals(const std::string& out, const SdeSamples& s) {
  std::ofstream m(out + "_marginals.csv");
  m << std::setprecision(17) << "t,q05,q25,q50,q75,q95\n";
  for (std::size_t j = 0; j < s.times.size(); ++j) {
    const auto col = s.column(static_cast<long>(j));
    m << s.times[j];
    for (double p : {0.05, 0.25, 0.5, 0.75, 0.95}) m << "," << stats::quantile(col, p);
    m << "\n";
  }
  std::ofstream p(out + "_paths.csv");
  p << std::setprecision(17) << "path,t,x\n";
  for (long i = 0; i < s.lifted.rows(); ++i)
    for (std::size_t j = 0; j < s.times.size(); ++j) p << i << "," << s.times[j] << "," << s.lifted(i, j) << "\n";
}

int cmd_sde(const SdeArgs& a) {
  if (a.mode == "sinai") {
    SinaiConfig sc;
    sc.environments = a.environments;
    sc.seed = a.seed;
    const SinaiSamples s = sinai_reference(sc);
    std::ofstream f(a.out + "_marginals.csv");
    f << std::setprecision(17) << "n,q25,q50,q75,iqr\n";
    for (long j = 0; j < s.scaled.cols(); ++j) {
      std::vector<double> col(s.scaled.col(j).data(), s.scaled.col(j).data() + s.scaled.rows());
      f << sc.checkpoints[j] << "," << stats::quantile(col, 0.25) << "," << stats::quantile(col, 0.5) << ","
        << stats::quantile(col, 0.75) << "," << stats::iqr(col) << "\n";
    }
    std::ofstream p(a.out + "_paths.csv");
    p << std::setprecision(17) << "environment,n,raw,scaled\n";
    for (long i = 0; i < s.scaled.rows(); ++i)
      for (long j = 0; j < s.scaled.cols(); ++j)
        p << i << "," << sc.checkpoints[j] << "," << s.raw(i, j) << "," << s.scaled(i, j) << "\n";
    std::cout << "sigma_env^2 = " << s.sigma_env2 << "\n";
    return 0;
  }
  if (a.env.empty()) throw std::invalid_argument("sde: --env is required for mode " + a.mode);
  SdeRunConfig rc;
  rc.times = parse_list(a.times);
  rc.paths = a.paths;
  rc.dt = a.dt;
  rc.dtau = a.dtau;
  rc.seed = a.seed;
  const StartLaw start = std::isnan(a.z) ? uniform_start() : point_start(a.z);

  const RealizedEnvironment env = load_environment(a.env, a.eps);
  const RateFunction g = rate_by_name(a.g);
  ChiField chi = ChiField::uniform(g.is_linear() ? g.linear_slope() : 1.0);
  if (!a.field.empty()) {
    auto field = std::make_shared<const DensityField>(load_field(a.field));
    auto phi = std::make_shared<const PhiTable>(g, std::max(4.0, 2.5 * field->max));
    chi = ChiField::from_field(field, phi, g);
  }
  SdeSamples s;
  if (a.mode == "em") {
    double amax = env.max_abs_alpha_n();
    for (int i = 0; i < 4096; ++i) amax = std::max(amax, std::abs(env.alpha((i + 0.5) / 4096.0)));
    s = euler_maruyama([&env](double x) { return env.alpha(x); }, amax, chi, g.g_star(), start, rc);
  } else if (a.mode == "ito-mckean") {
    s = ito_mckean(regularized_potential(env), chi, start, rc);
  } else if (a.mode == "brox") {
    if (!env.walk()) throw std::invalid_argument("sde: brox mode needs a noise environment");
    auto w = std::make_shared<const InterpolatedWalk>(*env.walk());
    s = brox_reference(w, start, rc);
  } else {
    throw std::invalid_argument("unknown sde mode '" + a.mode + "'");
  }
  write_marginals(a.out, s);
  std::cout << "wrote " << a.out << "_paths.csv and " << a.out << "_marginals.csv\n";
  return 0;
}

int cmd_experiment(const std::string& config_path, const std::string& out_override, const std::string& expect) {
  json cfg = read_json(config_path);
  if (!expect.empty() && !cfg.contains("kind")) cfg["kind"] = expect;
  const std::string kind = cfg.value("kind", "");
  if (expect == "compare" && kind != "hydro" && kind != "tagged")
    throw std::invalid_argument("compare: config kind must be hydro or tagged");
  if (expect != "compare" && !expect.empty() && kind != expect)
    throw std::invalid_argument("config kind '" + kind + "' does not match the subcommand");
  const ExperimentOutput out = run_experiment(cfg);
  const std::string dir = out_override.empty() ? cfg.value("output", std::string("results")) : out_override;
  write_results(dir, cfg, out);
  for (const auto& r : out.reports)
    std::cout << (r.pass ? "PASS " : (r.required ? "FAIL " : "info ")) << r.metric << " = " << r.value << " ("
              << r.comparator << " " << r.threshold << ", se " << r.standard_error << ")\n";
  std::cout << "results in " << dir << "\n";
  return out.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tagged zero-range process in a random environment: simulation and verification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", build_version());

  int env_n = 256;
  double env_eps = 0.1, env_sigma = 1.0;
  std::uint64_t env_seed = 1;
  std::string env_kernel = "box", env_kind = "noise", env_law = "rademacher", env_out = "env";
  auto* env_cmd = app.add_subcommand("env", "Realize an environment");
  env_cmd->add_option("--n", env_n, "lattice size")->check(CLI::PositiveNumber);
  env_cmd->add_option("--eps", env_eps, "mollification scale");
  env_cmd->add_option("--seed", env_seed, "disorder seed");
  env_cmd->add_option("--kernel", env_kernel)->check(CLI::IsMember({"box", "c1"}));
  env_cmd->add_option("--kind", env_kind, "noise, bridge or det:<name>");
  env_cmd->add_option("--sigma", env_sigma, "disorder standard deviation");
  env_cmd->add_option("--law", env_law)->check(CLI::IsMember({"rademacher", "uniform"}));
  env_cmd->add_option("--out", env_out, "output prefix");

  std::string fug_env, fug_g = "linear", fug_out = "fugacity";
  double fug_c = 1.0;
  auto* fug_cmd = app.add_subcommand("fugacity", "Solve the torus fugacity system");
  fug_cmd->add_option("--env", fug_env, "env JSON sidecar or k,alpha_k CSV")->required();
  fug_cmd->add_option("--g", fug_g, "rate name or n,g(n) table");
  fug_cmd->add_option("--c", fug_c, "fugacity multiplier");
  fug_cmd->add_option("--out", fug_out, "output prefix");

  std::string sim_config, sim_out;
  auto* sim_cmd = app.add_subcommand("simulate", "Run tagged particle replicas");
  sim_cmd->add_option("--config", sim_config)->required();
  sim_cmd->add_option("--out", sim_out, "output directory");

  std::string pde_env, pde_g = "linear", pde_rho0 = "const:1", pde_out = "pde";
  long pde_m = 256, pde_store = 0;
  double pde_dt = 0.0, pde_t = 0.1;
  bool pde_semi = false;
  auto* pde_cmd = app.add_subcommand("pde", "Solve the hydrodynamic equation");
  pde_cmd->add_option("--env", pde_env)->required();
  pde_cmd->add_option("--g", pde_g);
  pde_cmd->add_option("--rho0", pde_rho0, "const:c, sine:a,b or an x,rho file");
  pde_cmd->add_option("--m", pde_m)->check(CLI::PositiveNumber);
  pde_cmd->add_option("--dt", pde_dt, "time step (0: largest stable)");
  pde_cmd->add_option("--t", pde_t);
  pde_cmd->add_option("--store-every", pde_store);
  pde_cmd->add_flag("--semi-implicit", pde_semi);
  pde_cmd->add_option("--out", pde_out, "output prefix");

  SdeArgs sde;
  auto* sde_cmd = app.add_subcommand("sde", "Sample the limiting diffusion");
  sde_cmd->add_option("--mode", sde.mode)->check(CLI::IsMember({"em", "ito-mckean", "brox", "sinai"}));
  sde_cmd->add_option("--eps", sde.eps);
  sde_cmd->add_option("--paths", sde.paths)->check(CLI::PositiveNumber);
  sde_cmd->add_option("--dt", sde.dt);
  sde_cmd->add_option("--dtau", sde.dtau);
  sde_cmd->add_option("--t", sde.times, "output time or comma-separated times");
  sde_cmd->add_option("--field", sde.field, "pde CSV for chi");
  sde_cmd->add_option("--env", sde.env);
  sde_cmd->add_option("--g", sde.g);
  sde_cmd->add_option("--z", sde.z, "start point (default uniform)");
  sde_cmd->add_option("--seed", sde.seed);
  sde_cmd->add_option("--environments", sde.environments, "sinai mode");
  sde_cmd->add_option("--out", sde.out, "output prefix");

  std::string exp_config, exp_out;
  std::vector<std::pair<CLI::App*, std::string>> experiments;
  for (auto [name, kind, help] : {std::tuple{"compare", "compare", "Particle system against PDE or SDE"},
                                  std::tuple{"eps-study", "eps", "Continuation in the mollification scale"},
                                  std::tuple{"oracle", "oracle", "Exact finite-state checks"}}) {
    auto* c = app.add_subcommand(name, help);
    c->add_option("--config", exp_config)->required();
    c->add_option("--out", exp_out, "results directory");
    experiments.emplace_back(c, kind);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (*env_cmd) return cmd_env(env_n, env_eps, env_seed, env_kernel, env_kind, env_sigma, env_law, env_out);
    if (*fug_cmd) return cmd_fugacity(fug_env, fug_g, fug_c, fug_out);
    if (*sim_cmd) return cmd_simulate(sim_config, sim_out);
    if (*pde_cmd) return cmd_pde(pde_env, pde_g, pde_rho0, pde_m, pde_dt, pde_t, pde_store, pde_semi, pde_out);
    if (*sde_cmd) return cmd_sde(sde);
    for (const auto& [c, kind] : experiments)
      if (*c) return cmd_experiment(exp_config, exp_out, kind);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
