#include "zrptag/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "zrptag/errors.hpp"

namespace zrptag {

// ---------------------------------------------------------------------------
// RateFunction

RateFunction RateFunction::linear(double c) {
  require(c > 0.0, "linear rate: slope must be positive");
  RateFunction g;
  g.table_ = {0.0, c};
  g.tail_slope_ = c;
  g.linear_slope_ = c;
  std::ostringstream os;
  if (c == 1.0)
    os << "linear";
  else
    os << "linear:" << c;
  g.name_ = os.str();
  g.validate();
  return g;
}

RateFunction RateFunction::conclin(double a) {
  require(a > -1.0, "conclin rate: a must exceed -1");
  RateFunction g;
  g.table_ = {0.0, 1.0 + a};
  g.tail_slope_ = 1.0;
  std::ostringstream os;
  os << "conclin:" << a;
  g.name_ = os.str();
  if (a == 0.0) g.linear_slope_ = 1.0;
  g.validate();
  return g;
}

RateFunction RateFunction::from_table(std::vector<double> values, std::string name) {
  require(values.size() >= 2, "table rate: need g(0) and g(1)");
  require(values[0] == 0.0, "table rate: g(0) must be 0");
  RateFunction g;
  g.table_ = std::move(values);
  const auto k = g.table_.size() - 1;
  g.tail_slope_ = k >= 2 ? g.table_[k] - g.table_[k - 1] : g.table_[1];
  require(g.tail_slope_ >= 0.0, "table rate: last increment must be nonnegative");
  g.name_ = std::move(name);
  g.validate();
  return g;
}

RateFunction RateFunction::from_name(const std::string& name) {
  if (name == "linear") return linear(1.0);
  if (name == "affine2") return linear(2.0);
  if (name.rfind("linear:", 0) == 0) return linear(std::stod(name.substr(7)));
  if (name.rfind("conclin:", 0) == 0) return conclin(std::stod(name.substr(8)));
  std::ifstream in(name);
  if (!in) throw std::invalid_argument("unknown rate function '" + name + "'");
  std::vector<std::pair<long, double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    long n;
    double v;
    if (!(ls >> n >> v)) continue;  // header
    rows.emplace_back(n, v);
  }
  std::sort(rows.begin(), rows.end());
  std::vector<double> values;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].first != static_cast<long>(i))
      throw std::invalid_argument("rate table " + name + ": rows must cover n = 0, 1, 2, ...");
    values.push_back(rows[i].second);
  }
  return from_table(std::move(values), name);
}

double RateFunction::operator()(long n) const {
  const long k = static_cast<long>(table_.size()) - 1;
  if (n <= k) return table_[n];
  return table_[k] + tail_slope_ * static_cast<double>(n - k);
}

double RateFunction::log_factorial(long n) const {
  if (n <= k_val_) return log_fact_[n];
  double s = log_fact_[k_val_];
  for (long j = k_val_ + 1; j <= n; ++j) s += std::log((*this)(j));
  return s;
}

double RateFunction::tail_min(long n) const {
  if (n + 1 <= k_val_ + 1) return suffix_min_[n + 1];
  return (*this)(n + 1);
}

void RateFunction::validate() {
  for (std::size_t k = 1; k < table_.size(); ++k)
    if (!(table_[k] > 0.0)) throw std::invalid_argument("rate " + name_ + ": g(k) must be positive for k >= 1");
  const long kv = k_val_;
  std::vector<double> v(kv + 2);
  for (long k = 0; k <= kv + 1; ++k) v[k] = (*this)(k);
  log_fact_.assign(kv + 1, 0.0);
  for (long k = 1; k <= kv; ++k) log_fact_[k] = log_fact_[k - 1] + std::log(v[k]);
  suffix_min_.assign(kv + 2, 0.0);
  suffix_min_[kv + 1] = v[kv + 1];
  for (long k = kv; k >= 1; --k) suffix_min_[k] = std::min(v[k], suffix_min_[k + 1]);
  suffix_min_[0] = suffix_min_[1];

  flag_a_ = true;
  g_star_ = 0.0;
  g_lower_ = std::numeric_limits<double>::infinity();
  for (long k = 0; k < kv; ++k) {
    const double d = v[k + 1] - v[k];
    if (d < 0.0) flag_a_ = false;
    g_star_ = std::max(g_star_, std::abs(d));
    if (k >= 1) g_lower_ = std::min(g_lower_, v[k] / k);
  }
  flag_lg_ = std::isfinite(g_star_);
  flag_m_ = false;
  for (long m = 1; m <= 16 && !flag_m_; ++m) {
    double a0 = std::numeric_limits<double>::infinity();
    for (long k = 0; k + m <= kv; ++k) a0 = std::min(a0, v[k + m] - v[k]);
    if (a0 > 0.0) {
      flag_m_ = true;
      m_ = m;
      a0_ = a0;
    }
  }
}

// ---------------------------------------------------------------------------
// Single-site law and Phi

SingleSiteLaw partition_and_mean(const RateFunction& g, double phi) {
  require(phi >= 0.0 && std::isfinite(phi), "partition_and_mean: phi must be finite and >= 0");
  SingleSiteLaw law;
  law.phi = phi;
  if (phi == 0.0) {
    law.weights = Eigen::VectorXd::Ones(1);
    return law;
  }
  constexpr long n_cap = 10000;
  const double lphi = std::log(phi);
  std::vector<double> lw{0.0};
  double lmax = 0.0;
  int small_run = 0;
  double tail = 0.0;
  for (long n = 1;; ++n) {
    if (n > n_cap) {
      std::ostringstream os;
      os << "partition_and_mean: tail not certified by n_max = " << n_cap << " (phi = " << phi
         << ", rate " << g.name() << ")";
      throw NumericalError(os.str());
    }
    lw.push_back(lw.back() + lphi - std::log(g(n)));
    lmax = std::max(lmax, lw.back());
    const double rel = std::exp(lw.back() - lmax);
    small_run = rel < 1e-16 ? small_run + 1 : 0;
    if (small_run >= 5) {
      const double q = phi / g.tail_min(n);
      if (q < 1.0) {
        tail = rel * q / (1.0 - q);
        if (tail < 1e-14) break;
      }
    }
  }
  const long n_max = static_cast<long>(lw.size()) - 1;
  Eigen::VectorXd w(n_max + 1);
  for (long n = 0; n <= n_max; ++n) w(n) = std::exp(lw[n] - lmax);
  const double s = compensated_sum(w);
  law.weights = w / s;
  law.log_z = lmax + std::log(s);
  law.tail_bound = tail / s;
  const Eigen::VectorXd idx = Eigen::VectorXd::LinSpaced(n_max + 1, 0.0, static_cast<double>(n_max));
  law.mean = compensated_sum(idx.cwiseProduct(law.weights));
  law.variance =
      compensated_sum((idx.array() - law.mean).square().matrix().cwiseProduct(law.weights));
  return law;
}

double homogenized_rate(const RateFunction& g, double rho) {
  require(rho >= 0.0 && std::isfinite(rho), "homogenized_rate: rho must be finite and >= 0");
  if (rho == 0.0) return 0.0;
  auto r_of = [&](double phi) { return partition_and_mean(g, phi); };

  double lo = rho * std::max(g.g_lower(), 1e-12), hi = rho * std::max(g.g_star(), g(1));
  while (r_of(lo).mean > rho) lo *= 0.5;
  while (r_of(hi).mean < rho) hi *= 2.0;
  double s_lo = std::log(lo), s_hi = std::log(hi);
  double s = 0.5 * (s_lo + s_hi);
  const double tol = 1e-13 * std::max(1.0, rho);
  for (int it = 0; it < 200; ++it) {
    const SingleSiteLaw law = r_of(std::exp(s));
    const double f = law.mean - rho;
    if (std::abs(f) <= tol) return law.phi;
    if (f < 0.0)
      s_lo = s;
    else
      s_hi = s;
    // dR/d(log phi) = sigma^2
    double next = law.variance > 0.0 ? s - f / law.variance : 0.5 * (s_lo + s_hi);
    if (!(next > s_lo && next < s_hi)) next = 0.5 * (s_lo + s_hi);
    if (s_hi - s_lo < 1e-15) break;
    s = next;
  }
  const SingleSiteLaw law = r_of(std::exp(s));
  if (std::abs(law.mean - rho) > 1e-11) {
    std::ostringstream os;
    os << "homogenized_rate: |R(Phi) - rho| = " << std::abs(law.mean - rho) << " at rho = " << rho;
    throw NumericalError(os.str());
  }
  return law.phi;
}

double homogenized_rate_derivative(const RateFunction& g, double rho) {
  if (rho == 0.0) return g(1);
  const double phi = homogenized_rate(g, rho);
  return phi / partition_and_mean(g, phi).variance;
}

PhiTable::PhiTable(const RateFunction& g, double rho_max, int nodes) : rho_max_(rho_max) {
  require(rho_max > 0.0, "PhiTable: rho_max must be positive");
  require(nodes >= 3, "PhiTable: need at least 3 nodes");
  g1_ = g(1);
  if (g.is_linear()) linear_ = g.linear_slope();
  h_ = rho_max / (nodes - 1);
  value_.resize(nodes);
  slope_.resize(nodes);
  for (int i = 0; i < nodes; ++i) {
    const double rho = i * h_;
    if (i == 0) {
      value_(i) = 0.0;
      slope_(i) = g1_;
      continue;
    }
    value_(i) = homogenized_rate(g, rho);
    slope_(i) = value_(i) / partition_and_mean(g, value_(i)).variance;
  }
  for (int i = 0; i + 1 < nodes; ++i) {
    const double delta = (value_(i + 1) - value_(i)) / h_;
    if (delta <= 0.0) throw NumericalError("PhiTable: Phi not strictly increasing");
    const double a = slope_(i) / delta, b = slope_(i + 1) / delta;
    const double r2 = a * a + b * b;
    if (r2 > 9.0) {
      const double tau = 3.0 / std::sqrt(r2);
      slope_(i) = tau * a * delta;
      slope_(i + 1) = tau * b * delta;
    }
  }
}

double PhiTable::operator()(double rho) const {
  if (linear_ > 0.0) return linear_ * rho;
  const int last = static_cast<int>(value_.size()) - 1;
  if (rho >= rho_max_) return value_(last) + slope_(last) * (rho - rho_max_);
  if (rho <= 0.0) return slope_(0) * rho;
  const double pos = rho / h_;
  int i = std::min(static_cast<int>(pos), last - 1);
  const double t = pos - i;
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * value_(i) + (t3 - 2 * t2 + t) * h_ * slope_(i) +
         (-2 * t3 + 3 * t2) * value_(i + 1) + (t3 - t2) * h_ * slope_(i + 1);
}

double PhiTable::derivative(double rho) const {
  if (linear_ > 0.0) return linear_;
  const int last = static_cast<int>(value_.size()) - 1;
  if (rho >= rho_max_) return slope_(last);
  if (rho <= 0.0) return slope_(0);
  const double pos = rho / h_;
  int i = std::min(static_cast<int>(pos), last - 1);
  const double t = pos - i;
  const double t2 = t * t;
  return ((6 * t2 - 6 * t) * value_(i) + (-6 * t2 + 6 * t) * value_(i + 1)) / h_ +
         (3 * t2 - 4 * t + 1) * slope_(i) + (3 * t2 - 2 * t) * slope_(i + 1);
}

double PhiTable::chi(double rho) const {
  if (linear_ > 0.0) return linear_;
  if (rho < 1e-12) return g1_;
  return (*this)(rho) / rho;
}

// ---------------------------------------------------------------------------
// Fugacities

double fugacity_residual(const RealizedEnvironment& env, const Eigen::VectorXd& phi) {
  const long n = env.n();
  double r = 0.0;
  for (long k = 0; k < n; ++k) {
    const long km = (k + n - 1) % n, kp = (k + 1) % n;
    r = std::max(r, std::abs(env.p_plus(km) * phi(km) + env.p_minus(kp) * phi(kp) - phi(k)));
  }
  return r;
}

namespace {

FugacityProfile finish_profile(const RealizedEnvironment& env, Eigen::VectorXd phi, std::string method) {
  if (phi.sum() < 0.0) phi = -phi;
  if (phi.minCoeff() <= 0.0)
    throw NumericalError("solve_fugacities: non-positive component in the null vector");
  phi /= phi.maxCoeff();
  FugacityProfile p;
  const long n = env.n();
  p.residual = fugacity_residual(env, phi);
  p.ratio = phi.maxCoeff() / phi.minCoeff();
  double d = 0.0;
  for (long k = 0; k < n; ++k) d = std::max(d, std::abs(phi(k) - phi((k + 1) % n)));
  p.max_diff = d * n;
  p.phi = std::move(phi);
  p.method = std::move(method);
  return p;
}

}  // namespace

FugacityProfile solve_fugacities(const RealizedEnvironment& env, int dense_limit) {
  const long n = env.n();
  require(n >= 3, "solve_fugacities: N must be at least 3");
  if (n <= dense_limit) {
    Eigen::MatrixXd a = -Eigen::MatrixXd::Identity(n, n);
    for (long k = 0; k < n; ++k) {
      const long km = (k + n - 1) % n, kp = (k + 1) % n;
      a(k, km) += env.p_plus(km);
      a(k, kp) += env.p_minus(kp);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    const Eigen::MatrixXd ker = lu.kernel();
    if (ker.cols() != 1) {
      std::ostringstream os;
      os << "solve_fugacities: null space has dimension " << ker.cols() << ", expected 1";
      throw NumericalError(os.str());
    }
    return finish_profile(env, ker.col(0), "dense-nullspace");
  }

  using Sparse = Eigen::SparseMatrix<double>;
  constexpr double shift = 1e-10;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(3 * n);
  for (long k = 0; k < n; ++k) {
    const long km = (k + n - 1) % n, kp = (k + 1) % n;
    trips.emplace_back(k, k, -1.0 - shift);
    trips.emplace_back(k, km, env.p_plus(km));
    trips.emplace_back(k, kp, env.p_minus(kp));
  }
  Sparse a(n, n);
  a.setFromTriplets(trips.begin(), trips.end());
  a.makeCompressed();
  Eigen::SparseLU<Sparse> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw NumericalError("solve_fugacities: sparse factorization failed");
  Eigen::VectorXd x = Eigen::VectorXd::Ones(n);
  for (int it = 0; it < 50; ++it) {
    x = lu.solve(x);
    x /= x.cwiseAbs().maxCoeff();
    if (x.sum() < 0.0) x = -x;
    if (it >= 1 && fugacity_residual(env, x) <= 1e-14) break;
  }
  return finish_profile(env, std::move(x), "shifted-inverse-iteration");
}

FugacityProfile with_density(FugacityProfile profile, const RateFunction& g, double c) {
  require(c > 0.0, "with_density: multiplier must be positive");
  profile.phi *= c;
  profile.multiplier = c;
  profile.rho.resize(profile.phi.size());
  std::map<double, double> cache;
  for (Eigen::Index k = 0; k < profile.phi.size(); ++k) {
    auto [it, fresh] = cache.try_emplace(profile.phi(k), 0.0);
    if (fresh) it->second = partition_and_mean(g, profile.phi(k)).mean;
    profile.rho(k) = it->second;
  }
  return profile;
}

// ---------------------------------------------------------------------------
// Sampling

bool TaggedConfiguration::valid() const {
  if (tagged < 0 || tagged >= n() || xi[tagged] < 1) return false;
  long s = 0;
  for (auto v : xi) {
    if (v < 0) return false;
    s += v;
  }
  return s == total;
}

DiscreteSampler::DiscreteSampler(const Eigen::VectorXd& weights) {
  require(weights.size() >= 1, "DiscreteSampler: empty table");
  cdf_.resize(weights.size());
  double s = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    require(weights(i) >= 0.0, "DiscreteSampler: negative weight");
    s += weights(i);
    cdf_[i] = s;
  }
  require(s > 0.0, "DiscreteSampler: zero total weight");
  for (auto& c : cdf_) c /= s;
  cdf_.back() = 1.0;
}

long DiscreteSampler::operator()(Rng& rng) const {
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return std::min<long>(static_cast<long>(it - cdf_.begin()), size() - 1);
}

std::string InitialMeasure::describe() const {
  switch (kind) {
    case InitialKind::NuN: return "nu_N";
    case InitialKind::LocalEquilibrium: return "local_equilibrium";
    case InitialKind::Product: return "product";
    case InitialKind::FixedSite: return "fixed_site(" + std::to_string(x0) + ")";
  }
  return "?";
}

InitialSampler::InitialSampler(const InitialMeasure& measure, const RateFunction& g,
                               const FugacityProfile& profile)
    : measure_(measure) {
  const long n = profile.phi.size();
  require(n >= 1, "InitialSampler: empty profile");
  if (measure.kind == InitialKind::NuN) {
    require(profile.rho.size() == n, "InitialSampler: profile has no densities (use with_density)");
    phi_ = profile.phi;
    mean_ = profile.rho;
  } else {
    require(static_cast<bool>(measure.rho0), "InitialSampler: rho0 required");
    if (!(measure.rho_minus > 0.0))
      throw std::invalid_argument("InitialSampler: rho0 must be bounded below by some rho_- > 0");
    phi_.resize(n);
    mean_.resize(n);
    std::map<double, double> cache;
    for (long k = 0; k < n; ++k) {
      const double r = measure.rho0(static_cast<double>(k) / n);
      if (!(r >= measure.rho_minus)) {
        std::ostringstream os;
        os << "InitialSampler: rho0(" << k << "/N) = " << r << " below rho_- = " << measure.rho_minus;
        throw std::invalid_argument(os.str());
      }
      auto [it, fresh] = cache.try_emplace(r, 0.0);
      if (fresh) it->second = homogenized_rate(g, r);
      phi_(k) = it->second;
      mean_(k) = r;
    }
  }
  if (measure.kind == InitialKind::FixedSite)
    require(measure.x0 >= 0 && measure.x0 < n, "InitialSampler: x0 outside the torus");

  std::map<double, std::size_t> index;
  std::vector<std::shared_ptr<const DiscreteSampler>> plain, biased, pos;
  site_.resize(n);
  size_biased_.resize(n);
  positive_.resize(n);
  for (long k = 0; k < n; ++k) {
    auto [it, fresh] = index.try_emplace(phi_(k), plain.size());
    if (fresh) {
      const SingleSiteLaw law = partition_and_mean(g, phi_(k));
      plain.push_back(std::make_shared<const DiscreteSampler>(law.weights));
      if (law.mean > 0.0) {
        Eigen::VectorXd sb = law.weights;
        for (Eigen::Index j = 0; j < sb.size(); ++j) sb(j) *= static_cast<double>(j);
        biased.push_back(std::make_shared<const DiscreteSampler>(sb));
        Eigen::VectorXd p = law.weights;
        p(0) = 0.0;
        pos.push_back(std::make_shared<const DiscreteSampler>(p));
      } else {
        biased.push_back(nullptr);
        pos.push_back(nullptr);
      }
    }
    site_[k] = plain[it->second];
    size_biased_[k] = biased[it->second];
    positive_[k] = pos[it->second];
  }
  if (measure.kind == InitialKind::NuN || measure.kind == InitialKind::LocalEquilibrium)
    tag_site_ = std::make_shared<const DiscreteSampler>(mean_);
}

TaggedConfiguration InitialSampler::sample(Rng& rng) const {
  const long n = phi_.size();
  TaggedConfiguration c;
  c.xi.assign(n, 0);
  auto fill = [&](long skip) {
    for (long k = 0; k < n; ++k)
      if (k != skip) c.xi[k] = static_cast<std::int32_t>((*site_[k])(rng));
  };
  switch (measure_.kind) {
    case InitialKind::NuN:
    case InitialKind::LocalEquilibrium: {
      const long x = (*tag_site_)(rng);
      if (!size_biased_[x]) throw NumericalError("InitialSampler: tagged site has zero density");
      fill(x);
      c.xi[x] = static_cast<std::int32_t>((*size_biased_[x])(rng));
      c.tagged = x;
      break;
    }
    case InitialKind::FixedSite: {
      const long x = measure_.x0;
      fill(x);
      c.xi[x] = static_cast<std::int32_t>((*positive_[x])(rng));
      c.tagged = x;
      break;
    }
    case InitialKind::Product: {
      long total = 0;
      for (int attempt = 0; attempt < 1000 && total == 0; ++attempt) {
        fill(-1);
        total = 0;
        for (auto v : c.xi) total += v;
      }
      if (total == 0) throw NumericalError("InitialSampler: product measure produced no particles");
      long pick = static_cast<long>(rng.uniform() * total);
      for (long k = 0; k < n; ++k) {
        if (pick < c.xi[k]) {
          c.tagged = k;
          break;
        }
        pick -= c.xi[k];
      }
      break;
    }
  }
  c.total = 0;
  for (auto v : c.xi) c.total += v;
  return c;
}

}  // namespace zrptag
