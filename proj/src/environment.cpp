#include "zrptag/environment.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "zrptag/errors.hpp"
#include "zrptag/quadrature.hpp"
#include "zrptag/rng.hpp"

namespace zrptag {

namespace {

long floor_div(long a, long b) {
  long q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

/// Cubic Hermite table of a 1-periodic-increment function on [0, 1].
struct HermiteTable {
  Eigen::VectorXd value, slope;
  double period_increment = 0.0;

  template <class F, class DF>
  HermiteTable(int cells, F&& f, DF&& df, double increment) : period_increment(increment) {
    value.resize(cells + 1);
    slope.resize(cells + 1);
    for (int i = 0; i <= cells; ++i) {
      const double x = static_cast<double>(i) / cells;
      value(i) = f(x);
      slope(i) = df(x);
    }
  }

  double operator()(double u) const {
    const double m = std::floor(u);
    const double f = u - m;
    const int cells = static_cast<int>(value.size()) - 1;
    const double h = 1.0 / cells;
    int i = static_cast<int>(f * cells);
    if (i >= cells) i = cells - 1;
    const double t = f * cells - i;
    const double t2 = t * t, t3 = t2 * t;
    const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t, h01 = -2 * t3 + 3 * t2,
                 h11 = t3 - t2;
    return m * period_increment + h00 * value(i) + h10 * h * slope(i) + h01 * value(i + 1) +
           h11 * h * slope(i + 1);
  }
};

}  // namespace

DisorderSample sample_disorder(int n, double sigma, std::uint64_t seed, DisorderLaw law) {
  require(n >= 1, "sample_disorder: n must be positive");
  require(sigma > 0.0, "sample_disorder: sigma must be positive");
  DisorderSample d;
  d.sigma = sigma;
  d.seed = seed;
  d.law = law;
  d.r.resize(n);
  Rng rng(seed, 0xD15C0DE5ULL);
  const double half_width = std::sqrt(3.0) * sigma;
  d.bound = law == DisorderLaw::Rademacher ? sigma : half_width;
  for (int k = 0; k < n; ++k) {
    if (law == DisorderLaw::Rademacher)
      d.r(k) = (rng() >> 63) ? sigma : -sigma;
    else
      d.r(k) = (2.0 * rng.uniform() - 1.0) * half_width;
  }
  return d;
}

// ---------------------------------------------------------------------------
// Kernel

Kernel Kernel::from_name(const std::string& name) {
  if (name == "box") return box();
  if (name == "c1") return c1();
  throw std::invalid_argument("unknown kernel '" + name + "' (expected box or c1)");
}

std::string Kernel::name() const { return id == Id::Box ? "box" : "c1"; }

std::string Kernel::smoothness() const { return id == Id::Box ? "C0 with jumps at +-1" : "C1"; }

double Kernel::psi(double x) const {
  if (std::abs(x) > 1.0) return 0.0;
  if (id == Id::Box) return 0.5;
  const double s = 1.0 - x * x;
  return 0.9375 * s * s;
}

double Kernel::dpsi(double x) const {
  if (id == Id::Box || std::abs(x) > 1.0) return 0.0;
  return -3.75 * x * (1.0 - x * x);
}

double Kernel::d2psi(double x) const {
  if (id == Id::Box || std::abs(x) > 1.0) return 0.0;
  return 3.75 * (3.0 * x * x - 1.0);
}

double Kernel::integral() const {
  return quad::composite_gl5([this](double x) { return psi(x); }, -1.0, 1.0, 8);
}

// ---------------------------------------------------------------------------
// InterpolatedWalk

InterpolatedWalk::InterpolatedWalk(Eigen::VectorXd nodes) : nodes_(std::move(nodes)) {
  require(nodes_.size() >= 2, "InterpolatedWalk: need at least one step");
  require(nodes_(0) == 0.0, "InterpolatedWalk: W(0) must be 0");
  const int n = this->n();
  const double h = 1.0 / n;
  prefix_.resize(n + 1);
  prefix_(0) = 0.0;
  for (int j = 0; j < n; ++j) prefix_(j + 1) = prefix_(j) + 0.5 * h * (nodes_(j) + nodes_(j + 1));
}

InterpolatedWalk InterpolatedWalk::from_disorder(const DisorderSample& d) {
  const auto n = d.r.size();
  Eigen::VectorXd w(n + 1);
  w(0) = 0.0;
  const double scale = 1.0 / (d.sigma * std::sqrt(static_cast<double>(n)));
  double s = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    s += d.r(k);
    w(k + 1) = s * scale;
  }
  return InterpolatedWalk(std::move(w));
}

double InterpolatedWalk::at_index(long j) const {
  const long n = this->n();
  const long m = floor_div(j, n);
  return static_cast<double>(m) * total() + nodes_(j - m * n);
}

double InterpolatedWalk::operator()(double u) const {
  const double m = std::floor(u);
  const double pos = (u - m) * n();
  int i = static_cast<int>(pos);
  if (i >= n()) i = n() - 1;
  const double t = pos - i;
  return m * total() + nodes_(i) + t * (nodes_(i + 1) - nodes_(i));
}

double InterpolatedWalk::integral_to(double u) const {
  const double m = std::floor(u);
  const double f = u - m;
  const double pos = f * n();
  int i = static_cast<int>(pos);
  if (i >= n()) i = n() - 1;
  const double t = pos - i;
  const double h = 1.0 / n();
  const double c0 = prefix_(i) + h * t * (nodes_(i) + 0.5 * t * (nodes_(i + 1) - nodes_(i)));
  const double w1 = total();
  return m * prefix_(n()) + w1 * m * (m - 1.0) * 0.5 + c0 + m * w1 * f;
}

template <class F>
double InterpolatedWalk::weighted_integral(double a, double b, F&& f) const {
  const double n = this->n();
  double s = 0.0;
  double lo = a;
  while (lo < b) {
    double hi = (std::floor(lo * n) + 1.0) / n;
    if (hi <= lo) hi = lo + 1.0 / n;  // guards rounding at a node
    if (hi > b) hi = b;
    s += quad::gauss_legendre([&](double u) { return (*this)(u)*f(u); }, lo, hi, quad::gl3_x,
                              quad::gl3_w);
    lo = hi;
  }
  return s;
}

double InterpolatedWalk::smoothed(double x, double eps, const Kernel& k) const {
  if (k.id == Kernel::Id::Box) return (integral_to(x + eps) - integral_to(x - eps)) / (2.0 * eps);
  return weighted_integral(x - eps, x + eps, [&](double u) { return k.psi((u - x) / eps); }) / eps;
}

double InterpolatedWalk::smoothed_derivative(double x, double eps, const Kernel& k) const {
  const double boundary = ((*this)(x + eps) * k.psi(1.0) - (*this)(x - eps) * k.psi(-1.0)) / eps;
  if (k.id == Kernel::Id::Box) return boundary;
  const double bulk =
      weighted_integral(x - eps, x + eps, [&](double u) { return k.dpsi((u - x) / eps); });
  return boundary - bulk / (eps * eps);
}

double InterpolatedWalk::smoothed_second_derivative(double x, double eps, const Kernel& k) const {
  return weighted_integral(x - eps, x + eps, [&](double u) { return k.d2psi((u - x) / eps); }) /
         (eps * eps * eps);
}

// ---------------------------------------------------------------------------
// RealizedEnvironment

std::string to_string(EnvKind k) {
  switch (k) {
    case EnvKind::Deterministic: return "deterministic";
    case EnvKind::RegularizedNoise: return "regularized-noise";
    case EnvKind::Bridge: return "bridge";
  }
  return "?";
}

double RealizedEnvironment::alpha_n(long k) const {
  const long n = this->n();
  k %= n;
  if (k < 0) k += n;
  return alpha_n_(k);
}

void RealizedEnvironment::validate() const {
  const double amax = max_abs_alpha_n();
  if (!(amax / n() < 0.5)) {
    std::ostringstream os;
    os << "environment: max|alpha_k|/N = " << amax / n() << " is not below 1/2";
    throw std::invalid_argument(os.str());
  }
  if (kind_ != EnvKind::Deterministic && eps_ > 0.0 && bound_c_ > 0.0 && amax > bound_c_ / eps_) {
    std::ostringstream os;
    os << "environment: max|alpha_k| = " << amax << " exceeds C/eps = " << bound_c_ / eps_;
    throw NumericalError(os.str());
  }
}

double compensated_sum(const Eigen::Ref<const Eigen::VectorXd>& v) {
  double s = 0.0, c = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double t = s + v(i);
    if (std::abs(s) >= std::abs(v(i)))
      c += (s - t) + v(i);
    else
      c += (v(i) - t) + s;
    s = t;
  }
  return s + c;
}

RealizedEnvironment build_regularized(const DisorderSample& disorder, int n, double eps,
                                      const Kernel& kernel, double bound_c) {
  require(eps > 0.0 && eps < 0.5, "build_regularized: eps must lie in (0, 1/2)");
  require(n * eps >= 2.0, "build_regularized: N*eps must be at least 2");
  require(disorder.r.size() >= n, "build_regularized: disorder shorter than N");
  if (std::abs(kernel.integral() - 1.0) > 1e-10)
    throw std::invalid_argument("build_regularized: kernel does not integrate to 1");

  DisorderSample d = disorder;
  d.r.conservativeResize(n);
  auto walk = std::make_shared<const InterpolatedWalk>(InterpolatedWalk::from_disorder(d));

  const long m = static_cast<long>(std::floor(n * eps));
  const double ne = n * eps;
  // psi at the lattice offsets (j - k)/(N eps), j - k in [-m, m].
  std::vector<double> psi_at(2 * m + 1);
  for (long o = -m; o <= m; ++o) psi_at[o + m] = kernel.psi(static_cast<double>(o) / ne);

  Eigen::VectorXd alpha(n);
  for (long k = 0; k < n; ++k) {
    double s = 0.0;
    for (long o = -m; o <= m - 1; ++o) s += walk->at_index(k + o) * (psi_at[o + m] - psi_at[o + m + 1]);
    s += walk->at_index(k + m) * psi_at[2 * m] - walk->at_index(k - m - 1) * psi_at[0];
    alpha(k) = s / eps;
  }

  RealizedEnvironment env;
  env.kind_ = EnvKind::RegularizedNoise;
  env.alpha_n_ = std::move(alpha);
  env.walk_ = walk;
  env.kernel_ = kernel;
  env.eps_ = eps;
  env.sigma_ = disorder.sigma;
  env.seed_ = disorder.seed;
  env.bound_c_ = bound_c;
  env.alpha_integral_ = walk->total();
  std::ostringstream name;
  name << "noise(seed=" << disorder.seed << ",eps=" << eps << ",kernel=" << kernel.name() << ")";
  env.name_ = name.str();

  if (kernel.id == Kernel::Id::Box) {
    env.alpha_fn_ = [walk, eps, kernel](double u) {
      return walk->smoothed_derivative(u - std::floor(u), eps, kernel);
    };
    const double s0 = walk->smoothed(0.0, eps, kernel);
    env.potential_fn_ = [walk, eps, kernel, s0](double u) {
      return walk->smoothed(u, eps, kernel) - s0;
    };
  } else {
    // Exact evaluation costs O(N eps) per call; tabulate with exact slopes.
    const int cells = 8 * n;
    auto alpha_tab = std::make_shared<const HermiteTable>(
        cells, [&](double x) { return walk->smoothed_derivative(x, eps, kernel); },
        [&](double x) { return walk->smoothed_second_derivative(x, eps, kernel); },
        0.0);
    env.alpha_fn_ = [alpha_tab](double u) { return (*alpha_tab)(u - std::floor(u)); };
    auto s_tab = std::make_shared<const HermiteTable>(
        cells, [&](double x) { return walk->smoothed(x, eps, kernel); },
        [&](double x) { return walk->smoothed_derivative(x, eps, kernel); }, walk->total());
    const double s0 = (*s_tab)(0.0);
    env.potential_fn_ = [s_tab, s0](double u) { return (*s_tab)(u)-s0; };
  }
  env.validate();
  return env;
}

RealizedEnvironment build_bridge(const RealizedEnvironment& base) {
  require(base.kind() == EnvKind::RegularizedNoise || base.kind() == EnvKind::Bridge,
          "build_bridge: requires a regularized-noise environment");
  RealizedEnvironment env = base;
  const int n = base.n();
  Eigen::VectorXd a = base.alpha_n_.array() - compensated_sum(base.alpha_n_) / n;
  // One refinement pass removes the rounding left by the first subtraction.
  a.array() -= compensated_sum(a) / n;
  env.alpha_n_ = std::move(a);
  env.kind_ = EnvKind::Bridge;
  const double mean = base.alpha_integral();
  auto af = base.alpha_fn_;
  auto pf = base.potential_fn_;
  env.alpha_fn_ = [af, mean](double u) { return af(u) - mean; };
  env.potential_fn_ = [pf, mean](double u) { return pf(u) - mean * u; };
  env.alpha_integral_ = 0.0;
  if (base.kind() != EnvKind::Bridge) env.name_ = "bridge:" + base.name();
  env.validate();
  return env;
}

RealizedEnvironment build_deterministic(std::function<double(double)> alpha, int n,
                                        std::string name) {
  require(n >= 1, "build_deterministic: n must be positive");
  RealizedEnvironment env;
  env.kind_ = EnvKind::Deterministic;
  env.alpha_n_.resize(n);
  for (int k = 0; k < n; ++k) env.alpha_n_(k) = alpha(static_cast<double>(k) / n);
  constexpr int cells = 1024;
  Eigen::VectorXd cum(cells + 1);
  cum(0) = 0.0;
  for (int i = 0; i < cells; ++i)
    cum(i + 1) = cum(i) + quad::gl5(alpha, static_cast<double>(i) / cells,
                                    static_cast<double>(i + 1) / cells);
  const double total = cum(cells);
  auto tab = std::make_shared<HermiteTable>(cells, [](double) { return 0.0; }, alpha, total);
  tab->value = cum;
  env.alpha_integral_ = total;
  env.alpha_fn_ = [alpha](double u) { return alpha(u - std::floor(u)); };
  env.potential_fn_ = [tab](double u) { return (*tab)(u); };
  env.name_ = std::move(name);
  env.validate();
  return env;
}

RealizedEnvironment environment_from_sites(Eigen::VectorXd alpha_n, std::string name) {
  require(alpha_n.size() >= 1, "environment_from_sites: empty");
  RealizedEnvironment env;
  env.kind_ = EnvKind::Deterministic;
  const int n = static_cast<int>(alpha_n.size());
  auto sites = std::make_shared<const Eigen::VectorXd>(alpha_n);
  Eigen::VectorXd prefix(n + 1);
  prefix(0) = 0.0;
  for (int k = 0; k < n; ++k) prefix(k + 1) = prefix(k) + 0.5 * (alpha_n(k) + alpha_n((k + 1) % n)) / n;
  auto pre = std::make_shared<const Eigen::VectorXd>(prefix);
  env.alpha_n_ = std::move(alpha_n);
  env.alpha_integral_ = prefix(n);
  env.alpha_fn_ = [sites, n](double u) {
    const double pos = (u - std::floor(u)) * n;
    int i = static_cast<int>(pos);
    if (i >= n) i = n - 1;
    const double t = pos - i;
    return (1.0 - t) * (*sites)(i) + t * (*sites)((i + 1) % n);
  };
  env.potential_fn_ = [sites, pre, n](double u) {
    const double m = std::floor(u);
    const double pos = (u - m) * n;
    int i = static_cast<int>(pos);
    if (i >= n) i = n - 1;
    const double t = pos - i;
    const double a0 = (*sites)(i), a1 = (*sites)((i + 1) % n);
    return m * (*pre)(n) + (*pre)(i) + (t * a0 + 0.5 * t * t * (a1 - a0)) / n;
  };
  env.name_ = std::move(name);
  env.validate();
  return env;
}

std::function<double(double)> named_drift(const std::string& name) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  auto param = [&](const std::string& prefix) {
    return std::stod(name.substr(prefix.size()));
  };
  if (name == "zero") return [](double) { return 0.0; };
  if (name == "sin") return [](double u) { return std::sin(two_pi * u); };
  if (name == "cos") return [](double u) { return std::cos(two_pi * u); };
  if (name.rfind("const:", 0) == 0) {
    const double a = param("const:");
    return [a](double) { return a; };
  }
  if (name.rfind("sin:", 0) == 0) {
    const double a = param("sin:");
    return [a](double u) { return a * std::sin(two_pi * u); };
  }
  if (name.rfind("cos:", 0) == 0) {
    const double a = param("cos:");
    return [a](double u) { return a * std::cos(two_pi * u); };
  }
  throw std::invalid_argument("unknown drift '" + name + "'");
}

}  // namespace zrptag
