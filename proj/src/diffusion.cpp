#include "zrptag/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "zrptag/errors.hpp"
#include "zrptag/quadrature.hpp"

namespace zrptag {

// ---------------------------------------------------------------------------
// Potentials

Potential zero_potential() {
  return {[](double) { return 0.0; }, 0.0, 0.0, "zero"};
}

Potential regularized_potential(const RealizedEnvironment& env) {
  Potential p;
  p.value = [env](double y) { return env.potential(y); };
  p.increment = env.potential(1.0);
  p.spacing = 1.0 / env.n();
  std::ostringstream os;
  os << "regularized(" << env.name() << ")";
  p.label = os.str();
  return p;
}

Potential singular_potential(std::shared_ptr<const InterpolatedWalk> w) {
  require(w != nullptr, "singular_potential: walk required");
  Potential p;
  p.increment = w->total();
  p.spacing = 1.0 / w->n();
  p.value = [w](double y) { return (*w)(y); };
  p.label = "singular";
  return p;
}

Potential bridge_potential(std::shared_ptr<const InterpolatedWalk> w) {
  require(w != nullptr, "bridge_potential: walk required");
  Potential p;
  p.increment = 0.0;
  p.spacing = 1.0 / w->n();
  const double w1 = w->total();
  p.value = [w, w1](double y) { return (*w)(y)-w1 * y; };
  p.label = "bridge";
  return p;
}

// ---------------------------------------------------------------------------
// Scale function

ScaleFunction::ScaleFunction(Potential a, double half_range, double cell) : a_(std::move(a)) {
  require(half_range > 0.0, "ScaleFunction: range must be positive");
  if (cell <= 0.0) {
    if (a_.spacing > 0.0)
      cell = a_.spacing / std::max(1.0, std::ceil(a_.spacing * 1024.0));
    else
      cell = 1.0 / 1024.0;
  }
  const long per_side = static_cast<long>(std::ceil(half_range / cell - 1e-9));
  h_ = cell;
  l_ = per_side * cell;
  const long nodes = 2 * per_side + 1;
  s_.resize(nodes);
  d_.resize(nodes);
  auto dens = [this](double y) { return std::exp(-4.0 * a_(y)); };
  for (long i = 0; i < nodes; ++i) d_(i) = dens(-l_ + i * h_);
  s_(per_side) = 0.0;
  for (long i = per_side + 1; i < nodes; ++i) {
    const double y0 = (i - 1 - per_side) * h_;
    s_(i) = s_(i - 1) + quad::gl5(dens, y0, y0 + h_);
  }
  for (long i = per_side - 1; i >= 0; --i) {
    const double y0 = (i - per_side) * h_;
    s_(i) = s_(i + 1) - quad::gl5(dens, y0, y0 + h_);
  }
  // equal neighbours mean the density fell below the spacing of doubles near s; only a decrease is a failure
  for (long i = 0; i + 1 < nodes; ++i)
    if (!(s_(i + 1) >= s_(i)) || !std::isfinite(s_(i + 1))) throw NumericalError("ScaleFunction: table is not monotone");
}

long ScaleFunction::locate(double x) const {
  if (!(x >= -l_ - 1e-12 && x <= l_ + 1e-12)) {
    std::ostringstream os;
    os << "ScaleFunction: x = " << x << " outside [-" << l_ << ", " << l_ << "]";
    throw std::out_of_range(os.str());
  }
  long i = static_cast<long>(std::floor((x + l_) / h_));
  return std::clamp(i, 0L, static_cast<long>(s_.size()) - 2);
}

double ScaleFunction::piece(long i, double t) const {
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * s_(i) + (t3 - 2 * t2 + t) * h_ * d_(i) + (-2 * t3 + 3 * t2) * s_(i + 1) +
         (t3 - t2) * h_ * d_(i + 1);
}

double ScaleFunction::operator()(double x) const {
  const long i = locate(x);
  return piece(i, (x - (-l_ + i * h_)) / h_);
}

double ScaleFunction::inverse(double y) const {
  if (!(y >= lo() && y <= hi())) {
    std::ostringstream os;
    os << "ScaleFunction: s^-1(" << y << ") outside the table range [" << lo() << ", " << hi() << "]";
    throw std::out_of_range(os.str());
  }
  const auto it = std::upper_bound(s_.data(), s_.data() + s_.size(), y);
  long i = static_cast<long>(it - s_.data()) - 1;
  i = std::clamp(i, 0L, static_cast<long>(s_.size()) - 2);
  double a = 0.0, b = 1.0;
  const double span = s_(i + 1) - s_(i);
  double t = span > 0.0 ? (y - s_(i)) / span : 0.5;
  for (int it2 = 0; it2 < 60; ++it2) {
    const double f = piece(i, t) - y;
    if (std::abs(f) <= 1e-15 * std::max(1.0, std::abs(y))) break;
    if (f > 0.0)
      b = t;
    else
      a = t;
    const double t2 = t * t;
    const double df = (6 * t2 - 6 * t) * s_(i) + (3 * t2 - 4 * t + 1) * h_ * d_(i) + (-6 * t2 + 6 * t) * s_(i + 1) +
                      (3 * t2 - 2 * t) * h_ * d_(i + 1);
    double next = df > 0.0 ? t - f / df : 0.5 * (a + b);
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    if (b - a < 1e-16) break;
    t = next;
  }
  return -l_ + (i + t) * h_;
}

double ScaleFunction::round_trip_error() const {
  double e = 0.0;
  for (long i = 0; i + 1 < s_.size(); ++i)
    for (double y : {s_(i), 0.5 * (s_(i) + s_(i + 1))}) e = std::max(e, std::abs((*this)(inverse(y)) - y));
  return e;
}

double sup_distance(const ScaleFunction& s1, const ScaleFunction& s2, double r, long points) {
  double d = 0.0;
  for (long i = 0; i < points; ++i) {
    const double x = -r + 2.0 * r * i / (points - 1);
    d = std::max(d, std::abs(s1(x) - s2(x)));
  }
  return d;
}

// ---------------------------------------------------------------------------
// chi

ChiField ChiField::uniform(double c) {
  require(c > 0.0, "ChiField: constant must be positive");
  ChiField f;
  f.constant = c;
  f.lo = c;
  f.hi = c;
  return f;
}

ChiField ChiField::from_field(std::shared_ptr<const DensityField> field, std::shared_ptr<const PhiTable> phi,
                              const RateFunction& g) {
  ChiField f;
  f.fn = [field, phi](double t, double x) { return chi(*field, *phi, t, x); };
  f.lo = 0.5 * g.g_lower();
  f.hi = 2.0 * g.g_star();
  return f;
}

namespace {

double checked_chi(const ChiField& chi, double t, double x) {
  const double c = chi(t, x);
  if (!(c >= chi.lo && c <= chi.hi)) {
    std::ostringstream os;
    os << "chi = " << c << " outside [" << chi.lo << ", " << chi.hi << "] at (" << t << ", " << x << ")";
    throw NumericalError(os.str());
  }
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Brownian paths and the time change

BrownianPath BrownianPath::uniform(double r_max, long steps, Rng& rng) {
  require(r_max > 0.0 && steps >= 1, "BrownianPath: need r_max > 0 and steps >= 1");
  BrownianPath p;
  p.r.resize(steps + 1);
  p.b.resize(steps + 1);
  p.r[0] = p.b[0] = 0.0;
  const double dr = r_max / steps;
  for (long i = 1; i <= steps; ++i) {
    p.r[i] = i * dr;
    p.b[i] = p.b[i - 1] + std::sqrt(dr) * rng.normal();
  }
  p.r[steps] = r_max;
  return p;
}

BrownianPath BrownianPath::refined(Rng& rng) const {
  BrownianPath p;
  p.r.reserve(2 * r.size());
  p.b.reserve(2 * r.size());
  for (std::size_t i = 0; i + 1 < r.size(); ++i) {
    p.r.push_back(r[i]);
    p.b.push_back(b[i]);
    const double dr = r[i + 1] - r[i];
    p.r.push_back(0.5 * (r[i] + r[i + 1]));
    p.b.push_back(0.5 * (b[i] + b[i + 1]) + 0.5 * std::sqrt(dr) * rng.normal());
  }
  p.r.push_back(r.back());
  p.b.push_back(b.back());
  return p;
}

namespace {

double interp(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  std::size_t j = it == xs.begin() ? 0 : static_cast<std::size_t>(it - xs.begin()) - 1;
  if (j + 1 >= xs.size()) return ys.back();
  const double w = (x - xs[j]) / (xs[j + 1] - xs[j]);
  return ys[j] + w * (ys[j + 1] - ys[j]);
}

}  // namespace

double TimeChange::forward(double rq) const {
  require(rq >= 0.0 && rq <= r.back() + 1e-12, "TimeChange: r outside the tabulated range");
  return interp(r, t, rq);
}

double TimeChange::inverse(double tq) const {
  if (!(tq >= 0.0 && tq <= t.back() + 1e-12)) {
    std::ostringstream os;
    os << "TimeChange: t = " << tq << " beyond the tabulated T range " << t.back() << " (extend B)";
    throw std::out_of_range(os.str());
  }
  return interp(t, r, tq);
}

TimeChange time_change(const BrownianPath& b, const ScaleFunction& s, const ChiField& chi, double z) {
  require(b.r.size() == b.b.size() && b.r.size() >= 2, "time_change: malformed Brownian path");
  TimeChange tc;
  const double sz = s(z);
  const std::size_t m = b.r.size();
  tc.r = b.r;
  tc.t.resize(m);
  tc.u.resize(m);
  double prev = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double u = s.inverse(sz + b.b[i]);
    const double f = std::exp(8.0 * s.potential()(u)) / checked_chi(chi, b.r[i], u);
    tc.u[i] = u;
    tc.t[i] = i == 0 ? 0.0 : tc.t[i - 1] + 0.5 * (prev + f) * (b.r[i] - b.r[i - 1]);
    prev = f;
  }
  for (std::size_t i = 1; i < m; ++i)
    if (!(tc.t[i] > tc.t[i - 1])) throw NumericalError("time_change: T not strictly increasing");
  return tc;
}

std::vector<double> ito_mckean_path(const BrownianPath& b, const TimeChange& tc, const ScaleFunction& s, double z,
                                    const std::vector<double>& times) {
  const double sz = s(z);
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times) {
    const double r = tc.inverse(t);
    out.push_back(s.inverse(sz + interp(b.r, b.b, r)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo engines

StartLaw point_start(double z) {
  return [z](Rng&) { return z; };
}

StartLaw uniform_start() {
  return [](Rng& rng) { return rng.uniform(); };
}

std::vector<double> SdeSamples::column(long j) const {
  std::vector<double> v(lifted.rows());
  for (long i = 0; i < lifted.rows(); ++i) v[i] = lifted(i, j);
  return v;
}

std::vector<double> SdeSamples::torus(long j) const {
  std::vector<double> v = column(j);
  for (auto& x : v) x -= std::floor(x);
  return v;
}

double euler_maruyama_guard(double g_star, double max_abs_alpha) {
  const double c = 0.1 / std::max(1.0, 2.0 * g_star * max_abs_alpha);
  return c * c;
}

namespace {

void check_times(const std::vector<double>& times) {
  require(!times.empty(), "sde: no output times");
  require(times.front() >= 0.0, "sde: negative output time");
  require(std::is_sorted(times.begin(), times.end()), "sde: output times must increase");
}

}  // namespace

SdeSamples euler_maruyama(const std::function<double(double)>& drift, double max_abs_alpha, const ChiField& chi,
                          double g_star, const StartLaw& start, const SdeRunConfig& cfg) {
  check_times(cfg.times);
  require(cfg.paths >= 1, "euler_maruyama: need at least one path");
  const double guard = euler_maruyama_guard(g_star, max_abs_alpha);
  const double dt = cfg.dt > 0.0 ? cfg.dt : guard;
  if (dt > guard * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "euler_maruyama: dt = " << dt << " exceeds the step guard " << guard;
    throw std::invalid_argument(os.str());
  }
  SdeSamples out;
  out.times = cfg.times;
  out.dt = dt;
  out.lifted.resize(cfg.paths, static_cast<long>(cfg.times.size()));
  for (long p = 0; p < cfg.paths; ++p) {
    Rng rng(cfg.seed, static_cast<std::uint64_t>(p));
    double x = start(rng);
    double t = 0.0;
    for (std::size_t j = 0; j < cfg.times.size(); ++j) {
      const double span = cfg.times[j] - t;
      const long steps = span > 0.0 ? static_cast<long>(std::ceil(span / dt - 1e-9)) : 0;
      const double h = steps > 0 ? span / steps : 0.0;
      const double sq = std::sqrt(h);
      for (long k = 0; k < steps; ++k) {
        const double xt = x - std::floor(x);
        const double c = checked_chi(chi, t, xt);
        x += 2.0 * c * drift(xt) * h + std::sqrt(c) * sq * rng.normal();
        t += h;
      }
      if (p == 0) out.steps += steps;
      t = cfg.times[j];
      out.lifted(p, static_cast<long>(j)) = x;
    }
  }
  return out;
}

namespace {

struct Overflow {};

void im_path(const ScaleFunction& s, const ChiField& chi, double z, const SdeRunConfig& cfg, Rng& rng,
             Eigen::MatrixXd& out, long p, long& steps) {
  auto row = [&](long j) -> double& { return out(p, j); };
  const Potential& a = s.potential();
  auto inv = [&](double y) {
    if (!(y >= s.lo() && y <= s.hi())) throw Overflow{};
    return s.inverse(y);
  };
  if (!(z > -s.half_range() && z < s.half_range())) throw Overflow{};
  const double sz = s(z);
  double r = 0.0, b = 0.0, tt = 0.0;
  double f = std::exp(8.0 * a(z)) / checked_chi(chi, 0.0, z);
  std::size_t j = 0;
  while (j < cfg.times.size() && cfg.times[j] <= 0.0) row(static_cast<long>(j++)) = z;
  while (j < cfg.times.size()) {
    const double dr = cfg.dtau / f;
    const double db = std::sqrt(dr) * rng.normal();
    const double u_new = inv(sz + b + db);
    const double f_new = std::exp(8.0 * a(u_new)) / checked_chi(chi, r + dr, u_new);
    const double t_new = tt + 0.5 * (f + f_new) * dr;
    while (j < cfg.times.size() && cfg.times[j] <= t_new) {
      const double w = (cfg.times[j] - tt) / (t_new - tt);
      const double bw = b + w * db + std::sqrt(std::max(0.0, w * (1.0 - w) * dr)) * rng.normal();
      row(static_cast<long>(j++)) = inv(sz + bw);
    }
    r += dr;
    b += db;
    tt = t_new;
    f = f_new;
    ++steps;
  }
}

}  // namespace

SdeSamples ito_mckean(const Potential& a, const ChiField& chi, const StartLaw& start, const SdeRunConfig& cfg,
                      double initial_half_range) {
  check_times(cfg.times);
  require(cfg.dtau > 0.0, "ito_mckean: dtau must be positive");
  constexpr double cap = 16.0;
  double l = std::min(initial_half_range, cap);
  auto s = std::make_unique<ScaleFunction>(a, l);
  SdeSamples out;
  out.times = cfg.times;
  out.dt = cfg.dtau;
  out.lifted.resize(cfg.paths, static_cast<long>(cfg.times.size()));
  for (long p = 0; p < cfg.paths; ++p) {
    while (true) {
      Rng rng(cfg.seed, static_cast<std::uint64_t>(p));
      const double z = start(rng);
      long steps = 0;
      try {
        im_path(*s, chi, z, cfg, rng, out.lifted, p, steps);
        out.steps += steps;
        break;
      } catch (const Overflow&) {
        if (l >= cap) {
          std::ostringstream os;
          os << "ito_mckean: path " << p << " left the scale table at the cap L = " << cap;
          throw NumericalError(os.str());
        }
        l = std::min(2.0 * l, cap);
        s = std::make_unique<ScaleFunction>(a, l);
      }
    }
  }
  return out;
}

SdeSamples brox_reference(std::shared_ptr<const InterpolatedWalk> w, const StartLaw& start, const SdeRunConfig& cfg) {
  return ito_mckean(singular_potential(std::move(w)), ChiField::uniform(1.0), start, cfg);
}

// ---------------------------------------------------------------------------
// Sinai

SinaiSamples sinai_reference(const SinaiConfig& cfg) {
  require(cfg.environments >= 1, "sinai: need at least one environment");
  require(!cfg.checkpoints.empty() && std::is_sorted(cfg.checkpoints.begin(), cfg.checkpoints.end()),
          "sinai: checkpoints must increase");
  require(cfg.checkpoints.front() >= 2, "sinai: checkpoints must be at least 2");
  require(cfg.c > 0.0 && cfg.c < 0.5, "sinai: c must lie in (0, 1/2)");
  const double delta = std::clamp(cfg.sigma / std::sqrt(cfg.sigma * cfg.sigma * cfg.n_env), 0.0, 0.5 - cfg.c);
  const double u_hi = 0.5 + delta, u_lo = 0.5 - delta;
  SinaiSamples out;
  const double lr = std::log((1.0 - u_lo) / u_lo);
  out.sigma_env2 = cfg.disorder ? lr * lr : 0.0;
  const double scale2 = cfg.disorder ? out.sigma_env2 : 1.0;
  const long nc = static_cast<long>(cfg.checkpoints.size());
  out.scaled.resize(cfg.environments, nc);
  out.raw.resize(cfg.environments, nc);
  constexpr long half = 1L << 18;
  std::vector<std::uint64_t> threshold(2 * half + 1);
  auto to_threshold = [](double u) { return static_cast<std::uint64_t>(std::ldexp(u, 64)); };
  const std::uint64_t th_hi = to_threshold(u_hi), th_lo = to_threshold(u_lo), th_half = to_threshold(0.5);
  for (long e = 0; e < cfg.environments; ++e) {
    const std::uint64_t env_key = splitmix64(cfg.seed ^ splitmix64(0x5EEDULL + static_cast<std::uint64_t>(e)));
    auto site = [&](long k) {
      if (!cfg.disorder) return th_half;
      return (splitmix64(env_key + static_cast<std::uint64_t>(k) * 0x9E3779B97F4A7C15ULL) >> 63) ? th_hi : th_lo;
    };
    for (long k = -half; k <= half; ++k) threshold[k + half] = site(k);
    Rng rng(cfg.seed, 0x51A1ULL + static_cast<std::uint64_t>(e));
    long x = 0;
    long n = 0;
    for (long c = 0; c < nc; ++c) {
      const long target = cfg.checkpoints[c];
      while (n < target) {
        const std::uint64_t th = (x >= -half && x <= half) ? threshold[x + half] : site(x);
        x += rng() < th ? 1 : -1;
        ++n;
      }
      const double ln = std::log(static_cast<double>(target));
      out.raw(e, c) = static_cast<double>(x);
      out.scaled(e, c) = scale2 * x / (ln * ln);
    }
  }
  return out;
}

}  // namespace zrptag
