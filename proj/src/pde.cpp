#include "zrptag/pde.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "zrptag/errors.hpp"

namespace zrptag {

double DensityField::evaluate(double t, double x) const {
  if (!(t >= times.front() - 1e-12 && t <= times.back() + 1e-12)) {
    std::ostringstream os;
    os << "DensityField: t = " << t << " outside [" << times.front() << ", " << times.back() << "]";
    throw std::out_of_range(os.str());
  }
  std::size_t j = std::upper_bound(times.begin(), times.end(), t) - times.begin();
  j = j == 0 ? 0 : j - 1;
  if (j + 1 >= times.size()) j = times.size() >= 2 ? times.size() - 2 : 0;
  const double w = times.size() >= 2 ? std::clamp((t - times[j]) / (times[j + 1] - times[j]), 0.0, 1.0) : 0.0;
  const double pos = (x - std::floor(x)) * m;
  long i = static_cast<long>(pos);
  if (i >= m) i = m - 1;
  const double s = pos - i;
  const long i1 = (i + 1) % m;
  auto at = [&](std::size_t r) { return (1.0 - s) * values(r, i) + s * values(r, i1); };
  if (times.size() < 2) return at(0);
  return (1.0 - w) * at(j) + w * at(j + 1);
}

Eigen::VectorXd DensityField::row_at(double t) const {
  Eigen::VectorXd out(m);
  for (long i = 0; i < m; ++i) out(i) = evaluate(t, static_cast<double>(i) / m);
  return out;
}

DensityField constant_field(double rho, double horizon, long m) {
  DensityField f;
  f.m = m;
  f.times = {0.0, horizon};
  f.values = Eigen::MatrixXd::Constant(2, m, rho);
  f.mass = {rho, rho};
  f.rho_minus = f.rho_plus = f.min = f.max = rho;
  return f;
}

PdeSolver::PdeSolver(const RealizedEnvironment& env, std::shared_ptr<const PhiTable> phi)
    : env_(&env), phi_(std::move(phi)) {
  require(phi_ != nullptr, "PdeSolver: Phi table required");
}

double PdeSolver::stable_dt(const PdeConfig& cfg) const {
  const double h = 1.0 / cfg.m;
  const double dphi = phi_->max_derivative();
  double amax = 0.0;
  for (long i = 0; i < cfg.m; ++i) amax = std::max(amax, std::abs(env_->alpha((i + 0.5) * h)));
  double dt = cfg.semi_implicit ? INFINITY : cfg.cfl * h * h / dphi;
  if (amax > 0.0) dt = std::min(dt, cfg.cfl * h / (2.0 * amax * dphi));
  return dt;
}

namespace {

inline double van_leer(double r) { return (r + std::abs(r)) / (1.0 + std::abs(r)); }

}  // namespace

void PdeSolver::rhs(const Eigen::VectorXd& rho, const Eigen::VectorXd& alpha_face, bool limiter,
                    bool with_diffusion, Eigen::VectorXd& out) const {
  const long m = rho.size();
  const double h = 1.0 / m;
  Eigen::VectorXd ph(m);
  for (long i = 0; i < m; ++i) ph(i) = (*phi_)(rho(i));
  Eigen::VectorXd flux(m);  // flux(i) at x_{i+1/2}
  for (long i = 0; i < m; ++i) {
    const long im = (i + m - 1) % m, ip = (i + 1) % m, ipp = (i + 2) % m;
    const double d = ph(ip) - ph(i);
    const double a = alpha_face(i);
    double face;
    if (a >= 0.0) {
      face = ph(i);
      if (limiter && d != 0.0) face += 0.5 * van_leer((ph(i) - ph(im)) / d) * d;
    } else {
      face = ph(ip);
      if (limiter && d != 0.0) face -= 0.5 * van_leer((ph(ipp) - ph(ip)) / d) * d;
    }
    flux(i) = 2.0 * a * face - (with_diffusion ? 0.5 * d / h : 0.0);
  }
  out.resize(m);
  for (long i = 0; i < m; ++i) out(i) = -(flux(i) - flux((i + m - 1) % m)) / h;
}

DensityField PdeSolver::solve(const std::function<double(double)>& rho0, const PdeConfig& cfg) const {
  Eigen::VectorXd r(cfg.m);
  for (long i = 0; i < cfg.m; ++i) r(i) = rho0(static_cast<double>(i) / cfg.m);
  return solve(r, cfg);
}

DensityField PdeSolver::solve(const Eigen::VectorXd& rho0, const PdeConfig& cfg) const {
  require(cfg.m >= 4 && rho0.size() == cfg.m, "pde: rho0 must have m >= 4 entries");
  require(cfg.horizon > 0.0, "pde: horizon must be positive");
  const double r_lo = rho0.minCoeff(), r_hi = rho0.maxCoeff();
  require(r_lo > 0.0, "pde: rho0 must be bounded below by a positive constant");
  if (2.0 * r_hi > phi_->rho_max() * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "pde: Phi table covers [0, " << phi_->rho_max() << "], need [0, " << 2.0 * r_hi << "]";
    throw std::invalid_argument(os.str());
  }
  const double h = 1.0 / cfg.m;
  const double dt_max = stable_dt(cfg);
  double dt = cfg.dt > 0.0 ? cfg.dt : dt_max;
  if (dt > dt_max * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "pde: dt = " << dt << " violates the CFL bound " << dt_max;
    throw std::invalid_argument(os.str());
  }
  const long steps = static_cast<long>(std::ceil(cfg.horizon / dt - 1e-9));
  dt = cfg.horizon / steps;
  const long stride = cfg.store_every > 0 ? cfg.store_every : std::max(1L, (steps + 1999) / 2000);

  Eigen::VectorXd alpha_face(cfg.m);
  for (long i = 0; i < cfg.m; ++i) alpha_face(i) = env_->alpha((i + 0.5) * h);

  // Linearized implicit diffusion: (I - dt/2 D diag(Phi')) delta = dt * explicit.
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  auto implicit_solve = [&](const Eigen::VectorXd& rho, const Eigen::VectorXd& explicit_part) {
    const long m = cfg.m;
    std::vector<Eigen::Triplet<double>> trips;
    const double c = 0.5 * dt / (h * h);
    for (long i = 0; i < m; ++i) {
      const long im = (i + m - 1) % m, ip = (i + 1) % m;
      trips.emplace_back(i, i, 1.0 + 2.0 * c * phi_->derivative(rho(i)));
      trips.emplace_back(i, im, -c * phi_->derivative(rho(im)));
      trips.emplace_back(i, ip, -c * phi_->derivative(rho(ip)));
    }
    Eigen::SparseMatrix<double> a(m, m);
    a.setFromTriplets(trips.begin(), trips.end());
    lu.compute(a);
    if (lu.info() != Eigen::Success) throw NumericalError("pde: implicit factorization failed");
    return Eigen::VectorXd(lu.solve(explicit_part));
  };

  DensityField f;
  f.m = cfg.m;
  f.rho_minus = r_lo;
  f.rho_plus = r_hi;
  f.dt = dt;
  f.steps = steps;
  std::vector<Eigen::VectorXd> rows;
  Eigen::VectorXd rho = rho0, k1;
  auto mass_of = [&](const Eigen::VectorXd& v) { return compensated_sum(v) * h; };
  const double mass0 = mass_of(rho);
  f.min = r_lo;
  f.max = r_hi;
  rows.push_back(rho);
  f.times.push_back(0.0);
  f.mass.push_back(mass0);
  for (long s = 1; s <= steps; ++s) {
    if (!cfg.semi_implicit) {
      rhs(rho, alpha_face, cfg.limiter, true, k1);
      rho += dt * k1;
    } else {
      Eigen::VectorXd full, adv;
      rhs(rho, alpha_face, cfg.limiter, true, full);
      rho += implicit_solve(rho, dt * full);
    }
    const double lo = rho.minCoeff();
    if (!(lo >= 0.0)) {
      std::ostringstream os;
      os << "pde: negative density " << lo << " at step " << s << " (t = " << s * dt << ", dt = " << dt << ")";
      throw NumericalError(os.str());
    }
    f.min = std::min(f.min, lo);
    f.max = std::max(f.max, rho.maxCoeff());
    if (s % stride == 0 || s == steps) {
      rows.push_back(rho);
      f.times.push_back(s == steps ? cfg.horizon : s * dt);
      const double mass = mass_of(rho);
      f.mass.push_back(mass);
      f.mass_drift = std::max(f.mass_drift, std::abs(mass - mass0) / mass0);
    }
  }
  f.values.resize(static_cast<long>(rows.size()), cfg.m);
  for (std::size_t j = 0; j < rows.size(); ++j) f.values.row(j) = rows[j].transpose();
  return f;
}

double chi(const DensityField& field, const PhiTable& phi, double t, double x) {
  const double rho = field.evaluate(t, x);
  // with drift the solution may leave the initial envelope; the solved minimum widens it
  const double lower = std::min(field.rho_minus, field.min);
  if (!(rho >= 0.5 * lower) || !(lower > 0.0)) {
    std::ostringstream os;
    os << "chi: density " << rho << " below half the lower envelope " << lower << " at (t, x) = (" << t << ", " << x << ")";
    throw NumericalError(os.str());
  }
  return phi.chi(rho);
}

std::function<double(double)> named_profile(const std::string& name) {
  if (name.rfind("const:", 0) == 0) {
    const double c = std::stod(name.substr(6));
    return [c](double) { return c; };
  }
  if (name.rfind("sine:", 0) == 0) {
    const std::string rest = name.substr(5);
    const auto comma = rest.find(',');
    require(comma != std::string::npos, "sine profile needs a,b");
    const double a = std::stod(rest.substr(0, comma)), b = std::stod(rest.substr(comma + 1));
    return [a, b](double x) { return a + b * std::sin(2.0 * std::numbers::pi * x); };
  }
  throw std::invalid_argument("unknown profile '" + name + "'");
}

}  // namespace zrptag
