#include "zrptag/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include "zrptag/errors.hpp"
#include "zrptag/fenwick.hpp"

namespace zrptag {

TaggedZrpSimulator::TaggedZrpSimulator(const RealizedEnvironment& env, const RateFunction& g,
                                       std::shared_ptr<const PhiTable> phi_table)
    : env_(&env), g_(&g), phi_(std::move(phi_table)) {
  if (!(env.max_abs_alpha_n() / env.n() < 0.5))
    throw std::invalid_argument("simulator: alpha_k/N must stay below 1/2");
}

namespace {

// Draws an index in [0, m) from the high bits of one 64-bit word.
inline std::uint64_t bounded(Rng& rng, std::uint64_t m) {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng()) * m) >> 64);
}

class Run {
 public:
  Run(const RealizedEnvironment& env, const RateFunction& g, const PhiTable* phi,
      const TaggedConfiguration& init, const SimulationConfig& cfg, Rng& rng)
      : env_(env), g_(g), phi_(phi), cfg_(cfg), rng_(rng), n_(env.n()), xi_(init.xi), x_(init.tagged) {
    total_ = init.total;
    n2_ = static_cast<double>(n_) * n_;
    pplus_.resize(n_);
    alpha_.resize(n_);
    for (long k = 0; k < n_; ++k) {
      pplus_[k] = env.p_plus(k);
      alpha_[k] = env.alpha_n(k);
    }
    gtab_.resize(total_ + 2);
    htab_.resize(total_ + 2);
    for (long j = 0; j <= total_ + 1; ++j) {
      gtab_[j] = g(j);
      htab_[j] = j > 0 ? gtab_[j] / j : 0.0;
      if (!std::isfinite(gtab_[j])) throw NumericalError("simulator: rate overflow");
    }
    particle_mode_ = cfg.selector == EventSelector::Particle ||
                     (cfg.selector == EventSelector::Auto && g.is_linear());
    if (cfg.selector == EventSelector::Particle && !g.is_linear())
      throw std::invalid_argument("simulator: particle selection requires g(n) = c n");
    if (particle_mode_) {
      // Tagged particle is index 0.
      pos_.reserve(total_);
      pos_.push_back(static_cast<std::int32_t>(x_));
      for (long k = 0; k < n_; ++k)
        for (long c = (k == x_ ? 1 : 0); c < xi_[k]; ++c) pos_.push_back(static_cast<std::int32_t>(k));
      total_rate_ = n2_ * g.linear_slope() * total_;
    } else {
      tree_.resize(n_);
      for (long k = 0; k < n_; ++k) tree_.add(k, gtab_[xi_[k]]);
    }
    hist_.assign(total_ + 2, 0);
    for (auto v : xi_) ++hist_[v];
    max_occ_ = *std::max_element(xi_.begin(), xi_.end());
    max_run_ = max_occ_;
    window_ = cfg.replacement_window;
    if (window_ > 0) {
      if (!phi_) throw std::invalid_argument("simulator: replacement statistic needs a Phi table");
      recompute_window();
    }
  }

  TrajectoryRecord go() {
    TrajectoryRecord rec;
    rec.initial_site = x_;
    rec.total = total_;
    const double horizon = cfg_.horizon;
    std::size_t ri = 0, si = 0;
    auto flush = [&](double until) {
      while (true) {
        const double tr = ri < cfg_.record_times.size() ? cfg_.record_times[ri] : INFINITY;
        const double ts = si < cfg_.snapshot_times.size() ? cfg_.snapshot_times[si] : INFINITY;
        const double tn = std::min(tr, ts);
        if (!(tn <= until)) break;
        if (tr <= ts) {
          record(rec, tr);
          ++ri;
        } else {
          accumulate(ts);
          rec.snapshots.push_back({ts, xi_, x_});
          ++si;
        }
      }
    };

    long long events = 0;
    double now = 0.0;  // t_ lags behind: it only advances when an integral is flushed
    while (true) {
      const double rate = particle_mode_ ? total_rate_ : n2_ * tree_.total();
      const double t_next = now + rng_.exponential() / rate;
      now = t_next;
      flush(std::min(t_next, horizon));
      if (t_next > horizon) break;
      if (particle_mode_)
        step_particle(t_next);
      else
        step_fenwick(t_next);
      ++events;
      if (!particle_mode_ && (events & ((1LL << 20) - 1)) == 0) tree_.rebuild();
      if (cfg_.debug_checks) check();
    }
    accumulate(horizon);
    rec.events = events;
    return rec;
  }

 private:
  void accumulate(double t) {
    const double dt = t - t_;
    if (dt > 0.0) {
      const long occ = xi_[x_];
      const double h = htab_[occ];
      qv_ += h * dt;
      drift_ += 2.0 * h * alpha_[x_] * dt;
      comp_plus_ += n2_ * h * pplus_[x_] * dt;
      comp_minus_ += n2_ * h * (1.0 - pplus_[x_]) * dt;
      if (window_ > 0) repl_ += (h - h_window_) * dt;
    }
    t_ = t;
  }

  void record(TrajectoryRecord& rec, double t) {
    accumulate(t);
    rec.t.push_back(t);
    rec.x.push_back(static_cast<double>(x_) / n_);
    rec.lifted.push_back(rec.initial_site + jp_ - jm_);
    rec.j_plus.push_back(jp_);
    rec.j_minus.push_back(jm_);
    rec.comp_plus.push_back(comp_plus_);
    rec.comp_minus.push_back(comp_minus_);
    rec.drift.push_back(drift_);
    rec.qv.push_back(qv_);
    rec.replacement.push_back(repl_);
    rec.max_occupancy.push_back(max_run_);
  }

  bool in_window(long k) const {
    long d = k - x_;
    if (d < 0) d += n_;
    return d <= window_ || d >= n_ - window_;
  }

  void recompute_window() {
    long s = 0;
    if (2 * window_ + 1 >= n_) {
      s = total_;
      width_ = n_;
    } else {
      for (long d = -window_; d <= window_; ++d) s += xi_[((x_ + d) % n_ + n_) % n_];
      width_ = 2 * window_ + 1;
    }
    wsum_ = s;
    h_window_ = phi_->chi(static_cast<double>(wsum_) / width_);
  }

  // Moves one particle from k to k + dir and updates every derived quantity.
  void apply(long k, int dir, bool tagged, double t) {
    const long to = k + dir == n_ ? 0 : (k + dir < 0 ? n_ - 1 : k + dir);
    const bool touches = tagged || k == x_ || to == x_ ||
                         (window_ > 0 && 2 * window_ + 1 < n_ && in_window(k) != in_window(to));
    if (touches) accumulate(t);
    --hist_[xi_[k]];
    --xi_[k];
    ++hist_[xi_[k]];
    --hist_[xi_[to]];
    ++xi_[to];
    ++hist_[xi_[to]];
    if (xi_[to] > max_occ_) max_run_ = std::max(max_run_, max_occ_ = xi_[to]);
    while (hist_[max_occ_] == 0) --max_occ_;
    if (!particle_mode_) {
      tree_.set(k, gtab_[xi_[k]]);
      tree_.set(to, gtab_[xi_[to]]);
    }
    if (tagged) {
      x_ = to;
      if (dir > 0)
        ++jp_;
      else
        ++jm_;
      if (window_ > 0) recompute_window();
    } else if (window_ > 0 && 2 * window_ + 1 < n_) {
      const bool a = in_window(k), b = in_window(to);
      if (a != b) {
        wsum_ += b ? 1 : -1;
        h_window_ = phi_->chi(static_cast<double>(wsum_) / width_);
      }
    }
  }

  void step_particle(double t) {
    const auto p = bounded(rng_, static_cast<std::uint64_t>(total_));
    const long k = pos_[p];
    const int dir = rng_.uniform() < pplus_[k] ? 1 : -1;
    const long to = k + dir == n_ ? 0 : (k + dir < 0 ? n_ - 1 : k + dir);
    pos_[p] = static_cast<std::int32_t>(to);
    apply(k, dir, p == 0, t);
  }

  void step_fenwick(double t) {
    long k;
    do {
      k = static_cast<long>(tree_.find(rng_.uniform() * tree_.total()));
    } while (xi_[k] == 0);
    const double u = rng_.uniform();
    if (k == x_) {
      // One draw decides mover and direction jointly.
      const double v = u * xi_[k];
      const double m = std::floor(v);
      const int dir = (v - m) < pplus_[k] ? 1 : -1;
      apply(k, dir, m == 0.0, t);
    } else {
      apply(k, u < pplus_[k] ? 1 : -1, false, t);
    }
  }

  void check() const {
    long s = 0;
    for (auto v : xi_) {
      if (v < 0) throw NumericalError("simulator: negative occupancy");
      s += v;
    }
    if (s != total_) throw NumericalError("simulator: particle number not conserved");
    if (xi_[x_] < 1) throw NumericalError("simulator: tagged site empty");
  }

  const RealizedEnvironment& env_;
  const RateFunction& g_;
  const PhiTable* phi_;
  const SimulationConfig& cfg_;
  Rng& rng_;
  long n_;
  std::vector<std::int32_t> xi_;
  long x_;
  long total_ = 0;
  double n2_ = 0.0;
  std::vector<double> pplus_, alpha_, gtab_, htab_;
  bool particle_mode_ = false;
  std::vector<std::int32_t> pos_;
  double total_rate_ = 0.0;
  FenwickTree<double> tree_;
  std::vector<long> hist_;
  long max_occ_ = 0, max_run_ = 0;
  long window_ = 0, width_ = 1, wsum_ = 0;
  double h_window_ = 0.0;
  double t_ = 0.0;
  long jp_ = 0, jm_ = 0;
  double qv_ = 0.0, drift_ = 0.0, comp_plus_ = 0.0, comp_minus_ = 0.0, repl_ = 0.0;
};

}  // namespace

TrajectoryRecord TaggedZrpSimulator::run(const TaggedConfiguration& initial, const SimulationConfig& cfg,
                                         Rng& rng) const {
  require(cfg.horizon > 0.0, "simulate: horizon must be positive");
  require(initial.n() == env_->n(), "simulate: configuration size differs from the environment");
  require(initial.valid(), "simulate: invalid initial configuration");
  for (const auto* grid : {&cfg.record_times, &cfg.snapshot_times}) {
    require(std::is_sorted(grid->begin(), grid->end()), "simulate: time grids must be sorted");
    for (double t : *grid) require(t >= 0.0 && t <= cfg.horizon, "simulate: grid time outside [0, T]");
  }
  const auto start = std::chrono::steady_clock::now();
  Run run(*env_, *g_, phi_.get(), initial, cfg, rng);
  TrajectoryRecord rec = run.go();
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::vector<TrajectoryRecord> run_replicas(const TaggedZrpSimulator& sim, const InitialSampler& sampler,
                                           const SimulationConfig& cfg, long replicas, unsigned threads) {
  std::vector<TrajectoryRecord> out(replicas);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<long>(threads, std::max<long>(replicas, 1)));
  std::atomic<long> next{0};
  std::vector<std::exception_ptr> errors(threads);
  auto worker = [&](unsigned id) {
    try {
      for (long r = next++; r < replicas; r = next++) {
        Rng rng(cfg.seed, static_cast<std::uint64_t>(r));
        const TaggedConfiguration init = sampler.sample(rng);
        out[r] = sim.run(init, cfg, rng);
      }
    } catch (...) {
      errors[id] = std::current_exception();
      next = replicas;
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker, i);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

Eigen::VectorXd block_average(const std::vector<std::int32_t>& xi, long half_width) {
  const long n = static_cast<long>(xi.size());
  require(half_width >= 0, "block_average: negative window");
  require(2 * half_width + 1 <= n, "block_average: window wider than the torus");
  Eigen::VectorXd out(n);
  long s = 0;
  for (long d = -half_width; d <= half_width; ++d) s += xi[((d % n) + n) % n];
  const double w = 2.0 * half_width + 1.0;
  for (long x = 0; x < n; ++x) {
    out(x) = s / w;
    s += xi[(x + half_width + 1) % n] - xi[((x - half_width) % n + n) % n];
  }
  return out;
}

Eigen::VectorXd empirical_density(const std::vector<std::int32_t>& xi, double theta) {
  require(theta > 0.0 && theta < 0.5, "empirical_density: theta must lie in (0, 1/2)");
  const long l = static_cast<long>(std::floor(theta * static_cast<double>(xi.size())));
  require(l >= 1, "empirical_density: theta N < 1");
  return block_average(xi, l);
}

std::pair<double, double> replacement_statistic(const std::vector<TrajectoryRecord>& runs, long j) {
  require(!runs.empty(), "replacement_statistic: no runs");
  double s = 0.0, s2 = 0.0;
  for (const auto& r : runs) {
    const double v = std::abs(r.replacement.at(j));
    s += v;
    s2 += v * v;
  }
  const double m = runs.size();
  const double mean = s / m;
  const double var = m > 1 ? std::max(0.0, (s2 - m * mean * mean) / (m - 1)) : 0.0;
  return {mean, std::sqrt(var / m)};
}

std::pair<double, double> max_occupancy_exceedance(const std::vector<TrajectoryRecord>& runs, long j,
                                                   double level) {
  require(!runs.empty(), "max_occupancy_exceedance: no runs");
  double hits = 0.0;
  for (const auto& r : runs) hits += r.max_occupancy.at(j) >= level ? 1.0 : 0.0;
  const double p = hits / runs.size();
  return {p, std::sqrt(p * (1.0 - p) / runs.size())};
}

}  // namespace zrptag
