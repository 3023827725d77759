#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "zrptag/environment.hpp"
#include "zrptag/equilibrium.hpp"
#include "zrptag/rng.hpp"

namespace zrptag {

enum class EventSelector {
  Auto,      ///< Particle for linear g, Fenwick otherwise
  Fenwick,   ///< site drawn with probability g(xi_k) / sum g
  Particle,  ///< uniform particle; exact only for g(n) = c n
};

struct SimulationConfig {
  double horizon = 0.1;              ///< macroscopic time T
  std::vector<double> record_times;  ///< trajectory sample times in [0, T]
  std::vector<double> snapshot_times;
  /// Half-width in sites of the window used for the replacement statistic;
  /// 0 disables it.
  long replacement_window = 0;
  EventSelector selector = EventSelector::Auto;
  bool debug_checks = false;
  std::uint64_t seed = 1;
};

struct Snapshot {
  double t = 0.0;
  std::vector<std::int32_t> xi;
  long tagged = 0;
};

/// Bookkeeping for X^N_t = X_{N^2 t}; all integrals are exact for the
/// piecewise-constant path.
struct TrajectoryRecord {
  std::vector<double> t;
  std::vector<double> x;        ///< X/N in [0, 1)
  std::vector<long> lifted;     ///< X_0 + J+ - J-
  std::vector<long> j_plus, j_minus;
  std::vector<double> comp_plus, comp_minus;  ///< int N^2 (g/xi)(X) p+-_X ds
  std::vector<double> drift;    ///< 2 int (g/xi)(X) alpha_X ds
  std::vector<double> qv;       ///< int (g/xi)(X) ds
  std::vector<double> replacement;  ///< int [(g/xi)(X) - H(window density)] ds
  std::vector<long> max_occupancy;  ///< running max over sites and time
  std::vector<Snapshot> snapshots;
  long initial_site = 0;
  long total = 0;
  long long events = 0;
  double seconds = 0.0;

  /// N^{-1} M^N at record j.
  double martingale(long j, long n) const {
    return static_cast<double>(j_plus[j] - j_minus[j]) / n - drift[j];
  }
};

/// One exact-in-law run of N^2 L_N from `initial`.
class TaggedZrpSimulator {
 public:
  /// `phi_table` provides H(rho) = Phi(rho)/rho for the replacement
  /// statistic and may be null when that statistic is off.
  TaggedZrpSimulator(const RealizedEnvironment& env, const RateFunction& g,
                     std::shared_ptr<const PhiTable> phi_table = nullptr);

  TrajectoryRecord run(const TaggedConfiguration& initial, const SimulationConfig& cfg, Rng& rng) const;

 private:
  const RealizedEnvironment* env_;
  const RateFunction* g_;
  std::shared_ptr<const PhiTable> phi_;
};

/// Runs replicas r = 0..R-1 with streams (cfg.seed, r), initial configurations
/// drawn from `sampler` on the same stream. Replicas run on `threads` workers
/// (0: hardware concurrency) and are returned in replica order.
std::vector<TrajectoryRecord> run_replicas(const TaggedZrpSimulator& sim, const InitialSampler& sampler,
                                           const SimulationConfig& cfg, long replicas,
                                           unsigned threads = 0);

/// Block averages eta^{l}(x) = (2l+1)^{-1} sum_{|y-x|<=l} xi(y) with
/// l = floor(theta N).
Eigen::VectorXd empirical_density(const std::vector<std::int32_t>& xi, double theta);

/// Same with an explicit half-width in sites.
Eigen::VectorXd block_average(const std::vector<std::int32_t>& xi, long half_width);

/// Replica mean of |int_0^t [g/xi - H(eta^l)] ds| at record j with its
/// standard error.
std::pair<double, double> replacement_statistic(const std::vector<TrajectoryRecord>& runs, long j);

/// Fraction of replicas whose running max occupancy reached `level` by record
/// j, with its binomial standard error.
std::pair<double, double> max_occupancy_exceedance(const std::vector<TrajectoryRecord>& runs, long j,
                                                   double level);

}  // namespace zrptag
