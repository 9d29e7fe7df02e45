#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "speciation/mixture.hpp"
#include "speciation/schedule.hpp"

namespace speciation {

/// Monte Carlo settings. Sample j always reads stream (seed, tag, j), so the
/// same draws are reused at every grid time and for every worker count.
struct McOptions {
  std::size_t n{20000};
  std::uint64_t seed{0};
  int threads{1};
};

struct Estimate {
  double value{0.0};
  double se{0.0};
};

/// Binary semantic split of the class set. With `complement_proxy` branch B
/// is the full mixture rather than the sub-mixture over `set_b`.
struct Partition {
  ClassSet set_a;
  ClassSet set_b;
  double prior_a{0.5};
  bool complement_proxy{false};

  void validate(Index classes) const;

  /// Classes whose sub-mixture forms branch B.
  ClassSet branch_b(Index classes) const;
};

struct EntropyProfile {
  std::vector<double> times;
  std::vector<double> u;
  std::vector<double> H;
  std::vector<double> H_stderr;
  std::vector<double> Hdot;
  std::vector<double> Hdot_stderr;
  std::size_t n_samples{0};
  std::uint64_t seed{0};

  std::size_t size() const { return times.size(); }
};

/// Per-class Fisher divergence Delta_i(t) = E_{x|i} ||s_i - s_mix||^2.
struct FisherGap {
  Eigen::VectorXd delta_i;
  Eigen::VectorXd se;
};

/// -sum_k gamma_k log gamma_k with 0 log 0 = 0.
double posterior_entropy(const Eigen::VectorXd& log_weights);

/// H[Z | X_t] averaged over the joint of (Z, X_t).
Estimate conditional_entropy_mc(const Mixture& spec, const Schedule& sched, double t, const McOptions& opts);

/// (g_t^2 / 2) E_i E_{x|i} ||s_i - s_mix||^2, the forward-time entropy production (>= 0).
Estimate entropy_production_fisher(const Mixture& spec, const Schedule& sched, double t, const McOptions& opts);

/// Class-stratified Delta_i; opts.n samples per class.
FisherGap fisher_gap(const Mixture& spec, const Schedule& sched, double t, const McOptions& opts);

struct Derivative {
  std::vector<double> value;
  std::vector<double> se;
};

/// dH/dt on the profile grid: three-point (quadratic-exact) interior stencil,
/// one-sided two-point at the ends. Standard errors assume independent rows.
Derivative entropy_production_fd(const EntropyProfile& profile);

/// Finite-difference dH/dt of the unpartitioned entropy with standard errors
/// taken from per-sample differences (the same draws are reused at every time).
Derivative entropy_production_fd_paired(const Mixture& spec, const Schedule& sched, std::span<const double> times, const McOptions& opts);

/// gamma_A(x) = pA p_A / (pA p_A + (1 - pA) p_B) from sub-mixture log densities.
double partition_posterior(const Mixture& spec, const Stats& stats, const Partition& partition, const Eigen::VectorXd& x);

/// H[pi(Z) | X_t] under the reweighted two-branch mixture, n/2 draws per branch.
Estimate partitioned_entropy_mc(const Mixture& spec, const Schedule& sched, const Partition& partition, double t, const McOptions& opts);

using Density1d = std::function<double(double)>;

/// Composite Gauss-Legendre rule on [lo, hi] with about `nodes` points.
struct QuadratureRule {
  std::vector<double> x;
  std::vector<double> w;
};
QuadratureRule gauss_legendre(double lo, double hi, int nodes);

/// Jensen-Shannon divergence (nats) of two densities on the real line.
double jsd_quadrature_1d(const Density1d& density_a, const Density1d& density_b, double lo, double hi, int nodes = 4096);

/// JSD between the two branch marginals of a one-dimensional mixture at time t.
double jsd_quadrature_1d(const Mixture& spec, const Schedule& sched, const Partition& partition, double t, int nodes = 4096);

/// Fills u = t / t_s (NaN for a degenerate scale).
void set_rescaled_time(EntropyProfile& profile, const Speciation& scale);

/// Entropy estimates over `times` with Hdot from the Fisher form (all classes)
/// or from finite differences (partitioned).
EntropyProfile profile_sweep(const Mixture& spec, const Schedule& sched, std::span<const double> times, const McOptions& opts,
                             const std::optional<Partition>& partition = std::nullopt);

/// Least-squares non-decreasing fit (pool adjacent violators).
std::vector<double> isotonic_nondecreasing(std::span<const double> values);

/// Time where the isotonic-smoothed H first rises through `level` (linear
/// interpolation). Throws std::domain_error when the grid does not bracket it.
double upward_crossing(const EntropyProfile& profile, double level);

struct TransitionWindow {
  double t_lo{0.0};
  double t_hi{0.0};
  double width{0.0};
};

/// First upward crossings of `lo` and `hi` on the isotonic-smoothed profile.
TransitionWindow transition_window(const EntropyProfile& profile, double lo = 0.4, double hi = 0.6);

}  // namespace speciation
