#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "speciation/entropy.hpp"
#include "speciation/mixture.hpp"
#include "speciation/schedule.hpp"
#include "speciation/sde.hpp"

namespace speciation {

/// Predicted clean state x0_hat = D(x, t), with t in schedule time units.
///
/// This is the seam for trained models: any callable returning a finite
/// vector of the same dimension as x can stand in for the exact mixture
/// denoisers shipped here.
using Denoiser = std::function<VectorXd(const VectorXd& x, double t)>;

/// Denoisers for the two partition branches plus the unconditional model
/// used as the reference score under guidance.
struct TrackerModels {
  Index dim{0};
  Denoiser branch_a;
  Denoiser branch_b;
  Denoiser unconditional;
};

/// Exact mixture denoisers; branch B is the full mixture under complement_proxy.
TrackerModels exact_denoisers(const Mixture& spec, const Schedule& sched, const Partition& partition);

/// Tweedie: s = (alpha_t x0_hat - x) / sigma_t^2.
VectorXd score_from_denoiser(const Schedule& sched, const VectorXd& x, double t, const VectorXd& x0_hat);

inline constexpr double kGammaClamp = 1e-12;

/// One tracking step. `gamma` is the running posterior of branch A. Both
/// branches propose a Gaussian reverse transition from (x_t, t) with mean
/// reverse_mean(score_y) and shared variance g_t^2 h; the log-odds move by
/// (||x_prev - m_B||^2 - ||x_prev - m_A||^2) / (2 g_t^2 h).
double update_posterior(double gamma, const VectorXd& x_t, const VectorXd& x_prev, double t, double h, const Denoiser& branch_a,
                        const Denoiser& branch_b, const Schedule& sched);

struct PosteriorTrack {
  int branch{0};  // 0 = A, 1 = B
  std::vector<double> gamma;
  std::vector<double> h;  // gamma log gamma + (1 - gamma) log(1 - gamma), <= 0
};

struct TrackerOptions {
  int steps{256};
  std::size_t trajectories{1000};  // per branch
  std::uint64_t seed{0};
  int threads{1};
  std::optional<double> t_start;  // defaults to sched.t_max
  double t_end{0.0};              // VP only; EDM ends at sigma_min
};

/// Closed-form gamma_A(x, t), when available, for diagnostics.
using PosteriorOracle = std::function<double(const VectorXd& x, double t)>;

struct OnlineEstimate {
  EntropyProfile profile;            // ascending in t
  std::vector<double> gamma_abs_err; // mean |gamma - oracle| per profile row (NaN without oracle)
  double mean_gamma_abs_err{std::numeric_limits<double>::quiet_NaN()};
};

/// Online estimate of H[pi(Z) | X_t] along reverse trajectories. Each branch
/// runs `trajectories` paths driven by its own denoiser (guided against the
/// unconditional one when `guidance` is set) while the posterior is updated
/// with the unguided branch denoisers.
OnlineEstimate estimate_entropy_online(const TrackerModels& models, const Schedule& sched, const Partition& partition,
                                       const TrackerOptions& opts, const GuidanceConfig* guidance = nullptr,
                                       const PosteriorOracle* oracle = nullptr);

/// Single-trajectory track, exposed for inspection and tests.
PosteriorTrack track_trajectory(const TrackerModels& models, const Schedule& sched, std::span<const double> grid, int branch,
                                double prior_a, std::uint64_t seed, std::uint64_t index, const GuidanceConfig* guidance = nullptr,
                                Trajectory* path = nullptr);

struct DistortionProfile {
  std::vector<double> times;
  std::vector<double> hdot_base;
  std::vector<double> hdot_guided;
  std::vector<double> delta;  // guided - base; > 0 means more production
};

DistortionProfile distortion_profile(const EntropyProfile& base, const EntropyProfile& guided);

}  // namespace speciation
