#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "speciation/mixture.hpp"
#include "speciation/random.hpp"
#include "speciation/schedule.hpp"

namespace speciation {

/// Stream tags keep the counter-based streams of different estimators apart.
namespace stream {
inline constexpr std::uint64_t kForwardEntropy = 0x11;
inline constexpr std::uint64_t kForwardFisher = 0x12;
inline constexpr std::uint64_t kForwardPartition = 0x13;
inline constexpr std::uint64_t kTerminal = 0x21;
inline constexpr std::uint64_t kReverse = 0x22;
}  // namespace stream

using ScoreField = std::function<VectorXd(const VectorXd& x, double t)>;

/// Reverse-time path; times strictly decreasing, one state per time.
struct Trajectory {
  std::vector<double> times;
  std::vector<VectorXd> states;
  std::string condition;
};

/// Classifier-free guidance, active only while sigma_t lies in [sigma_low, sigma_high].
/// omega = 1 is the pure conditional score.
struct GuidanceConfig {
  double omega{1.0};
  double sigma_low{0.0};
  double sigma_high{std::numeric_limits<double>::infinity()};
  ClassSet cond_subset;
  ClassSet uncond_subset;

  void validate() const {
    if (!std::isfinite(omega)) throw std::invalid_argument("guidance: omega must be finite");
    if (!(sigma_low <= sigma_high)) throw std::invalid_argument("guidance: sigma_low must be <= sigma_high");
  }

  bool active(double sigma) const { return sigma >= sigma_low && sigma <= sigma_high; }
};

class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(int step, const std::string& what)
      : std::runtime_error("reverse integration diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

/// Draws X_t | Z = k, i.e. N(alpha_t mu_k, v(t) I).
VectorXd forward_sample(const Mixture& spec, const Schedule& sched, double t, Index k, StreamRng& rng);

/// Starting state for reverse integration: N(0, I) for VP, N(0, sigma(t_start)^2 I) for EDM.
VectorXd terminal_sample(const Mixture& spec, const Schedule& sched, double t_start, StreamRng& rng);

inline constexpr double kEdmSigmaMin = 0.002;
inline constexpr double kEdmRho = 7.0;

/// Descending grid t_start = tau_0 > ... > tau_steps. VP is uniform in t down
/// to t_end; EDM uses the rho = 7 sigma warp down to sigma_min = 0.002.
std::vector<double> reverse_time_grid(const Schedule& sched, double t_start, int steps, double t_end = 0.0);

/// s_cond + (omega - 1)(s_cond - s_uncond) inside the interval, s_cond outside.
VectorXd guided_score(const VectorXd& s_cond, const VectorXd& s_uncond, double sigma_t, const GuidanceConfig& cfg);
VectorXd guided_score(const VectorXd& s_cond, const VectorXd& s_uncond, const Schedule& sched, double t, const GuidanceConfig& cfg);

/// Mean of one Euler-Maruyama reverse step of size h from (x, t):
/// x - (f(x, t) - g_t^2 s) h.
VectorXd reverse_mean(const Schedule& sched, const VectorXd& x, double t, double h, const VectorXd& score);

/// Variance g_t^2 h of one reverse step.
inline double reverse_variance(const Schedule& sched, double t, double h) { return diffusion_coeff(sched, t) * h; }

struct Guidance {
  GuidanceConfig config;
  ScoreField unconditional;
};

/// Euler-Maruyama integration of dX = (f - g^2 s) dt + g dW in reverse time
/// along `grid`. Noise for step j comes from stream (seed, kReverse, key, j).
Trajectory integrate_reverse(const ScoreField& score, const Schedule& sched, std::span<const double> grid, VectorXd x_start,
                             std::uint64_t seed, std::uint64_t key, const Guidance* guidance = nullptr);

/// Exact (sub-)mixture score as a field; empty subset means all classes.
ScoreField mixture_score_field(const Mixture& spec, const Schedule& sched, ClassSet subset = {});

}  // namespace speciation
