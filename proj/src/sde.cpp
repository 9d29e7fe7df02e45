#include "speciation/sde.hpp"

#include <cmath>

namespace speciation {

VectorXd forward_sample(const Mixture& spec, const Schedule& sched, double t, Index k, StreamRng& rng) {
  if (k < 0 || k >= spec.classes()) throw std::out_of_range("forward_sample: class index out of range");
  const auto [alpha, sigma2] = alpha_sigma(sched, t);
  const double v = alpha * alpha * spec.sigma0 * spec.sigma0 + sigma2;
  VectorXd x = alpha * spec.means.col(k);
  if (v > 0.0) x += std::sqrt(v) * rng.normal_vector(spec.dim());
  return x;
}

VectorXd terminal_sample(const Mixture& spec, const Schedule& sched, double t_start, StreamRng& rng) {
  sched.check_time(t_start);
  const double scale = sched.kind == ScheduleKind::VP ? 1.0 : sched.sigma(t_start);
  return scale * rng.normal_vector(spec.dim());
}

std::vector<double> reverse_time_grid(const Schedule& sched, double t_start, int steps, double t_end) {
  if (steps < 1) throw std::invalid_argument("reverse_time_grid: steps must be >= 1");
  sched.check_time(t_start);
  std::vector<double> grid(std::size_t(steps) + 1);
  if (sched.kind == ScheduleKind::VP) {
    if (!(t_end >= 0.0 && t_end < t_start)) throw std::invalid_argument("reverse_time_grid: need 0 <= t_end < t_start");
    for (int j = 0; j <= steps; ++j) grid[j] = t_start + (t_end - t_start) * double(j) / double(steps);
    grid.back() = t_end;
  } else {
    if (!(kEdmSigmaMin < t_start)) throw std::invalid_argument("reverse_time_grid: EDM t_start must exceed sigma_min");
    const double hi = std::pow(t_start, 1.0 / kEdmRho);
    const double lo = std::pow(kEdmSigmaMin, 1.0 / kEdmRho);
    for (int j = 0; j <= steps; ++j) grid[j] = std::pow(hi + double(j) / double(steps) * (lo - hi), kEdmRho);
    grid.front() = t_start;
    grid.back() = kEdmSigmaMin;
  }
  return grid;
}

VectorXd guided_score(const VectorXd& s_cond, const VectorXd& s_uncond, double sigma_t, const GuidanceConfig& cfg) {
  if (s_cond.size() != s_uncond.size()) throw std::invalid_argument("guided_score: score dimensions differ");
  if (!cfg.active(sigma_t)) return s_cond;
  // Written around s_cond so that omega = 1 reproduces it bit for bit.
  return s_cond + (cfg.omega - 1.0) * (s_cond - s_uncond);
}

VectorXd guided_score(const VectorXd& s_cond, const VectorXd& s_uncond, const Schedule& sched, double t, const GuidanceConfig& cfg) {
  return guided_score(s_cond, s_uncond, sched.sigma(t), cfg);
}

VectorXd reverse_mean(const Schedule& sched, const VectorXd& x, double t, double h, const VectorXd& score) {
  const double g2 = diffusion_coeff(sched, t);
  const double c = drift_coeff(sched, t);
  return x - (c * x - g2 * score) * h;
}

Trajectory integrate_reverse(const ScoreField& score, const Schedule& sched, std::span<const double> grid, VectorXd x_start,
                             std::uint64_t seed, std::uint64_t key, const Guidance* guidance) {
  if (grid.size() < 2) throw std::invalid_argument("integrate_reverse: grid needs at least two points");
  for (std::size_t j = 1; j < grid.size(); ++j) {
    if (!(grid[j] < grid[j - 1])) throw std::invalid_argument("integrate_reverse: grid must be strictly decreasing");
  }
  if (guidance) guidance->config.validate();

  Trajectory traj;
  traj.times.assign(grid.begin(), grid.end());
  traj.states.reserve(grid.size());
  traj.states.push_back(std::move(x_start));

  for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
    const double t = grid[j];
    const double h = t - grid[j + 1];
    const VectorXd& x = traj.states.back();
    VectorXd s = score(x, t);
    if (guidance) s = guided_score(s, guidance->unconditional(x, t), sched, t, guidance->config);
    StreamRng rng(seed, stream::kReverse, key, j);
    VectorXd next = reverse_mean(sched, x, t, h, s) + std::sqrt(reverse_variance(sched, t, h)) * rng.normal_vector(x.size());
    if (!next.allFinite()) throw IntegrationError(int(j), "non-finite state");
    traj.states.push_back(std::move(next));
  }
  return traj;
}

ScoreField mixture_score_field(const Mixture& spec, const Schedule& sched, ClassSet subset) {
  return [spec, sched, subset = std::move(subset)](const VectorXd& x, double t) -> VectorXd {
    const auto stats = component_stats(spec, sched, t);
    if (subset.empty()) return mixture_score(spec, stats, x);
    return mixture_score(spec, stats, x, std::span<const Index>(subset));
  };
}

}  // namespace speciation
