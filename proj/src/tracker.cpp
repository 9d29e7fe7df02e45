#include "speciation/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "speciation/parallel.hpp"

namespace speciation {

namespace {

double clamp_gamma(double g) { return std::clamp(g, kGammaClamp, 1.0 - kGammaClamp); }

double log_odds_increment(const VectorXd& x_prev, const VectorXd& mean_a, const VectorXd& mean_b, double var) {
  const double da = (x_prev - mean_a).squaredNorm();
  const double db = (x_prev - mean_b).squaredNorm();
  if (!(var > 0.0)) {
    if (da == db) return 0.0;
    throw std::domain_error("update_posterior: zero transition variance with distinct transition means");
  }
  const double inc = (db - da) / (2.0 * var);
  if (!std::isfinite(inc)) throw std::domain_error("update_posterior: non-finite log-odds increment");
  return inc;
}

double apply_increment(double gamma, double inc) {
  const double logit = std::log(gamma) - std::log1p(-gamma) + inc;
  return clamp_gamma(1.0 / (1.0 + std::exp(-logit)));
}

double branch_term(double g) { return g * std::log(g) + (1.0 - g) * std::log1p(-g); }

VectorXd checked(const Denoiser& d, const VectorXd& x, double t) {
  VectorXd out = d(x, t);
  if (out.size() != x.size() || !out.allFinite()) throw std::domain_error("denoiser returned a non-finite or mis-sized state");
  return out;
}

std::uint64_t trajectory_key(int branch, std::uint64_t index) { return (std::uint64_t(branch) << 40) | index; }

}  // namespace

TrackerModels exact_denoisers(const Mixture& spec, const Schedule& sched, const Partition& partition) {
  partition.validate(spec.classes());
  const auto make = [&](ClassSet subset) -> Denoiser {
    return [spec, sched, subset = std::move(subset)](const VectorXd& x, double t) -> VectorXd {
      return denoiser(spec, sched, t, x, std::span<const Index>(subset));
    };
  };
  ClassSet everything(static_cast<std::size_t>(spec.classes()));
  for (Index k = 0; k < spec.classes(); ++k) everything[std::size_t(k)] = k;
  return {spec.dim(), make(partition.set_a), make(partition.branch_b(spec.classes())), make(everything)};
}

VectorXd score_from_denoiser(const Schedule& sched, const VectorXd& x, double t, const VectorXd& x0_hat) {
  const auto [alpha, sigma2] = alpha_sigma(sched, t);
  if (!(sigma2 > 0.0)) throw std::domain_error("score_from_denoiser: sigma_t = 0");
  return (alpha * x0_hat - x) / sigma2;
}

double update_posterior(double gamma, const VectorXd& x_t, const VectorXd& x_prev, double t, double h, const Denoiser& branch_a,
                        const Denoiser& branch_b, const Schedule& sched) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("update_posterior: gamma must lie in (0, 1)");
  if (!x_t.allFinite() || !x_prev.allFinite()) throw std::domain_error("update_posterior: non-finite state");
  const VectorXd mean_a = reverse_mean(sched, x_t, t, h, score_from_denoiser(sched, x_t, t, checked(branch_a, x_t, t)));
  const VectorXd mean_b = reverse_mean(sched, x_t, t, h, score_from_denoiser(sched, x_t, t, checked(branch_b, x_t, t)));
  return apply_increment(gamma, log_odds_increment(x_prev, mean_a, mean_b, reverse_variance(sched, t, h)));
}

PosteriorTrack track_trajectory(const TrackerModels& models, const Schedule& sched, std::span<const double> grid, int branch,
                                double prior_a, std::uint64_t seed, std::uint64_t index, const GuidanceConfig* guidance,
                                Trajectory* path) {
  if (grid.size() < 2) throw std::invalid_argument("track_trajectory: grid needs at least two points");
  if (branch != 0 && branch != 1) throw std::invalid_argument("track_trajectory: branch must be 0 or 1");
  const std::uint64_t key = trajectory_key(branch, index);

  StreamRng init(seed, stream::kTerminal, key);
  const double scale = sched.kind == ScheduleKind::VP ? 1.0 : sched.sigma(grid[0]);
  VectorXd x = scale * init.normal_vector(models.dim);

  PosteriorTrack track;
  track.branch = branch;
  track.gamma.reserve(grid.size());
  track.h.reserve(grid.size());
  double gamma = clamp_gamma(prior_a);
  track.gamma.push_back(gamma);
  track.h.push_back(branch_term(gamma));
  if (path) {
    path->times.assign(grid.begin(), grid.end());
    path->states.assign(1, x);
    path->condition = branch == 0 ? "A" : "B";
  }

  for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
    const double t = grid[j];
    const double h = t - grid[j + 1];
    const VectorXd s_a = score_from_denoiser(sched, x, t, checked(models.branch_a, x, t));
    const VectorXd s_b = score_from_denoiser(sched, x, t, checked(models.branch_b, x, t));
    VectorXd drive = branch == 0 ? s_a : s_b;
    if (guidance) {
      const VectorXd s_u = score_from_denoiser(sched, x, t, checked(models.unconditional, x, t));
      drive = guided_score(drive, s_u, sched, t, *guidance);
    }
    StreamRng rng(seed, stream::kReverse, key, j);
    const double var = reverse_variance(sched, t, h);
    VectorXd next = reverse_mean(sched, x, t, h, drive) + std::sqrt(var) * rng.normal_vector(x.size());
    if (!next.allFinite()) throw IntegrationError(int(j), "non-finite state while tracking");

    const double inc = log_odds_increment(next, reverse_mean(sched, x, t, h, s_a), reverse_mean(sched, x, t, h, s_b), var);
    gamma = apply_increment(gamma, inc);
    track.gamma.push_back(gamma);
    track.h.push_back(branch_term(gamma));
    x = std::move(next);
    if (path) path->states.push_back(x);
  }
  return track;
}

OnlineEstimate estimate_entropy_online(const TrackerModels& models, const Schedule& sched, const Partition& partition,
                                       const TrackerOptions& opts, const GuidanceConfig* guidance, const PosteriorOracle* oracle) {
  if (opts.steps < 2) throw std::invalid_argument("estimate_entropy_online: need at least 2 steps");
  if (opts.trajectories < 2) throw std::invalid_argument("estimate_entropy_online: need at least 2 trajectories per branch");
  if (!(partition.prior_a > 0.0 && partition.prior_a < 1.0)) throw std::invalid_argument("partition: prior_a must lie in (0, 1)");
  if (guidance) guidance->validate();

  const std::vector<double> grid = reverse_time_grid(sched, opts.t_start.value_or(sched.t_max), opts.steps, opts.t_end);
  const std::size_t rows = grid.size();
  const std::size_t n = opts.trajectories;

  // h[branch][trajectory * rows + step], err likewise.
  std::vector<double> h[2];
  std::vector<double> err[2];
  for (int b = 0; b < 2; ++b) {
    h[b].assign(n * rows, 0.0);
    err[b].assign(oracle ? n * rows : 0, 0.0);
    parallel_for(n, opts.threads, [&](std::size_t i) {
      Trajectory path;
      const PosteriorTrack track =
          track_trajectory(models, sched, grid, b, partition.prior_a, opts.seed, i, guidance, oracle ? &path : nullptr);
      std::copy(track.h.begin(), track.h.end(), h[b].begin() + std::ptrdiff_t(i * rows));
      if (oracle) {
        for (std::size_t j = 0; j < rows; ++j) {
          err[b][i * rows + j] = std::abs(track.gamma[j] - (*oracle)(path.states[j], grid[j]));
        }
      }
    });
  }

  OnlineEstimate out;
  EntropyProfile& p = out.profile;
  p.n_samples = n;
  p.seed = opts.seed;
  p.times.resize(rows);
  p.u.assign(rows, std::numeric_limits<double>::quiet_NaN());
  p.H.resize(rows);
  p.H_stderr.resize(rows);
  out.gamma_abs_err.assign(rows, std::numeric_limits<double>::quiet_NaN());

  const double weight[2] = {partition.prior_a, 1.0 - partition.prior_a};
  std::vector<double> column(n);
  std::vector<double> all_err;
  for (std::size_t j = 0; j < rows; ++j) {
    const std::size_t row = rows - 1 - j;  // ascending time
    p.times[row] = grid[j];
    double H = 0.0;
    double var = 0.0;
    for (int b = 0; b < 2; ++b) {
      for (std::size_t i = 0; i < n; ++i) column[i] = -h[b][i * rows + j];
      const MeanStderr ms = mean_stderr(column);
      H += weight[b] * ms.mean;
      var += weight[b] * weight[b] * ms.se * ms.se;
    }
    p.H[row] = H;
    p.H_stderr[row] = std::sqrt(var);
    if (oracle) {
      std::vector<double> e;
      e.reserve(2 * n);
      for (int b = 0; b < 2; ++b) {
        for (std::size_t i = 0; i < n; ++i) e.push_back(err[b][i * rows + j]);
      }
      out.gamma_abs_err[row] = compensated_sum(e) / double(e.size());
      all_err.insert(all_err.end(), e.begin(), e.end());
    }
  }
  if (oracle) out.mean_gamma_abs_err = compensated_sum(all_err) / double(all_err.size());

  const Derivative d = entropy_production_fd(p);
  p.Hdot = d.value;
  p.Hdot_stderr = d.se;
  return out;
}

DistortionProfile distortion_profile(const EntropyProfile& base, const EntropyProfile& guided) {
  if (base.times != guided.times) throw std::invalid_argument("distortion_profile: profiles are on different grids");
  const Derivative db = entropy_production_fd(base);
  const Derivative dg = entropy_production_fd(guided);
  DistortionProfile out{base.times, db.value, dg.value, std::vector<double>(base.times.size())};
  for (std::size_t j = 0; j < out.times.size(); ++j) out.delta[j] = dg.value[j] - db.value[j];
  return out;
}

}  // namespace speciation
