#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "speciation/tracker.hpp"

using namespace speciation;

namespace {

constexpr double kLn2 = std::numbers::ln2;

Denoiser constant(VectorXd v) {
  return [v](const VectorXd&, double) { return v; };
}

EntropyProfile logistic(double centre) {
  EntropyProfile p;
  for (int j = 0; j <= 120; ++j) {
    const double t = 0.05 * j;
    p.times.push_back(t);
    p.H.push_back(kLn2 / (1.0 + std::exp(-4.0 * (t - centre))));
    p.H_stderr.push_back(0.0);
  }
  return p;
}

}  // namespace

TEST_CASE("identical branch models leave the posterior at the prior") {
  const Mixture m = Mixture::symmetric_two_class(4, 1.0, 0.5);
  const Schedule vp = Schedule::vp(6.0);
  TrackerModels models = exact_denoisers(m, vp, Partition{{0}, {1}, 0.5, false});
  models.branch_b = models.branch_a;
  const auto grid = reverse_time_grid(vp, 6.0, 64);
  for (int b : {0, 1}) {
    const PosteriorTrack tr = track_trajectory(models, vp, grid, b, 0.5, 1, 0);
    for (std::size_t j = 0; j < grid.size(); ++j) {
      CHECK(tr.gamma[j] == 0.5);
      CHECK(tr.h[j] == doctest::Approx(-kLn2).epsilon(1e-15));
    }
  }
}

TEST_CASE("log-odds update arithmetic") {
  const Schedule vp = Schedule::vp();
  const VectorXd x = VectorXd::Constant(2, 0.3);
  const Denoiser a = constant(Eigen::Vector2d(1.0, 0.0));
  const Denoiser b = constant(Eigen::Vector2d(-1.0, 0.5));
  const double t = 1.0;
  const double h = 0.05;
  const VectorXd ma = reverse_mean(vp, x, t, h, score_from_denoiser(vp, x, t, a(x, t)));
  const VectorXd mb = reverse_mean(vp, x, t, h, score_from_denoiser(vp, x, t, b(x, t)));
  const double var = reverse_variance(vp, t, h);

  // Equidistant step: no information.
  const VectorXd mid = 0.5 * (ma + mb);
  CHECK(update_posterior(0.3, x, mid, t, h, a, b, vp) == doctest::Approx(0.3).epsilon(1e-12));

  // Hand-computed Bayes update with equal-variance Gaussian transitions.
  const VectorXd prev = ma + Eigen::Vector2d(0.01, -0.02);
  const double la = std::exp(-(prev - ma).squaredNorm() / (2.0 * var));
  const double lb = std::exp(-(prev - mb).squaredNorm() / (2.0 * var));
  const double expected = 0.3 * la / (0.3 * la + 0.7 * lb);
  CHECK(update_posterior(0.3, x, prev, t, h, a, b, vp) == doctest::Approx(expected).epsilon(1e-10));

  // Overwhelming evidence is clamped away from 0 and 1.
  const VectorXd far = ma + 1e4 * (ma - mb);
  CHECK(update_posterior(0.5, x, far, t, h, a, b, vp) == 1.0 - kGammaClamp);
  const VectorXd far_b = mb + 1e4 * (mb - ma);
  CHECK(update_posterior(0.5, x, far_b, t, h, a, b, vp) == kGammaClamp);
}

TEST_CASE("update errors") {
  const Schedule vp = Schedule::vp();
  const VectorXd x = VectorXd::Zero(2);
  const Denoiser a = constant(Eigen::Vector2d(1.0, 0.0));
  const Denoiser b = constant(Eigen::Vector2d(-1.0, 0.0));
  CHECK_THROWS_AS(update_posterior(0.0, x, x, 1.0, 0.1, a, b, vp), std::invalid_argument);
  CHECK_THROWS_AS(update_posterior(1.0, x, x, 1.0, 0.1, a, b, vp), std::invalid_argument);
  const Denoiser broken = constant(Eigen::Vector3d::Zero());
  CHECK_THROWS_AS(update_posterior(0.5, x, x, 1.0, 0.1, a, broken, vp), std::domain_error);
  CHECK_THROWS(score_from_denoiser(vp, x, 0.0, x));

  const Mixture m = Mixture::symmetric_two_class(2, 1.0, 1.0);
  const TrackerModels models = exact_denoisers(m, vp, Partition{{0}, {1}, 0.5, false});
  TrackerOptions opts;
  opts.steps = 1;
  CHECK_THROWS(estimate_entropy_online(models, vp, Partition{{0}, {1}, 0.5, false}, opts));
  opts.steps = 16;
  opts.trajectories = 1;
  CHECK_THROWS(estimate_entropy_online(models, vp, Partition{{0}, {1}, 0.5, false}, opts));
  CHECK_THROWS(exact_denoisers(m, vp, Partition{{0}, {0}, 0.5, false}));
}

TEST_CASE("online profile shape") {
  const Mixture m = Mixture::symmetric_two_class(8, 1.0, 1.0);
  const Schedule vp = Schedule::vp(10.0);
  const Partition split{{0}, {1}, 0.5, false};
  TrackerOptions opts;
  opts.steps = 128;
  opts.trajectories = 200;
  opts.seed = 3;
  const OnlineEstimate est = estimate_entropy_online(exact_denoisers(m, vp, split), vp, split, opts);
  const EntropyProfile& p = est.profile;
  REQUIRE(p.size() == 129);
  CHECK(p.times.front() == 0.0);
  CHECK(p.times.back() == 10.0);
  for (std::size_t j = 1; j < p.size(); ++j) CHECK(p.times[j] > p.times[j - 1]);
  // The track starts at the prior, so H is exactly ln 2 at the start time.
  CHECK(p.H.back() == doctest::Approx(kLn2).epsilon(1e-6));
  for (double v : p.H) {
    CHECK(v >= 0.0);
    CHECK(v <= kLn2 + 1e-12);
  }
  CHECK(p.H.front() < 0.05);
  CHECK(std::isnan(est.mean_gamma_abs_err));

  // Per-step terms lie in [-ln 2, 0].
  const auto grid = reverse_time_grid(vp, 10.0, 128);
  const PosteriorTrack tr = track_trajectory(exact_denoisers(m, vp, split), vp, grid, 1, 0.5, 3, 17);
  for (double v : tr.h) {
    CHECK(v <= 0.0);
    CHECK(v >= -kLn2 - 1e-15);
  }
  CHECK(tr.gamma.back() < 0.5);

  // Worker count does not change the result.
  opts.threads = 4;
  const OnlineEstimate again = estimate_entropy_online(exact_denoisers(m, vp, split), vp, split, opts);
  CHECK(again.profile.H == p.H);
}

TEST_CASE("online estimate agrees with the closed-form partitioned entropy") {
  const Mixture m = Mixture::symmetric_two_class(8, 1.0, 1.0);
  const Schedule vp = Schedule::vp(10.0);
  const Partition split{{0}, {1}, 0.5, false};
  TrackerOptions opts;
  opts.steps = 256;
  opts.trajectories = 1000;
  opts.seed = 5;
  opts.threads = 2;
  const OnlineEstimate est = estimate_entropy_online(exact_denoisers(m, vp, split), vp, split, opts);
  const EntropyProfile& p = est.profile;
  for (std::size_t row : {20UL, 40UL, 60UL, 100UL}) {
    const Estimate ref = partitioned_entropy_mc(m, vp, split, p.times[row], McOptions{20000, 1, 2});
    const double se = std::hypot(ref.se, p.H_stderr[row]);
    MESSAGE("t " << p.times[row] << " online " << p.H[row] << " closed form " << ref.value << " se " << se);
    CHECK(std::abs(p.H[row] - ref.value) < 3.0 * se);
  }
}

TEST_CASE("posterior tracking follows the oracle") {
  const Mixture m = Mixture::symmetric_two_class(8, 1.0, 1.0);
  const Schedule vp = Schedule::vp(10.0);
  const Partition split{{0}, {1}, 0.5, false};
  const PosteriorOracle oracle = [&](const VectorXd& x, double t) {
    return partition_posterior(m, component_stats(m, vp, t), split, x);
  };
  TrackerOptions opts;
  opts.steps = 256;
  opts.trajectories = 100;
  const OnlineEstimate est = estimate_entropy_online(exact_denoisers(m, vp, split), vp, split, opts, nullptr, &oracle);
  CHECK(est.mean_gamma_abs_err < 0.02);
  // At the start time the track sits at the prior and the oracle is within e^-10 of it.
  CHECK(est.gamma_abs_err.back() < 1e-3);
}

TEST_CASE("omega = 1 guidance leaves the profile unchanged") {
  const Mixture m = Mixture::symmetric_two_class(4, 1.0, 1.0);
  const Schedule vp = Schedule::vp(8.0);
  const Partition split{{0}, {1}, 0.5, false};
  TrackerOptions opts;
  opts.steps = 64;
  opts.trajectories = 50;
  const TrackerModels models = exact_denoisers(m, vp, split);
  const OnlineEstimate base = estimate_entropy_online(models, vp, split, opts);
  GuidanceConfig g;
  g.omega = 1.0;
  const OnlineEstimate guided = estimate_entropy_online(models, vp, split, opts, &g);
  CHECK(base.profile.H == guided.profile.H);
  const DistortionProfile d = distortion_profile(base.profile, guided.profile);
  for (double v : d.delta) CHECK(v == 0.0);

  g.omega = 3.0;
  const OnlineEstimate strong = estimate_entropy_online(models, vp, split, opts, &g);
  CHECK(strong.profile.H != base.profile.H);
}

TEST_CASE("distortion profile") {
  const EntropyProfile base = logistic(3.0);
  const DistortionProfile same = distortion_profile(base, base);
  for (double v : same.delta) CHECK(v == 0.0);

  // Guided crossing moved to lower t: production rises earlier, then falls below the base.
  const DistortionProfile shifted = distortion_profile(base, logistic(2.5));
  const auto at = [&](double t) {
    for (std::size_t j = 0; j < shifted.times.size(); ++j)
      if (std::abs(shifted.times[j] - t) < 1e-9) return shifted.delta[j];
    return std::nan("");
  };
  CHECK(at(2.0) > 0.0);
  CHECK(at(2.5) > 0.0);
  CHECK(at(3.5) < 0.0);
  CHECK(at(4.0) < 0.0);

  EntropyProfile other = base;
  other.times.back() += 1.0;
  CHECK_THROWS_AS(distortion_profile(base, other), std::invalid_argument);
}
