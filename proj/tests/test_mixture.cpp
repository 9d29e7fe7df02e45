#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "speciation/mixture.hpp"

using namespace speciation;

namespace {

Mixture line(double a, double b, double sigma0) {
  Eigen::MatrixXd means(1, 2);
  means << a, b;
  return Mixture::equiprobable(means, sigma0);
}

Eigen::VectorXd scalar(double x) { return Eigen::VectorXd::Constant(1, x); }

// Random mixture with unequal priors, for property checks.
Mixture random_mixture(std::mt19937_64& gen, Index d, Index n) {
  std::normal_distribution<double> z;
  Eigen::MatrixXd means(d, n);
  for (Index i = 0; i < means.size(); ++i) means.data()[i] = 2.0 * z(gen);
  Eigen::VectorXd w(n);
  for (Index k = 0; k < n; ++k) w[k] = 0.2 + std::abs(z(gen));
  w /= w.sum();
  Mixture m{means, 0.7, w.array().log().matrix()};
  m.validate();
  return m;
}

}  // namespace

TEST_CASE("component stats reference values") {
  const Mixture unit = Mixture::symmetric_two_class(3, 1.0, 1.0);
  for (double t : {0.0, 0.5, 3.0}) CHECK(component_stats(unit, Schedule::vp(), t).v == doctest::Approx(1.0).epsilon(1e-14));

  const Stats s = component_stats(line(1.0, -1.0, 0.0), Schedule::vp(), std::log(2.0));
  CHECK(s.m(0, 0) == doctest::Approx(0.5));
  CHECK(s.m(0, 1) == doctest::Approx(-0.5));
  CHECK(s.v == doctest::Approx(0.75));

  CHECK(component_stats(unit, Schedule::edm(), 2.0).v == doctest::Approx(5.0));
}

TEST_CASE("posterior reference values") {
  const Mixture m = line(1.0, -1.0, 0.0);
  const Schedule vp = Schedule::vp();
  const double t = std::log(2.0);
  // 1 / (1 + exp(-2/3)) from a 25-digit evaluation.
  CHECK(posterior(m, vp, t, scalar(0.5))[0] == doctest::Approx(0.6607563687658172).epsilon(1e-13));
  CHECK(log_ratio(m, vp, t, scalar(0.5), 0, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-13));

  const Eigen::VectorXd half = posterior(m, vp, t, scalar(0.0));
  CHECK(half[0] == doctest::Approx(0.5));
  CHECK(half[1] == doctest::Approx(0.5));

  Eigen::MatrixXd single(2, 1);
  single << 0.3, -0.2;
  CHECK(posterior(Mixture::equiprobable(single, 1.0), vp, 0.4, Eigen::Vector2d(5, 5))[0] == 1.0);
}

TEST_CASE("posterior is stable far from every mean") {
  const Mixture m = line(1.0, -1.0, 0.01);
  const Eigen::VectorXd g = posterior(m, Schedule::vp(), 0.0, scalar(1e4));
  CHECK(g.allFinite());
  CHECK(g[0] == 1.0);
}

TEST_CASE("posterior properties on random mixtures") {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 20; ++trial) {
    const Mixture m = random_mixture(gen, 5, 4);
    const Schedule sched = trial % 2 ? Schedule::vp() : Schedule::edm();
    const double t = 0.2 + 0.3 * (trial % 5);
    const Stats st = component_stats(m, sched, t);
    Eigen::VectorXd x(5);
    for (Index i = 0; i < 5; ++i) x[i] = 2.0 * z(gen);
    const Eigen::VectorXd g = posterior(m, st, x);
    CHECK(g.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((g.array() >= 0.0).all());
    for (Index i = 0; i < 4; ++i) {
      for (Index k = 0; k < 4; ++k) {
        const double lam = log_ratio(m, st, x, i, k);
        CHECK(lam == doctest::Approx(std::log(g[i] / g[k])).epsilon(1e-9));
        CHECK(lam == doctest::Approx(-log_ratio(m, st, x, k, i)));
      }
      CHECK(log_ratio(m, st, x, i, i) == 0.0);
    }
  }
}

TEST_CASE("subset posterior renormalizes and zeroes the rest") {
  std::mt19937_64 gen(3);
  const Mixture m = random_mixture(gen, 3, 4);
  const Stats st = component_stats(m, Schedule::vp(), 0.5);
  const Eigen::Vector3d x(0.3, -0.1, 0.8);
  const ClassSet subset{1, 3};
  const Eigen::VectorXd full = posterior(m, st, x);
  const Eigen::VectorXd sub = posterior(m, st, x, std::span<const Index>(subset));
  CHECK(sub[0] == 0.0);
  CHECK(sub[2] == 0.0);
  CHECK(sub[1] == doctest::Approx(full[1] / (full[1] + full[3])));
  const ClassSet empty;
  CHECK_THROWS(posterior(m, st, x, std::span<const Index>(empty)));
  const ClassSet bad{7};
  CHECK_THROWS_AS(posterior(m, st, x, std::span<const Index>(bad)), std::out_of_range);
}

TEST_CASE("evidence statistics") {
  const Evidence e = evidence_stats(line(1.0, -1.0, 0.0), Schedule::vp(), std::log(2.0), 0, 1);
  CHECK(e.m_ik == doctest::Approx(2.0 / 3.0));
  CHECK(e.v_ik == doctest::Approx(4.0 / 3.0));
  CHECK(e.snr == doctest::Approx(1.0 / 3.0));
  CHECK(evidence_stats(line(1.0, -1.0, 1.0), Schedule::vp(), 0.0, 0, 1).snr == doctest::Approx(1.0));
  const Evidence z = evidence_stats(line(0.4, 0.4, 1.0), Schedule::vp(), 1.0, 0, 1);
  CHECK(z.m_ik == 0.0);
  CHECK(z.v_ik == 0.0);
  CHECK(z.snr == 0.0);
  CHECK_THROWS(evidence_stats(line(0.4, 0.4, 1.0), Schedule::vp(), 1.0, 1, 1));

  std::mt19937_64 gen(5);
  const Mixture m = random_mixture(gen, 4, 3);
  const Evidence r = evidence_stats(m, Schedule::edm(), 1.3, 0, 2);
  CHECK(r.m_ik == doctest::Approx(2.0 * r.snr));
  CHECK(r.v_ik == doctest::Approx(4.0 * r.snr));
}

TEST_CASE("evidence statistics match sampled log-ratios") {
  // Lambda_01 under Z = 0 should be N(m_01, v_01).
  const Mixture m = line(0.8, -0.4, 0.5);
  const Schedule vp = Schedule::vp();
  const double t = 0.4;
  const Stats st = component_stats(m, vp, t);
  std::mt19937_64 gen(9);
  std::normal_distribution<double> z;
  const int n = 200000;
  double sum = 0.0;
  double sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = st.m(0, 0) + std::sqrt(st.v) * z(gen);
    const double lam = log_ratio(m, st, scalar(x), 0, 1);
    sum += lam;
    sum2 += lam * lam;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  const Evidence e = evidence_stats(m, vp, t, 0, 1);
  CHECK(std::abs(mean - e.m_ik) < 4.0 * std::sqrt(e.v_ik / n));
  CHECK(var == doctest::Approx(e.v_ik).epsilon(0.02));
}

TEST_CASE("asymptotic snr") {
  const Schedule vp = Schedule::vp(20.0);
  CHECK(snr_asymptotic(vp, 50, 1.0, 0.0) == doctest::Approx(50.0));
  CHECK(snr_asymptotic(vp, 100, 1.0, 0.5 * std::log(100.0)) == doctest::Approx(1.0));
  CHECK(snr_asymptotic(vp, 100, 1.0, 20.0) < 1e-14);
  CHECK_THROWS(snr_asymptotic(Schedule::edm(), 10, 1.0, 1.0));
}

TEST_CASE("component and mixture scores") {
  const Schedule vp = Schedule::vp();
  const Mixture m = line(1.0, -1.0, 0.0);
  const double t = std::log(2.0);
  CHECK(component_score(m, vp, t, scalar(0.5), 0)[0] == doctest::Approx(0.0));
  CHECK(component_score(m, vp, t, scalar(1.25), 0)[0] == doctest::Approx(-1.0));
  CHECK(mixture_score(m, vp, t, scalar(0.0))[0] == doctest::Approx(0.0));

  Eigen::MatrixXd origin = Eigen::MatrixXd::Zero(3, 1);
  const Mixture standard = Mixture::equiprobable(origin, 1.0);
  const Eigen::Vector3d x(0.4, -1.1, 2.0);
  for (double tt : {0.0, 0.7, 5.0}) {
    CHECK((component_score(standard, vp, tt, x, 0) + x).norm() < 1e-14);
    CHECK((mixture_score(standard, vp, tt, x) - component_score(standard, vp, tt, x, 0)).norm() < 1e-14);
  }
}

TEST_CASE("mixture score matches finite differences of the quadrature density") {
  // p_t(x) = int p_0(x0) N(x; alpha x0, sigma^2) dx0, evaluated by Simpson over x0.
  Eigen::MatrixXd means(1, 3);
  means << 1.2, -0.7, 0.1;
  Eigen::VectorXd w(3);
  w << 0.5, 0.3, 0.2;
  const Mixture m{means, 0.4, w.array().log().matrix()};
  for (const auto& [sched, t] : {std::pair{Schedule::vp(), 0.3}, std::pair{Schedule::edm(), 0.8}}) {
    const auto [alpha, sigma2] = alpha_sigma(sched, t);
    const auto density = [&](double x) {
      return oracle::simpson(
          [&](double x0) {
            double prior = 0.0;
            for (Index k = 0; k < 3; ++k) prior += w[k] * oracle::normal_pdf(x0, means(0, k), m.sigma0 * m.sigma0);
            return prior * oracle::normal_pdf(x, alpha * x0, sigma2);
          },
          -5.0, 5.0, 40000);
    };
    for (double x : {-1.3, -0.2, 0.35, 1.7}) {
      const double h = 1e-4;
      const double fd = (std::log(density(x + h)) - std::log(density(x - h))) / (2 * h);
      CHECK(std::abs(mixture_score(m, sched, t, scalar(x))[0] - fd) < 1e-6);
    }
  }
}

TEST_CASE("denoiser matches quadrature posterior mean") {
  Eigen::MatrixXd means(1, 2);
  means << 1.0, -0.5;
  Eigen::VectorXd w(2);
  w << 0.35, 0.65;
  const Mixture m{means, 0.6, w.array().log().matrix()};
  for (const auto& [sched, t] : {std::pair{Schedule::vp(), 0.6}, std::pair{Schedule::edm(), 1.1}}) {
    const auto [alpha, sigma2] = alpha_sigma(sched, t);
    for (double x : {-0.9, 0.2, 1.4}) {
      const auto joint = [&](double x0) {
        const double prior = w[0] * oracle::normal_pdf(x0, 1.0, 0.36) + w[1] * oracle::normal_pdf(x0, -0.5, 0.36);
        return prior * oracle::normal_pdf(x, alpha * x0, sigma2);
      };
      const double z = oracle::simpson(joint, -6.0, 6.0, 40000);
      const double num = oracle::simpson([&](double x0) { return x0 * joint(x0); }, -6.0, 6.0, 40000);
      CHECK(std::abs(denoiser(m, sched, t, scalar(x))[0] - num / z) < 1e-6);
    }
  }
}

TEST_CASE("denoiser identities") {
  const Schedule vp = Schedule::vp();
  std::mt19937_64 gen(21);
  Mixture m = random_mixture(gen, 4, 3);
  const Eigen::Vector4d x(0.2, -0.3, 1.5, 0.0);
  // t = 0 with sigma0 > 0 returns the input.
  CHECK((denoiser(m, vp, 0.0, x) - x).norm() < 1e-12);
  // Tweedie: D = (x + sigma^2 s) / alpha.
  for (double t : {0.1, 0.9, 2.5}) {
    const Stats st = component_stats(m, vp, t);
    const Eigen::VectorXd tweedie = (x + st.sigma2 * mixture_score(m, st, x)) / st.alpha;
    CHECK((denoiser(m, st, x) - tweedie).norm() < 1e-10);
  }
  // sigma0 = 0: weighted mean of the means.
  m.sigma0 = 0.0;
  const Stats st = component_stats(m, vp, 0.8);
  CHECK((denoiser(m, st, x) - m.means * posterior(m, st, x)).norm() < 1e-12);
}

TEST_CASE("degenerate and invalid inputs") {
  const Mixture point = line(1.0, -1.0, 0.0);
  CHECK_THROWS_AS(posterior(point, Schedule::vp(), 0.0, scalar(0.3)), DegenerateVariance);
  CHECK_THROWS_AS(posterior(point, Schedule::vp(), 0.5, Eigen::Vector2d(0, 0)), std::invalid_argument);
  CHECK_THROWS_AS(posterior(point, Schedule::vp(), 0.5, scalar(std::nan(""))), std::domain_error);

  Eigen::MatrixXd means(1, 2);
  means << 0.0, 1.0;
  CHECK_THROWS((Mixture{means, 1.0, Eigen::Vector2d(std::log(0.6), std::log(0.6))}.validate()));
  CHECK_THROWS((Mixture{means, -1.0, Eigen::Vector2d(std::log(0.5), std::log(0.5))}.validate()));
}

TEST_CASE("hierarchical builder") {
  const HierarchyLevel one[] = {{1.5, 2}};
  const Mixture a = hierarchical_mixture<double>(one, 4, 0.3);
  CHECK(a.classes() == 2);
  CHECK(a.means(0, 0) == 1.5);
  CHECK(a.means(0, 1) == -1.5);
  CHECK(a.means.bottomRows(3).norm() == 0.0);

  const HierarchyLevel two[] = {{3.0, 2}, {0.5, 2}};
  const Mixture b = hierarchical_mixture<double>(two, 5, 0.3);
  CHECK(b.classes() == 4);
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(5, 4);
  expected.topRows(2) << 3.0, 3.0, -3.0, -3.0, 0.5, -0.5, 0.5, -0.5;
  CHECK((b.means - expected).norm() == 0.0);
  for (Index i = 0; i < 4; ++i) {
    for (Index k = 0; k < 4; ++k) {
      const double c1 = (i / 2 != k / 2) ? 6.0 : 0.0;
      const double c2 = (i % 2 != k % 2) ? 1.0 : 0.0;
      CHECK(b.delta2(i, k) * 5.0 == doctest::Approx(c1 * c1 + c2 * c2));
    }
  }

  const HierarchyLevel wide[] = {{2.0, 3}};
  const Mixture c = hierarchical_mixture<double>(wide, 3, 1.0);
  CHECK((c.means - 2.0 * Eigen::MatrixXd::Identity(3, 3)).norm() == 0.0);

  const HierarchyLevel bad[] = {{1.0, 1}};
  CHECK_THROWS(hierarchical_mixture<double>(bad, 3, 1.0));
  CHECK_THROWS(hierarchical_mixture<double>(two, 1, 1.0));
  const HierarchyLevel many[] = {{1.0, 64}, {1.0, 128}};
  CHECK_THROWS(hierarchical_mixture<double>(many, 200, 1.0));
}

TEST_CASE("scalings") {
  const Mixture m = Mixture::symmetric_two_class(50, 0.25, 1.0);
  CHECK(m.q(0) == doctest::Approx(0.25));
  CHECK(m.delta2(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("mean-span reduction preserves posteriors") {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> z;
  const Index d = 40;
  Eigen::MatrixXd means(d, 3);
  for (Index i = 0; i < means.size(); ++i) means.data()[i] = z(gen);
  const Mixture full = Mixture::equiprobable(means, 0.8);
  const Mixture reduced = reduce_to_mean_span(full);
  CHECK(reduced.dim() == 3);
  // Pairwise geometry is kept.
  for (Index i = 0; i < 3; ++i) {
    for (Index k = 0; k < 3; ++k) {
      CHECK((reduced.means.col(i) - reduced.means.col(k)).norm() == doctest::Approx((means.col(i) - means.col(k)).norm()));
    }
  }
  // Project a full-space state and compare posteriors.
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(means);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, 3);
  const Schedule vp = Schedule::vp();
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd x(d);
    for (Index i = 0; i < d; ++i) x[i] = z(gen);
    const Eigen::VectorXd gf = posterior(full, vp, 0.4, x);
    const Eigen::VectorXd gr = posterior(reduced, vp, 0.4, Eigen::VectorXd(q.transpose() * x));
    CHECK((gf - gr).norm() < 1e-10);
  }
  // Already full rank: unchanged.
  const Mixture small = line(1.0, -1.0, 1.0);
  CHECK(reduce_to_mean_span(small).means == small.means);
}

TEST_CASE("log mixture density is normalized") {
  Eigen::MatrixXd means(1, 3);
  means << -1.0, 0.5, 2.0;
  const Mixture m = Mixture::equiprobable(means, 0.5);
  const Stats st = component_stats(m, Schedule::vp(), 0.3);
  const ClassSet sub{0, 2};
  const double total = oracle::simpson([&](double x) { return std::exp(log_mixture_density(m, st, scalar(x))); }, -12, 12);
  const double part =
      oracle::simpson([&](double x) { return std::exp(log_mixture_density(m, st, scalar(x), std::span<const Index>(sub))); }, -12, 12);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(part == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("float instantiation") {
  Eigen::MatrixXf means(1, 2);
  means << 1.0f, -1.0f;
  const auto m = MixtureSpec<float>::equiprobable(means, 0.0f);
  const auto g = posterior(m, NoiseSchedule<float>::vp(), float(std::log(2.0)), Eigen::VectorXf::Constant(1, 0.5f));
  CHECK(g[0] == doctest::Approx(0.66075637).epsilon(1e-5));
}
