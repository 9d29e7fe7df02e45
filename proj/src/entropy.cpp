#include "speciation/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

#include "speciation/parallel.hpp"
#include "speciation/random.hpp"
#include "speciation/sde.hpp"

namespace speciation {

namespace {

constexpr std::uint64_t kFisherStratified = 0x14;

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// Binary entropy of sigmoid(z).
double binary_entropy_logit(double z) {
  const double g = 1.0 / (1.0 + std::exp(-z));
  return g * softplus(-z) + (1.0 - g) * softplus(z);
}

// Picks a class from `classes` with probabilities proportional to exp(log_priors).
Index draw_class(const Mixture& spec, std::span<const Index> classes, double u) {
  double total = 0.0;
  for (Index k : classes) total += std::exp(spec.log_priors[k]);
  double acc = 0.0;
  for (Index k : classes) {
    acc += std::exp(spec.log_priors[k]) / total;
    if (u < acc) return k;
  }
  return classes.back();
}

ClassSet all_classes(Index n) {
  ClassSet out(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) out[std::size_t(k)] = k;
  return out;
}

void require_samples(const McOptions& opts) {
  if (opts.n < 2) throw std::invalid_argument("Monte Carlo estimators need n >= 2");
}

}  // namespace

void Partition::validate(Index classes) const {
  if (set_a.empty() || set_b.empty()) throw std::invalid_argument("partition: set_a and set_b must be nonempty");
  for (const ClassSet* s : {&set_a, &set_b}) {
    for (Index k : *s) {
      if (k < 0 || k >= classes) throw std::out_of_range("partition: class index " + std::to_string(k) + " out of range");
    }
  }
  for (Index a : set_a) {
    if (std::find(set_b.begin(), set_b.end(), a) != set_b.end()) {
      throw std::invalid_argument("partition: class " + std::to_string(a) + " appears in both sets");
    }
  }
  if (!(prior_a > 0.0 && prior_a < 1.0)) throw std::invalid_argument("partition: prior_a must lie in (0, 1)");
}

ClassSet Partition::branch_b(Index classes) const { return complement_proxy ? all_classes(classes) : set_b; }

double posterior_entropy(const Eigen::VectorXd& log_weights) {
  const double lse = detail::log_sum_exp<double>(log_weights);
  double h = 0.0;
  for (Index k = 0; k < log_weights.size(); ++k) {
    const double lg = log_weights[k] - lse;
    if (std::isfinite(lg)) h -= std::exp(lg) * lg;
  }
  return std::max(h, 0.0);
}

Estimate conditional_entropy_mc(const Mixture& spec, const Schedule& sched, double t, const McOptions& opts) {
  require_samples(opts);
  const Mixture work = reduce_to_mean_span(spec);
  const Stats stats = component_stats(work, sched, t);
  stats.require_nondegenerate();
  const ClassSet classes = all_classes(work.classes());

  std::vector<double> h(opts.n);
  parallel_for(opts.n, opts.threads, [&](std::size_t i) {
    StreamRng rng(opts.seed, stream::kForwardEntropy, i);
    const Index k = draw_class(work, classes, rng.uniform());
    const VectorXd x = forward_sample(work, sched, t, k, rng);
    h[i] = posterior_entropy(log_joint(work, stats, x));
  });
  const auto ms = mean_stderr(h);
  return {ms.mean, ms.se};
}

namespace {

// (g^2 / 2) ||s_i - s_mix||^2 = (g^2 / 2) ||sum_k gamma_k (m_i - m_k)||^2 / v^2
double score_gap(const Mixture& spec, const Stats& stats, double half_g2, Index i, const VectorXd& x) {
  const VectorXd g = posterior(spec, stats, x);
  const VectorXd diff = (stats.m.col(i).replicate(1, spec.classes()) - stats.m) * g;
  return half_g2 * diff.squaredNorm() / (stats.v * stats.v);
}

}  // namespace

Estimate entropy_production_fisher(const Mixture& spec, const Schedule& sched, double t, const McOptions& opts) {
  require_samples(opts);
  const Mixture work = reduce_to_mean_span(spec);
  const Stats stats = component_stats(work, sched, t);
  stats.require_nondegenerate();
  const double half_g2 = 0.5 * diffusion_coeff(sched, t);
  const ClassSet classes = all_classes(work.classes());

  std::vector<double> vals(opts.n);
  parallel_for(opts.n, opts.threads, [&](std::size_t j) {
    StreamRng rng(opts.seed, stream::kForwardFisher, j);
    const Index i = draw_class(work, classes, rng.uniform());
    const VectorXd x = forward_sample(work, sched, t, i, rng);
    vals[j] = score_gap(work, stats, half_g2, i, x);
  });
  const auto ms = mean_stderr(vals);
  return {ms.mean, ms.se};
}

FisherGap fisher_gap(const Mixture& spec, const Schedule& sched, double t, const McOptions& opts) {
  require_samples(opts);
  const Mixture work = reduce_to_mean_span(spec);
  const Stats stats = component_stats(work, sched, t);
  stats.require_nondegenerate();
  FisherGap out{VectorXd::Zero(work.classes()), VectorXd::Zero(work.classes())};
  for (Index i = 0; i < work.classes(); ++i) {
    std::vector<double> vals(opts.n);
    parallel_for(opts.n, opts.threads, [&](std::size_t j) {
      StreamRng rng(opts.seed, kFisherStratified, std::uint64_t(i), j);
      const VectorXd x = forward_sample(work, sched, t, i, rng);
      vals[j] = score_gap(work, stats, 1.0, i, x);
    });
    const auto ms = mean_stderr(vals);
    out.delta_i[i] = ms.mean;
    out.se[i] = ms.se;
  }
  return out;
}

namespace {

struct Stencil {
  std::size_t idx[3];
  double coef[3];
  int width;
};

// Three-point (quadratic-exact) interior stencil, one-sided two-point at the ends.
Stencil fd_stencil(std::span<const double> t, std::size_t j) {
  const std::size_t n = t.size();
  if (j == 0) {
    const double h = t[1] - t[0];
    return {{0, 1, 0}, {-1.0 / h, 1.0 / h, 0.0}, 2};
  }
  if (j + 1 == n) {
    const double h = t[n - 1] - t[n - 2];
    return {{n - 2, n - 1, 0}, {-1.0 / h, 1.0 / h, 0.0}, 2};
  }
  const double h1 = t[j] - t[j - 1];
  const double h2 = t[j + 1] - t[j];
  return {{j - 1, j, j + 1}, {-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2))}, 3};
}

void require_fd_grid(std::span<const double> t) {
  if (t.size() < 3) throw std::invalid_argument("entropy_production_fd: grid needs at least 3 points");
  for (std::size_t j = 1; j < t.size(); ++j) {
    if (!(t[j] > t[j - 1])) throw std::invalid_argument("entropy_production_fd: times must increase");
  }
}

}  // namespace

Derivative entropy_production_fd(const EntropyProfile& profile) {
  const std::size_t n = profile.times.size();
  require_fd_grid(profile.times);
  if (profile.H.size() != n) throw std::invalid_argument("entropy_production_fd: H and times have different lengths");
  const auto se_at = [&](std::size_t j) { return j < profile.H_stderr.size() ? profile.H_stderr[j] : 0.0; };

  Derivative d{std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t j = 0; j < n; ++j) {
    const Stencil s = fd_stencil(profile.times, j);
    double value = 0.0;
    double var = 0.0;
    for (int q = 0; q < s.width; ++q) {
      value += s.coef[q] * profile.H[s.idx[q]];
      var += s.coef[q] * s.coef[q] * se_at(s.idx[q]) * se_at(s.idx[q]);
    }
    d.value[j] = value;
    d.se[j] = std::sqrt(var);
  }
  return d;
}

Derivative entropy_production_fd_paired(const Mixture& spec, const Schedule& sched, std::span<const double> times, const McOptions& opts) {
  require_samples(opts);
  require_fd_grid(times);
  const Mixture work = reduce_to_mean_span(spec);
  const ClassSet classes = all_classes(work.classes());
  const std::size_t rows = times.size();
  std::vector<Stats> stats;
  stats.reserve(rows);
  for (double t : times) {
    stats.push_back(component_stats(work, sched, t));
    stats.back().require_nondegenerate();
  }

  // h[i * rows + j]: posterior entropy of sample i at time j, same draws at every time.
  std::vector<double> h(opts.n * rows);
  parallel_for(opts.n, opts.threads, [&](std::size_t i) {
    for (std::size_t j = 0; j < rows; ++j) {
      StreamRng rng(opts.seed, stream::kForwardEntropy, i);
      const Index k = draw_class(work, classes, rng.uniform());
      const VectorXd x = forward_sample(work, sched, times[j], k, rng);
      h[i * rows + j] = posterior_entropy(log_joint(work, stats[j], x));
    }
  });

  Derivative d{std::vector<double>(rows), std::vector<double>(rows)};
  std::vector<double> per_sample(opts.n);
  for (std::size_t j = 0; j < rows; ++j) {
    const Stencil s = fd_stencil(times, j);
    for (std::size_t i = 0; i < opts.n; ++i) {
      double v = 0.0;
      for (int q = 0; q < s.width; ++q) v += s.coef[q] * h[i * rows + s.idx[q]];
      per_sample[i] = v;
    }
    const auto ms = mean_stderr(per_sample);
    d.value[j] = ms.mean;
    d.se[j] = ms.se;
  }
  return d;
}

double partition_posterior(const Mixture& spec, const Stats& stats, const Partition& partition, const Eigen::VectorXd& x) {
  const ClassSet b = partition.branch_b(spec.classes());
  const double la = log_mixture_density(spec, stats, x, std::span<const Index>(partition.set_a));
  const double lb = log_mixture_density(spec, stats, x, std::span<const Index>(b));
  const double z = std::log(partition.prior_a) - std::log1p(-partition.prior_a) + la - lb;
  return 1.0 / (1.0 + std::exp(-z));
}

Estimate partitioned_entropy_mc(const Mixture& spec, const Schedule& sched, const Partition& partition, double t, const McOptions& opts) {
  require_samples(opts);
  partition.validate(spec.classes());
  const Mixture work = reduce_to_mean_span(spec);
  const Stats stats = component_stats(work, sched, t);
  stats.require_nondegenerate();
  const ClassSet set_b = partition.branch_b(work.classes());
  const std::span<const Index> branches[2] = {partition.set_a, set_b};
  const double log_odds_prior = std::log(partition.prior_a) - std::log1p(-partition.prior_a);

  const std::size_t n_branch[2] = {opts.n / 2, opts.n - opts.n / 2};
  MeanStderr per_branch[2];
  for (int b = 0; b < 2; ++b) {
    std::vector<double> h(n_branch[b]);
    parallel_for(n_branch[b], opts.threads, [&](std::size_t j) {
      StreamRng rng(opts.seed, stream::kForwardPartition, std::uint64_t(b), j);
      const Index k = draw_class(work, branches[b], rng.uniform());
      const VectorXd x = forward_sample(work, sched, t, k, rng);
      const double la = log_mixture_density(work, stats, x, branches[0]);
      const double lb = log_mixture_density(work, stats, x, branches[1]);
      h[j] = binary_entropy_logit(log_odds_prior + la - lb);
    });
    per_branch[b] = mean_stderr(h);
  }
  const double pa = partition.prior_a;
  const double pb = 1.0 - pa;
  return {pa * per_branch[0].mean + pb * per_branch[1].mean, std::hypot(pa * per_branch[0].se, pb * per_branch[1].se)};
}

QuadratureRule gauss_legendre(double lo, double hi, int nodes) {
  if (!(hi > lo)) throw std::invalid_argument("gauss_legendre: need hi > lo");
  constexpr int kPanelOrder = 32;
  // Golub-Welsch: nodes are eigenvalues of the Jacobi matrix, weights 2 * (first eigenvector component)^2.
  static const auto reference = [] {
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(kPanelOrder, kPanelOrder);
    for (int i = 1; i < kPanelOrder; ++i) {
      const double b = i / std::sqrt(4.0 * i * i - 1.0);
      jacobi(i, i - 1) = b;
      jacobi(i - 1, i) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    QuadratureRule r;
    for (int i = 0; i < kPanelOrder; ++i) {
      r.x.push_back(eig.eigenvalues()[i]);
      r.w.push_back(2.0 * eig.eigenvectors()(0, i) * eig.eigenvectors()(0, i));
    }
    return r;
  }();

  const int panels = std::max(1, nodes / kPanelOrder);
  const double width = (hi - lo) / panels;
  QuadratureRule rule;
  rule.x.reserve(std::size_t(panels) * kPanelOrder);
  rule.w.reserve(std::size_t(panels) * kPanelOrder);
  for (int p = 0; p < panels; ++p) {
    const double mid = lo + (p + 0.5) * width;
    for (int i = 0; i < kPanelOrder; ++i) {
      rule.x.push_back(mid + 0.5 * width * reference.x[i]);
      rule.w.push_back(0.5 * width * reference.w[i]);
    }
  }
  return rule;
}

double jsd_quadrature_1d(const Density1d& density_a, const Density1d& density_b, double lo, double hi, int nodes) {
  const QuadratureRule rule = gauss_legendre(lo, hi, nodes);
  double total = 0.0;
  for (std::size_t i = 0; i < rule.x.size(); ++i) {
    const double p = density_a(rule.x[i]);
    const double q = density_b(rule.x[i]);
    const double m = 0.5 * (p + q);
    double term = 0.0;
    if (p > 0.0) term += p * std::log(p / m);
    if (q > 0.0) term += q * std::log(q / m);
    total += 0.5 * rule.w[i] * term;
  }
  return std::clamp(total, 0.0, std::numbers::ln2);
}

double jsd_quadrature_1d(const Mixture& spec, const Schedule& sched, const Partition& partition, double t, int nodes) {
  if (spec.dim() != 1) throw std::invalid_argument("jsd_quadrature_1d: mixture must be one-dimensional");
  partition.validate(spec.classes());
  const Stats stats = component_stats(spec, sched, t);
  stats.require_nondegenerate();
  const ClassSet set_b = partition.branch_b(spec.classes());
  const double reach = 12.0 * std::sqrt(stats.v);
  const double lo = stats.m.minCoeff() - reach;
  const double hi = stats.m.maxCoeff() + reach;
  const auto density = [&](const ClassSet& subset) {
    return [&, subset](double x) {
      const Eigen::Matrix<double, 1, 1> xv(x);
      return std::exp(log_mixture_density(spec, stats, xv, std::span<const Index>(subset)));
    };
  };
  return jsd_quadrature_1d(density(partition.set_a), density(set_b), lo, hi, nodes);
}

void set_rescaled_time(EntropyProfile& profile, const Speciation& scale) {
  profile.u.resize(profile.times.size());
  for (std::size_t j = 0; j < profile.times.size(); ++j) profile.u[j] = scale.rescale(profile.times[j]);
}

EntropyProfile profile_sweep(const Mixture& spec, const Schedule& sched, std::span<const double> times, const McOptions& opts,
                             const std::optional<Partition>& partition) {
  if (times.empty()) throw std::invalid_argument("profile_sweep: empty time grid");
  EntropyProfile p;
  p.times.assign(times.begin(), times.end());
  p.n_samples = opts.n;
  p.seed = opts.seed;
  const std::size_t n = times.size();
  p.H.resize(n);
  p.H_stderr.resize(n);
  p.Hdot.assign(n, std::numeric_limits<double>::quiet_NaN());
  p.Hdot_stderr.assign(n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t j = 0; j < n; ++j) {
    const Estimate h = partition ? partitioned_entropy_mc(spec, sched, *partition, times[j], opts)
                                 : conditional_entropy_mc(spec, sched, times[j], opts);
    p.H[j] = h.value;
    p.H_stderr[j] = h.se;
    if (!partition) {
      const Estimate hd = entropy_production_fisher(spec, sched, times[j], opts);
      p.Hdot[j] = hd.value;
      p.Hdot_stderr[j] = hd.se;
    }
  }
  if (partition && n >= 3) {
    const Derivative d = entropy_production_fd(p);
    p.Hdot = d.value;
    p.Hdot_stderr = d.se;
  }
  set_rescaled_time(p, speciation_time(sched, long(spec.dim())));
  return p;
}

std::vector<double> isotonic_nondecreasing(std::span<const double> values) {
  struct Block {
    double mean;
    std::size_t count;
  };
  std::vector<Block> blocks;
  blocks.reserve(values.size());
  for (double v : values) {
    blocks.push_back({v, 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean > blocks.back().mean) {
      const Block top = blocks.back();
      blocks.pop_back();
      Block& prev = blocks.back();
      prev.mean = (prev.mean * double(prev.count) + top.mean * double(top.count)) / double(prev.count + top.count);
      prev.count += top.count;
    }
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (const Block& b : blocks) out.insert(out.end(), b.count, b.mean);
  return out;
}

double upward_crossing(const EntropyProfile& profile, double level) {
  if (profile.times.size() != profile.H.size() || profile.times.size() < 2) {
    throw std::invalid_argument("upward_crossing: profile needs at least two aligned points");
  }
  const std::vector<double> smooth = isotonic_nondecreasing(profile.H);
  for (std::size_t j = 1; j < smooth.size(); ++j) {
    if (smooth[j] >= level) {
      if (smooth[j - 1] >= level) break;
      const double f = (level - smooth[j - 1]) / (smooth[j] - smooth[j - 1]);
      return profile.times[j - 1] + f * (profile.times[j] - profile.times[j - 1]);
    }
  }
  throw std::domain_error("profile does not bracket " + std::to_string(level) + " nats");
}

TransitionWindow transition_window(const EntropyProfile& profile, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("transition_window: need lo < hi");
  const double t_lo = upward_crossing(profile, lo);
  const double t_hi = upward_crossing(profile, hi);
  return {t_lo, t_hi, t_hi - t_lo};
}

}  // namespace speciation
