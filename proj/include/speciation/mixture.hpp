#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "speciation/schedule.hpp"

namespace speciation {

using Eigen::Index;

/// Raised when the component variance v(t) = alpha^2 sigma0^2 + sigma_t^2 is zero.
class DegenerateVariance : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Isotropic Gaussian mixture prior p_0 = sum_k pi_k N(mu_k, sigma0^2 I).
template <typename Scalar>
struct MixtureSpec {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix means;  // d x N, column k is mu_k
  Scalar sigma0{1};
  Vector log_priors;  // N

  Index dim() const { return means.rows(); }
  Index classes() const { return means.cols(); }

  static MixtureSpec equiprobable(Matrix means, Scalar sigma0) {
    const Index n = means.cols();
    MixtureSpec spec{std::move(means), sigma0, Vector::Constant(n, -std::log(Scalar(n)))};
    spec.validate();
    return spec;
  }

  /// Two classes at +/- mu e_1 with ||mu||^2 = q d.
  static MixtureSpec symmetric_two_class(Index d, Scalar q, Scalar sigma0) {
    if (d < 1) throw std::invalid_argument("symmetric_two_class: d must be >= 1");
    if (!(q >= 0)) throw std::invalid_argument("symmetric_two_class: q must be >= 0");
    Matrix means = Matrix::Zero(d, 2);
    const Scalar mu = std::sqrt(q * Scalar(d));
    means(0, 0) = mu;
    means(0, 1) = -mu;
    return equiprobable(std::move(means), sigma0);
  }

  void validate() const {
    if (classes() < 1 || dim() < 1) throw std::invalid_argument("mixture: need at least one class and d >= 1");
    if (log_priors.size() != classes()) throw std::invalid_argument("mixture: log_priors length != class count");
    if (!(sigma0 >= 0) || !std::isfinite(double(sigma0))) throw std::invalid_argument("mixture: sigma0 must be finite and >= 0");
    if (!means.allFinite()) throw std::invalid_argument("mixture: means must be finite");
    const Scalar total = log_priors.array().exp().sum();
    if (std::abs(total - Scalar(1)) > Scalar(1e-12)) {
      throw std::invalid_argument("mixture: priors sum to " + std::to_string(double(total)) + ", expected 1");
    }
  }

  /// q_k = ||mu_k||^2 / d
  Scalar q(Index k) const { return means.col(k).squaredNorm() / Scalar(dim()); }

  /// delta_ik^2 = ||mu_i - mu_k||^2 / d
  Scalar delta2(Index i, Index k) const { return (means.col(i) - means.col(k)).squaredNorm() / Scalar(dim()); }
};

template <typename Scalar>
struct ComponentStats {
  typename MixtureSpec<Scalar>::Matrix m;  // d x N, m_k(t) = alpha_t mu_k
  Scalar alpha{1};
  Scalar sigma2{0};
  Scalar v{0};  // alpha^2 sigma0^2 + sigma_t^2

  bool degenerate() const { return !(v > Scalar(0)); }

  void require_nondegenerate() const {
    if (degenerate()) throw DegenerateVariance("component variance v(t) is zero (t = 0 with sigma0 = 0)");
  }
};

template <typename Scalar>
struct PairwiseEvidence {
  Scalar m_ik{0};  // mean of Lambda_ik given Z = i (nats)
  Scalar v_ik{0};  // variance of Lambda_ik given Z = i
  Scalar snr{0};
};

template <typename Scalar>
ComponentStats<Scalar> component_stats(const MixtureSpec<Scalar>& spec, const NoiseSchedule<Scalar>& sched, Scalar t) {
  const auto [alpha, sigma2] = alpha_sigma(sched, t);
  ComponentStats<Scalar> s;
  s.m = alpha * spec.means;
  s.alpha = alpha;
  s.sigma2 = sigma2;
  s.v = alpha * alpha * spec.sigma0 * spec.sigma0 + sigma2;
  return s;
}

namespace detail {

template <typename Scalar>
Scalar log_sum_exp(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& a) {
  const Scalar top = a.maxCoeff();
  if (!std::isfinite(double(top))) return top;
  return top + std::log((a.array() - top).exp().sum());
}

template <typename Scalar, typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& x, Index d) {
  if (x.size() != d) throw std::invalid_argument("state dimension " + std::to_string(x.size()) + " != mixture dimension " + std::to_string(d));
  if (!x.allFinite()) throw std::domain_error("state vector contains non-finite entries");
}

inline void require_subset(std::span<const Index> subset, Index classes) {
  if (subset.empty()) throw std::invalid_argument("class subset must be nonempty");
  for (Index k : subset) {
    if (k < 0 || k >= classes) throw std::out_of_range("class index " + std::to_string(k) + " out of range");
  }
}

}  // namespace detail

/// log pi_k - ||x - m_k||^2 / (2v) for every class; shared constants dropped.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> log_joint(const MixtureSpec<Scalar>& spec, const ComponentStats<Scalar>& stats,
                                                   const Eigen::MatrixBase<Derived>& x) {
  stats.require_nondegenerate();
  detail::require_finite<Scalar>(x, spec.dim());
  const auto sq = (stats.m.colwise() - x).colwise().squaredNorm().transpose();
  return spec.log_priors - sq / (Scalar(2) * stats.v);
}

/// Posterior gamma_k(x, t) over all classes, via max-subtracted log-sum-exp.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> posterior(const MixtureSpec<Scalar>& spec, const ComponentStats<Scalar>& stats,
                                                   const Eigen::MatrixBase<Derived>& x) {
  auto lp = log_joint(spec, stats, x);
  const Scalar top = lp.maxCoeff();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> g = (lp.array() - top).exp();
  return g / g.sum();
}

template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> posterior(const MixtureSpec<Scalar>& spec, const NoiseSchedule<Scalar>& sched, Scalar t,
                                                   const Eigen::MatrixBase<Derived>& x) {
  return posterior(spec, component_stats(spec, sched, t), x);
}

/// Posterior renormalized over `subset`; entries outside the subset are zero.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> posterior(const MixtureSpec<Scalar>& spec, const ComponentStats<Scalar>& stats,
                                                   const Eigen::MatrixBase<Derived>& x, std::span<const Index> subset) {
  detail::require_subset(subset, spec.classes());
  const auto lp = log_joint(spec, stats, x);
  Scalar top = -std::numeric_limits<Scalar>::infinity();
  for (Index k : subset) top = std::max(top, lp[k]);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> g = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(spec.classes());
  for (Index k : subset) g[k] = std::exp(lp[k] - top);
  return g / g.sum();
}

/// Lambda_ik = log gamma_i - log gamma_k in closed form.
template <typename Scalar, typename Derived>
Scalar log_ratio(const MixtureSpec<Scalar>& spec, const ComponentStats<Scalar>& stats, const Eigen::MatrixBase<Derived>& x, Index i,
                 Index k) {
  stats.require_nondegenerate();
  detail::require_finite<Scalar>(x, spec.dim());
  if (i == k) return Scalar(0);
  const Scalar di = (x - stats.m.col(i)).squaredNorm();
  const Scalar dk = (x - stats.m.col(k)).squaredNorm();
  return (dk - di) / (Scalar(2) * stats.v) + (spec.log_priors[i] - spec.log_priors[k]);
}

template <typename Scalar, typename Derived>
Scalar log_ratio(const MixtureSpec<Scalar>& spec, const NoiseSchedule<Scalar>& sched, Scalar t, const Eigen::MatrixBase<Derived>& x,
                 Index i, Index k) {
  return log_ratio(spec, component_stats(spec, sched, t), x, i, k);
}

template <typename Scalar>
PairwiseEvidence<Scalar> evidence_stats(const MixtureSpec<Scalar>& spec, const NoiseSchedule<Scalar>& sched, Scalar t, Index i, Index k) {
  if (i == k) throw std::invalid_argument("evidence_stats: classes must differ");
  const auto stats = component_stats(spec, sched, t);
  stats.require_nondegenerate();
  const Scalar gap = (stats.m.col(i) - stats.m.col(k)).squaredNorm();
  return {gap / (Scalar(2) * stats.v), gap / stats.v, gap / (Scalar(4) * stats.v)};
}

/// d e^{-2t} / (e^{-2t} sigma0^2 + 1 - e^{-2t}), proportionality constant 1. Diagnostics only.
template <typename Scalar>
Scalar snr_asymptotic(const NoiseSchedule<Scalar>& sched, long d, Scalar sigma0, Scalar t) {
  if (sched.kind != ScheduleKind::VP) throw std::invalid_argument("snr_asymptotic: VP schedule only");
  sched.check_time(t);
  const Scalar e = std::exp(Scalar(-2) * t);
  return Scalar(d) * e / (e * sigma0 * sigma0 - std::expm1(Scalar(-2) * t));
}

template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> component_score(const MixtureSpec<Scalar>& spec, const ComponentStats<Scalar>& stats,
                                                         const Eigen::MatrixBase<Derived>& x, Index k) {
  stats.require_nondegenerate();
  detail::require_finite<Scalar>(x, spec.dim());
  return -(x - stats.m.col(k)) / stats.v;
}

template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> component_score(const MixtureSpec<Scalar>& spec, const NoiseSchedule<Scalar>& sched, Scalar t,
                                                         const Eigen::MatrixBase<Derived>& x, Index k) {
  return component_score(spec, component_stats(spec, sched, t), x, k);
}

/// s_mix = sum_k gamma_k s_k = -(x - sum_k gamma_k m_k) / v.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mixture_score(const MixtureSpec<Scalar>& spec, const ComponentStats<Scalar>& stats,
                                                       const Eigen::MatrixBase<Derived>& x) {
  const auto g = posterior(spec, stats, x);
  return -(x - stats.m * g) / stats.v;
}

/// Score of the sub-mixture restricted to `subset` (posterior renormalized).
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mixture_score(const MixtureSpec<Scalar>& spec, const ComponentStats<Scalar>& stats,
                                                       const Eigen::MatrixBase<Derived>& x, std::span<const Index> subset) {
  const auto g = posterior(spec, stats, x, subset);
  return -(x - stats.m * g) / stats.v;
}

template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mixture_score(const MixtureSpec<Scalar>& spec, const NoiseSchedule<Scalar>& sched, Scalar t,
                                                       const Eigen::MatrixBase<Derived>& x) {
  return mixture_score(spec, component_stats(spec, sched, t), x);
}

template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mixture_score(const MixtureSpec<Scalar>& spec, const NoiseSchedule<Scalar>& sched, Scalar t,
                                                       const Eigen::MatrixBase<Derived>& x, std::span<const Index> subset) {
  return mixture_score(spec, component_stats(spec, sched, t), x, subset);
}

namespace detail {

template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> posterior_mean(const MixtureSpec<Scalar>& spec, const ComponentStats<Scalar>& stats,
                                                        const Eigen::MatrixBase<Derived>& x,
                                                        const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& gamma) {
  if (!(stats.alpha > Scalar(0))) throw std::domain_error("denoiser: alpha_t = 0, cannot invert the kernel");
  const Scalar shrink = stats.alpha * spec.sigma0 * spec.sigma0 / stats.v;
  const auto mu_bar = spec.means * gamma;
  return mu_bar + shrink * (x - stats.alpha * mu_bar);
}

}  // namespace detail

/// Exact E[x_0 | x_t] for the mixture; equals (x + sigma_t^2 s_mix) / alpha_t.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> denoiser(const MixtureSpec<Scalar>& spec, const ComponentStats<Scalar>& stats,
                                                  const Eigen::MatrixBase<Derived>& x) {
  return detail::posterior_mean(spec, stats, x, posterior(spec, stats, x));
}

template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> denoiser(const MixtureSpec<Scalar>& spec, const ComponentStats<Scalar>& stats,
                                                  const Eigen::MatrixBase<Derived>& x, std::span<const Index> subset) {
  return detail::posterior_mean(spec, stats, x, posterior(spec, stats, x, subset));
}

template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> denoiser(const MixtureSpec<Scalar>& spec, const NoiseSchedule<Scalar>& sched, Scalar t,
                                                  const Eigen::MatrixBase<Derived>& x) {
  return denoiser(spec, component_stats(spec, sched, t), x);
}

template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> denoiser(const MixtureSpec<Scalar>& spec, const NoiseSchedule<Scalar>& sched, Scalar t,
                                                  const Eigen::MatrixBase<Derived>& x, std::span<const Index> subset) {
  return denoiser(spec, component_stats(spec, sched, t), x, subset);
}

/// Normalized log density of the (sub-)mixture at time t. Priors are
/// renormalized over `subset`; an empty span means all classes.
template <typename Scalar, typename Derived>
Scalar log_mixture_density(const MixtureSpec<Scalar>& spec, const ComponentStats<Scalar>& stats, const Eigen::MatrixBase<Derived>& x,
                           std::span<const Index> subset = {}) {
  const auto lp = log_joint(spec, stats, x);
  const Scalar norm = Scalar(-0.5) * Scalar(spec.dim()) * std::log(Scalar(2) * std::numbers::pi_v<Scalar> * stats.v);
  if (subset.empty()) return detail::log_sum_exp<Scalar>(lp) + norm;
  detail::require_subset(subset, spec.classes());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> sel(Index(subset.size()));
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> pri(Index(subset.size()));
  for (std::size_t j = 0; j < subset.size(); ++j) {
    sel[Index(j)] = lp[subset[j]];
    pri[Index(j)] = spec.log_priors[subset[j]];
  }
  return detail::log_sum_exp<Scalar>(sel) - detail::log_sum_exp<Scalar>(pri) + norm;
}

struct HierarchyLevel {
  double offset{1.0};
  int branching{2};
};

/// Nested clusters: each level contributes an offset along its own
/// coordinate axes. Binary levels place children at +/- offset on one axis;
/// wider levels place child j at offset * e_{axis + j}. Class index is
/// mixed-radix with the first level most significant.
template <typename Scalar>
MixtureSpec<Scalar> hierarchical_mixture(std::span<const HierarchyLevel> levels, Index d, Scalar sigma0, Index max_classes = 4096) {
  if (levels.empty()) throw std::invalid_argument("hierarchical_mixture: need at least one level");
  Index classes = 1;
  Index axes = 0;
  for (const auto& lvl : levels) {
    if (lvl.branching < 2) throw std::invalid_argument("hierarchical_mixture: branching factors must be >= 2");
    if (!(lvl.offset > 0)) throw std::invalid_argument("hierarchical_mixture: offsets must be > 0");
    classes *= lvl.branching;
    if (classes > max_classes) {
      throw std::invalid_argument("hierarchical_mixture: class count exceeds cap " + std::to_string(max_classes));
    }
    axes += lvl.branching == 2 ? 1 : lvl.branching;
  }
  if (axes > d) throw std::invalid_argument("hierarchical_mixture: needs " + std::to_string(axes) + " axes but d = " + std::to_string(d));

  typename MixtureSpec<Scalar>::Matrix means = MixtureSpec<Scalar>::Matrix::Zero(d, classes);
  for (Index k = 0; k < classes; ++k) {
    Index rem = k;
    Index stride = classes;
    Index axis = 0;
    for (const auto& lvl : levels) {
      stride /= lvl.branching;
      const Index child = rem / stride;
      rem %= stride;
      if (lvl.branching == 2) {
        means(axis, k) += child == 0 ? Scalar(lvl.offset) : -Scalar(lvl.offset);
        axis += 1;
      } else {
        means(axis + child, k) += Scalar(lvl.offset);
        axis += lvl.branching;
      }
    }
  }
  return MixtureSpec<Scalar>::equiprobable(std::move(means), sigma0);
}

/// Re-expresses the mixture in an orthonormal basis of span{mu_k}.
///
/// Noise orthogonal to the span shifts every ||x - m_k||^2 by the same amount,
/// so posteriors, log-ratios and score gaps have the same law under the
/// reduced mixture. Used by the Monte Carlo estimators when d exceeds the
/// rank of the means.
template <typename Scalar>
MixtureSpec<Scalar> reduce_to_mean_span(const MixtureSpec<Scalar>& spec) {
  using Matrix = typename MixtureSpec<Scalar>::Matrix;
  Eigen::ColPivHouseholderQR<Matrix> qr(spec.means);
  qr.setThreshold(Scalar(1e-12));
  const Index rank = std::max<Index>(qr.rank(), 1);
  if (rank >= spec.dim()) return spec;
  const Matrix q = qr.householderQ() * Matrix::Identity(spec.dim(), rank);
  return MixtureSpec<Scalar>{q.transpose() * spec.means, spec.sigma0, spec.log_priors};
}

using Mixture = MixtureSpec<double>;
using Stats = ComponentStats<double>;
using Evidence = PairwiseEvidence<double>;
using Eigen::VectorXd;
using ClassSet = std::vector<Index>;

}  // namespace speciation
