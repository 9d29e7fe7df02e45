#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace speciation {

enum class ScheduleKind { VP, EDM };

inline ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "vp") return ScheduleKind::VP;
  if (name == "edm") return ScheduleKind::EDM;
  throw std::invalid_argument("unknown schedule kind '" + std::string(name) + "' (expected vp|edm)");
}

inline const char* to_string(ScheduleKind kind) {
  return kind == ScheduleKind::VP ? "vp" : "edm";
}

/// Rescaled time u = t / t_s around the speciation scale t_s.
///
/// VP with d = 1 yields t_s = 0; the value is still returned but `degenerate`
/// is set and `rescale` produces NaN instead of dividing by zero.
template <typename Scalar>
struct SpeciationScale {
  Scalar t_s{0};
  bool degenerate{false};

  Scalar rescale(Scalar t) const {
    return degenerate ? std::numeric_limits<Scalar>::quiet_NaN() : t / t_s;
  }
};

/// Gaussian-kernel noise schedule p(x_t | x_0) = N(alpha_t x_0, sigma_t^2 I).
///
///   VP : alpha = e^{-t}, sigma^2 = 1 - e^{-2t}, f(x) = -x, g^2 = 2
///   EDM: alpha = 1,      sigma   = t,           f(x) =  0, g^2 = 2t
template <typename Scalar>
struct NoiseSchedule {
  ScheduleKind kind{ScheduleKind::VP};
  Scalar t_max{10};

  static NoiseSchedule vp(Scalar t_max = Scalar(10)) { return {ScheduleKind::VP, t_max}; }
  static NoiseSchedule edm(Scalar t_max = Scalar(80)) { return {ScheduleKind::EDM, t_max}; }

  /// Default horizon covering the whole entropy transition for dimension d.
  static NoiseSchedule with_default_horizon(ScheduleKind kind, long d);

  void check_time(Scalar t) const {
    if (!(t >= Scalar(0) && t <= t_max)) {
      throw std::domain_error("time " + std::to_string(double(t)) + " outside schedule range [0, " +
                              std::to_string(double(t_max)) + "]");
    }
  }

  /// Noise std at the top of the schedule (EDM sigma_max).
  Scalar sigma_max() const { return sigma(t_max); }

  Scalar sigma(Scalar t) const {
    return kind == ScheduleKind::VP ? std::sqrt(-std::expm1(Scalar(-2) * t)) : t;
  }
};

template <typename Scalar>
struct AlphaSigma {
  Scalar alpha;
  Scalar sigma2;
};

template <typename Scalar>
AlphaSigma<Scalar> alpha_sigma(const NoiseSchedule<Scalar>& sched, Scalar t) {
  sched.check_time(t);
  if (sched.kind == ScheduleKind::VP) {
    return {std::exp(-t), -std::expm1(Scalar(-2) * t)};
  }
  return {Scalar(1), t * t};
}

template <typename Scalar>
Scalar diffusion_coeff(const NoiseSchedule<Scalar>& sched, Scalar t) {
  sched.check_time(t);
  return sched.kind == ScheduleKind::VP ? Scalar(2) : Scalar(2) * t;
}

/// Drift coefficient c in f(x, t) = c * x.
template <typename Scalar>
Scalar drift_coeff(const NoiseSchedule<Scalar>& sched, Scalar t) {
  sched.check_time(t);
  return sched.kind == ScheduleKind::VP ? Scalar(-1) : Scalar(0);
}

/// t_s = ln(d)/2 for VP (additive O(1) constant taken as zero), sqrt(d) for EDM.
template <typename Scalar>
SpeciationScale<Scalar> speciation_time(ScheduleKind kind, long d) {
  if (d < 1) throw std::domain_error("speciation_time: dimension must be >= 1");
  if (kind == ScheduleKind::VP) {
    const Scalar t_s = Scalar(0.5) * std::log(Scalar(d));
    return {t_s, d == 1};
  }
  return {std::sqrt(Scalar(d)), false};
}

template <typename Scalar>
SpeciationScale<Scalar> speciation_time(const NoiseSchedule<Scalar>& sched, long d) {
  return speciation_time<Scalar>(sched.kind, d);
}

template <typename Scalar>
NoiseSchedule<Scalar> NoiseSchedule<Scalar>::with_default_horizon(ScheduleKind kind, long d) {
  const Scalar t_s = speciation_time<Scalar>(kind, d).t_s;
  const Scalar floor = kind == ScheduleKind::VP ? Scalar(10) : Scalar(80);
  return {kind, std::max(floor, Scalar(3) * t_s)};
}

using Schedule = NoiseSchedule<double>;
using Speciation = SpeciationScale<double>;

}  // namespace speciation
