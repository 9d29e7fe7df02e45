#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "speciation/commands.hpp"
#include "speciation/config.hpp"

namespace speciation {

/// One oracle comparison. Passes when measured <= tolerance * scale.
struct Check {
  std::string name;
  double measured{0.0};
  double tolerance{0.0};
  bool pass{false};
  std::string detail;
};

struct SuiteOptions {
  std::size_t n{50000};
  std::size_t trajectories{1000};
  std::uint64_t seed{0};
  int threads{1};
  double tolerance_scale{1.0};
};

// Desk instances shared by the validate command and the acceptance suite.

/// Two-class 1D VP mixture with means +-1 and sigma0 = 0.1 on 128 quadratically spaced times in [0, 4].
ExperimentConfig desk_production_config();

/// Two-class VP mixture in d = 8 (q = 1, sigma0 = 1, t_max = 10), class 0 vs class 1.
ExperimentConfig desk_tracker_config();

/// desk_tracker_config with guidance omega on sigma in [sigma_low, sigma_high].
ExperimentConfig desk_guidance_config(double omega, double sigma_low, double sigma_high);

/// Symmetric two-class sweep over d_list on a u-grid.
ExperimentConfig desk_sweep_config(ScheduleKind kind, std::vector<long> d_list);

/// Reference JSD of N(0, 1) and N(1, 1), from a high-precision quadrature.
inline constexpr double kJsdUnitShift = 0.111421482184736179717;

Check check_jsd_reference(double tolerance_scale = 1.0);

/// ln 2 - partitioned H against the quadrature JSD on three separations; measured in stderr units.
std::vector<Check> check_partition_jsd(const SuiteOptions& opts);

/// Fisher-form against paired finite-difference production, and the trapezoid
/// integral of the Fisher form against H(end) - H(0).
std::vector<Check> check_entropy_production(const SuiteOptions& opts, EntropyProfile* profile_out = nullptr);

/// H at 5 t_s against ln N, and H at t = 0 for a separation of ten noise widths.
std::vector<Check> check_limits(const SuiteOptions& opts);

/// Tracked against closed-form posterior at 128, 256 and 512 steps.
std::vector<Check> check_tracker(const SuiteOptions& opts);

std::vector<Check> run_validation_suite(const SuiteOptions& opts);

nlohmann::json validation_report(const std::vector<Check>& checks, const SuiteOptions& opts);

/// Writes validate-suite CSVs for the figure scripts into `dir`.
void write_suite_csvs(const std::string& dir, const SuiteOptions& opts);

}  // namespace speciation
