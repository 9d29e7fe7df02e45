#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "speciation/config.hpp"
#include "speciation/entropy.hpp"
#include "speciation/tracker.hpp"

namespace speciation {

// Computation layer. Each run_* is a pure function of the config; `threads`
// only changes wall time, never the numbers.

EntropyProfile run_profile(const ExperimentConfig& cfg, int threads = 1);

struct SweepRow {
  long d{0};
  double t_s{0.0};
  TransitionWindow window;
  double width_u{0.0};
  EntropyProfile profile;
};

/// One transition window per dimension in cfg.d_list (or the configured d).
std::vector<SweepRow> run_speciation_sweep(const ExperimentConfig& cfg, int threads = 1);

/// Partition used by track and guidance-distortion: the configured one, or
/// class 0 against the rest.
Partition tracking_partition(const ExperimentConfig& cfg, const Mixture& spec);

OnlineEstimate run_track(const ExperimentConfig& cfg, int threads = 1);

struct GuidanceRun {
  OnlineEstimate base;
  OnlineEstimate guided;
  DistortionProfile distortion;
};

GuidanceRun run_guidance_distortion(const ExperimentConfig& cfg, int threads = 1);

// Formatting layer: CSV text with provenance comment lines and a header row.

std::string format_number(double v);
std::string profile_csv(const ExperimentConfig& cfg, const EntropyProfile& p, const std::string& command);
std::string sweep_csv(const ExperimentConfig& cfg, const std::vector<SweepRow>& rows);
std::string track_csv(const ExperimentConfig& cfg, const OnlineEstimate& est);
std::string distortion_csv(const ExperimentConfig& cfg, const GuidanceRun& run);

std::string cmd_profile(const ExperimentConfig& cfg, int threads = 1);
std::string cmd_speciation_sweep(const ExperimentConfig& cfg, int threads = 1);
std::string cmd_track(const ExperimentConfig& cfg, int threads = 1);
std::string cmd_guidance_distortion(const ExperimentConfig& cfg, int threads = 1);

/// Entry point behind the `speciation` executable. Exit codes: 0 success,
/// 1 validation failure, 2 config error (3 for any other runtime error).
int run_cli(int argc, char** argv);

}  // namespace speciation
