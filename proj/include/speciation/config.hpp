#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "speciation/entropy.hpp"
#include "speciation/mixture.hpp"
#include "speciation/schedule.hpp"
#include "speciation/sde.hpp"

namespace speciation {

/// Invalid experiment configuration; the message starts with the field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& what) : std::runtime_error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct ScheduleBlock {
  ScheduleKind kind{ScheduleKind::VP};
  std::optional<double> t_max;  // default depends on d
  double t_min{0.0};
};

struct MixtureBlock {
  enum class Type { Explicit, Symmetric, Hierarchical };
  Type type{Type::Symmetric};
  long d{100};
  double q{1.0};
  double sigma0{1.0};
  std::vector<std::vector<double>> means;  // explicit only
  std::vector<double> priors;              // explicit only, empty = equiprobable
  std::vector<HierarchyLevel> levels;      // hierarchical only
};

struct GridBlock {
  enum class Axis { T, U };
  Axis axis{Axis::U};
  std::vector<double> points;  // explicit points override min/max/count
  double min{0.0};
  double max{2.0};
  int count{64};
};

struct EstimatorBlock {
  std::size_t n_samples{20000};
  std::uint64_t seed{0};
  int steps{256};
  std::size_t trajectories{1000};
};

struct ExperimentConfig {
  ScheduleBlock schedule;
  MixtureBlock mixture;
  GridBlock grid;
  EstimatorBlock estimator;
  std::optional<Partition> partition;
  std::optional<GuidanceConfig> guidance;
  std::vector<long> d_list;  // speciation sweep
  std::string output;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

/// Canonical form with every default filled in.
nlohmann::json to_json(const ExperimentConfig& cfg);

/// 64-bit FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

/// Mixture for the configured dimension, or `d_override` for generator types.
Mixture build_mixture(const ExperimentConfig& cfg, std::optional<long> d_override = std::nullopt);

Schedule build_schedule(const ExperimentConfig& cfg, long d);

/// Ascending forward-time grid from the grid block (u points are scaled by t_s).
std::vector<double> build_times(const ExperimentConfig& cfg, const Schedule& sched, long d);

}  // namespace speciation
