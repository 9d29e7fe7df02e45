#include "speciation/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace speciation {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      throw ConfigError(path.empty() ? key : path + "." + key, "unknown field");
    }
  }
}

template <typename T>
T get(const json& obj, const std::string& path, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path + "." + key, std::string("wrong type (") + e.what() + ")");
  }
}

ClassSet get_classes(const json& obj, const std::string& path, const char* key) {
  const auto raw = get<std::vector<long>>(obj, path, key, {});
  return ClassSet(raw.begin(), raw.end());
}

ScheduleBlock parse_schedule(const json& j) {
  const std::string path = "schedule";
  reject_unknown(j, path, {"kind", "t_max", "t_min"});
  ScheduleBlock s;
  try {
    s.kind = parse_schedule_kind(get<std::string>(j, path, "kind", "vp"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ".kind", e.what());
  }
  if (j.contains("t_max") && !j.at("t_max").is_null()) {
    s.t_max = get<double>(j, path, "t_max", 0.0);
    if (!(*s.t_max > 0.0)) throw ConfigError(path + ".t_max", "must be > 0");
  }
  s.t_min = get<double>(j, path, "t_min", 0.0);
  if (!(s.t_min >= 0.0)) throw ConfigError(path + ".t_min", "must be >= 0");
  return s;
}

MixtureBlock parse_mixture(const json& j) {
  const std::string path = "mixture";
  reject_unknown(j, path, {"type", "d", "q", "sigma0", "means", "priors", "levels"});
  MixtureBlock m;
  const std::string type = get<std::string>(j, path, "type", "symmetric");
  if (type == "symmetric") {
    m.type = MixtureBlock::Type::Symmetric;
  } else if (type == "explicit") {
    m.type = MixtureBlock::Type::Explicit;
  } else if (type == "hierarchical") {
    m.type = MixtureBlock::Type::Hierarchical;
  } else {
    throw ConfigError(path + ".type", "expected symmetric|explicit|hierarchical, got '" + type + "'");
  }
  m.sigma0 = get<double>(j, path, "sigma0", 1.0);
  if (!(m.sigma0 >= 0.0)) throw ConfigError(path + ".sigma0", "must be >= 0");
  m.q = get<double>(j, path, "q", 1.0);
  if (!(m.q >= 0.0)) throw ConfigError(path + ".q", "must be >= 0");

  if (m.type == MixtureBlock::Type::Explicit) {
    m.means = get<std::vector<std::vector<double>>>(j, path, "means", {});
    if (m.means.empty()) throw ConfigError(path + ".means", "explicit mixture needs at least one mean");
    m.d = long(m.means.front().size());
    if (j.contains("d") && get<long>(j, path, "d", 0) != m.d) throw ConfigError(path + ".d", "does not match the length of the means");
    for (std::size_t k = 0; k < m.means.size(); ++k) {
      if (long(m.means[k].size()) != m.d) throw ConfigError(path + ".means[" + std::to_string(k) + "]", "length differs from d");
    }
    m.priors = get<std::vector<double>>(j, path, "priors", {});
    if (!m.priors.empty() && m.priors.size() != m.means.size()) throw ConfigError(path + ".priors", "needs one entry per mean");
  } else {
    m.d = get<long>(j, path, "d", 100);
  }
  if (m.d < 1) throw ConfigError(path + ".d", "must be >= 1");

  if (m.type == MixtureBlock::Type::Hierarchical) {
    if (!j.contains("levels") || !j.at("levels").is_array() || j.at("levels").empty()) {
      throw ConfigError(path + ".levels", "hierarchical mixture needs a nonempty list of levels");
    }
    for (std::size_t i = 0; i < j.at("levels").size(); ++i) {
      const json& lvl = j.at("levels")[i];
      const std::string lp = path + ".levels[" + std::to_string(i) + "]";
      reject_unknown(lvl, lp, {"offset", "branching"});
      m.levels.push_back({get<double>(lvl, lp, "offset", 1.0), get<int>(lvl, lp, "branching", 2)});
    }
  }
  return m;
}

GridBlock parse_grid(const json& j) {
  const std::string path = "grid";
  reject_unknown(j, path, {"axis", "points", "min", "max", "count"});
  GridBlock g;
  const std::string axis = get<std::string>(j, path, "axis", "u");
  if (axis == "u") {
    g.axis = GridBlock::Axis::U;
  } else if (axis == "t") {
    g.axis = GridBlock::Axis::T;
  } else {
    throw ConfigError(path + ".axis", "expected t|u, got '" + axis + "'");
  }
  g.points = get<std::vector<double>>(j, path, "points", {});
  g.min = get<double>(j, path, "min", 0.0);
  g.max = get<double>(j, path, "max", 2.0);
  g.count = get<int>(j, path, "count", 64);
  if (g.points.empty()) {
    if (g.count < 1) throw ConfigError(path + ".count", "must be >= 1");
    if (g.count > 1 && !(g.max > g.min)) throw ConfigError(path + ".max", "must exceed grid.min");
    if (g.min < 0.0) throw ConfigError(path + ".min", "must be >= 0");
  } else {
    for (std::size_t i = 1; i < g.points.size(); ++i) {
      if (!(g.points[i] > g.points[i - 1])) throw ConfigError(path + ".points", "must be strictly increasing");
    }
  }
  return g;
}

EstimatorBlock parse_estimator(const json& j) {
  const std::string path = "estimator";
  reject_unknown(j, path, {"n_samples", "seed", "steps", "trajectories"});
  EstimatorBlock e;
  e.n_samples = get<std::size_t>(j, path, "n_samples", e.n_samples);
  e.seed = get<std::uint64_t>(j, path, "seed", e.seed);
  e.steps = get<int>(j, path, "steps", e.steps);
  e.trajectories = get<std::size_t>(j, path, "trajectories", e.trajectories);
  if (e.n_samples < 2) throw ConfigError(path + ".n_samples", "must be >= 2");
  if (e.steps < 2) throw ConfigError(path + ".steps", "must be >= 2");
  if (e.trajectories < 2) throw ConfigError(path + ".trajectories", "must be >= 2");
  return e;
}

Partition parse_partition(const json& j) {
  const std::string path = "partition";
  reject_unknown(j, path, {"set_a", "set_b", "prior_a", "complement_proxy"});
  Partition p;
  p.set_a = get_classes(j, path, "set_a");
  p.set_b = get_classes(j, path, "set_b");
  p.prior_a = get<double>(j, path, "prior_a", 0.5);
  p.complement_proxy = get<bool>(j, path, "complement_proxy", false);
  return p;
}

GuidanceConfig parse_guidance(const json& j) {
  const std::string path = "guidance";
  reject_unknown(j, path, {"omega", "sigma_low", "sigma_high"});
  GuidanceConfig g;
  g.omega = get<double>(j, path, "omega", 1.0);
  g.sigma_low = get<double>(j, path, "sigma_low", 0.0);
  g.sigma_high = j.contains("sigma_high") && !j.at("sigma_high").is_null() ? get<double>(j, path, "sigma_high", 0.0)
                                                                           : std::numeric_limits<double>::infinity();
  if (!std::isfinite(g.omega)) throw ConfigError(path + ".omega", "must be finite");
  if (!(g.sigma_low <= g.sigma_high)) throw ConfigError(path + ".sigma_high", "must be >= sigma_low");
  return g;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  reject_unknown(j, "", {"schedule", "mixture", "grid", "estimator", "partition", "guidance", "sweep", "output"});
  ExperimentConfig cfg;
  const json empty = json::object();
  cfg.schedule = parse_schedule(j.value("schedule", empty));
  cfg.mixture = parse_mixture(j.value("mixture", empty));
  cfg.grid = parse_grid(j.value("grid", empty));
  cfg.estimator = parse_estimator(j.value("estimator", empty));
  if (j.contains("partition") && !j.at("partition").is_null()) cfg.partition = parse_partition(j.at("partition"));
  if (j.contains("guidance") && !j.at("guidance").is_null()) cfg.guidance = parse_guidance(j.at("guidance"));
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    reject_unknown(s, "sweep", {"d_list"});
    cfg.d_list = get<std::vector<long>>(s, "sweep", "d_list", {});
    for (long d : cfg.d_list) {
      if (d < 1) throw ConfigError("sweep.d_list", "dimensions must be >= 1");
    }
  }
  cfg.output = j.value("output", std::string());

  // Cross-block consistency.
  Mixture mixture;
  try {
    mixture = build_mixture(cfg);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("mixture", e.what());
  }
  if (cfg.partition) {
    try {
      cfg.partition->validate(mixture.classes());
    } catch (const std::exception& e) {
      throw ConfigError("partition", e.what());
    }
  }
  const Schedule sched = build_schedule(cfg, cfg.mixture.d);
  if (sched.kind == ScheduleKind::VP && !(cfg.schedule.t_min < sched.t_max)) throw ConfigError("schedule.t_min", "must be below t_max");
  build_times(cfg, sched, cfg.mixture.d);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config", std::string("parse error: ") + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["schedule"] = {{"kind", to_string(cfg.schedule.kind)}, {"t_min", cfg.schedule.t_min}};
  j["schedule"]["t_max"] = cfg.schedule.t_max ? json(*cfg.schedule.t_max) : json(nullptr);

  json m;
  m["sigma0"] = cfg.mixture.sigma0;
  m["d"] = cfg.mixture.d;
  switch (cfg.mixture.type) {
    case MixtureBlock::Type::Symmetric:
      m["type"] = "symmetric";
      m["q"] = cfg.mixture.q;
      break;
    case MixtureBlock::Type::Explicit:
      m["type"] = "explicit";
      m["means"] = cfg.mixture.means;
      m["priors"] = cfg.mixture.priors;
      break;
    case MixtureBlock::Type::Hierarchical:
      m["type"] = "hierarchical";
      m["levels"] = json::array();
      for (const auto& lvl : cfg.mixture.levels) m["levels"].push_back({{"offset", lvl.offset}, {"branching", lvl.branching}});
      break;
  }
  j["mixture"] = m;

  json g;
  g["axis"] = cfg.grid.axis == GridBlock::Axis::U ? "u" : "t";
  if (!cfg.grid.points.empty()) {
    g["points"] = cfg.grid.points;
  } else {
    g["min"] = cfg.grid.min;
    g["max"] = cfg.grid.max;
    g["count"] = cfg.grid.count;
  }
  j["grid"] = g;
  j["estimator"] = {{"n_samples", cfg.estimator.n_samples},
                    {"seed", cfg.estimator.seed},
                    {"steps", cfg.estimator.steps},
                    {"trajectories", cfg.estimator.trajectories}};
  if (cfg.partition) {
    j["partition"] = {{"set_a", cfg.partition->set_a},
                      {"set_b", cfg.partition->set_b},
                      {"prior_a", cfg.partition->prior_a},
                      {"complement_proxy", cfg.partition->complement_proxy}};
  }
  if (cfg.guidance) {
    j["guidance"] = {{"omega", cfg.guidance->omega}, {"sigma_low", cfg.guidance->sigma_low}};
    j["guidance"]["sigma_high"] = std::isfinite(cfg.guidance->sigma_high) ? json(cfg.guidance->sigma_high) : json(nullptr);
  }
  if (!cfg.d_list.empty()) j["sweep"] = {{"d_list", cfg.d_list}};
  return j;
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Mixture build_mixture(const ExperimentConfig& cfg, std::optional<long> d_override) {
  const MixtureBlock& m = cfg.mixture;
  const long d = d_override.value_or(m.d);
  switch (m.type) {
    case MixtureBlock::Type::Symmetric:
      return Mixture::symmetric_two_class(d, m.q, m.sigma0);
    case MixtureBlock::Type::Hierarchical:
      return hierarchical_mixture<double>(m.levels, d, m.sigma0);
    case MixtureBlock::Type::Explicit: {
      if (d_override && *d_override != m.d) throw ConfigError("mixture.type", "explicit means cannot be resized for a dimension sweep");
      Eigen::MatrixXd means(m.d, Index(m.means.size()));
      for (std::size_t k = 0; k < m.means.size(); ++k) {
        for (long i = 0; i < m.d; ++i) means(i, Index(k)) = m.means[k][std::size_t(i)];
      }
      if (m.priors.empty()) return Mixture::equiprobable(std::move(means), m.sigma0);
      Eigen::VectorXd lp(Index(m.priors.size()));
      double total = 0.0;
      for (double p : m.priors) {
        if (!(p > 0.0)) throw ConfigError("mixture.priors", "entries must be > 0");
        total += p;
      }
      for (std::size_t k = 0; k < m.priors.size(); ++k) lp[Index(k)] = std::log(m.priors[k] / total);
      Mixture spec{std::move(means), m.sigma0, std::move(lp)};
      spec.validate();
      return spec;
    }
  }
  throw ConfigError("mixture.type", "unsupported");
}

Schedule build_schedule(const ExperimentConfig& cfg, long d) {
  if (cfg.schedule.t_max) return Schedule{cfg.schedule.kind, *cfg.schedule.t_max};
  return Schedule::with_default_horizon(cfg.schedule.kind, d);
}

std::vector<double> build_times(const ExperimentConfig& cfg, const Schedule& sched, long d) {
  const GridBlock& g = cfg.grid;
  std::vector<double> pts = g.points;
  if (pts.empty()) {
    pts.resize(std::size_t(g.count));
    for (int i = 0; i < g.count; ++i) pts[std::size_t(i)] = g.count == 1 ? g.min : g.min + (g.max - g.min) * double(i) / double(g.count - 1);
    if (g.count > 1) pts.back() = g.max;
  }
  if (g.axis == GridBlock::Axis::U) {
    const Speciation scale = speciation_time(sched, d);
    if (scale.degenerate) throw ConfigError("grid.axis", "u-grid needs a nondegenerate speciation scale (VP with d = 1 has t_s = 0)");
    for (double& p : pts) p *= scale.t_s;
  }
  for (double t : pts) {
    if (t < 0.0 || t > sched.t_max) {
      throw ConfigError("grid", "time " + std::to_string(t) + " outside [0, t_max = " + std::to_string(sched.t_max) + "]");
    }
  }
  return pts;
}

}  // namespace speciation
