#include "speciation/validation.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace speciation {

namespace {

Check make_check(std::string name, double measured, double tolerance, double scale, std::string detail = {}) {
  Check c{std::move(name), measured, tolerance * scale, false, std::move(detail)};
  c.pass = std::isfinite(measured) && measured <= c.tolerance;
  return c;
}

Mixture line_mixture(double half_gap, double sigma0) {
  Eigen::MatrixXd means(1, 2);
  means << half_gap, -half_gap;
  return Mixture::equiprobable(std::move(means), sigma0);
}

Partition one_vs_one() {
  Partition p;
  p.set_a = {0};
  p.set_b = {1};
  return p;
}

}  // namespace

ExperimentConfig desk_production_config() {
  ExperimentConfig cfg;
  cfg.schedule.kind = ScheduleKind::VP;
  cfg.schedule.t_max = 10.0;
  cfg.mixture.type = MixtureBlock::Type::Explicit;
  cfg.mixture.d = 1;
  cfg.mixture.sigma0 = 0.1;
  cfg.mixture.means = {{1.0}, {-1.0}};
  cfg.grid.axis = GridBlock::Axis::T;
  // Quadratic spacing: production rises steeply just above t = 0 when sigma0 is small.
  for (int j = 0; j < 128; ++j) cfg.grid.points.push_back(4.0 * (j / 127.0) * (j / 127.0));
  cfg.estimator.n_samples = 50000;
  return cfg;
}

ExperimentConfig desk_tracker_config() {
  ExperimentConfig cfg;
  cfg.schedule.kind = ScheduleKind::VP;
  cfg.schedule.t_max = 10.0;
  cfg.mixture.type = MixtureBlock::Type::Symmetric;
  cfg.mixture.d = 8;
  cfg.mixture.q = 1.0;
  cfg.mixture.sigma0 = 1.0;
  cfg.grid.axis = GridBlock::Axis::T;
  cfg.grid.min = 0.0;
  cfg.grid.max = 10.0;
  cfg.grid.count = 64;
  cfg.estimator.steps = 256;
  cfg.estimator.trajectories = 1000;
  cfg.partition = one_vs_one();
  return cfg;
}

ExperimentConfig desk_guidance_config(double omega, double sigma_low, double sigma_high) {
  ExperimentConfig cfg = desk_tracker_config();
  GuidanceConfig g;
  g.omega = omega;
  g.sigma_low = sigma_low;
  g.sigma_high = sigma_high;
  cfg.guidance = g;
  return cfg;
}

ExperimentConfig desk_sweep_config(ScheduleKind kind, std::vector<long> d_list) {
  ExperimentConfig cfg;
  cfg.schedule.kind = kind;
  cfg.mixture.type = MixtureBlock::Type::Symmetric;
  cfg.mixture.d = d_list.empty() ? 100 : d_list.front();
  cfg.mixture.q = 1.0;
  cfg.mixture.sigma0 = 1.0;
  cfg.grid.axis = GridBlock::Axis::U;
  cfg.grid.min = 0.0;
  cfg.grid.max = 3.0;
  cfg.grid.count = 192;
  cfg.estimator.n_samples = 20000;
  cfg.d_list = std::move(d_list);
  return cfg;
}

Check check_jsd_reference(double tolerance_scale) {
  const auto normal = [](double mean) {
    return [mean](double x) { return std::exp(-0.5 * (x - mean) * (x - mean)) / std::sqrt(2.0 * std::numbers::pi); };
  };
  const double jsd = jsd_quadrature_1d(normal(0.0), normal(1.0), -14.0, 15.0);
  return make_check("jsd_quadrature_reference", std::abs(jsd - kJsdUnitShift), 1e-10, tolerance_scale,
                    "JSD(N(0,1), N(1,1)) = " + format_number(jsd));
}

std::vector<Check> check_partition_jsd(const SuiteOptions& opts) {
  // EDM, means +-1 and sigma0 = 0.2: ||delta||^2 / v = 0.5, 4 and 25 at these times.
  const Mixture spec = line_mixture(1.0, 0.2);
  const Schedule sched = Schedule::edm(100.0);
  const Partition part = one_vs_one();
  const struct {
    const char* name;
    double t;
  } cases[] = {{"overlapping", std::sqrt(8.0 - 0.04)}, {"intermediate", std::sqrt(1.0 - 0.04)}, {"separated", std::sqrt(0.16 - 0.04)}};
  std::vector<Check> out;
  for (const auto& c : cases) {
    const Estimate h = partitioned_entropy_mc(spec, sched, part, c.t, {opts.n, opts.seed, opts.threads});
    const double jsd = jsd_quadrature_1d(spec, sched, part, c.t);
    const double gap = std::abs(std::numbers::ln2 - h.value - jsd);
    out.push_back(make_check(std::string("partition_jsd_") + c.name, gap / h.se, 3.0, opts.tolerance_scale,
                             "ln2 - H = " + format_number(std::numbers::ln2 - h.value) + ", JSD = " + format_number(jsd) +
                                 ", stderr = " + format_number(h.se)));
  }
  return out;
}

std::vector<Check> check_entropy_production(const SuiteOptions& opts, EntropyProfile* profile_out) {
  ExperimentConfig cfg = desk_production_config();
  cfg.estimator.n_samples = opts.n;
  cfg.estimator.seed = opts.seed;
  const Mixture spec = build_mixture(cfg);
  const Schedule sched = build_schedule(cfg, 1);
  const std::vector<double> times = build_times(cfg, sched, 1);
  const McOptions mc{opts.n, opts.seed, opts.threads};

  const EntropyProfile p = profile_sweep(spec, sched, times, mc);
  const Derivative fd = entropy_production_fd_paired(spec, sched, times, mc);
  std::size_t misses = 0;
  for (std::size_t j = 0; j < times.size(); ++j) {
    const double combined = std::hypot(p.Hdot_stderr[j], fd.se[j]);
    if (!(std::abs(p.Hdot[j] - fd.value[j]) <= 3.0 * combined)) ++misses;
  }
  double integral = 0.0;
  for (std::size_t j = 1; j < times.size(); ++j) integral += 0.5 * (times[j] - times[j - 1]) * (p.Hdot[j] + p.Hdot[j - 1]);
  const double change = p.H.back() - p.H.front();
  if (profile_out) *profile_out = p;

  return {make_check("hdot_fisher_vs_fd_miss_fraction", double(misses) / double(times.size()), 0.05, opts.tolerance_scale,
                     std::to_string(misses) + " of " + std::to_string(times.size()) + " points outside 3 combined stderr"),
          make_check("hdot_conservation", std::abs(integral - change) / std::numbers::ln2, 0.02, opts.tolerance_scale,
                     "trapezoid = " + format_number(integral) + ", H(end) - H(0) = " + format_number(change))};
}

std::vector<Check> check_limits(const SuiteOptions& opts) {
  const McOptions mc{opts.n, opts.seed, opts.threads};
  std::vector<Check> out;
  // ||delta|| / sigma0 = 10: d = 100, q = 1/4.
  const Mixture pair = Mixture::symmetric_two_class(100, 0.25, 1.0);
  const double t_s = speciation_time<double>(ScheduleKind::VP, 100).t_s;
  const Schedule sched{ScheduleKind::VP, 6.0 * t_s};
  const Estimate hi = conditional_entropy_mc(pair, sched, 5.0 * t_s, mc);
  out.push_back(make_check("limit_high_noise_two_class", std::abs(hi.value - std::log(2.0)), 0.01, opts.tolerance_scale,
                           "H(5 t_s) = " + format_number(hi.value)));
  const Estimate lo = conditional_entropy_mc(pair, sched, 0.0, mc);
  out.push_back(make_check("limit_clean_two_class", lo.value, 0.01, opts.tolerance_scale, "H(0) = " + format_number(lo.value)));

  const HierarchyLevel levels[] = {{5.0, 2}, {5.0, 2}};
  const Mixture quad = hierarchical_mixture<double>(levels, 100, 1.0);
  const Estimate hi4 = conditional_entropy_mc(quad, sched, 5.0 * t_s, mc);
  out.push_back(make_check("limit_high_noise_four_class", std::abs(hi4.value - std::log(4.0)), 0.01, opts.tolerance_scale,
                           "H(5 t_s) = " + format_number(hi4.value)));
  return out;
}

std::vector<Check> check_tracker(const SuiteOptions& opts) {
  double err[3] = {0.0, 0.0, 0.0};
  const int steps[3] = {128, 256, 512};
  for (int i = 0; i < 3; ++i) {
    ExperimentConfig cfg = desk_tracker_config();
    cfg.estimator.steps = steps[i];
    cfg.estimator.trajectories = opts.trajectories;
    cfg.estimator.seed = opts.seed;
    err[i] = run_track(cfg, opts.threads).mean_gamma_abs_err;
  }
  return {make_check("tracker_mean_abs_err_256", err[1], 0.02, opts.tolerance_scale,
                     "128: " + format_number(err[0]) + ", 256: " + format_number(err[1]) + ", 512: " + format_number(err[2])),
          make_check("tracker_refinement_512_vs_128", err[2] - err[0], 0.0, opts.tolerance_scale,
                     "error at 512 steps minus error at 128 steps")};
}

std::vector<Check> run_validation_suite(const SuiteOptions& opts) {
  std::vector<Check> all{check_jsd_reference(opts.tolerance_scale)};
  for (auto group : {check_partition_jsd(opts), check_entropy_production(opts), check_limits(opts), check_tracker(opts)}) {
    all.insert(all.end(), group.begin(), group.end());
  }
  return all;
}

nlohmann::json validation_report(const std::vector<Check>& checks, const SuiteOptions& opts) {
  nlohmann::json j;
  bool pass = true;
  j["checks"] = nlohmann::json::array();
  for (const Check& c : checks) {
    pass = pass && c.pass;
    // Non-finite numbers have no JSON form; report them as null.
    const auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    j["checks"].push_back({{"name", c.name}, {"measured", num(c.measured)}, {"tolerance", num(c.tolerance)}, {"pass", c.pass},
                           {"detail", c.detail}});
  }
  j["settings"] = {{"n", opts.n}, {"trajectories", opts.trajectories}, {"seed", opts.seed}, {"tolerance_scale", opts.tolerance_scale}};
  j["pass"] = pass;
  return j;
}

void write_suite_csvs(const std::string& dir, const SuiteOptions& opts) {
  std::filesystem::create_directories(dir);
  const auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream f(std::filesystem::path(dir) / name, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + name + " in '" + dir + "'");
    f << text;
  };

  ExperimentConfig production = desk_production_config();
  production.estimator.n_samples = opts.n;
  production.estimator.seed = opts.seed;
  write("profile_t.csv", cmd_profile(production, opts.threads));

  for (long d : {100L, 1000L, 10000L}) {
    ExperimentConfig c = desk_sweep_config(ScheduleKind::VP, {});
    c.mixture.d = d;
    c.grid.max = 2.0;
    c.grid.count = 64;
    c.estimator.n_samples = std::min<std::size_t>(opts.n, 20000);
    c.estimator.seed = opts.seed;
    write("profile_u_d" + std::to_string(d) + ".csv", cmd_profile(c, opts.threads));
  }

  for (ScheduleKind kind : {ScheduleKind::VP, ScheduleKind::EDM}) {
    ExperimentConfig c = desk_sweep_config(kind, kind == ScheduleKind::VP ? std::vector<long>{16, 256, 4096} : std::vector<long>{64, 256, 1024});
    c.estimator.n_samples = std::min<std::size_t>(opts.n, 20000);
    c.estimator.seed = opts.seed;
    write(std::string("sweep_") + to_string(kind) + ".csv", cmd_speciation_sweep(c, opts.threads));
  }

  ExperimentConfig g = desk_guidance_config(2.0, 0.95, 1.0);
  g.estimator.trajectories = opts.trajectories;
  g.estimator.seed = opts.seed;
  write("distortion.csv", cmd_guidance_distortion(g, opts.threads));
}

}  // namespace speciation
