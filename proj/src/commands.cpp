#include "speciation/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "speciation/validation.hpp"

namespace speciation {

namespace {

McOptions mc_options(const ExperimentConfig& cfg, int threads) {
  return {cfg.estimator.n_samples, cfg.estimator.seed, threads};
}

void write_preamble(std::ostringstream& out, const ExperimentConfig& cfg, const std::string& command) {
  out << "# speciation " << command << "\n";
  out << "# config_hash: " << config_hash(cfg) << "\n";
  out << "# config: " << to_json(cfg).dump() << "\n";
}

std::string integer(std::uint64_t v) { return std::to_string(v); }

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v == 0.0 ? 0.0 : v);  // folds -0 into 0
  return buf;
}

EntropyProfile run_profile(const ExperimentConfig& cfg, int threads) {
  const Mixture spec = build_mixture(cfg);
  const Schedule sched = build_schedule(cfg, cfg.mixture.d);
  const std::vector<double> times = build_times(cfg, sched, cfg.mixture.d);
  return profile_sweep(spec, sched, times, mc_options(cfg, threads), cfg.partition);
}

std::vector<SweepRow> run_speciation_sweep(const ExperimentConfig& cfg, int threads) {
  const std::vector<long> dims = cfg.d_list.empty() ? std::vector<long>{cfg.mixture.d} : cfg.d_list;
  std::vector<SweepRow> rows;
  for (long d : dims) {
    const Mixture spec = build_mixture(cfg, d);
    const Schedule sched = build_schedule(cfg, d);
    const std::vector<double> times = build_times(cfg, sched, d);
    SweepRow row;
    row.d = d;
    row.t_s = speciation_time(sched, d).t_s;
    row.profile = profile_sweep(spec, sched, times, mc_options(cfg, threads), cfg.partition);
    try {
      row.window = transition_window(row.profile);
    } catch (const std::domain_error& e) {
      throw ConfigError("grid", "d = " + std::to_string(d) + ": " + e.what() + "; widen the grid");
    }
    row.width_u = row.t_s > 0.0 ? row.window.width / row.t_s : std::numeric_limits<double>::quiet_NaN();
    rows.push_back(std::move(row));
  }
  return rows;
}

Partition tracking_partition(const ExperimentConfig& cfg, const Mixture& spec) {
  if (cfg.partition) return *cfg.partition;
  if (spec.classes() < 2) throw ConfigError("partition", "tracking needs at least two classes");
  Partition p;
  p.set_a = {0};
  for (Index k = 1; k < spec.classes(); ++k) p.set_b.push_back(k);
  return p;
}

namespace {

struct TrackSetup {
  Mixture spec;
  Schedule sched;
  Partition partition;
  TrackerModels models;
  TrackerOptions opts;
  PosteriorOracle oracle;
};

TrackSetup track_setup(const ExperimentConfig& cfg, int threads) {
  TrackSetup s{build_mixture(cfg), build_schedule(cfg, cfg.mixture.d), {}, {}, {}, {}};
  s.partition = tracking_partition(cfg, s.spec);
  s.models = exact_denoisers(s.spec, s.sched, s.partition);
  s.opts.steps = cfg.estimator.steps;
  s.opts.trajectories = cfg.estimator.trajectories;
  s.opts.seed = cfg.estimator.seed;
  s.opts.threads = threads;
  s.opts.t_end = cfg.schedule.t_min;
  s.oracle = [spec = s.spec, sched = s.sched, partition = s.partition](const VectorXd& x, double t) {
    const Stats stats = component_stats(spec, sched, t);
    if (stats.degenerate()) return std::numeric_limits<double>::quiet_NaN();
    return partition_posterior(spec, stats, partition, x);
  };
  return s;
}

}  // namespace

OnlineEstimate run_track(const ExperimentConfig& cfg, int threads) {
  const TrackSetup s = track_setup(cfg, threads);
  OnlineEstimate est = estimate_entropy_online(s.models, s.sched, s.partition, s.opts, nullptr, &s.oracle);
  set_rescaled_time(est.profile, speciation_time(s.sched, cfg.mixture.d));
  return est;
}

GuidanceRun run_guidance_distortion(const ExperimentConfig& cfg, int threads) {
  if (!cfg.guidance) throw ConfigError("guidance", "guidance-distortion needs a guidance block");
  const TrackSetup s = track_setup(cfg, threads);
  GuidanceRun run;
  run.base = estimate_entropy_online(s.models, s.sched, s.partition, s.opts);
  run.guided = estimate_entropy_online(s.models, s.sched, s.partition, s.opts, &*cfg.guidance);
  const Speciation scale = speciation_time(s.sched, cfg.mixture.d);
  set_rescaled_time(run.base.profile, scale);
  set_rescaled_time(run.guided.profile, scale);
  run.distortion = distortion_profile(run.base.profile, run.guided.profile);
  return run;
}

std::string profile_csv(const ExperimentConfig& cfg, const EntropyProfile& p, const std::string& command) {
  std::ostringstream out;
  write_preamble(out, cfg, command);
  out << "t,u,H,H_stderr,Hdot,Hdot_stderr,n,seed\n";
  for (std::size_t j = 0; j < p.size(); ++j) {
    out << format_number(p.times[j]) << ',' << format_number(p.u[j]) << ',' << format_number(p.H[j]) << ','
        << format_number(p.H_stderr[j]) << ',' << format_number(p.Hdot[j]) << ',' << format_number(p.Hdot_stderr[j]) << ','
        << integer(p.n_samples) << ',' << integer(p.seed) << '\n';
  }
  return out.str();
}

std::string sweep_csv(const ExperimentConfig& cfg, const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  write_preamble(out, cfg, "speciation-sweep");
  out << "d,t_s,t_lo,t_hi,width_t,width_u\n";
  for (const SweepRow& r : rows) {
    out << r.d << ',' << format_number(r.t_s) << ',' << format_number(r.window.t_lo) << ',' << format_number(r.window.t_hi) << ','
        << format_number(r.window.width) << ',' << format_number(r.width_u) << '\n';
  }
  return out.str();
}

std::string track_csv(const ExperimentConfig& cfg, const OnlineEstimate& est) {
  const EntropyProfile& p = est.profile;
  std::ostringstream out;
  write_preamble(out, cfg, "track");
  out << "# mean_gamma_abs_err: " << format_number(est.mean_gamma_abs_err) << "\n";
  out << "t,u,H,H_stderr,Hdot,Hdot_stderr,n,seed,gamma_abs_err\n";
  for (std::size_t j = 0; j < p.size(); ++j) {
    out << format_number(p.times[j]) << ',' << format_number(p.u[j]) << ',' << format_number(p.H[j]) << ','
        << format_number(p.H_stderr[j]) << ',' << format_number(p.Hdot[j]) << ',' << format_number(p.Hdot_stderr[j]) << ','
        << integer(p.n_samples) << ',' << integer(p.seed) << ',' << format_number(est.gamma_abs_err[j]) << '\n';
  }
  return out.str();
}

std::string distortion_csv(const ExperimentConfig& cfg, const GuidanceRun& run) {
  const DistortionProfile& d = run.distortion;
  std::ostringstream out;
  write_preamble(out, cfg, "guidance-distortion");
  out << "t,Hdot_base,Hdot_guided,delta\n";
  for (std::size_t j = 0; j < d.times.size(); ++j) {
    out << format_number(d.times[j]) << ',' << format_number(d.hdot_base[j]) << ',' << format_number(d.hdot_guided[j]) << ','
        << format_number(d.delta[j]) << '\n';
  }
  return out.str();
}

std::string cmd_profile(const ExperimentConfig& cfg, int threads) { return profile_csv(cfg, run_profile(cfg, threads), "profile"); }

std::string cmd_speciation_sweep(const ExperimentConfig& cfg, int threads) { return sweep_csv(cfg, run_speciation_sweep(cfg, threads)); }

std::string cmd_track(const ExperimentConfig& cfg, int threads) { return track_csv(cfg, run_track(cfg, threads)); }

std::string cmd_guidance_distortion(const ExperimentConfig& cfg, int threads) {
  return distortion_csv(cfg, run_guidance_distortion(cfg, threads));
}

namespace {

void emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << text;
  if (!f) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Entropy, speciation and posterior-tracking experiments on exact Gaussian-mixture diffusions"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  const auto common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
    if (needs_config) c->required();
    sub->add_option("--out", out_path, "output path (default: config output, else stdout)");
    sub->add_option("--seed", seed, "overrides estimator.seed");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  };

  CLI::App* profile = app.add_subcommand("profile", "class-conditional entropy profile");
  CLI::App* sweep = app.add_subcommand("speciation-sweep", "transition windows across dimensions");
  CLI::App* track = app.add_subcommand("track", "online posterior tracking along reverse trajectories");
  CLI::App* guidance = app.add_subcommand("guidance-distortion", "entropy production with and without guidance");
  CLI::App* validate = app.add_subcommand("validate", "oracle suite, JSON report");
  for (CLI::App* sub : {profile, sweep, track, guidance}) common(sub, true);
  common(validate, false);

  double tolerance_scale = 1.0;
  std::string csv_dir;
  bool quick = false;
  validate->add_option("--tolerance-scale", tolerance_scale, "multiplies every tolerance");
  validate->add_option("--csv-dir", csv_dir, "also write the suite CSVs here");
  validate->add_flag("--quick", quick, "smaller sample sizes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (validate->parsed()) {
      SuiteOptions opts;
      opts.threads = threads;
      opts.tolerance_scale = tolerance_scale;
      if (seed) opts.seed = *seed;
      if (quick) {
        opts.n = 20000;
        opts.trajectories = 200;
      }
      const std::vector<Check> checks = run_validation_suite(opts);
      const nlohmann::json report = validation_report(checks, opts);
      if (!csv_dir.empty()) write_suite_csvs(csv_dir, opts);
      emit(report.dump(2) + "\n", out_path);
      return report.at("pass").get<bool>() ? 0 : 1;
    }

    ExperimentConfig cfg = load_config(config_path);
    if (seed) cfg.estimator.seed = *seed;
    const std::string target = out_path.empty() ? cfg.output : out_path;
    std::string text;
    if (profile->parsed()) {
      text = cmd_profile(cfg, threads);
    } else if (sweep->parsed()) {
      text = cmd_speciation_sweep(cfg, threads);
    } else if (track->parsed()) {
      text = cmd_track(cfg, threads);
    } else {
      text = cmd_guidance_distortion(cfg, threads);
    }
    emit(text, target);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace speciation
