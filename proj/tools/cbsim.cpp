#include "cbsim/config.hpp"
#include "cbsim/experiment.hpp"
#include "cbsim/simulation.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace cbsim;

namespace {

struct Common {
  std::string                config_path;
  std::optional<std::uint64_t> seed;
  std::string                out = "out";
  std::string                policy;
  std::optional<int>         n_fl;
  std::string                model_bytes;
  std::optional<double>      b_cb_hz;
  std::optional<int>         seeds;
  bool                       smoke = false;
  bool                       full  = false;
  unsigned                   threads = 0;
};

void add_common(CLI::App* app, Common& c, bool point_flags)
{
  app->add_option("--config", c.config_path, "key = value configuration file");
  app->add_option("--out", c.out, "output directory");
  app->add_flag("--smoke", c.smoke, "1 s horizon");
  app->add_flag("--full", c.full, "full horizon and seed count from the configuration");
  if (point_flags) {
    app->add_option("--seed", c.seed, "master seed");
    app->add_option("--policy", c.policy, "ds | ibi | cb-dedicated | cb-contention");
    app->add_option("--n-fl", c.n_fl, "number of FL UEs");
    app->add_option("--model-bytes", c.model_bytes, "FL model size, e.g. 12kB or 2MB");
    app->add_option("--b-cb", c.b_cb_hz, "bandwidth cap of the contention-based grant in Hz");
  } else {
    app->add_option("--seeds", c.seeds, "seeds per matrix cell");
    app->add_option("--threads", c.threads, "worker threads (0 = all cores)");
  }
}

ExperimentConfig build_config(const Common& c)
{
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
  if (!c.policy.empty()) {
    set_config_value(cfg, "policy", c.policy);
  }
  if (c.n_fl) {
    set_config_value(cfg, "N_FL", std::to_string(*c.n_fl));
  }
  if (!c.model_bytes.empty()) {
    set_config_value(cfg, "P_FL", c.model_bytes);
  }
  if (c.b_cb_hz) {
    cfg.radio.cb_bandwidth_cap_hz = *c.b_cb_hz;
  }
  if (c.seeds) {
    cfg.num_seeds = *c.seeds;
  }
  if (c.smoke) {
    cfg.radio.sim_duration_s = 1.0;
    cfg.warmup_s             = 0.0;
  } else if (!c.full) {
    if (!cfg.explicit_keys.count("T_S")) {
      cfg.radio.sim_duration_s = 60.0;
    }
    if (!cfg.explicit_keys.count("seeds") && !c.seeds) {
      cfg.num_seeds = 5;
    }
  }
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const fs::path& p)
{
  std::ofstream os(p);
  if (!os) {
    throw std::runtime_error(p.string() + ": cannot write");
  }
  return os;
}

int cmd_run(const Common& c, bool trace)
{
  const auto          cfg  = build_config(c);
  const std::uint64_t seed = c.seed.value_or(cfg.seed_base);
  fs::create_directories(c.out);
  RunOptions opts;
  opts.record_trace = trace;
  const auto r      = run_single(cfg, seed, opts);

  const MatrixPoint point{cfg.policy, cfg.n_fl(), cfg.fl.model_bytes, cfg.radio.cb_bandwidth_cap_hz};
  std::vector<MatrixRun> runs{{point, seed, r, {}}};
  {
    auto os = open_out(fs::path(c.out) / "results.csv");
    write_results_csv(os, result_rows(runs, cfg.radio.system_bandwidth_hz));
  }
  {
    auto os = open_out(fs::path(c.out) / "transfers.csv");
    write_run_transfers_csv(os, r);
  }
  {
    auto os = open_out(fs::path(c.out) / "iterations.csv");
    write_run_iterations_csv(os, r);
  }
  {
    auto os = open_out(fs::path(c.out) / "ue_metrics.csv");
    write_run_ue_metrics_csv(os, r);
  }
  {
    auto os = open_out(fs::path(c.out) / "layout.jsonl");
    channel::write_layout_jsonl(os, layout_for(cfg, seed));
  }
  {
    auto os = open_out(fs::path(c.out) / "config.txt");
    os << cfg.to_text();
  }
  if (trace) {
    auto os = open_out(fs::path(c.out) / "trace.csv");
    write_trace_csv(os, r.trace);
  }
  std::cout << "fingerprint " << r.fingerprint << "  slots " << r.slots << "  wall " << r.wall_s << " s\n";
  for (const auto& [k, v] : r.metrics) {
    std::cout << "  " << k << " = " << format_double(v) << '\n';
  }
  return 0;
}

int cmd_sweep(const Common& c)
{
  const auto cfg = build_config(c);
  fs::create_directories(c.out);
  const auto total = enumerate_points(cfg).size() * cfg.seeds().size();
  std::cerr << "running " << total << " simulations\n";
  const auto runs = run_matrix(cfg, c.threads, [](std::size_t done, std::size_t n) {
    if (done == n || done % 20 == 0) {
      std::cerr << "  " << done << "/" << n << '\n';
    }
  });
  const double bw      = cfg.radio.system_bandwidth_hz;
  const auto   rows    = result_rows(runs, bw);
  const auto   summary = summarize_rows(rows);
  {
    auto os = open_out(fs::path(c.out) / "results.csv");
    write_results_csv(os, rows);
  }
  {
    auto os = open_out(fs::path(c.out) / "summary.csv");
    write_summary_csv(os, summary);
  }
  {
    auto os = open_out(fs::path(c.out) / "boundary.csv");
    write_boundary_csv(os, boundary_report(summary));
  }
  {
    auto os = open_out(fs::path(c.out) / "transfers.csv");
    write_transfers_csv(os, runs, bw);
  }
  {
    auto os = open_out(fs::path(c.out) / "iterations.csv");
    write_iterations_csv(os, runs, bw);
  }
  {
    auto os = open_out(fs::path(c.out) / "ue_metrics.csv");
    write_ue_metrics_csv(os, runs, bw);
  }
  {
    auto os = open_out(fs::path(c.out) / "config.txt");
    os << cfg.to_text();
  }
  int failed = 0;
  for (const auto& r : runs) {
    if (!r.result) {
      ++failed;
      std::cerr << "failed: " << r.point.label(bw) << " n_fl=" << r.point.n_fl << " seed=" << r.seed << ": " << r.error << '\n';
    }
  }
  return failed ? 2 : 0;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Slot-level simulator of contention-based uplink scheduling in a factory cell"};
  app.require_subcommand(1);

  Common run_opts, trace_opts, sweep_opts, validate_opts;
  std::string report_dir;

  auto* run = app.add_subcommand("run", "simulate one configuration and seed");
  add_common(run, run_opts, true);
  auto* sweep = app.add_subcommand("sweep", "simulate the experiment matrix");
  add_common(sweep, sweep_opts, false);
  auto* trace = app.add_subcommand("trace", "simulate one run and write the uplink grant trace");
  add_common(trace, trace_opts, true);
  auto* report = app.add_subcommand("report", "rebuild summary.csv and boundary.csv from results.csv");
  report->add_option("--out,--in", report_dir, "directory holding results.csv")->required();
  auto* validate = app.add_subcommand("validate", "check a configuration without running it");
  add_common(validate, validate_opts, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) {
      return cmd_run(run_opts, false);
    }
    if (*trace) {
      return cmd_run(trace_opts, true);
    }
    if (*sweep) {
      return cmd_sweep(sweep_opts);
    }
    if (*report) {
      report_directory(report_dir);
      return 0;
    }
    if (*validate) {
      const auto cfg = build_config(validate_opts);
      std::cout << cfg.to_text();
      return 0;
    }
  } catch (const ConfigError& e) {
    for (const auto& issue : e.issues()) {
      std::cerr << "config error: " << issue << '\n';
    }
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
