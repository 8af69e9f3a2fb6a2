#pragma once

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aoi/analytics.hpp"
#include "aoi/config.hpp"
#include "aoi/estimators.hpp"
#include "aoi/experiments.hpp"
#include "aoi/format.hpp"
#include "aoi/simulator.hpp"

namespace aoi::cli {

enum ExitCode : int { kOk = 0, kInvalid = 1, kGateFailed = 2 };

struct Overrides {
  std::string config_path;
  std::string output;
  std::optional<std::uint64_t> seed;
  std::optional<double> horizon;
  std::optional<std::size_t> replications;
  std::optional<double> burn_in;
};

namespace detail {

inline std::vector<std::vector<double>> default_s_grid(std::size_t K) {
  std::vector<double> mixed(K);
  for (std::size_t k = 0; k < K; ++k) mixed[k] = (k % 2 == 0) ? 0.5 : 2.0;
  return {std::vector<double>(K, 0.0), std::vector<double>(K, 1.0), mixed};
}

inline SimulationOptions simulation_options(const RunConfig& cfg, const SystemSpec& spec) {
  SimulationOptions opt;
  opt.horizon = cfg.horizon;
  opt.burn_in = cfg.burn_in ? *cfg.burn_in : default_burn_in(spec);
  opt.seed = cfg.seed;
  opt.s_grid = cfg.s_grid.empty() ? default_s_grid(spec.size()) : cfg.s_grid;
  return opt;
}

inline std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

inline std::string src(std::size_t k) { return "[" + std::to_string(k + 1) + "]"; }

inline void write_csv(const std::string& path, const std::string& body, std::ostream& err) {
  if (path.empty()) return;
  std::ofstream file(path, std::ios::binary);
  if (!file) {
    err << "error: cannot open output file " << path << '\n';
    throw std::runtime_error("output");
  }
  file << body;
}

inline int run_analytic(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const SystemSpec spec = cfg.system();
  const std::size_t K = spec.size();
  std::ostringstream csv;
  csv << "quantity,value\n";
  auto row = [&](const std::string& name, double v) {
    csv << name << ',' << format_double(v) << '\n';
  };

  out << "K = " << K << ", lambda = " << fmt(spec.total_rate())
      << ", departure rate = " << fmt(departure_rate(spec)) << "\n\n";
  out << std::left << std::setw(8) << "source" << std::setw(14) << "mean" << std::setw(14)
      << "variance" << std::setw(12) << "cv" << std::setw(14) << "update_rate" << std::setw(14)
      << "delay_mean" << std::setw(14) << "peak_mean" << "share\n";
  row("departure_rate", departure_rate(spec));
  row("pushout_rate", spec.total_rate() - departure_rate(spec));
  for (std::size_t k = 0; k < K; ++k) {
    const MarginalMoments m = marginal_aoi_moments(spec, k);
    const PeakDelayMeans p = peak_mean_identity(spec, k);
    const double share = source_update_share(spec, k);
    out << std::setw(8) << (k + 1) << std::setw(14) << fmt(m.mean) << std::setw(14)
        << fmt(m.variance) << std::setw(12) << fmt(m.cv) << std::setw(14) << fmt(p.update_rate)
        << std::setw(14) << fmt(p.delay) << std::setw(14) << fmt(p.peak) << fmt(share) << '\n';
    row("mean_aoi" + src(k), m.mean);
    row("var_aoi" + src(k), m.variance);
    row("cv_aoi" + src(k), m.cv);
    row("update_rate" + src(k), p.update_rate);
    row("delay_mean" + src(k), p.delay);
    row("peak_mean" + src(k), p.peak);
    row("share" + src(k), share);
  }
  if (K == 2) {
    out << "\ncovariance = " << fmt(aoi_covariance(spec))
        << "\ncorrelation (CC) = " << fmt(aoi_correlation(spec)) << '\n';
    row("cov_aoi[1,2]", aoi_covariance(spec));
    row("cc_aoi[1,2]", aoi_correlation(spec));
  }
  if (K <= kDefaultPermutationCap) {
    const auto grid = cfg.s_grid.empty() ? default_s_grid(K) : cfg.s_grid;
    out << '\n';
    for (const auto& s : grid) {
      const double v = joint_aoi_laplace(spec, s);
      out << "joint LT at s = " << s_label(s) << ": " << fmt(v, 10) << '\n';
      row("joint_lt" + s_label(s), v);
    }
  } else {
    err << "warning: K = " << K << " exceeds the permutation cap; joint LT skipped\n";
  }
  write_csv(cfg.output, csv.str(), err);
  return kOk;
}

inline int run_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const SystemSpec spec = cfg.system();
  const SimulationOptions opt = simulation_options(cfg, spec);
  const auto reps = run_replications(spec, opt, cfg.replications);
  const SimulationReport report = make_report(spec, opt, reps);
  std::ostringstream csv;
  csv << "quantity,estimate,stderr\n";
  auto row = [&](const std::string& name, const BatchEstimate& e) {
    csv << name << ',' << format_double(e.value) << ',' << format_double(e.std_error) << '\n';
    out << std::left << std::setw(28) << name << fmt(e.value) << " +/- " << fmt(e.std_error, 3)
        << '\n';
  };
  out << "replications = " << cfg.replications << ", horizon = " << fmt(opt.horizon)
      << ", burn-in = " << fmt(opt.burn_in) << ", seed = " << opt.seed << "\n\n";
  for (std::size_t i = 0; i < opt.s_grid.size(); ++i) {
    row("joint_lt" + s_label(opt.s_grid[i]), report.joint_laplace[i]);
    row("palm_rhs" + s_label(opt.s_grid[i]), report.palm_rhs[i].estimate);
  }
  const AoIStatistics& st = report.statistics;
  const std::size_t n = report.replications;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    row("mean_aoi" + src(k), {st.mean[k], st.mean_stderr[k], n});
    row("var_aoi" + src(k), {st.variance[k], st.variance_stderr[k], n});
  }
  for (std::size_t j = 0; j < spec.size(); ++j) {
    for (std::size_t k = j + 1; k < spec.size(); ++k) {
      const std::string pair = "[" + std::to_string(j + 1) + "," + std::to_string(k + 1) + "]";
      row("cov_aoi" + pair, {st.covariance(j, k), st.covariance_stderr(j, k), n});
      row("cc_aoi" + pair, {st.correlation(j, k), st.correlation_stderr(j, k), n});
    }
  }
  row("departure_rate", report.departure_rate);
  row("pushout_rate", report.pushout_rate);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const PalmEstimate& p = report.palm[k];
    if (p.missing) {
      err << "warning: source " << (k + 1) << " had no departures in some replication\n";
      continue;
    }
    row("share" + src(k), p.share);
    row("update_rate" + src(k), p.update_rate);
    row("delay_mean" + src(k), p.delay);
    row("peak_mean" + src(k), p.peak);
  }
  if (report.coverage_shortfalls > 0) {
    err << "warning: " << report.coverage_shortfalls
        << " replication(s) reached full source coverage after burn-in\n";
  }
  write_csv(cfg.output, csv.str(), err);
  return kOk;
}

inline int run_compare(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const SystemSpec spec = cfg.system();
  const SimulationOptions opt = simulation_options(cfg, spec);
  const ComparisonResult result = compare(spec, opt, cfg.replications);
  std::ostringstream csv;
  write_comparison_csv(csv, result);

  out << std::left << std::setw(28) << "quantity" << std::setw(14) << "analytic" << std::setw(14)
      << "simulated" << std::setw(12) << "stderr" << std::setw(10) << "z" << "pass\n";
  for (const auto& r : result.rows) {
    out << std::setw(28) << r.quantity << std::setw(14) << fmt(r.analytic) << std::setw(14)
        << fmt(r.simulated) << std::setw(12) << fmt(r.std_error, 3) << std::setw(10)
        << fmt(r.z, 3) << (r.pass ? "yes" : "NO") << '\n';
  }
  for (const auto& f : result.flags) err << "note: " << f << '\n';
  write_csv(cfg.output, csv.str(), err);
  if (!result.all_pass()) {
    err << "compare: at least one quantity is outside 3 standard errors\n";
    return kGateFailed;
  }
  return kOk;
}

inline int run_sweep_command(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const SweepSpec spec = make_sweep_spec(*cfg.sweep);
  const SweepTable table = run_sweep(spec);
  std::ostringstream csv;
  write_sweep_csv(csv, table);

  out << "sweep over " << axis_name(table.axis) << " (lambda_1 = " << fmt(spec.lambda_1);
  if (table.axis == SweepAxis::lambda_2) {
    out << ", 1/E[S] = " << fmt(spec.service_rate) << ")\n";
  } else {
    out << ", lambda_2 = " << fmt(spec.lambda_2) << ")\n";
  }
  std::vector<std::string> seen;
  for (const auto& row : table.rows) {
    if (std::find(seen.begin(), seen.end(), row.family) != seen.end()) continue;
    seen.push_back(row.family);
    const SweepRow low = curve_minimum(table, row.family);
    out << "  " << std::left << std::setw(12) << row.family << "min CC = " << fmt(low.cc)
        << " at " << axis_name(table.axis) << " = " << fmt(low.param) << '\n';
  }
  write_csv(cfg.output, csv.str(), err);
  return kOk;
}

}  // namespace detail

/// Full command-line entry point. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Joint age-of-information statistics for a multi-source pushout server"};
  app.require_subcommand(1);
  Overrides ov;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", ov.config_path, "Run configuration file")->required();
    sub->add_option("--output", ov.output, "CSV output path");
    sub->add_option("--seed", ov.seed, "Random seed");
    sub->add_option("--horizon", ov.horizon, "Simulated time per replication");
    sub->add_option("--replications", ov.replications, "Number of replications (batches)");
    sub->add_option("--burn-in", ov.burn_in, "Discarded initial time per replication");
  };
  CLI::App* analytic = app.add_subcommand("analytic", "Closed-form statistics");
  CLI::App* simulate = app.add_subcommand("simulate", "Simulation estimates");
  CLI::App* comparison = app.add_subcommand("compare", "Analytic vs simulation z-scores");
  CLI::App* sweep = app.add_subcommand("sweep", "Correlation sweep table");
  for (CLI::App* sub : {analytic, simulate, comparison, sweep}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kInvalid;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const Command command = *parse_command(chosen->get_name());

  std::ifstream file(ov.config_path, std::ios::binary);
  if (!file) {
    err << "error: cannot read config file " << ov.config_path << '\n';
    return kInvalid;
  }
  std::stringstream buffer;
  buffer << file.rdbuf();
  ConfigParseResult parsed = parse_config(buffer.str());
  if (!parsed.ok()) {
    for (const auto& e : parsed.errors) err << "config error: " << e << '\n';
    return kInvalid;
  }
  RunConfig cfg = std::move(*parsed.config);
  cfg.command = command;
  if (!ov.output.empty()) cfg.output = ov.output;
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.horizon) cfg.horizon = *ov.horizon;
  if (ov.replications) cfg.replications = *ov.replications;
  if (ov.burn_in) cfg.burn_in = *ov.burn_in;

  std::vector<std::string> problems;
  if (!(cfg.horizon > 0.0)) problems.push_back("horizon must be positive");
  if (cfg.replications < 2) problems.push_back("replications must be at least 2");
  if (cfg.burn_in && !(*cfg.burn_in >= 0.0 && *cfg.burn_in < cfg.horizon)) {
    problems.push_back("burn-in must be in [0, horizon)");
  }
  if (command == Command::sweep && !cfg.sweep) problems.push_back("sweep needs a [sweep] section");
  if (command != Command::sweep && cfg.sources.empty()) {
    problems.push_back("command " + command_name(command) + " needs at least one [source]");
  }
  if (!problems.empty()) {
    for (const auto& p : problems) err << "error: " << p << '\n';
    return kInvalid;
  }

  try {
    switch (command) {
      case Command::analytic: return detail::run_analytic(cfg, out, err);
      case Command::simulate: return detail::run_simulate(cfg, out, err);
      case Command::compare: return detail::run_compare(cfg, out, err);
      case Command::sweep: return detail::run_sweep_command(cfg, out, err);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  }
  return kOk;
}

}  // namespace aoi::cli
