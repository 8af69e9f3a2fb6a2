#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "aoi/analytics.hpp"
#include "aoi/estimators.hpp"
#include "aoi/format.hpp"
#include "aoi/simulator.hpp"

namespace aoi {

enum class SweepAxis { lambda_2, service_rate };

inline std::string axis_name(SweepAxis axis) {
  return axis == SweepAxis::lambda_2 ? "lambda_2" : "service_rate";
}

/// Correlation sweep for two sources sharing one service law. Along
/// `lambda_2` the fixed quantities are lambda_1 and service_rate (1/E[S]);
/// along `service_rate` they are lambda_1 and lambda_2.
struct SweepSpec {
  SweepAxis axis = SweepAxis::lambda_2;
  double lambda_1 = 3.0;
  double lambda_2 = 3.0;
  double service_rate = 6.0;
  std::vector<ServiceFamily> families;
  std::vector<double> grid;
};

struct SweepRow {
  double param;
  std::string family;
  double cc;
};

struct SweepTable {
  SweepAxis axis;
  std::vector<SweepRow> rows;
};

inline std::vector<double> logspace(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0) || !(hi > lo) || n < 2) throw std::invalid_argument("logspace: bad range");
  std::vector<double> out(n);
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  out.front() = lo;
  out.back() = hi;
  return out;
}

/// Sorted union of a grid and extra points.
inline std::vector<double> with_anchors(std::vector<double> grid, const std::vector<double>& anchors) {
  for (double a : anchors) {
    if (a > 0.0) grid.push_back(a);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

/// exponential, gamma(0.5), gamma(2), deterministic.
inline std::vector<ServiceFamily> default_families() {
  return {GammaFamily{1.0}, GammaFamily{0.5}, GammaFamily{2.0}, DeterministicFamily{}};
}

/// logspace(0.05, 50, 60) plus lambda_2 = service_rate - lambda_1 and
/// lambda_2 = lambda_1.
inline std::vector<double> default_lambda2_grid(double lambda_1, double service_rate) {
  return with_anchors(logspace(0.05, 50.0, 60), {service_rate - lambda_1, lambda_1});
}

/// logspace(0.01, 1000, 60) plus service_rate = lambda_1 + lambda_2.
inline std::vector<double> default_service_rate_grid(double lambda_1, double lambda_2) {
  return with_anchors(logspace(0.01, 1000.0, 60), {lambda_1 + lambda_2});
}

namespace detail {

inline void validate_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("sweep grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0) || !std::isfinite(grid[i])) {
      throw std::invalid_argument("sweep grid values must be positive");
    }
    if (i > 0 && !(grid[i] > grid[i - 1])) {
      throw std::invalid_argument("sweep grid must be strictly increasing");
    }
  }
}

inline double common_service_cc(double lambda_1, double lambda_2, const ServiceFamily& family,
                                double mean_service) {
  const ServiceTimeModel model = family_model(family, mean_service);
  return aoi_correlation(SystemSpec({{lambda_1, model}, {lambda_2, model}}));
}

}  // namespace detail

inline SweepTable sweep_cc_vs_lambda2(double lambda_1, double service_rate,
                                      const std::vector<ServiceFamily>& families,
                                      const std::vector<double>& grid) {
  detail::validate_grid(grid);
  SweepTable table{SweepAxis::lambda_2, {}};
  for (const auto& family : families) {
    for (double lambda_2 : grid) {
      table.rows.push_back({lambda_2, family_label(family),
                            detail::common_service_cc(lambda_1, lambda_2, family,
                                                      1.0 / service_rate)});
    }
  }
  return table;
}

inline SweepTable sweep_cc_vs_service_rate(double lambda_1, double lambda_2,
                                           const std::vector<ServiceFamily>& families,
                                           const std::vector<double>& grid) {
  detail::validate_grid(grid);
  SweepTable table{SweepAxis::service_rate, {}};
  for (const auto& family : families) {
    for (double rate : grid) {
      table.rows.push_back({rate, family_label(family),
                            detail::common_service_cc(lambda_1, lambda_2, family, 1.0 / rate)});
    }
  }
  return table;
}

inline SweepTable run_sweep(const SweepSpec& spec) {
  const auto families = spec.families.empty() ? default_families() : spec.families;
  if (spec.axis == SweepAxis::lambda_2) {
    const auto grid =
        spec.grid.empty() ? default_lambda2_grid(spec.lambda_1, spec.service_rate) : spec.grid;
    return sweep_cc_vs_lambda2(spec.lambda_1, spec.service_rate, families, grid);
  }
  const auto grid =
      spec.grid.empty() ? default_service_rate_grid(spec.lambda_1, spec.lambda_2) : spec.grid;
  return sweep_cc_vs_service_rate(spec.lambda_1, spec.lambda_2, families, grid);
}

/// Rows of one family, in grid order.
inline std::vector<SweepRow> curve(const SweepTable& table, const std::string& family) {
  std::vector<SweepRow> out;
  for (const auto& row : table.rows) {
    if (row.family == family) out.push_back(row);
  }
  return out;
}

/// Grid point with the smallest (most negative) correlation.
inline SweepRow curve_minimum(const SweepTable& table, const std::string& family) {
  const auto rows = curve(table, family);
  if (rows.empty()) throw std::invalid_argument("no rows for family " + family);
  return *std::min_element(rows.begin(), rows.end(),
                           [](const SweepRow& a, const SweepRow& b) { return a.cc < b.cc; });
}

/// |CC| rises then falls along the grid (no interior local minimum of |CC|).
inline bool is_unimodal(const std::vector<SweepRow>& rows) {
  std::size_t i = 1;
  while (i < rows.size() && std::abs(rows[i].cc) >= std::abs(rows[i - 1].cc)) ++i;
  while (i < rows.size() && std::abs(rows[i].cc) <= std::abs(rows[i - 1].cc)) ++i;
  return i == rows.size();
}

inline void write_sweep_csv(std::ostream& out, const SweepTable& table) {
  out << "param,family,cc\n";
  for (const auto& row : table.rows) {
    out << format_double(row.param) << ',' << row.family << ',' << format_double(row.cc) << '\n';
  }
}

struct ComparisonRow {
  std::string quantity;
  double analytic;
  double simulated;
  double std_error;
  double z;
  bool pass;
};

struct ComparisonResult {
  std::vector<ComparisonRow> rows;
  std::vector<std::string> flags;

  bool all_pass() const {
    return std::all_of(rows.begin(), rows.end(), [](const ComparisonRow& r) { return r.pass; });
  }
};

inline ComparisonRow make_row(std::string quantity, double analytic, const BatchEstimate& est) {
  double diff = est.value - analytic;
  // Degenerate estimators (e.g. delay under deterministic service) have zero
  // spread; differences at roundoff level count as exact.
  if (std::abs(diff) <= 1e-12 * std::max(1.0, std::abs(analytic))) diff = 0.0;
  double z = 0.0;
  if (est.std_error > 0.0) {
    z = diff / est.std_error;
  } else if (diff != 0.0) {
    z = std::copysign(std::numeric_limits<double>::infinity(), diff);
  }
  const bool pass = std::abs(diff) <= 3.0 * est.std_error;
  return {std::move(quantity), analytic, est.value, est.std_error, z, pass};
}

inline std::string s_label(const std::vector<double>& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i > 0) out += ';';
    out += format_double(s[i]);
  }
  return out + ")";
}

/// Bind every analytic quantity to its simulated estimate. Sources are
/// labelled 1..K in the quantity names.
inline ComparisonResult compare_report(const SimulationReport& report) {
  const SystemSpec& spec = report.spec;
  const std::size_t K = spec.size();
  ComparisonResult result;
  auto src = [](std::size_t k) { return "[" + std::to_string(k + 1) + "]"; };

  if (K <= kDefaultPermutationCap) {
    for (std::size_t i = 0; i < report.options.s_grid.size(); ++i) {
      const auto& s = report.options.s_grid[i];
      const double analytic = joint_aoi_laplace(spec, s);
      result.rows.push_back(make_row("joint_lt" + s_label(s), analytic, report.joint_laplace[i]));
      result.rows.push_back(
          make_row("palm_rhs" + s_label(s), analytic, report.palm_rhs[i].estimate));
      if (report.palm_rhs[i].flagged) {
        result.flags.push_back("palm_rhs" + s_label(s) + ": sbar = 0, limit value used");
      }
    }
  } else {
    result.flags.push_back("joint_lt: K above permutation cap, skipped");
  }

  const AoIStatistics& st = report.statistics;
  for (std::size_t k = 0; k < K; ++k) {
    const MarginalMoments m = marginal_aoi_moments(spec, k);
    result.rows.push_back(make_row("mean_aoi" + src(k), m.mean, {st.mean[k], st.mean_stderr[k], report.replications}));
    result.rows.push_back(make_row("var_aoi" + src(k), m.variance,
                                   {st.variance[k], st.variance_stderr[k], report.replications}));
  }
  if (K == 2) {
    result.rows.push_back(make_row("cov_aoi[1,2]", aoi_covariance(spec),
                                   {st.covariance(0, 1), st.covariance_stderr(0, 1), report.replications}));
    result.rows.push_back(make_row("cc_aoi[1,2]", aoi_correlation(spec),
                                   {st.correlation(0, 1), st.correlation_stderr(0, 1), report.replications}));
  }

  const double lambda = spec.total_rate();
  const double completed = departure_rate(spec);
  result.rows.push_back(make_row("departure_rate", completed, report.departure_rate));
  result.rows.push_back(make_row("pushout_rate", lambda - completed, report.pushout_rate));

  for (std::size_t k = 0; k < K; ++k) {
    const PalmEstimate& palm = report.palm[k];
    if (palm.missing) {
      result.flags.push_back("source " + std::to_string(k + 1) + ": no departures in some batch");
      continue;
    }
    const PeakDelayMeans means = peak_mean_identity(spec, k);
    result.rows.push_back(make_row("share" + src(k), source_update_share(spec, k), palm.share));
    result.rows.push_back(make_row("update_rate" + src(k), means.update_rate, palm.update_rate));
    result.rows.push_back(make_row("delay_mean" + src(k), means.delay, palm.delay));
    result.rows.push_back(make_row("peak_mean" + src(k), means.peak, palm.peak));
  }
  if (report.coverage_shortfalls > 0) {
    result.flags.push_back(std::to_string(report.coverage_shortfalls) +
                           " replication(s) reached full source coverage after burn-in");
  }
  return result;
}

inline ComparisonResult compare(const SystemSpec& spec, const SimulationOptions& options,
                                std::size_t replications) {
  if (!(options.horizon > 0.0) || replications < 2) {
    throw std::invalid_argument("compare: need a positive horizon and at least 2 replications");
  }
  const auto reps = run_replications(spec, options, replications);
  return compare_report(make_report(spec, options, reps));
}

inline void write_comparison_csv(std::ostream& out, const ComparisonResult& result) {
  out << "quantity,analytic,simulated,stderr,z,pass\n";
  for (const auto& row : result.rows) {
    out << row.quantity << ',' << format_double(row.analytic) << ','
        << format_double(row.simulated) << ',' << format_double(row.std_error) << ','
        << format_double(row.z) << ',' << (row.pass ? "true" : "false") << '\n';
  }
}

}  // namespace aoi
