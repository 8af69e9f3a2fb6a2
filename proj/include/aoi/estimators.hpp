#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aoi/analytics.hpp"
#include "aoi/simulator.hpp"

// Estimators over a set of replications. Each replication is one batch:
// the point estimate is the pooled ratio over all batches and the standard
// error is the sample standard deviation of the per-batch values over
// sqrt(batches).

namespace aoi {

struct BatchEstimate {
  double value = std::numeric_limits<double>::quiet_NaN();
  double std_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t batches = 0;
};

struct PalmEstimate {
  BatchEstimate delay;
  BatchEstimate peak;
  BatchEstimate update_rate;
  BatchEstimate share;
  BatchEstimate identity_gap;  // E[P] - E[D] - 1/update_rate, expected 0
  bool missing = false;        // no departures of this source in some batch
};

struct FlaggedEstimate {
  BatchEstimate estimate;
  bool flagged = false;
};

namespace detail {

inline void require_batches(std::span<const ReplicationResult> reps, const char* who) {
  if (reps.size() < 2) {
    throw std::invalid_argument(std::string(who) + ": need at least 2 batches, got " +
                                std::to_string(reps.size()));
  }
}

inline double batch_stderr(std::span<const double> values) {
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (n - 1.0) / n);
}

// pooled_of(merged) and per-batch statistic(rep) share one formula.
template <class Statistic>
BatchEstimate batch_estimate(std::span<const ReplicationResult> reps, Statistic&& statistic,
                             double pooled) {
  std::vector<double> values;
  values.reserve(reps.size());
  for (const auto& rep : reps) values.push_back(statistic(rep.path, rep.palm));
  return {pooled, batch_stderr(values), reps.size()};
}

inline std::pair<PathAccumulator, PalmAccumulator> merge_all(
    std::span<const ReplicationResult> reps) {
  PathAccumulator path = reps.front().path;
  PalmAccumulator palm = reps.front().palm;
  for (std::size_t i = 1; i < reps.size(); ++i) {
    path.merge(reps[i].path);
    palm.merge(reps[i].palm);
  }
  return {std::move(path), std::move(palm)};
}

template <class Statistic>
BatchEstimate pooled_and_batched(std::span<const ReplicationResult> reps, Statistic&& statistic) {
  const auto [path, palm] = merge_all(reps);
  return batch_estimate(reps, statistic, statistic(path, palm));
}

inline std::size_t grid_index(std::span<const std::vector<double>> grid,
                              std::span<const double> s) {
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (std::equal(grid[i].begin(), grid[i].end(), s.begin(), s.end())) return i;
  }
  throw std::invalid_argument("s-vector was not part of the simulated grid");
}

}  // namespace detail

/// Time average of exp(-sum_k s_k A_k(t)); `grid` is the s_grid the
/// replications were run with and must contain `s`.
inline BatchEstimate estimate_joint_laplace(std::span<const ReplicationResult> reps,
                                            std::span<const std::vector<double>> grid,
                                            std::span<const double> s) {
  detail::require_batches(reps, "estimate_joint_laplace");
  const std::size_t i = detail::grid_index(grid, s);
  return detail::pooled_and_batched(reps, [i](const PathAccumulator& p, const PalmAccumulator&) {
    return p.exp_integral[i] / p.elapsed;
  });
}

/// Palm-sampled form: departure rate times the mean over departures of
/// (1 - exp(-sbar gap)) * prod(...), divided by sbar. At sbar = 0 the
/// value is the limit 1 and the result is flagged.
inline FlaggedEstimate estimate_theorem2_rhs(std::span<const ReplicationResult> reps,
                                             std::span<const std::vector<double>> grid,
                                             std::span<const double> s) {
  detail::require_batches(reps, "estimate_theorem2_rhs");
  const std::size_t i = detail::grid_index(grid, s);
  double s_bar = 0.0;
  for (double v : s) s_bar += v;
  if (s_bar == 0.0) return {{1.0, 0.0, reps.size()}, true};
  return {detail::pooled_and_batched(reps,
                                     [i, s_bar](const PathAccumulator& p, const PalmAccumulator& m) {
                                       const double rate = m.departures / p.elapsed;
                                       const double mean = m.palm_rhs_sum[i] / m.palm_rhs_count;
                                       return rate * mean / s_bar;
                                     }),
          false};
}

inline BatchEstimate estimate_departure_rate(std::span<const ReplicationResult> reps) {
  detail::require_batches(reps, "estimate_departure_rate");
  return detail::pooled_and_batched(reps, [](const PathAccumulator& p, const PalmAccumulator& m) {
    return m.departures / p.elapsed;
  });
}

inline BatchEstimate estimate_pushout_rate(std::span<const ReplicationResult> reps) {
  detail::require_batches(reps, "estimate_pushout_rate");
  return detail::pooled_and_batched(reps, [](const PathAccumulator& p, const PalmAccumulator& m) {
    return m.pushouts / p.elapsed;
  });
}

/// Fraction of arrivals in the window that complete service.
inline BatchEstimate estimate_completion_fraction(std::span<const ReplicationResult> reps) {
  detail::require_batches(reps, "estimate_completion_fraction");
  return detail::pooled_and_batched(reps, [](const PathAccumulator&, const PalmAccumulator& m) {
    return static_cast<double>(m.arrivals - m.pushouts) / m.arrivals;
  });
}

/// Plug-in time-average moments, covariances and correlations. Each batch
/// recomputes the nonlinear statistics from its own integrals.
inline AoIStatistics estimate_statistics(std::span<const ReplicationResult> reps) {
  detail::require_batches(reps, "estimate_statistics");
  const std::size_t K = reps.front().path.sources;

  auto moments = [K](const PathAccumulator& p) {
    AoIStatistics st;
    st.provenance = Provenance::simulated;
    st.covariance = SquareMatrix(K, 0.0);
    st.correlation = SquareMatrix(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) st.mean.push_back(p.first[k] / p.elapsed);
    for (std::size_t j = 0; j < K; ++j) {
      for (std::size_t k = 0; k < K; ++k) {
        st.covariance(j, k) = p.cross(j, k) / p.elapsed - st.mean[j] * st.mean[k];
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      st.variance.push_back(st.covariance(k, k));
      st.cv.push_back(std::sqrt(st.covariance(k, k)) / st.mean[k]);
    }
    for (std::size_t j = 0; j < K; ++j) {
      for (std::size_t k = 0; k < K; ++k) {
        st.correlation(j, k) = j == k ? 1.0
                                      : st.covariance(j, k) /
                                            std::sqrt(st.covariance(j, j) * st.covariance(k, k));
      }
    }
    return st;
  };

  const auto [merged, palm] = detail::merge_all(reps);
  AoIStatistics out = moments(merged);
  std::vector<AoIStatistics> per_batch;
  for (const auto& rep : reps) per_batch.push_back(moments(rep.path));

  auto spread = [&](auto&& field) {
    std::vector<double> values;
    for (const auto& b : per_batch) values.push_back(field(b));
    return detail::batch_stderr(values);
  };
  out.covariance_stderr = SquareMatrix(K, 0.0);
  out.correlation_stderr = SquareMatrix(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    out.mean_stderr.push_back(spread([k](const AoIStatistics& b) { return b.mean[k]; }));
    out.variance_stderr.push_back(spread([k](const AoIStatistics& b) { return b.variance[k]; }));
    out.cv_stderr.push_back(spread([k](const AoIStatistics& b) { return b.cv[k]; }));
  }
  for (std::size_t j = 0; j < K; ++j) {
    for (std::size_t k = 0; k < K; ++k) {
      out.covariance_stderr(j, k) =
          spread([j, k](const AoIStatistics& b) { return b.covariance(j, k); });
      out.correlation_stderr(j, k) =
          j == k ? 0.0 : spread([j, k](const AoIStatistics& b) { return b.correlation(j, k); });
    }
  }
  return out;
}

/// Per-source Palm averages over departures in the window.
inline std::vector<PalmEstimate> estimate_palm(std::span<const ReplicationResult> reps) {
  detail::require_batches(reps, "estimate_palm");
  const std::size_t K = reps.front().path.sources;
  std::vector<PalmEstimate> out(K);
  for (std::size_t k = 0; k < K; ++k) {
    for (const auto& rep : reps) {
      if (rep.palm.count[k] == 0 || rep.palm.peak_count[k] == 0) out[k].missing = true;
    }
    if (out[k].missing) continue;
    out[k].delay = detail::pooled_and_batched(
        reps, [k](const PathAccumulator&, const PalmAccumulator& m) {
          return m.delay_sum[k] / m.count[k];
        });
    out[k].peak = detail::pooled_and_batched(
        reps, [k](const PathAccumulator&, const PalmAccumulator& m) {
          return m.peak_sum[k] / m.peak_count[k];
        });
    out[k].update_rate = detail::pooled_and_batched(
        reps, [k](const PathAccumulator& p, const PalmAccumulator& m) {
          return m.count[k] / p.elapsed;
        });
    out[k].share = detail::pooled_and_batched(
        reps, [k](const PathAccumulator&, const PalmAccumulator& m) {
          return static_cast<double>(m.count[k]) / m.departures;
        });
    out[k].identity_gap = detail::pooled_and_batched(
        reps, [k](const PathAccumulator& p, const PalmAccumulator& m) {
          return m.peak_sum[k] / m.peak_count[k] - m.delay_sum[k] / m.count[k] -
                 p.elapsed / m.count[k];
        });
  }
  return out;
}

/// Empirical time-stationary CDF of A_k at the replication thresholds
/// (fraction of window time with A_k(t) <= x), pooled over replications.
inline std::vector<double> estimate_cdf(std::span<const ReplicationResult> reps, std::size_t k) {
  if (reps.empty()) throw std::invalid_argument("estimate_cdf: no replications");
  const auto [path, palm] = detail::merge_all(reps);
  if (k >= path.sources) throw std::out_of_range("estimate_cdf: source index out of range");
  std::vector<double> cdf;
  const std::size_t n = path.thresholds.size();
  for (std::size_t x = 0; x < n; ++x) cdf.push_back(path.time_below[k * n + x] / path.elapsed);
  return cdf;
}

/// Everything the simulator estimates for one configuration.
struct SimulationReport {
  SystemSpec spec;
  SimulationOptions options;
  std::size_t replications = 0;
  std::vector<BatchEstimate> joint_laplace;    // aligned with options.s_grid
  std::vector<FlaggedEstimate> palm_rhs;   // aligned with options.s_grid
  AoIStatistics statistics;
  BatchEstimate departure_rate;
  BatchEstimate pushout_rate;
  std::vector<PalmEstimate> palm;
  std::size_t coverage_shortfalls = 0;
};

inline SimulationReport make_report(const SystemSpec& spec, const SimulationOptions& options,
                                    std::span<const ReplicationResult> reps) {
  SimulationReport report{spec, options, reps.size(), {}, {}, {}, {}, {}, {}, 0};
  for (const auto& s : options.s_grid) {
    report.joint_laplace.push_back(estimate_joint_laplace(reps, options.s_grid, s));
    report.palm_rhs.push_back(estimate_theorem2_rhs(reps, options.s_grid, s));
  }
  report.statistics = estimate_statistics(reps);
  report.departure_rate = estimate_departure_rate(reps);
  report.pushout_rate = estimate_pushout_rate(reps);
  report.palm = estimate_palm(reps);
  for (const auto& rep : reps) report.coverage_shortfalls += rep.coverage_shortfall ? 1 : 0;
  return report;
}

}  // namespace aoi
