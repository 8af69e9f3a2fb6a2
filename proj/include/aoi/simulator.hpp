#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "aoi/analytics.hpp"
#include "aoi/format.hpp"
#include "aoi/rng.hpp"

// Exact-path simulation of the K-source Poisson pushout server.
//
// Arrivals form one Poisson(lambda) stream with the source drawn with
// probability lambda_k / lambda. Each arrival preempts the packet in
// service. A packet with service S departs at T + S iff S <= tau, the gap
// to the next arrival. Between departures every AoI grows with slope one,
// so all time integrals over a segment are closed-form.

namespace aoi {

/// Last update epoch and delay-at-update per source. A_k(t) = D_k + t - U_k.
struct AoISnapshot {
  std::vector<double> last_update;
  std::vector<double> delay;

  explicit AoISnapshot(std::size_t sources = 0)
      : last_update(sources, 0.0), delay(sources, 0.0) {}

  std::size_t size() const noexcept { return delay.size(); }
  double age(std::size_t k, double t) const { return delay[k] + t - last_update[k]; }
};

namespace detail {

inline void check_segment(double t0, double t1, const char* who) {
  if (!(t1 > t0)) throw std::invalid_argument(std::string(who) + ": need t1 > t0");
}

// Integral of exp(-sum_k s_k (a_k + u)) over u in [0, length).
inline double exponential_segment(std::span<const double> ages, double length,
                                  std::span<const double> s) {
  double exponent = 0.0;
  double s_bar = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    exponent += s[k] * ages[k];
    s_bar += s[k];
  }
  if (s_bar == 0.0) return length;
  return std::exp(-exponent) * -std::expm1(-s_bar * length) / s_bar;
}

}  // namespace detail

/// Closed-form integral of exp(-sum_k s_k A_k(t)) over [t0, t1) with the
/// snapshot held fixed.
inline double segment_integral_exponential(const AoISnapshot& snapshot, double t0, double t1,
                                           std::span<const double> s) {
  detail::check_segment(t0, t1, "segment_integral_exponential");
  if (s.size() != snapshot.size()) {
    throw std::invalid_argument("segment_integral_exponential: s has wrong length");
  }
  std::vector<double> ages(snapshot.size());
  for (std::size_t k = 0; k < ages.size(); ++k) ages[k] = snapshot.age(k, t0);
  return detail::exponential_segment(ages, t1 - t0, s);
}

struct SegmentMoments {
  std::vector<double> first;   // integral of A_k
  std::vector<double> second;  // integral of A_k^2
  SquareMatrix cross;          // integral of A_j A_k
};

inline SegmentMoments segment_integral_moments(const AoISnapshot& snapshot, double t0,
                                               double t1) {
  detail::check_segment(t0, t1, "segment_integral_moments");
  const std::size_t K = snapshot.size();
  const double L = t1 - t0;
  const double L2 = L * L / 2.0;
  const double L3 = L * L * L / 3.0;
  SegmentMoments out{std::vector<double>(K), std::vector<double>(K), SquareMatrix(K, 0.0)};
  for (std::size_t j = 0; j < K; ++j) {
    const double aj = snapshot.age(j, t0);
    out.first[j] = aj * L + L2;
    for (std::size_t k = 0; k < K; ++k) {
      const double ak = snapshot.age(k, t0);
      out.cross(j, k) = aj * ak * L + (aj + ak) * L2 + L3;
    }
    out.second[j] = out.cross(j, j);
  }
  return out;
}

/// Running exact integrals of functionals of the AoI path over the
/// observation window of one replication. Merge is component-wise addition.
struct PathAccumulator {
  std::size_t sources = 0;
  double elapsed = 0.0;
  std::vector<double> exp_integral;  // one per s-vector of the grid
  std::vector<double> first;
  std::vector<double> second;
  SquareMatrix cross;
  std::vector<double> thresholds;
  std::vector<double> time_below;  // sources x thresholds, row-major

  PathAccumulator() = default;
  PathAccumulator(std::size_t k, std::size_t grid_size, std::vector<double> cdf_thresholds)
      : sources(k),
        exp_integral(grid_size, 0.0),
        first(k, 0.0),
        second(k, 0.0),
        cross(k, 0.0),
        thresholds(std::move(cdf_thresholds)),
        time_below(k * thresholds.size(), 0.0) {}

  void merge(const PathAccumulator& other) {
    if (other.sources != sources || other.exp_integral.size() != exp_integral.size() ||
        other.thresholds != thresholds) {
      throw std::invalid_argument("PathAccumulator::merge: shape mismatch");
    }
    elapsed += other.elapsed;
    add_into(exp_integral, other.exp_integral);
    add_into(first, other.first);
    add_into(second, other.second);
    add_into(cross.data, other.cross.data);
    add_into(time_below, other.time_below);
  }

  friend bool operator==(const PathAccumulator&, const PathAccumulator&) = default;

 private:
  static void add_into(std::vector<double>& into, const std::vector<double>& from) {
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += from[i];
  }
};

/// One service completion inside the observation window.
struct PalmRecord {
  double epoch;
  std::size_t source;
  double delay;
  double peak;  // NaN when the source had no earlier real update
  double gap;   // to the next departure of any source
  std::vector<double> last_update;  // snapshot just after this departure
  std::vector<double> last_delay;
};

/// Sums over departures in the observation window.
struct PalmAccumulator {
  std::size_t departures = 0;
  std::size_t arrivals = 0;
  std::size_t pushouts = 0;
  std::vector<std::size_t> count;
  std::vector<double> delay_sum;
  std::vector<double> peak_sum;
  std::vector<std::size_t> peak_count;
  std::vector<double> palm_rhs_sum;  // one per s-vector
  std::size_t palm_rhs_count = 0;
  std::size_t palm_rhs_skipped = 0;

  PalmAccumulator() = default;
  PalmAccumulator(std::size_t k, std::size_t grid_size)
      : count(k, 0),
        delay_sum(k, 0.0),
        peak_sum(k, 0.0),
        peak_count(k, 0),
        palm_rhs_sum(grid_size, 0.0) {}

  void merge(const PalmAccumulator& other) {
    if (other.count.size() != count.size() || other.palm_rhs_sum.size() != palm_rhs_sum.size()) {
      throw std::invalid_argument("PalmAccumulator::merge: shape mismatch");
    }
    departures += other.departures;
    arrivals += other.arrivals;
    pushouts += other.pushouts;
    palm_rhs_count += other.palm_rhs_count;
    palm_rhs_skipped += other.palm_rhs_skipped;
    for (std::size_t k = 0; k < count.size(); ++k) {
      count[k] += other.count[k];
      delay_sum[k] += other.delay_sum[k];
      peak_sum[k] += other.peak_sum[k];
      peak_count[k] += other.peak_count[k];
    }
    for (std::size_t i = 0; i < palm_rhs_sum.size(); ++i) palm_rhs_sum[i] += other.palm_rhs_sum[i];
  }
};

/// Whole-replication event counts, including burn-in and the tail after
/// the horizon. Each arrival is resolved (departure or pushout) as soon as
/// the next interarrival gap is drawn, so nothing is left in flight when
/// the loop stops.
struct EventCounters {
  std::size_t arrivals = 0;
  std::size_t departures = 0;
  std::size_t pushouts = 0;
};

struct SimulationOptions {
  double horizon = 1e4;
  double burn_in = 1e2;
  std::uint64_t seed = 20200101;
  std::vector<std::vector<double>> s_grid;
  std::vector<double> cdf_thresholds;
  bool keep_records = false;
  std::ostream* trace = nullptr;  // CSV: epoch,kind,source,value
};

struct ReplicationResult {
  std::uint64_t index = 0;
  double window_start = 0.0;
  bool coverage_shortfall = false;  // some source first updated after burn-in
  PathAccumulator path;
  PalmAccumulator palm;
  EventCounters counters;
  std::vector<PalmRecord> records;
};

/// Default burn-in: max(100 / smallest per-source update rate, 1000 / lambda).
inline double default_burn_in(const SystemSpec& spec) {
  double slowest = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < spec.size(); ++k) {
    slowest = std::min(slowest, peak_mean_identity(spec, k).update_rate);
  }
  return std::max(100.0 / slowest, 1000.0 / spec.total_rate());
}

namespace detail {

inline void validate_options(const SystemSpec& spec, const SimulationOptions& opt) {
  if (!(opt.horizon > 0.0) || !std::isfinite(opt.horizon)) {
    throw std::invalid_argument("simulation horizon must be positive and finite");
  }
  if (!(opt.burn_in >= 0.0) || !(opt.horizon > opt.burn_in)) {
    throw std::invalid_argument("need horizon > burn_in >= 0");
  }
  for (const auto& s : opt.s_grid) {
    if (s.size() != spec.size()) {
      throw std::invalid_argument("s-vector length " + std::to_string(s.size()) +
                                  " does not match K=" + std::to_string(spec.size()));
    }
    for (double v : s) {
      if (!(v >= 0.0)) throw std::invalid_argument("s-vector entries must be >= 0");
    }
  }
}

// Integrand of the Palm-expectation form of the joint transform at one
// departure: sources are ordered newest update first (eta), and the
// exponent telescopes over the gaps between consecutive update epochs.
inline double palm_rhs_integrand(const AoISnapshot& snap, std::span<const std::size_t> eta,
                                 std::span<const double> s, double gap) {
  const std::size_t K = eta.size();
  double s_bar = 0.0;
  for (double v : s) s_bar += v;
  double suffix = s_bar;  // sbar over eta[k..K]
  double exponent = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t src = eta[k];
    exponent += s[src] * snap.delay[src];
    suffix -= s[src];
    if (k + 1 < K) {
      exponent += suffix * (snap.last_update[src] - snap.last_update[eta[k + 1]]);
    }
  }
  return std::exp(-exponent) * -std::expm1(-s_bar * gap);
}

}  // namespace detail

/// Simulate one replication on [0, horizon] (plus the tail needed to close
/// the last interdeparture gap). Statistics use the window
/// [max(burn_in, first time every source has updated), horizon).
inline ReplicationResult run_replication(const SystemSpec& spec, const SimulationOptions& opt,
                                         std::uint64_t replication) {
  detail::validate_options(spec, opt);
  const std::size_t K = spec.size();
  const double lambda = spec.total_rate();
  const std::size_t grid = opt.s_grid.size();

  CounterStream arrivals_rng = make_stream(opt.seed, replication, StreamRole::interarrival);
  CounterStream pick_rng = make_stream(opt.seed, replication, StreamRole::source_pick);
  CounterStream service_rng = make_stream(opt.seed, replication, StreamRole::service);

  std::vector<double> cumulative(K);
  std::partial_sum(spec.rates().begin(), spec.rates().end(), cumulative.begin());
  auto pick_source = [&]() {
    const double u = pick_rng.uniform() * lambda;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), K - 1);
  };
  auto interarrival = [&]() { return -std::log(arrivals_rng.uniform()) / lambda; };

  ReplicationResult result;
  result.index = replication;
  result.path = PathAccumulator(K, grid, opt.cdf_thresholds);
  result.palm = PalmAccumulator(K, grid);

  AoISnapshot snap(K);
  std::vector<bool> initialized(K, false);
  std::size_t initialized_count = 0;
  bool covered = false;
  double covered_at = 0.0;
  bool window_open = false;
  double window_start = 0.0;
  double integrated_to = 0.0;

  struct Pending {
    double epoch;
    std::size_t source;
    double delay;
    double peak;
  };
  bool has_pending = false;
  Pending pending{};

  std::vector<double> ages(K);
  std::vector<std::size_t> eta(K);

  auto open_window = [&](double now) {
    if (!window_open && covered && now >= opt.burn_in) {
      window_open = true;
      window_start = std::max(opt.burn_in, covered_at);
      integrated_to = window_start;
    }
  };

  auto in_window = [&](double t) { return window_open && t >= window_start && t < opt.horizon; };

  auto integrate_to = [&](double until) {
    if (!window_open) return;
    const double end = std::min(until, opt.horizon);
    if (!(end > integrated_to)) return;
    const double length = end - integrated_to;
    PathAccumulator& acc = result.path;
    for (std::size_t k = 0; k < K; ++k) ages[k] = snap.age(k, integrated_to);
    acc.elapsed += length;
    for (std::size_t i = 0; i < grid; ++i) {
      acc.exp_integral[i] += detail::exponential_segment(ages, length, opt.s_grid[i]);
    }
    const double L2 = length * length / 2.0;
    const double L3 = length * length * length / 3.0;
    for (std::size_t j = 0; j < K; ++j) {
      acc.first[j] += ages[j] * length + L2;
      for (std::size_t k = 0; k < K; ++k) {
        acc.cross(j, k) += ages[j] * ages[k] * length + (ages[j] + ages[k]) * L2 + L3;
      }
      acc.second[j] = acc.cross(j, j);
      for (std::size_t x = 0; x < acc.thresholds.size(); ++x) {
        acc.time_below[j * acc.thresholds.size() + x] +=
            std::clamp(acc.thresholds[x] - ages[j], 0.0, length);
      }
    }
    integrated_to = end;
  };

  auto finalize_pending = [&](double next_departure) {
    if (!has_pending) return;
    has_pending = false;
    const double gap = next_departure - pending.epoch;
    std::iota(eta.begin(), eta.end(), std::size_t{0});
    std::stable_sort(eta.begin(), eta.end(), [&](std::size_t a, std::size_t b) {
      return snap.last_update[a] > snap.last_update[b];
    });
    PalmAccumulator& palm = result.palm;
    for (std::size_t i = 0; i < grid; ++i) {
      palm.palm_rhs_sum[i] += detail::palm_rhs_integrand(snap, eta, opt.s_grid[i], gap);
    }
    ++palm.palm_rhs_count;
    if (opt.keep_records) {
      result.records.push_back(PalmRecord{pending.epoch, pending.source, pending.delay,
                                          pending.peak, gap, snap.last_update, snap.delay});
    }
  };

  auto trace = [&](double epoch, const char* kind, std::size_t source, double value) {
    if (opt.trace != nullptr) {
      *opt.trace << format_double(epoch) << ',' << kind << ',' << source << ','
                 << format_double(value) << '\n';
    }
  };

  auto depart = [&](double epoch, std::size_t source, double delay) {
    open_window(epoch);
    integrate_to(epoch);
    finalize_pending(epoch);
    ++result.counters.departures;
    trace(epoch, "departure", source, delay);

    const double peak = initialized[source]
                            ? snap.delay[source] + (epoch - snap.last_update[source])
                            : std::numeric_limits<double>::quiet_NaN();
    snap.last_update[source] = epoch;
    snap.delay[source] = delay;
    if (!initialized[source]) {
      initialized[source] = true;
      if (++initialized_count == K) {
        covered = true;
        covered_at = epoch;
      }
    }
    open_window(epoch);

    if (!covered) {
      ++result.palm.palm_rhs_skipped;
      return;
    }
    if (!in_window(epoch)) return;
    PalmAccumulator& palm = result.palm;
    ++palm.departures;
    ++palm.count[source];
    palm.delay_sum[source] += delay;
    if (!std::isnan(peak)) {
      palm.peak_sum[source] += peak;
      ++palm.peak_count[source];
    }
    pending = Pending{epoch, source, delay, peak};
    has_pending = true;
  };

  double arrival = interarrival();
  while (arrival < opt.horizon || has_pending) {
    open_window(arrival);
    const std::size_t source = pick_source();
    const double service = spec.service(source).sample(service_rng);
    const double gap = interarrival();
    ++result.counters.arrivals;
    trace(arrival, "arrival", source, service);
    const bool counted = in_window(arrival);
    if (counted) ++result.palm.arrivals;

    // A tie S == tau counts as a completion.
    if (service <= gap) {
      depart(arrival + service, source, service);
    } else {
      ++result.counters.pushouts;
      if (counted) ++result.palm.pushouts;
    }
    arrival += gap;
  }
  open_window(opt.horizon);
  integrate_to(opt.horizon);

  result.window_start = window_open ? window_start : opt.horizon;
  result.coverage_shortfall = !covered || covered_at > opt.burn_in;
  return result;
}

/// Run `count` replications with indices 0..count-1 on up to `threads`
/// workers (0 = hardware concurrency). Results are in index order and do
/// not depend on scheduling.
inline std::vector<ReplicationResult> run_replications(const SystemSpec& spec,
                                                       const SimulationOptions& opt,
                                                       std::size_t count,
                                                       unsigned threads = 0) {
  if (opt.trace != nullptr && count > 1) {
    throw std::invalid_argument("event tracing supports a single replication");
  }
  detail::validate_options(spec, opt);
  std::vector<ReplicationResult> results(count);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  auto work = [&](unsigned worker) {
    try {
      for (std::size_t i = next++; i < count; i = next++) {
        results[i] = run_replication(spec, opt, i);
      }
    } catch (...) {
      errors[worker] = std::current_exception();
    }
  };
  if (threads <= 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace aoi
