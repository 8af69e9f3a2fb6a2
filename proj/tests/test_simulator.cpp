#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "aoi/estimators.hpp"
#include "aoi/simulator.hpp"

using aoi::AoISnapshot;
using aoi::ServiceTimeModel;
using aoi::SimulationOptions;
using aoi::SystemSpec;

namespace {

SystemSpec two_exp() {
  return SystemSpec({{3.0, ServiceTimeModel::exponential(6.0)},
                     {3.0, ServiceTimeModel::exponential(6.0)}});
}

AoISnapshot snapshot(std::vector<double> ages) {
  AoISnapshot s(ages.size());
  s.delay = std::move(ages);
  return s;
}

SimulationOptions small_options(double horizon = 2000.0) {
  SimulationOptions opt;
  opt.horizon = horizon;
  opt.burn_in = 50.0;
  opt.s_grid = {{0.0, 0.0}, {1.0, 1.0}, {0.5, 2.0}};
  return opt;
}

}  // namespace

TEST(Segment, ExponentialHandValues) {
  const auto z = snapshot({0.0, 0.0});
  EXPECT_NEAR(aoi::segment_integral_exponential(z, 0.0, std::log(2.0), std::vector<double>{1, 1}),
              0.375, 1e-15);
  EXPECT_DOUBLE_EQ(aoi::segment_integral_exponential(snapshot({3.0, 1.0}), 1.5, 4.0,
                                                     std::vector<double>{0, 0}),
                   2.5);
  EXPECT_THROW(aoi::segment_integral_exponential(z, 1.0, 1.0, std::vector<double>{1, 1}),
               std::invalid_argument);
  EXPECT_THROW(aoi::segment_integral_exponential(z, 0.0, 1.0, std::vector<double>{1}),
               std::invalid_argument);
}

TEST(Segment, MomentHandValues) {
  const auto m0 = aoi::segment_integral_moments(snapshot({0.0}), 0.0, 1.5);
  EXPECT_NEAR(m0.first[0], 1.5 * 1.5 / 2, 1e-15);
  EXPECT_NEAR(m0.second[0], 1.5 * 1.5 * 1.5 / 3, 1e-15);
  const auto m = aoi::segment_integral_moments(snapshot({1.0, 2.0}), 0.0, 1.0);
  EXPECT_NEAR(m.cross(0, 1), 23.0 / 6.0, 1e-15);
  EXPECT_NEAR(m.cross(1, 0), 23.0 / 6.0, 1e-15);
}

TEST(Segment, Additivity) {
  AoISnapshot snap(3);
  snap.last_update = {0.4, 1.0, 0.0};
  snap.delay = {0.2, 0.05, 1.3};
  const std::vector<double> s{0.7, 0.1, 2.0};
  const double t0 = 1.0, t1 = 4.5;
  const double cuts[] = {1.0, 1.3, 2.0, 2.01, 3.7, 4.5};

  const double whole = aoi::segment_integral_exponential(snap, t0, t1, s);
  const auto whole_m = aoi::segment_integral_moments(snap, t0, t1);
  double parts = 0.0;
  std::vector<double> first(3, 0.0);
  aoi::SquareMatrix cross(3, 0.0);
  for (std::size_t i = 0; i + 1 < std::size(cuts); ++i) {
    parts += aoi::segment_integral_exponential(snap, cuts[i], cuts[i + 1], s);
    const auto m = aoi::segment_integral_moments(snap, cuts[i], cuts[i + 1]);
    for (std::size_t k = 0; k < 3; ++k) first[k] += m.first[k];
    for (std::size_t j = 0; j < 9; ++j) cross.data[j] += m.cross.data[j];
  }
  EXPECT_NEAR(parts, whole, 1e-12);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(first[k], whole_m.first[k], 1e-12 * whole_m.first[k]);
  for (std::size_t j = 0; j < 9; ++j) {
    EXPECT_NEAR(cross.data[j], whole_m.cross.data[j], 1e-12 * whole_m.cross.data[j]);
  }
}

TEST(Replication, InstantServiceCountsArePoisson) {
  const SystemSpec spec({{1.0, ServiceTimeModel::deterministic(0.0)},
                         {2.0, ServiceTimeModel::deterministic(0.0)}});
  SimulationOptions opt;
  opt.horizon = 1e4;
  opt.burn_in = 100.0;
  opt.keep_records = true;
  const auto rep = aoi::run_replication(spec, opt, 0);
  const double span = opt.horizon - rep.window_start;
  const double expected = spec.total_rate() * span;
  EXPECT_LE(std::abs(static_cast<double>(rep.palm.departures) - expected), 4 * std::sqrt(expected));
  EXPECT_EQ(rep.palm.pushouts, 0u);
  for (const auto& r : rep.records) EXPECT_EQ(r.delay, 0.0);
}

TEST(Replication, CompletionFractionIsLaplaceAtLambda) {
  const SystemSpec spec({{2.0, ServiceTimeModel::exponential(4.0)}});
  SimulationOptions opt;
  opt.horizon = 5000.0;
  const auto reps = aoi::run_replications(spec, opt, 16);
  const auto est = aoi::estimate_completion_fraction(reps);
  EXPECT_LE(std::abs(est.value - 2.0 / 3.0), 3 * est.std_error);
}

TEST(Replication, Deterministic) {
  const auto spec = two_exp();
  const auto opt = small_options();
  const auto a = aoi::run_replication(spec, opt, 3);
  const auto b = aoi::run_replication(spec, opt, 3);
  EXPECT_TRUE(a.path == b.path);
  EXPECT_EQ(a.palm.palm_rhs_sum, b.palm.palm_rhs_sum);
  EXPECT_EQ(a.palm.delay_sum, b.palm.delay_sum);
  const auto c = aoi::run_replication(spec, opt, 4);
  EXPECT_FALSE(a.path == c.path);

  const auto serial = aoi::run_replications(spec, opt, 6, 1);
  const auto parallel = aoi::run_replications(spec, opt, 6, 3);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_TRUE(serial[i].path == parallel[i].path);
    EXPECT_EQ(serial[i].index, i);
  }
}

TEST(Replication, EventConservation) {
  const SystemSpec spec({{1.0, ServiceTimeModel::gamma(0.5, 2.0)},
                         {2.0, ServiceTimeModel::deterministic(0.3)},
                         {0.5, ServiceTimeModel::exponential(1.0)}});
  SimulationOptions opt;
  opt.horizon = 3000.0;
  opt.burn_in = 200.0;
  for (std::uint64_t r = 0; r < 4; ++r) {
    const auto rep = aoi::run_replication(spec, opt, r);
    EXPECT_EQ(rep.counters.arrivals, rep.counters.departures + rep.counters.pushouts);
    EXPECT_EQ(std::accumulate(rep.palm.count.begin(), rep.palm.count.end(), std::size_t{0}),
              rep.palm.departures);
    EXPECT_GE(rep.window_start, opt.burn_in);
    EXPECT_NEAR(rep.path.elapsed, opt.horizon - rep.window_start, 1e-9);
    EXPECT_FALSE(rep.coverage_shortfall);
  }
}

TEST(Replication, CoverageShortfallReported) {
  SimulationOptions opt;
  opt.horizon = 100.0;
  opt.burn_in = 0.0;
  const auto rep = aoi::run_replication(two_exp(), opt, 0);
  EXPECT_TRUE(rep.coverage_shortfall);
  EXPECT_GT(rep.window_start, 0.0);
}

TEST(Replication, PeakIsAgeBeforeUpdate) {
  const SystemSpec spec({{1.0, ServiceTimeModel::gamma(2.0, 8.0)},
                         {2.0, ServiceTimeModel::exponential(3.0)}});
  auto opt = small_options(500.0);
  opt.keep_records = true;
  const auto rep = aoi::run_replication(spec, opt, 1);
  ASSERT_GT(rep.records.size(), 100u);
  std::vector<const aoi::PalmRecord*> last(2, nullptr);
  for (const auto& r : rep.records) {
    if (const auto* prev = last[r.source]) {
      EXPECT_NEAR(r.peak, prev->delay + (r.epoch - prev->epoch), 1e-9);
    }
    last[r.source] = &r;
    EXPECT_GT(r.gap, 0.0);
    EXPECT_EQ(r.last_update[r.source], r.epoch);
  }
}

TEST(Replication, StderrShrinksWithHorizon) {
  const auto spec = two_exp();
  const std::vector<double> s{1.0, 1.0};
  auto stderr_at = [&](double horizon) {
    auto opt = small_options(horizon);
    const auto reps = aoi::run_replications(spec, opt, 128);
    return aoi::estimate_joint_laplace(reps, opt.s_grid, s).std_error;
  };
  const double ratio = stderr_at(2000.0) / stderr_at(1000.0);
  EXPECT_NEAR(ratio, 1 / std::sqrt(2.0), 0.3 / std::sqrt(2.0));
}

TEST(Replication, TraceCsv) {
  auto opt = small_options(60.0);
  std::ostringstream trace;
  opt.trace = &trace;
  const auto reps = aoi::run_replications(two_exp(), opt, 1);
  std::istringstream in(trace.str());
  std::string line;
  std::size_t arrivals = 0, departures = 0;
  double prev = 0.0;
  while (std::getline(in, line)) {
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const double epoch = std::stod(line.substr(0, c1));
    const std::string kind = line.substr(c1 + 1, c2 - c1 - 1);
    EXPECT_GE(epoch, prev);
    prev = epoch;
    arrivals += kind == "arrival";
    departures += kind == "departure";
  }
  EXPECT_EQ(arrivals, reps[0].counters.arrivals);
  EXPECT_EQ(departures, reps[0].counters.departures);

  EXPECT_THROW(aoi::run_replications(two_exp(), opt, 2), std::invalid_argument);
}

TEST(Replication, OptionValidation) {
  auto opt = small_options();
  opt.s_grid = {{1.0}};
  EXPECT_THROW(aoi::run_replications(two_exp(), opt, 2), std::invalid_argument);
  opt = small_options();
  opt.s_grid = {{-1.0, 0.0}};
  EXPECT_THROW(aoi::run_replications(two_exp(), opt, 2), std::invalid_argument);
  opt = small_options();
  opt.burn_in = opt.horizon;
  EXPECT_THROW(aoi::run_replications(two_exp(), opt, 2), std::invalid_argument);
}

TEST(Accumulators, MergeIsCommutativeAndAssociative) {
  const auto spec = two_exp();
  auto opt = small_options(300.0);
  opt.cdf_thresholds = {0.1, 0.5, 1.0};
  const auto reps = aoi::run_replications(spec, opt, 3);

  auto ab = reps[0].path;
  ab.merge(reps[1].path);
  auto ba = reps[1].path;
  ba.merge(reps[0].path);
  EXPECT_TRUE(ab == ba);

  auto left = ab;
  left.merge(reps[2].path);
  auto bc = reps[1].path;
  bc.merge(reps[2].path);
  auto right = reps[0].path;
  right.merge(bc);
  EXPECT_NEAR(left.elapsed, right.elapsed, 1e-12 * left.elapsed);
  for (std::size_t i = 0; i < left.exp_integral.size(); ++i) {
    EXPECT_NEAR(left.exp_integral[i], right.exp_integral[i], 1e-12 * left.exp_integral[i]);
  }
  for (std::size_t i = 0; i < left.cross.data.size(); ++i) {
    EXPECT_NEAR(left.cross.data[i], right.cross.data[i], 1e-12 * std::abs(left.cross.data[i]));
  }

  auto palm = reps[0].palm;
  palm.merge(reps[1].palm);
  EXPECT_EQ(palm.departures, reps[0].palm.departures + reps[1].palm.departures);

  aoi::PathAccumulator other(3, 3, {});
  EXPECT_THROW(ab.merge(other), std::invalid_argument);
}
