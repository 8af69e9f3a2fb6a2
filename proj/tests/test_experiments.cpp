#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "aoi/experiments.hpp"

using aoi::SweepAxis;
using aoi::SweepSpec;

namespace {

const double kDetBound = -1.0 / (2.0 * (std::numbers::e - 1.0));

aoi::SweepTable lambda2_sweep(double lambda_1) {
  return aoi::run_sweep(SweepSpec{SweepAxis::lambda_2, lambda_1, 0.0, 6.0, {}, {}});
}

aoi::SweepTable rate_sweep(double lambda_1, double lambda_2) {
  return aoi::run_sweep(SweepSpec{SweepAxis::service_rate, lambda_1, lambda_2, 0.0, {}, {}});
}

double cc_at(const aoi::SweepTable& table, const std::string& family, double param) {
  for (const auto& row : aoi::curve(table, family)) {
    if (row.param == param) return row.cc;
  }
  ADD_FAILURE() << "no grid point " << param << " for " << family;
  return 0.0;
}

const char* const kFamilies[] = {"exp", "gamma(0.5)", "gamma(2)", "det"};

}  // namespace

TEST(Grid, Logspace) {
  const auto g = aoi::logspace(0.05, 50.0, 60);
  EXPECT_EQ(g.size(), 60u);
  EXPECT_EQ(g.front(), 0.05);
  EXPECT_EQ(g.back(), 50.0);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_NEAR(g[i] / g[i - 1], g[1] / g[0], 1e-12);
  EXPECT_THROW(aoi::logspace(0.0, 1.0, 5), std::invalid_argument);
  const auto a = aoi::with_anchors({1.0, 2.0, 4.0}, {3.0, 2.0, -1.0});
  EXPECT_EQ(a, (std::vector<double>{1.0, 2.0, 3.0, 4.0}));
}

TEST(Grid, Validation) {
  EXPECT_THROW(aoi::sweep_cc_vs_lambda2(3, 6, aoi::default_families(), {1.0, 1.0}),
               std::invalid_argument);
  EXPECT_THROW(aoi::sweep_cc_vs_service_rate(3, 3, aoi::default_families(), {-1.0, 1.0}),
               std::invalid_argument);
  EXPECT_THROW(aoi::sweep_cc_vs_service_rate(3, 3, aoi::default_families(), {}),
               std::invalid_argument);
}

TEST(Lambda2Sweep, MinimumAtServiceRateMinusLambda1) {
  const auto table = lambda2_sweep(3.0);
  const auto low = aoi::curve_minimum(table, "exp");
  EXPECT_EQ(low.param, 3.0);
  EXPECT_NEAR(low.cc, -1.0 / 6.0, 1e-15);
}

TEST(Lambda2Sweep, MinimumNotAtFiveForSmallLambda1) {
  const auto table = lambda2_sweep(1.0);
  for (const char* family : kFamilies) {
    EXPECT_GT(cc_at(table, family, 5.0), aoi::curve_minimum(table, family).cc) << family;
  }
}

TEST(Lambda2Sweep, DecayAtSmallLambda2) {
  const auto table = aoi::sweep_cc_vs_lambda2(3.0, 6.0, aoi::default_families(), {1e-3});
  for (const auto& row : table.rows) EXPECT_LT(std::abs(row.cc), 0.01) << row.family;
}

TEST(RateSweep, MinimaAtTotalRate) {
  const auto equal = rate_sweep(3.0, 3.0);
  for (const char* family : kFamilies) EXPECT_EQ(aoi::curve_minimum(equal, family).param, 6.0);
  EXPECT_NEAR(aoi::curve_minimum(equal, "det").cc, kDetBound, 1e-12);
  EXPECT_NEAR(aoi::curve_minimum(equal, "det").cc, -0.290988, 1e-6);
  EXPECT_NEAR(aoi::curve_minimum(equal, "exp").cc, -1.0 / 6.0, 1e-15);
  EXPECT_NEAR(aoi::curve_minimum(equal, "gamma(2)").cc,
              aoi::cc_lower_bound(aoi::GammaFamily{2.0}), 1e-12);

  const auto unequal = rate_sweep(1.0, 5.0);
  for (const char* family : kFamilies) EXPECT_EQ(aoi::curve_minimum(unequal, family).param, 6.0);
  EXPECT_GT(aoi::curve_minimum(unequal, "exp").cc, -1.0 / 6.0 + 1e-3);
  EXPECT_GT(aoi::curve_minimum(unequal, "det").cc, kDetBound + 1e-3);
}

TEST(Shape, RangeUnimodalityAndDecay) {
  for (const auto& table : {lambda2_sweep(1.0), lambda2_sweep(3.0), rate_sweep(3.0, 3.0), rate_sweep(1.0, 5.0)}) {
    for (const auto& row : table.rows) {
      EXPECT_LE(row.cc, 0.0);
      EXPECT_GE(row.cc, -1.0);
    }
    for (const char* family : kFamilies) {
      const auto c = aoi::curve(table, family);
      EXPECT_TRUE(aoi::is_unimodal(c)) << aoi::axis_name(table.axis) << " " << family;
      EXPECT_LT(std::abs(c.front().cc), 0.02);
      EXPECT_LT(std::abs(c.back().cc), 0.02);
    }
  }
}

TEST(Shape, UnimodalityDetectsDip) {
  std::vector<aoi::SweepRow> rows{{1, "x", -0.1}, {2, "x", -0.3}, {3, "x", -0.2}, {4, "x", -0.25}};
  EXPECT_FALSE(aoi::is_unimodal(rows));
  rows.pop_back();
  EXPECT_TRUE(aoi::is_unimodal(rows));
}

TEST(Csv, SweepIsDeterministic) {
  std::ostringstream a, b;
  aoi::write_sweep_csv(a, rate_sweep(3.0, 3.0));
  aoi::write_sweep_csv(b, rate_sweep(3.0, 3.0));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')), "param,family,cc");
}

TEST(Comparison, RowGate) {
  const auto inside = aoi::make_row("q", 1.0, {1.025, 0.01, 10});
  EXPECT_TRUE(inside.pass);
  EXPECT_NEAR(inside.z, 2.5, 1e-9);
  const auto outside = aoi::make_row("q", 1.0, {0.965, 0.01, 10});
  EXPECT_FALSE(outside.pass);
  const auto exact = aoi::make_row("q", 0.2, {0.2 + 1e-17, 0.0, 10});
  EXPECT_TRUE(exact.pass);
  EXPECT_EQ(exact.z, 0.0);
  const auto off = aoi::make_row("q", 0.2, {0.3, 0.0, 10});
  EXPECT_FALSE(off.pass);
  EXPECT_TRUE(std::isinf(off.z));
}

TEST(Comparison, ThreeMixedSources) {
  const aoi::SystemSpec spec({{1.0, aoi::ServiceTimeModel::exponential(5.0)},
                              {2.0, aoi::ServiceTimeModel::gamma(2.0, 8.0)},
                              {1.5, aoi::ServiceTimeModel::deterministic(0.2)}});
  aoi::SimulationOptions opt;
  opt.horizon = 1e4;
  opt.burn_in = 100.0;
  opt.s_grid = {{1.0, 1.0, 1.0}, {0.5, 1.0, 2.0}, {2.0, 0.0, 0.5}};
  const auto result = aoi::compare(spec, opt, 32);
  std::size_t joint_rows = 0;
  for (const auto& row : result.rows) {
    if (row.quantity.starts_with("joint_lt")) {
      ++joint_rows;
      EXPECT_TRUE(row.pass) << row.quantity << " z=" << row.z;
    }
    EXPECT_EQ(row.pass, std::abs(row.simulated - row.analytic) <= 3 * row.std_error ||
                            std::abs(row.simulated - row.analytic) <= 1e-12 * std::max(1.0, std::abs(row.analytic)));
  }
  EXPECT_EQ(joint_rows, 3u);

  std::ostringstream csv;
  aoi::write_comparison_csv(csv, result);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "quantity,analytic,simulated,stderr,z,pass");
}
