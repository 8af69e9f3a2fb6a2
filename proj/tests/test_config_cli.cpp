#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "aoi/config.hpp"
#include "cli_app.hpp"

using aoi::RunConfig;
using aoi::ServiceTimeModel;

namespace {

const std::string kTwoExp = std::string(AOI_SOURCE_DIR) + "/configs/two_exp.cfg";
const std::string kThreeMixed = std::string(AOI_SOURCE_DIR) + "/configs/three_mixed.cfg";
const std::string kRateSweep = std::string(AOI_SOURCE_DIR) + "/configs/sweep_service_rate.cfg";

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "aoi_cli");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = aoi::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("aoi_test_" + name);
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool mentions(const std::vector<std::string>& errors, const std::string& needle) {
  for (const auto& e : errors) {
    if (e.find(needle) != std::string::npos) return true;
  }
  return false;
}

ServiceTimeModel random_model(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.01, 20.0);
  switch (gen() % 4) {
    case 0: return ServiceTimeModel::exponential(u(gen));
    case 1: return ServiceTimeModel::gamma(u(gen), u(gen));
    case 2: return ServiceTimeModel::deterministic(u(gen) / 10);
    default: {
      const double w = std::uniform_real_distribution<double>(0.1, 0.9)(gen);
      return ServiceTimeModel::mixture(
          {{w, ServiceTimeModel::exponential(u(gen))}, {1.0 - w, ServiceTimeModel::gamma(u(gen), u(gen))}});
    }
  }
}

RunConfig random_config(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.01, 10.0);
  RunConfig cfg;
  const std::size_t K = 1 + gen() % 4;
  for (std::size_t k = 0; k < K; ++k) cfg.sources.push_back({u(gen), random_model(gen)});
  if (gen() % 2) cfg.command = static_cast<aoi::Command>(gen() % 3);
  cfg.horizon = 1000.0 * u(gen);
  if (gen() % 2) cfg.burn_in = u(gen);
  cfg.replications = 2 + gen() % 100;
  cfg.seed = gen();
  for (std::size_t i = gen() % 4; i > 0; --i) {
    std::vector<double> s(K);
    for (auto& v : s) v = gen() % 5 == 0 ? 0.0 : u(gen);
    cfg.s_grid.push_back(s);
  }
  if (gen() % 2) {
    aoi::SweepConfig sw;
    sw.axis = gen() % 2 ? aoi::SweepAxis::lambda_2 : aoi::SweepAxis::service_rate;
    sw.lambda_1 = u(gen);
    sw.lambda_2 = u(gen);
    sw.service_rate = u(gen);
    if (gen() % 2) sw.families = {"exp", "gamma(" + aoi::format_double(u(gen)) + ")", "det"};
    if (gen() % 2) sw.grid = aoi::logspace(0.1, 10.0 + u(gen), 5 + gen() % 10);
    cfg.sweep = sw;
  }
  if (gen() % 2) cfg.output = "out_" + std::to_string(gen() % 1000) + ".csv";
  return cfg;
}

}  // namespace

TEST(ParseConfig, TwoSourceFile) {
  const auto parsed = aoi::parse_config(slurp(kTwoExp));
  ASSERT_TRUE(parsed.ok()) << (parsed.errors.empty() ? "" : parsed.errors.front());
  const auto& cfg = *parsed.config;
  EXPECT_EQ(cfg.sources.size(), 2u);
  EXPECT_EQ(cfg.sources[0].service, ServiceTimeModel::exponential(6.0));
  EXPECT_EQ(cfg.replications, 32u);
  EXPECT_EQ(cfg.seed, aoi::kDefaultSeed);
  EXPECT_EQ(cfg.s_grid.size(), 5u);
}

TEST(ParseConfig, NegativeRateNamesField) {
  const auto parsed = aoi::parse_config("[source]\nrate = -1\nservice = exp(2)\n");
  EXPECT_FALSE(parsed.ok());
  EXPECT_TRUE(mentions(parsed.errors, "rate"));
}

TEST(ParseConfig, GridLengthCitesK) {
  const auto parsed = aoi::parse_config(
      "[simulation]\ns_grid = 1, 1, 1\n[source]\nrate = 1\nservice = exp(2)\n"
      "[source]\nrate = 1\nservice = exp(2)\n");
  EXPECT_FALSE(parsed.ok());
  EXPECT_TRUE(mentions(parsed.errors, "K=2"));
}

TEST(ParseConfig, CollectsEveryError) {
  const auto parsed = aoi::parse_config(
      "colour = blue\n[simulation]\nhorizon = -5\nseed = x\n[source]\nrate = 0\nservice = weibull(2)\n"
      "[bogus]\n[source]\nservice = exp(1)\n");
  EXPECT_FALSE(parsed.ok());
  EXPECT_TRUE(mentions(parsed.errors, "unknown key 'colour'"));
  EXPECT_TRUE(mentions(parsed.errors, "horizon"));
  EXPECT_TRUE(mentions(parsed.errors, "seed"));
  EXPECT_TRUE(mentions(parsed.errors, "source 1: rate"));
  EXPECT_TRUE(mentions(parsed.errors, "weibull"));
  EXPECT_TRUE(mentions(parsed.errors, "unknown section"));
  EXPECT_TRUE(mentions(parsed.errors, "missing rate"));
  EXPECT_GE(parsed.errors.size(), 7u);
}

TEST(ParseConfig, SweepOnlyFile) {
  const auto parsed = aoi::parse_config(slurp(kRateSweep));
  ASSERT_TRUE(parsed.ok());
  ASSERT_TRUE(parsed.config->sweep.has_value());
  EXPECT_EQ(parsed.config->sweep->axis, aoi::SweepAxis::service_rate);
  EXPECT_EQ(parsed.config->sweep->families.size(), 4u);
}

TEST(ParseConfig, GridForms) {
  const auto parsed = aoi::parse_config("[sweep]\ngrid = logspace(0.1, 10, 3)\n");
  ASSERT_TRUE(parsed.ok());
  EXPECT_EQ(parsed.config->sweep->grid, aoi::logspace(0.1, 10.0, 3));
  EXPECT_FALSE(aoi::parse_config("[sweep]\ngrid = 3, 2, 1\n").ok());
  EXPECT_FALSE(aoi::parse_config("[sweep]\nfamilies = exp; weibull\n").ok());
}

TEST(RenderConfig, RoundTrip) {
  std::mt19937_64 gen(99);
  for (int i = 0; i < 200; ++i) {
    const RunConfig cfg = random_config(gen);
    const std::string text = aoi::render_config(cfg);
    const auto parsed = aoi::parse_config(text);
    ASSERT_TRUE(parsed.ok()) << text << "\n" << (parsed.errors.empty() ? "" : parsed.errors.front());
    EXPECT_TRUE(*parsed.config == cfg) << text;
    EXPECT_EQ(aoi::render_config(*parsed.config), text);
  }
}

TEST(Cli, AnalyticAnchors) {
  const auto r = cli({"analytic", "--config", kTwoExp});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("0.666667"), std::string::npos);
  EXPECT_NE(r.out.find("-0.166667"), std::string::npos);
}

TEST(Cli, CompareDefaultsPass) {
  const auto r = cli({"compare", "--config", kTwoExp});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
}

TEST(Cli, CompareGateFailureExitsTwo) {
  // Two short batches give wild standard errors; some row leaves 3 sigma.
  const auto r = cli({"compare", "--config", kThreeMixed, "--replications", "2", "--horizon", "50",
                      "--burn-in", "10", "--seed", "4"});
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.err.find("outside 3 standard errors"), std::string::npos);
}

TEST(Cli, UsageErrors) {
  const auto unknown = cli({"frobnicate", "--config", kTwoExp});
  EXPECT_EQ(unknown.code, 1);
  EXPECT_NE(unknown.err.find("Usage"), std::string::npos);
  EXPECT_TRUE(unknown.out.empty());

  EXPECT_EQ(cli({"analytic"}).code, 1);
  EXPECT_EQ(cli({"analytic", "--config", "/nonexistent/file.cfg"}).code, 1);
  EXPECT_EQ(cli({"sweep", "--config", kTwoExp}).code, 1);
  EXPECT_EQ(cli({"simulate", "--config", kTwoExp, "--replications", "1"}).code, 1);
  EXPECT_EQ(cli({"simulate", "--config", kTwoExp, "--horizon", "50", "--burn-in", "60"}).code, 1);
}

TEST(Cli, InvalidConfigReportsAllErrors) {
  const auto path = temp_file("bad.cfg");
  std::ofstream(path) << "[source]\nrate = -1\nservice = exp(2)\n[source]\nrate = 1\nservice = nope\n";
  const auto r = cli({"analytic", "--config", path.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("rate"), std::string::npos);
  EXPECT_NE(r.err.find("nope"), std::string::npos);
  EXPECT_TRUE(r.out.empty());
}

TEST(Cli, SimulateCsvIsReproducible) {
  const auto a = temp_file("sim_a.csv");
  const auto b = temp_file("sim_b.csv");
  const auto c = temp_file("sim_c.csv");
  const std::vector<std::string> common{"simulate", "--config", kTwoExp, "--horizon", "500",
                                        "--replications", "4"};
  auto with = [&](const std::filesystem::path& out, const std::string& seed) {
    auto args = common;
    args.insert(args.end(), {"--output", out.string(), "--seed", seed});
    return cli(args).code;
  };
  ASSERT_EQ(with(a, "7"), 0);
  ASSERT_EQ(with(b, "7"), 0);
  ASSERT_EQ(with(c, "8"), 0);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_NE(slurp(a), slurp(c));
  EXPECT_EQ(slurp(a).substr(0, slurp(a).find('\n')), "quantity,estimate,stderr");
}

TEST(Cli, SweepWritesCsv) {
  const auto path = temp_file("sweep.csv");
  const auto r = cli({"sweep", "--config", kRateSweep, "--output", path.string()});
  EXPECT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(path);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "param,family,cc");
  EXPECT_NE(r.out.find("-0.290988"), std::string::npos);
}
