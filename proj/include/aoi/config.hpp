#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aoi/analytics.hpp"
#include "aoi/experiments.hpp"
#include "aoi/format.hpp"
#include "aoi/service_dist.hpp"

// Run configuration text format (see docs/config.md):
//
//   # comment
//   command = compare
//   output = results.csv
//
//   [simulation]
//   horizon = 10000
//   burn_in = 100          # or: auto
//   replications = 32
//   seed = 20200101
//   s_grid = 1, 1; 0.5, 2
//
//   [source]               # one block per source, in order
//   rate = 3
//   service = exp(6)
//
//   [sweep]
//   axis = lambda_2        # or: service_rate
//   lambda_1 = 3
//   service_rate = 6
//   families = exp; gamma(0.5); gamma(2); det
//   grid = logspace(0.05, 50, 60)

namespace aoi {

inline constexpr std::uint64_t kDefaultSeed = 20200101;

enum class Command { analytic, simulate, compare, sweep };

inline std::optional<Command> parse_command(std::string_view name) {
  if (name == "analytic") return Command::analytic;
  if (name == "simulate") return Command::simulate;
  if (name == "compare") return Command::compare;
  if (name == "sweep") return Command::sweep;
  return std::nullopt;
}

inline std::string command_name(Command c) {
  switch (c) {
    case Command::analytic: return "analytic";
    case Command::simulate: return "simulate";
    case Command::compare: return "compare";
    case Command::sweep: return "sweep";
  }
  return "analytic";
}

struct SweepConfig {
  SweepAxis axis = SweepAxis::lambda_2;
  double lambda_1 = 3.0;
  double lambda_2 = 3.0;
  double service_rate = 6.0;
  std::vector<std::string> families;  // literals: exp, gamma(a), det
  std::vector<double> grid;           // empty = default grid for the axis

  friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

struct RunConfig {
  std::optional<Command> command;
  std::vector<Source> sources;
  double horizon = 1e4;
  std::optional<double> burn_in;  // nullopt = default_burn_in(spec)
  std::size_t replications = 32;
  std::uint64_t seed = kDefaultSeed;
  std::vector<std::vector<double>> s_grid;
  std::optional<SweepConfig> sweep;
  std::string output;

  SystemSpec system() const { return SystemSpec(sources); }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct ConfigParseResult {
  std::optional<RunConfig> config;
  std::vector<std::string> errors;

  bool ok() const { return config.has_value(); }
};

/// `exp`, `gamma(a)` or `det`.
inline ServiceFamily parse_family(std::string_view text) {
  if (text == "exp") return GammaFamily{1.0};
  if (text == "det") return DeterministicFamily{};
  if (text.starts_with("gamma(") && text.ends_with(")")) {
    const auto shape = parse_double(text.substr(6, text.size() - 7));
    if (shape && *shape > 0.0) return GammaFamily{*shape};
  }
  throw std::invalid_argument("bad service family '" + std::string(text) +
                              "' (expected exp, gamma(shape) or det)");
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<double> parse_number_list(std::string_view text, char sep) {
  std::vector<double> out;
  for (auto item : split(text, sep)) {
    const auto v = parse_double(item);
    if (!v) throw std::invalid_argument("'" + std::string(item) + "' is not a number");
    out.push_back(*v);
  }
  return out;
}

inline std::vector<double> parse_grid(std::string_view text) {
  if (text.starts_with("logspace(") && text.ends_with(")")) {
    const auto args = parse_number_list(text.substr(9, text.size() - 10), ',');
    if (args.size() != 3 || args[2] < 2 || args[2] != std::floor(args[2])) {
      throw std::invalid_argument("logspace needs (lo, hi, n) with integer n >= 2");
    }
    return logspace(args[0], args[1], static_cast<std::size_t>(args[2]));
  }
  return parse_number_list(text, ',');
}

}  // namespace detail

/// Parse and validate. Every problem found is reported, not only the first.
inline ConfigParseResult parse_config(std::string_view text) {
  ConfigParseResult result;
  auto& errors = result.errors;
  RunConfig cfg;

  enum class Section { top, simulation, source, sweep };
  Section section = Section::top;
  struct RawSource {
    std::optional<double> rate;
    std::optional<ServiceTimeModel> service;
    std::size_t line;
  };
  std::vector<RawSource> raw_sources;
  std::size_t line_no = 0;

  auto error = [&](const std::string& msg) {
    errors.push_back("line " + std::to_string(line_no) + ": " + msg);
  };
  auto number = [&](std::string_view key, std::string_view value) -> std::optional<double> {
    const auto v = parse_double(value);
    if (!v) error(std::string(key) + ": '" + std::string(value) + "' is not a number");
    return v;
  };

  std::istringstream in{std::string(text)};
  std::string raw_line;
  while (std::getline(in, raw_line)) {
    ++line_no;
    std::string_view line = raw_line;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line == "[simulation]") {
        section = Section::simulation;
      } else if (line == "[source]") {
        section = Section::source;
        raw_sources.push_back({std::nullopt, std::nullopt, line_no});
      } else if (line == "[sweep]") {
        section = Section::sweep;
        if (!cfg.sweep) cfg.sweep = SweepConfig{};
      } else {
        error("unknown section " + std::string(line));
      }
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      error("expected 'key = value'");
      continue;
    }
    const std::string key{detail::trim(line.substr(0, eq))};
    const std::string_view value = detail::trim(line.substr(eq + 1));

    try {
      switch (section) {
        case Section::top:
          if (key == "command") {
            cfg.command = parse_command(value);
            if (!cfg.command) error("command: unknown command '" + std::string(value) + "'");
          } else if (key == "output") {
            cfg.output = std::string(value);
          } else {
            error("unknown key '" + key + "'");
          }
          break;
        case Section::simulation:
          if (key == "horizon") {
            if (auto v = number(key, value)) {
              if (*v > 0.0) cfg.horizon = *v;
              else error("horizon: must be positive (got " + std::string(value) + ")");
            }
          } else if (key == "burn_in") {
            if (value == "auto") {
              cfg.burn_in.reset();
            } else if (auto v = number(key, value)) {
              if (*v >= 0.0) cfg.burn_in = *v;
              else error("burn_in: must be nonnegative (got " + std::string(value) + ")");
            }
          } else if (key == "replications") {
            if (auto v = number(key, value)) {
              if (*v >= 2 && *v == std::floor(*v)) cfg.replications = static_cast<std::size_t>(*v);
              else error("replications: must be an integer >= 2 (got " + std::string(value) + ")");
            }
          } else if (key == "seed") {
            const std::string v{value};
            std::size_t used = 0;
            try {
              cfg.seed = std::stoull(v, &used);
            } catch (const std::exception&) {
              used = 0;
            }
            if (used != v.size() || v.empty() || v.front() == '-') {
              error("seed: '" + v + "' is not a nonnegative integer");
            }
          } else if (key == "s_grid") {
            cfg.s_grid.clear();
            for (auto vec : detail::split(value, ';')) {
              if (vec.empty()) continue;
              cfg.s_grid.push_back(detail::parse_number_list(vec, ','));
            }
          } else {
            error("unknown key '" + key + "' in [simulation]");
          }
          break;
        case Section::source: {
          RawSource& src = raw_sources.back();
          if (key == "rate") {
            src.rate = number(key, value);
            if (src.rate && !(*src.rate > 0.0)) {
              error("source " + std::to_string(raw_sources.size()) +
                    ": rate: must be positive (got " + std::string(value) + ")");
            }
          } else if (key == "service") {
            src.service = parse_service_literal(value);
          } else {
            error("unknown key '" + key + "' in [source]");
          }
          break;
        }
        case Section::sweep: {
          SweepConfig& sw = *cfg.sweep;
          if (key == "axis") {
            if (value == "lambda_2") sw.axis = SweepAxis::lambda_2;
            else if (value == "service_rate") sw.axis = SweepAxis::service_rate;
            else error("axis: expected lambda_2 or service_rate");
          } else if (key == "lambda_1" || key == "lambda_2" || key == "service_rate") {
            if (auto v = number(key, value)) {
              if (!(*v > 0.0)) {
                error(key + ": must be positive (got " + std::string(value) + ")");
              } else if (key == "lambda_1") {
                sw.lambda_1 = *v;
              } else if (key == "lambda_2") {
                sw.lambda_2 = *v;
              } else {
                sw.service_rate = *v;
              }
            }
          } else if (key == "families") {
            sw.families.clear();
            for (auto f : detail::split(value, ';')) {
              parse_family(f);
              sw.families.emplace_back(f);
            }
          } else if (key == "grid") {
            sw.grid = detail::parse_grid(value);
            detail::validate_grid(sw.grid);
          } else {
            error("unknown key '" + key + "' in [sweep]");
          }
          break;
        }
      }
    } catch (const std::exception& e) {
      error(key + ": " + e.what());
    }
  }

  for (std::size_t i = 0; i < raw_sources.size(); ++i) {
    const RawSource& src = raw_sources[i];
    const std::string where = "source " + std::to_string(i + 1) + " (line " +
                              std::to_string(src.line) + "): ";
    if (!src.rate) errors.push_back(where + "missing rate");
    if (!src.service) errors.push_back(where + "missing service");
    if (src.rate && src.service && *src.rate > 0.0) cfg.sources.push_back({*src.rate, *src.service});
  }

  const std::size_t K = raw_sources.size();
  const bool needs_sources = !cfg.command || *cfg.command != Command::sweep;
  if (needs_sources && K == 0 && !(cfg.sweep && !cfg.command)) {
    errors.push_back("no [source] blocks; need at least one source");
  }
  if (cfg.command == Command::sweep && !cfg.sweep) {
    errors.push_back("command sweep needs a [sweep] section");
  }
  for (std::size_t i = 0; i < cfg.s_grid.size(); ++i) {
    if (cfg.s_grid[i].size() != K) {
      errors.push_back("s_grid vector " + std::to_string(i + 1) + " has length " +
                       std::to_string(cfg.s_grid[i].size()) + ", expected K=" + std::to_string(K));
    }
    for (double v : cfg.s_grid[i]) {
      if (!(v >= 0.0)) {
        errors.push_back("s_grid vector " + std::to_string(i + 1) + " has a negative entry");
        break;
      }
    }
  }
  if (cfg.burn_in && !(*cfg.burn_in < cfg.horizon)) {
    errors.push_back("burn_in must be smaller than horizon");
  }
  if (errors.empty() && !cfg.sources.empty() && cfg.sources.size() == K) {
    try {
      (void)cfg.system();
    } catch (const std::exception& e) {
      errors.push_back(e.what());
    }
  }
  if (errors.empty()) result.config = std::move(cfg);
  return result;
}

/// Pretty-printer; parse_config(render_config(c)) reproduces c.
inline std::string render_config(const RunConfig& cfg) {
  std::ostringstream out;
  if (cfg.command) out << "command = " << command_name(*cfg.command) << '\n';
  if (!cfg.output.empty()) out << "output = " << cfg.output << '\n';

  out << "\n[simulation]\n";
  out << "horizon = " << format_double(cfg.horizon) << '\n';
  out << "burn_in = " << (cfg.burn_in ? format_double(*cfg.burn_in) : std::string("auto")) << '\n';
  out << "replications = " << cfg.replications << '\n';
  out << "seed = " << cfg.seed << '\n';
  if (!cfg.s_grid.empty()) {
    out << "s_grid = ";
    for (std::size_t i = 0; i < cfg.s_grid.size(); ++i) {
      if (i > 0) out << "; ";
      for (std::size_t k = 0; k < cfg.s_grid[i].size(); ++k) {
        if (k > 0) out << ", ";
        out << format_double(cfg.s_grid[i][k]);
      }
    }
    out << '\n';
  }

  for (const auto& src : cfg.sources) {
    out << "\n[source]\n";
    out << "rate = " << format_double(src.rate) << '\n';
    out << "service = " << src.service.literal() << '\n';
  }

  if (cfg.sweep) {
    const SweepConfig& sw = *cfg.sweep;
    out << "\n[sweep]\n";
    out << "axis = " << axis_name(sw.axis) << '\n';
    out << "lambda_1 = " << format_double(sw.lambda_1) << '\n';
    out << "lambda_2 = " << format_double(sw.lambda_2) << '\n';
    out << "service_rate = " << format_double(sw.service_rate) << '\n';
    if (!sw.families.empty()) {
      out << "families = ";
      for (std::size_t i = 0; i < sw.families.size(); ++i) {
        out << (i > 0 ? "; " : "") << sw.families[i];
      }
      out << '\n';
    }
    if (!sw.grid.empty()) {
      out << "grid = ";
      for (std::size_t i = 0; i < sw.grid.size(); ++i) {
        out << (i > 0 ? ", " : "") << format_double(sw.grid[i]);
      }
      out << '\n';
    }
  }
  return out.str();
}

inline SweepSpec make_sweep_spec(const SweepConfig& sw) {
  SweepSpec spec;
  spec.axis = sw.axis;
  spec.lambda_1 = sw.lambda_1;
  spec.lambda_2 = sw.lambda_2;
  spec.service_rate = sw.service_rate;
  for (const auto& f : sw.families) spec.families.push_back(parse_family(f));
  spec.grid = sw.grid;
  return spec;
}

}  // namespace aoi
