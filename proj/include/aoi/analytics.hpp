#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "aoi/service_dist.hpp"
#include "aoi/talbot.hpp"

// Closed-form statistics of the stationary AoI processes for a K-source
// M/G/1/1 pushout server fed by independent Poisson sources.
//
// Sources are indexed 0..K-1 throughout. A source k generates packets at
// rate lambda_k; each packet preempts whatever is in service, and a packet
// whose service finishes before the next arrival updates monitor k.

namespace aoi {

struct Source {
  double rate;
  ServiceTimeModel service;

  friend bool operator==(const Source&, const Source&) = default;
};

class SystemSpec {
 public:
  explicit SystemSpec(std::vector<Source> sources) {
    if (sources.empty()) throw std::invalid_argument("system needs at least one source");
    for (std::size_t k = 0; k < sources.size(); ++k) {
      const double rate = sources[k].rate;
      if (!(rate > 0.0) || !std::isfinite(rate)) {
        throw std::invalid_argument("source " + std::to_string(k) +
                                    ": rate must be positive and finite");
      }
      rates_.push_back(rate);
      models_.push_back(sources[k].service);
    }
    total_rate_ = std::accumulate(rates_.begin(), rates_.end(), 0.0);
    for (std::size_t k = 0; k < models_.size(); ++k) {
      if (!(models_[k].laplace(total_rate_) > 0.0)) {
        throw std::invalid_argument("source " + std::to_string(k) +
                                    ": completion probability underflows to zero");
      }
    }
  }

  std::size_t size() const noexcept { return rates_.size(); }
  double total_rate() const noexcept { return total_rate_; }
  double rate(std::size_t k) const { return rates_.at(k); }
  const ServiceTimeModel& service(std::size_t k) const { return models_.at(k); }
  std::span<const double> rates() const noexcept { return rates_; }
  std::span<const ServiceTimeModel> services() const noexcept { return models_; }

  std::vector<Source> sources() const {
    std::vector<Source> out;
    for (std::size_t k = 0; k < size(); ++k) out.push_back({rates_[k], models_[k]});
    return out;
  }

  SubsetMixture subset(std::vector<std::size_t> members) const {
    return SubsetMixture{std::move(members), rates_, models_};
  }

  friend bool operator==(const SystemSpec& a, const SystemSpec& b) {
    return a.rates_ == b.rates_ && a.models_ == b.models_;
  }

 private:
  std::vector<double> rates_;
  std::vector<ServiceTimeModel> models_;
  double total_rate_ = 0.0;
};

/// Dense K x K matrix, row-major.
struct SquareMatrix {
  std::size_t n = 0;
  std::vector<double> data;

  SquareMatrix() = default;
  SquareMatrix(std::size_t size, double fill) : n(size), data(size * size, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * n + j]; }

  friend bool operator==(const SquareMatrix&, const SquareMatrix&) = default;
};

enum class Provenance { analytic, simulated };

/// Per-source and pairwise moments of the stationary AoIs. Stderr fields
/// are filled only for simulated statistics. Pairwise entries that have no
/// closed form (K != 2 on the analytic side) are NaN.
struct AoIStatistics {
  Provenance provenance = Provenance::analytic;
  std::vector<double> mean, variance, cv;
  std::vector<double> mean_stderr, variance_stderr, cv_stderr;
  SquareMatrix covariance, correlation;
  SquareMatrix covariance_stderr, correlation_stderr;
};

struct MarginalMoments {
  double mean;
  double variance;
  double cv;
};

struct PeakDelayMeans {
  double delay;
  double peak;
  double update_rate;
};

struct CdfValue {
  double value;
  double residual;
  bool flagged;
};

inline constexpr std::size_t kDefaultPermutationCap = 8;

namespace detail {

inline void check_source(const SystemSpec& spec, std::size_t k, const char* who) {
  if (k >= spec.size()) {
    throw std::out_of_range(std::string(who) + ": source index " + std::to_string(k) +
                            " out of range for K=" + std::to_string(spec.size()));
  }
}

inline void check_two_source(const SystemSpec& spec, const char* who) {
  if (spec.size() != 2) {
    throw std::invalid_argument(std::string(who) + " requires K=2, got K=" +
                                std::to_string(spec.size()));
  }
}

inline void check_argument(double s, const char* who) {
  if (!(s >= 0.0)) {
    throw std::domain_error(std::string(who) + ": transform argument must be >= 0");
  }
}

// Compensated (Kahan-Babuska) running sum.
struct CompensatedSum {
  double sum = 0.0;
  double carry = 0.0;

  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      carry += (sum - t) + x;
    } else {
      carry += (x - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + carry; }
};

}  // namespace detail

/// Rate of service completions, sum_k lambda_k L_{S,k}(lambda).
inline double departure_rate(const SystemSpec& spec) {
  const double lambda = spec.total_rate();
  double total = 0.0;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    total += spec.rate(k) * spec.service(k).laplace(lambda);
  }
  return total;
}

/// Fraction of completions that belong to source k.
inline double source_update_share(const SystemSpec& spec, std::size_t k) {
  detail::check_source(spec, k, "source_update_share");
  const double lambda = spec.total_rate();
  return spec.rate(k) * spec.service(k).laplace(lambda) / departure_rate(spec);
}

/// Probability that a source-k packet is not pushed out.
inline double completion_probability(const SystemSpec& spec, std::size_t k) {
  detail::check_source(spec, k, "completion_probability");
  return spec.service(k).laplace(spec.total_rate());
}

inline double marginal_aoi_laplace(const SystemSpec& spec, std::size_t k, double s) {
  detail::check_source(spec, k, "marginal_aoi_laplace");
  detail::check_argument(s, "marginal_aoi_laplace");
  const double num = spec.rate(k) * spec.service(k).laplace(s + spec.total_rate());
  return num / (s + num);
}

inline MarginalMoments marginal_aoi_moments(const SystemSpec& spec, std::size_t k) {
  detail::check_source(spec, k, "marginal_aoi_moments");
  const double lambda = spec.total_rate();
  const double lk = spec.rate(k);
  const double transform = spec.service(k).laplace(lambda);
  const double slope = spec.service(k).laplace_derivative(lambda, 1);
  // 1 + 2 lambda_k L'(lambda) >= 0 since 2 lambda_k <= e lambda; clamp rounding.
  const double numerator = std::max(0.0, 1.0 + 2.0 * lk * slope);
  const double mean = 1.0 / (lk * transform);
  return {mean, numerator * mean * mean, std::sqrt(numerator)};
}

/// Joint transform E[exp(-sum_k s_k A_k(0))] as a sum over all K!
/// orderings of the sources. Each ordering contributes a product over its
/// suffix sets H: L_{S,j}(sbar_H + lambda) / (sbar_H + lambdabar_H L_{S,H}(sbar_H + lambda)),
/// where j is the first source of the suffix. Suffix quantities are
/// memoized by bitmask; the orderings themselves are enumerated directly.
inline double joint_aoi_laplace(const SystemSpec& spec, std::span<const double> s,
                                std::size_t permutation_cap = kDefaultPermutationCap) {
  const std::size_t K = spec.size();
  if (s.size() != K) {
    throw std::invalid_argument("joint_aoi_laplace: s has length " + std::to_string(s.size()) +
                                ", expected K=" + std::to_string(K));
  }
  for (double v : s) detail::check_argument(v, "joint_aoi_laplace");
  if (K > permutation_cap) {
    double terms = 1.0;
    for (std::size_t i = 2; i <= K; ++i) terms *= static_cast<double>(i);
    throw std::length_error("joint_aoi_laplace: K=" + std::to_string(K) + " exceeds cap " +
                            std::to_string(permutation_cap) + " (K! = " +
                            format_double(terms) + " permutation terms)");
  }

  const double lambda = spec.total_rate();
  const std::size_t subsets = std::size_t{1} << K;
  std::vector<double> denominator(subsets, 0.0);
  std::vector<double> numerator(subsets * K, 0.0);
  for (std::size_t mask = 1; mask < subsets; ++mask) {
    double s_bar = 0.0;
    double weighted = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      if (mask & (std::size_t{1} << k)) s_bar += s[k];
    }
    const double arg = s_bar + lambda;
    for (std::size_t k = 0; k < K; ++k) {
      if (mask & (std::size_t{1} << k)) {
        const double lk = spec.service(k).laplace(arg);
        numerator[mask * K + k] = lk;
        weighted += spec.rate(k) * lk;
      }
    }
    // lambdabar_H * L_{S,H}(arg) == sum_{k in H} lambda_k L_{S,k}(arg)
    denominator[mask] = s_bar + weighted;
  }

  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), std::size_t{0});
  detail::CompensatedSum total;
  do {
    std::size_t mask = subsets - 1;
    double term = 1.0;
    for (std::size_t pos = 0; pos < K; ++pos) {
      const std::size_t j = order[pos];
      term *= numerator[mask * K + j] / denominator[mask];
      mask &= ~(std::size_t{1} << j);
    }
    total.add(term);
  } while (std::next_permutation(order.begin(), order.end()));

  double rate_product = 1.0;
  for (double r : spec.rates()) rate_product *= r;
  return rate_product * total.value();
}

/// Two-source form of the joint transform.
inline double joint_aoi_laplace_two_source(const SystemSpec& spec, double s1, double s2) {
  detail::check_two_source(spec, "joint_aoi_laplace_two_source");
  detail::check_argument(s1, "joint_aoi_laplace_two_source");
  detail::check_argument(s2, "joint_aoi_laplace_two_source");
  const double lambda = spec.total_rate();
  const double l1 = spec.rate(0);
  const double l2 = spec.rate(1);
  const double s_bar = s1 + s2;
  const ServiceTimeModel& m1 = spec.service(0);
  const ServiceTimeModel& m2 = spec.service(1);
  const double mixed = l1 * m1.laplace(s_bar + lambda) + l2 * m2.laplace(s_bar + lambda);
  const double prefactor = l1 * l2 / (s_bar + mixed);
  const double first = m1.laplace(s1 + lambda) * m2.laplace(s_bar + lambda) /
                       (s1 + l1 * m1.laplace(s1 + lambda));
  const double second = m2.laplace(s2 + lambda) * m1.laplace(s_bar + lambda) /
                        (s2 + l2 * m2.laplace(s2 + lambda));
  return prefactor * (first + second);
}

inline double aoi_covariance(const SystemSpec& spec) {
  detail::check_two_source(spec, "aoi_covariance");
  const double lambda = spec.total_rate();
  double ratio_sum = 0.0;
  for (std::size_t k = 0; k < 2; ++k) {
    ratio_sum += spec.service(k).laplace_derivative(lambda, 1) / spec.service(k).laplace(lambda);
  }
  return ratio_sum / departure_rate(spec);
}

inline double aoi_correlation(const SystemSpec& spec) {
  detail::check_two_source(spec, "aoi_correlation");
  const double lambda = spec.total_rate();
  const double l1 = spec.rate(0);
  const double l2 = spec.rate(1);
  const double t1 = spec.service(0).laplace(lambda);
  const double t2 = spec.service(1).laplace(lambda);
  const double d1 = spec.service(0).laplace_derivative(lambda, 1);
  const double d2 = spec.service(1).laplace_derivative(lambda, 1);
  const double v1 = 1.0 + 2.0 * l1 * d1;
  const double v2 = 1.0 + 2.0 * l2 * d2;
  if (!(v1 > 0.0) || !(v2 > 0.0)) {
    throw std::domain_error("aoi_correlation: an AoI has zero variance");
  }
  return l1 * l2 * (d1 * t2 + t1 * d2) / (departure_rate(spec) * std::sqrt(v1 * v2));
}

/// Service-law families used by the correlation bounds and the sweeps.
/// Exponential is GammaFamily{1}.
struct GammaFamily {
  double shape;
};
struct DeterministicFamily {};
using ServiceFamily = std::variant<GammaFamily, DeterministicFamily>;

/// Member of `family` with the given mean service time.
inline ServiceTimeModel family_model(const ServiceFamily& family, double mean) {
  if (const auto* g = std::get_if<GammaFamily>(&family)) {
    if (g->shape == 1.0) return ServiceTimeModel::exponential(1.0 / mean);
    return ServiceTimeModel::gamma(g->shape, g->shape / mean);
  }
  return ServiceTimeModel::deterministic(mean);
}

inline std::string family_label(const ServiceFamily& family) {
  if (const auto* g = std::get_if<GammaFamily>(&family)) {
    if (g->shape == 1.0) return "exp";
    return "gamma(" + format_double(g->shape) + ")";
  }
  return "det";
}

/// Lowest correlation attainable by two sources sharing a service law of
/// the given family: -1/(2(e-1)) for deterministic service and
/// -1/(2((1+1/a)^(a+1) - 1)) for gamma with shape a.
inline double cc_lower_bound(const ServiceFamily& family) {
  if (const auto* g = std::get_if<GammaFamily>(&family)) {
    if (!(g->shape > 0.0)) throw std::invalid_argument("cc_lower_bound: gamma shape must be > 0");
    const double growth = std::exp((g->shape + 1.0) * std::log1p(1.0 / g->shape));
    return -1.0 / (2.0 * (growth - 1.0));
  }
  return -1.0 / (2.0 * (std::numbers::e - 1.0));
}

inline PeakDelayMeans peak_mean_identity(const SystemSpec& spec, std::size_t k) {
  detail::check_source(spec, k, "peak_mean_identity");
  const double lambda = spec.total_rate();
  const double transform = spec.service(k).laplace(lambda);
  const double delay = -spec.service(k).laplace_derivative(lambda, 1) / transform;
  const double update_rate = spec.rate(k) * transform;
  return {delay, delay + 1.0 / update_rate, update_rate};
}

/// P(A_k(0) <= x) by fixed-Talbot inversion of L_{A_k}(s)/s. The residual
/// is the change against a 48-node inversion; above 1e-6 the value is
/// flagged.
inline CdfValue marginal_aoi_cdf(const SystemSpec& spec, std::size_t k, double x,
                                 int nodes = 64) {
  detail::check_source(spec, k, "marginal_aoi_cdf");
  if (!(x >= 0.0)) throw std::domain_error("marginal_aoi_cdf: x must be >= 0");
  if (x == 0.0) return {0.0, 0.0, false};
  const double lambda = spec.total_rate();
  const double lk = spec.rate(k);
  const ServiceTimeModel& model = spec.service(k);
  using cplx = std::complex<long double>;
  auto transform = [&](cplx s) -> cplx {
    const cplx num = static_cast<long double>(lk) * model.laplace(s + static_cast<long double>(lambda));
    // Far left on the contour a delay factor exp(-d s) overflows; there
    // L_A -> 1.
    if (!std::isfinite(num.real()) || !std::isfinite(num.imag())) return cplx(1) / s;
    return num / (s + num) / s;
  };
  const double fine = fixed_talbot(transform, x, nodes);
  const double coarse = fixed_talbot(transform, x, std::max(2, nodes * 3 / 4));
  const double residual = std::abs(fine - coarse);
  return {std::clamp(fine, 0.0, 1.0), residual, residual > 1e-6};
}

/// Analytic counterpart of the simulator's statistics. Pairwise entries
/// are filled for K = 2 only; the diagonal of the correlation is 1.
inline AoIStatistics analytic_statistics(const SystemSpec& spec) {
  const std::size_t K = spec.size();
  AoIStatistics stats;
  stats.provenance = Provenance::analytic;
  stats.covariance = SquareMatrix(K, std::numeric_limits<double>::quiet_NaN());
  stats.correlation = SquareMatrix(K, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < K; ++k) {
    const MarginalMoments m = marginal_aoi_moments(spec, k);
    stats.mean.push_back(m.mean);
    stats.variance.push_back(m.variance);
    stats.cv.push_back(m.cv);
    stats.covariance(k, k) = m.variance;
    stats.correlation(k, k) = 1.0;
  }
  if (K == 2) {
    const double cov = aoi_covariance(spec);
    const double cc = aoi_correlation(spec);
    stats.covariance(0, 1) = stats.covariance(1, 0) = cov;
    stats.correlation(0, 1) = stats.correlation(1, 0) = cc;
  }
  return stats;
}

}  // namespace aoi
