#pragma once

#include <cctype>
#include <cmath>
#include <complex>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "aoi/format.hpp"

namespace aoi {

struct Exponential {
  double rate;
};

struct Gamma {
  double shape;
  double rate;
};

struct Deterministic {
  double value;
};

/// A service-time law with closed-form Laplace transform.
///
/// Every model is stored as a finite mixture; a plain family is a mixture
/// with a single component of weight one. Mixtures are one level deep.
class ServiceTimeModel {
 public:
  using Component = std::variant<Exponential, Gamma, Deterministic>;

  static ServiceTimeModel exponential(double rate) {
    if (!(rate > 0.0) || !std::isfinite(rate)) {
      throw std::invalid_argument("exponential rate must be positive and finite");
    }
    return ServiceTimeModel({1.0}, {Exponential{rate}});
  }

  static ServiceTimeModel gamma(double shape, double rate) {
    if (!(shape > 0.0) || !std::isfinite(shape)) {
      throw std::invalid_argument("gamma shape must be positive and finite");
    }
    if (!(rate > 0.0) || !std::isfinite(rate)) {
      throw std::invalid_argument("gamma rate must be positive and finite");
    }
    return ServiceTimeModel({1.0}, {Gamma{shape, rate}});
  }

  static ServiceTimeModel deterministic(double value) {
    if (!(value >= 0.0) || !std::isfinite(value)) {
      throw std::invalid_argument("deterministic value must be nonnegative and finite");
    }
    return ServiceTimeModel({1.0}, {Deterministic{value}});
  }

  /// Weights must be positive and sum to one within 1e-12; each component
  /// must itself be a plain (non-mixture) model.
  static ServiceTimeModel mixture(
      const std::vector<std::pair<double, ServiceTimeModel>>& parts) {
    if (parts.empty()) throw std::invalid_argument("mixture needs at least one component");
    std::vector<double> weights;
    std::vector<Component> components;
    double total = 0.0;
    for (const auto& [w, model] : parts) {
      if (!(w > 0.0) || !std::isfinite(w)) {
        throw std::invalid_argument("mixture weights must be positive");
      }
      if (model.is_mixture()) {
        throw std::invalid_argument("mixture components cannot be mixtures");
      }
      weights.push_back(w);
      components.push_back(model.components_.front());
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw std::invalid_argument("mixture weights must sum to 1 (got " +
                                  format_double(total) + ")");
    }
    return ServiceTimeModel(std::move(weights), std::move(components));
  }

  bool is_mixture() const noexcept { return kind_ == Kind::mixture; }
  std::span<const double> weights() const noexcept { return weights_; }
  std::span<const Component> components() const noexcept { return components_; }

  /// E[exp(-s S)] for s >= 0.
  double laplace(double s) const {
    require_nonnegative(s);
    double total = 0.0;
    for (std::size_t i = 0; i < components_.size(); ++i) {
      total += weights_[i] * component_laplace(components_[i], s);
    }
    return total;
  }

  /// Analytic continuation to complex arguments (principal branch for the
  /// gamma power). Only used by the numerical inversion contour.
  template <class Real>
  std::complex<Real> laplace(std::complex<Real> s) const {
    std::complex<Real> total = 0.0;
    for (std::size_t i = 0; i < components_.size(); ++i) {
      total += static_cast<Real>(weights_[i]) * std::visit(
          [&](const auto& c) -> std::complex<Real> {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, Exponential>) {
              const Real rate = c.rate;
              return rate / (rate + s);
            } else if constexpr (std::is_same_v<T, Gamma>) {
              return std::pow(Real(1) + s / static_cast<Real>(c.rate), -static_cast<Real>(c.shape));
            } else {
              return std::exp(-s * static_cast<Real>(c.value));
            }
          },
          components_[i]);
    }
    return total;
  }

  /// Closed-form derivative of the transform; order 1 or 2.
  double laplace_derivative(double s, int order) const {
    require_nonnegative(s);
    if (order != 1 && order != 2) {
      throw std::invalid_argument("laplace_derivative supports order 1 or 2, got " +
                                  std::to_string(order));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < components_.size(); ++i) {
      total += weights_[i] * component_derivative(components_[i], s, order);
    }
    return total;
  }

  double mean() const noexcept {
    double total = 0.0;
    for (std::size_t i = 0; i < components_.size(); ++i) {
      total += weights_[i] * std::visit(
          [](const auto& c) -> double {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, Exponential>) {
              return 1.0 / c.rate;
            } else if constexpr (std::is_same_v<T, Gamma>) {
              return c.shape / c.rate;
            } else {
              return c.value;
            }
          },
          components_[i]);
    }
    return total;
  }

  /// Exact draw. Uniform variates come from `rng.uniform()`; the gamma
  /// component uses std::gamma_distribution on the same stream.
  template <class Stream>
  double sample(Stream& rng) const {
    std::size_t pick = 0;
    if (components_.size() > 1) {
      double u = rng.uniform();
      while (pick + 1 < components_.size() && u > weights_[pick]) {
        u -= weights_[pick];
        ++pick;
      }
    }
    return std::visit(
        [&](const auto& c) -> double {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, Exponential>) {
            return -std::log(rng.uniform()) / c.rate;
          } else if constexpr (std::is_same_v<T, Gamma>) {
            std::gamma_distribution<double> dist(c.shape, 1.0 / c.rate);
            return dist(rng);
          } else {
            return c.value;
          }
        },
        components_[pick]);
  }

  /// Render as a distribution literal accepted by parse_service_literal().
  std::string literal() const {
    auto one = [](const Component& comp) {
      return std::visit(
          [](const auto& c) -> std::string {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, Exponential>) {
              return "exp(" + format_double(c.rate) + ")";
            } else if constexpr (std::is_same_v<T, Gamma>) {
              return "gamma(" + format_double(c.shape) + ", " + format_double(c.rate) + ")";
            } else {
              return "det(" + format_double(c.value) + ")";
            }
          },
          comp);
    };
    if (!is_mixture()) return one(components_.front());
    std::string out = "mix(";
    for (std::size_t i = 0; i < components_.size(); ++i) {
      if (i > 0) out += ", ";
      out += format_double(weights_[i]) + "*" + one(components_[i]);
    }
    return out + ")";
  }

  friend bool operator==(const ServiceTimeModel& a, const ServiceTimeModel& b) {
    if (a.kind_ != b.kind_ || a.weights_ != b.weights_) return false;
    for (std::size_t i = 0; i < a.components_.size(); ++i) {
      const bool same = std::visit(
          [](const auto& x, const auto& y) -> bool {
            using X = std::decay_t<decltype(x)>;
            using Y = std::decay_t<decltype(y)>;
            if constexpr (!std::is_same_v<X, Y>) {
              return false;
            } else if constexpr (std::is_same_v<X, Gamma>) {
              return x.shape == y.shape && x.rate == y.rate;
            } else if constexpr (std::is_same_v<X, Exponential>) {
              return x.rate == y.rate;
            } else {
              return x.value == y.value;
            }
          },
          a.components_[i], b.components_[i]);
      if (!same) return false;
    }
    return true;
  }

 private:
  enum class Kind { plain, mixture };

  ServiceTimeModel(std::vector<double> weights, std::vector<Component> components)
      : kind_(components.size() > 1 ? Kind::mixture : Kind::plain),
        weights_(std::move(weights)),
        components_(std::move(components)) {}

  static void require_nonnegative(double s) {
    if (!(s >= 0.0)) {
      throw std::domain_error("Laplace transform argument must be >= 0, got " +
                              format_double(s));
    }
  }

  static double component_laplace(const Component& comp, double s) {
    return std::visit(
        [s](const auto& c) -> double {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, Exponential>) {
            return c.rate / (c.rate + s);
          } else if constexpr (std::is_same_v<T, Gamma>) {
            return std::exp(-c.shape * std::log1p(s / c.rate));
          } else {
            return std::exp(-s * c.value);
          }
        },
        comp);
  }

  static double component_derivative(const Component& comp, double s, int order) {
    return std::visit(
        [s, order](const auto& c) -> double {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, Exponential>) {
            const double d = c.rate + s;
            return order == 1 ? -c.rate / (d * d) : 2.0 * c.rate / (d * d * d);
          } else if constexpr (std::is_same_v<T, Gamma>) {
            const double base = std::log1p(s / c.rate);
            if (order == 1) return -(c.shape / c.rate) * std::exp(-(c.shape + 1.0) * base);
            return c.shape * (c.shape + 1.0) / (c.rate * c.rate) *
                   std::exp(-(c.shape + 2.0) * base);
          } else {
            const double e = std::exp(-s * c.value);
            return order == 1 ? -c.value * e : c.value * c.value * e;
          }
        },
        comp);
  }

  Kind kind_;
  std::vector<double> weights_;
  std::vector<Component> components_;
};

/// Conditional service law of a packet given its source lies in a subset H:
/// the rate-weighted average of the per-source transforms.
struct SubsetMixture {
  std::vector<std::size_t> members;
  std::span<const double> rates;
  std::span<const ServiceTimeModel> models;

  double total_rate() const {
    double total = 0.0;
    for (std::size_t k : members) total += rates[k];
    return total;
  }
};

inline double subset_laplace(const SubsetMixture& mix, double s) {
  if (mix.members.empty()) throw std::invalid_argument("subset_laplace: empty source subset");
  double weighted = 0.0;
  double total = 0.0;
  for (std::size_t k : mix.members) {
    if (k >= mix.rates.size() || k >= mix.models.size()) {
      throw std::out_of_range("subset_laplace: source index " + std::to_string(k));
    }
    weighted += mix.rates[k] * mix.models[k].laplace(s);
    total += mix.rates[k];
  }
  return weighted / total;
}

namespace detail {

class LiteralParser {
 public:
  explicit LiteralParser(std::string_view text) : text_(text) {}

  ServiceTimeModel parse() {
    ServiceTimeModel model = parse_model(true);
    skip_space();
    if (pos_ != text_.size()) fail("trailing characters");
    return model;
  }

 private:
  ServiceTimeModel parse_model(bool allow_mix) {
    skip_space();
    const std::string name = identifier();
    expect('(');
    if (name == "exp") {
      const double rate = number();
      expect(')');
      return wrap([&] { return ServiceTimeModel::exponential(rate); });
    }
    if (name == "gamma") {
      const double shape = number();
      expect(',');
      const double rate = number();
      expect(')');
      return wrap([&] { return ServiceTimeModel::gamma(shape, rate); });
    }
    if (name == "det") {
      const double value = number();
      expect(')');
      return wrap([&] { return ServiceTimeModel::deterministic(value); });
    }
    if (name == "mix") {
      if (!allow_mix) fail("nested mix() is not supported");
      std::vector<std::pair<double, ServiceTimeModel>> parts;
      while (true) {
        const double w = number();
        expect('*');
        parts.emplace_back(w, parse_model(false));
        skip_space();
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        expect(')');
        break;
      }
      return wrap([&] { return ServiceTimeModel::mixture(parts); });
    }
    fail("unknown distribution '" + name + "'");
  }

  template <class F>
  ServiceTimeModel wrap(F&& make) {
    try {
      return make();
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
  }

  std::string identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (start == pos_) fail("expected a distribution name");
    return std::string(text_.substr(start, pos_ - start));
  }

  double number() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.' ||
            text_[pos_] == 'e' || text_[pos_] == 'E' || text_[pos_] == '-' ||
            text_[pos_] == '+')) {
      ++pos_;
    }
    const auto value = parse_double(text_.substr(start, pos_ - start));
    if (!value) fail("expected a number");
    return *value;
  }

  void expect(char c) {
    skip_space();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw std::invalid_argument("bad distribution literal '" + std::string(text_) +
                                "' at column " + std::to_string(pos_ + 1) + ": " + what);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parse `exp(rate)`, `gamma(shape, rate)`, `det(value)` or
/// `mix(w1*dist1, w2*dist2, ...)`. Throws std::invalid_argument.
inline ServiceTimeModel parse_service_literal(std::string_view text) {
  return detail::LiteralParser(text).parse();
}

}  // namespace aoi
