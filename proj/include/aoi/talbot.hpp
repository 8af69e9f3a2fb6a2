#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace aoi {

/// Fixed-Talbot inversion (Abate & Valko 2004) of a Laplace transform
/// `transform(s)` at time t > 0, using `nodes` points on the contour
/// s(theta) = r theta (cot theta + i), r = 2 nodes / (5 t).
///
/// `transform` must accept std::complex<Real> and be conjugate-symmetric,
/// which holds for the transform of any real function. The contour weights
/// grow like exp(0.4 nodes), so the sum loses about that many digits; Real
/// should be long double for 64 nodes.
template <class Real = long double, class Transform>
double fixed_talbot(Transform&& transform, double t, int nodes = 64) {
  if (!(t > 0.0)) throw std::domain_error("fixed_talbot: t must be positive");
  if (nodes < 2) throw std::invalid_argument("fixed_talbot: need at least 2 nodes");
  using cplx = std::complex<Real>;
  const Real time = t;
  const Real r = Real(2) * nodes / (Real(5) * time);

  Real sum = Real(0.5) * std::exp(r * time) * std::real(transform(cplx(r, 0)));
  for (int k = 1; k < nodes; ++k) {
    const Real theta = k * std::numbers::pi_v<Real> / nodes;
    const Real cot = 1 / std::tan(theta);
    const cplx s(r * theta * cot, r * theta);
    const Real sigma = theta + (theta * cot - 1) * cot;
    sum += std::real(std::exp(time * s) * transform(s) * cplx(1, sigma));
  }
  return static_cast<double>(r / nodes * sum);
}

}  // namespace aoi
