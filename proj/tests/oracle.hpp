// Test-side oracles: central finite differences over forward evaluations
// only, kept independent of the library's analytic backward passes.
#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "twoview/geometry.hpp"
#include "twoview/layers.hpp"

namespace oracle {

using twoview::Mat3;
using twoview::Vec3;
using twoview::Vec8;

// d/dx of a scalar function via central differences, h = 1e-6 (1 + |x|).
inline double fd_scalar(const std::function<double(double)>& f, double x) {
  const double h = 1e-6 * (1.0 + std::abs(x));
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Gradient of scalar phi w.r.t. an 8-vector.
inline Vec8 fd_grad8(const std::function<double(const Vec8&)>& phi,
                     const Vec8& x) {
  Vec8 g;
  for (int k = 0; k < 8; ++k) {
    Vec8 tmp = x;
    g(k) = fd_scalar(
        [&](double v) {
          tmp(k) = v;
          return phi(tmp);
        },
        x(k));
    tmp(k) = x(k);
  }
  return g;
}

// Gradient of scalar phi w.r.t. a 3x3 matrix.
inline Mat3 fd_grad_mat3(const std::function<double(const Mat3&)>& phi,
                         const Mat3& x) {
  Mat3 g;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      Mat3 tmp = x;
      g(i, j) = fd_scalar(
          [&](double v) {
            tmp(i, j) = v;
            return phi(tmp);
          },
          x(i, j));
    }
  return g;
}

// Agreement test with an absolute floor relative to the gradient scale.
template <typename A, typename B>
bool grads_match(const A& analytic, const B& fd, double rel_tol = 1e-5) {
  const double scale =
      std::max(analytic.cwiseAbs().maxCoeff(), fd.cwiseAbs().maxCoeff());
  for (int k = 0; k < analytic.size(); ++k) {
    const double a = analytic(k), f = fd(k);
    const double diff = std::abs(a - f);
    if (diff <= 1e-8 * (1.0 + scale)) continue;
    if (diff > rel_tol * std::max(std::abs(a), std::abs(f))) return false;
  }
  return true;
}

inline Mat3 random_mat3(std::mt19937_64& eng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = u(eng);
  return m;
}

inline Vec3 random_vec3(std::mt19937_64& eng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  return Vec3(u(eng), u(eng), u(eng));
}

}  // namespace oracle
