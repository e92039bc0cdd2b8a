#pragma once

#include <array>
#include <cmath>
#include <optional>

#include "twoview/geometry.hpp"

namespace twoview {

using Vec8 = Eigen::Matrix<double, 8, 1>;
using Jacobian9x8 = Eigen::Matrix<double, 9, 8>;

/// Reconstruction-layer input: (f1, f2, tx, ty, tz, rx, ry, rz).
/// f1, f2 are the K diagonal entries of the two cameras (must be > 0);
/// translation is up to scale (norm must be > 0); angles in radians.
struct ReconParams {
  Vec8 theta = Vec8::Zero();

  ReconParams() = default;
  explicit ReconParams(const Vec8& v) : theta(v) {}
  ReconParams(double f1, double f2, const Vec3& t, const Vec3& r) {
    theta << f1, f2, t.x(), t.y(), t.z(), r.x(), r.y(), r.z();
  }

  double f1() const { return theta(0); }
  double f2() const { return theta(1); }
  Vec3 t() const { return theta.segment<3>(2); }
  Vec3 r() const { return theta.segment<3>(5); }
};

/// Epipolar-parametrization input: first two columns of F stacked
/// (f1 = v[0..2], f2 = v[3..5]) and the combination coefficients
/// alpha = v[6], beta = v[7] with third column alpha*f1 + beta*f2.
struct EpiParams {
  Vec8 v = Vec8::Zero();

  EpiParams() = default;
  explicit EpiParams(const Vec8& vv) : v(vv) {}
  EpiParams(const Vec3& col1, const Vec3& col2, double alpha, double beta) {
    v << col1, col2, alpha, beta;
  }

  Vec3 col1() const { return v.segment<3>(0); }
  Vec3 col2() const { return v.segment<3>(3); }
  double alpha() const { return v(6); }
  double beta() const { return v(7); }
};

enum class NormKind { ETR, FBN, ABS };

inline const char* norm_kind_name(NormKind k) {
  switch (k) {
    case NormKind::ETR: return "ETR";
    case NormKind::FBN: return "FBN";
    case NormKind::ABS: return "ABS";
  }
  return "?";
}

namespace detail {

inline void check_recon(const ReconParams& p) {
  if (!(p.f1() > 0.0) || !(p.f2() > 0.0))
    raise(Errc::NonPositiveFocal, "ReconParams requires f1, f2 > 0");
  if (p.t().norm() < 1e-12)
    raise(Errc::DegenerateTranslation, "ReconParams requires ||t|| > 0");
}

inline void check_epi(const EpiParams& p) {
  Eigen::Matrix<double, 3, 2> cols;
  cols.col(0) = p.col1();
  cols.col(1) = p.col2();
  Eigen::JacobiSVD<Eigen::Matrix<double, 3, 2>> svd(cols);
  const auto& s = svd.singularValues();
  if (!(s(1) > 1e-8 * s(0)))
    raise(Errc::DependentColumns,
          "first two columns of F are linearly dependent");
}

inline Mat3 d_rotation_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << 0, 0, 0, 0, -s, -c, 0, c, -s;
  return m;
}

inline Mat3 d_rotation_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << -s, 0, c, 0, 0, 0, -c, 0, -s;
  return m;
}

inline Mat3 d_rotation_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << -s, -c, 0, c, -s, 0, 0, 0, 0;
  return m;
}

// d[t]x / dt_k
inline Mat3 d_skew(int k) {
  Vec3 e = Vec3::Zero();
  e(k) = 1.0;
  return skew(e);
}

// dK^{-1}/df for K = [[f,0,cx],[0,f,cy],[0,0,1]]
inline Mat3 d_intrinsics_inverse(double f, double cx, double cy) {
  const double g = 1.0 / (f * f);
  Mat3 m;
  m << -g, 0, cx * g, 0, -g, cy * g, 0, 0, 0;
  return m;
}

}  // namespace detail

/// Forward pass of the reconstruction layer. `c1`, `c2` are the two
/// cameras' principal points (typically both the image center).
inline FMat reconstruct_forward(const ReconParams& p,
                                const Eigen::Vector2d& c1,
                                const Eigen::Vector2d& c2) {
  detail::check_recon(p);
  CameraIntrinsics k1{p.f1(), c1.x(), c1.y()};
  CameraIntrinsics k2{p.f2(), c2.x(), c2.y()};
  return compose_fundamental(k1, k2, RelativePose{p.t(), p.r()});
}

/// Analytic d vec(F) / d theta, by the product rule over the four factors
/// of F = K2^{-T} [t]x R K1^{-1}.
inline Jacobian9x8 reconstruct_jacobian(const ReconParams& p,
                                        const Eigen::Vector2d& c1,
                                        const Eigen::Vector2d& c2) {
  detail::check_recon(p);
  const CameraIntrinsics k1{p.f1(), c1.x(), c1.y()};
  const CameraIntrinsics k2{p.f2(), c2.x(), c2.y()};
  const Mat3 C = intrinsics_inverse(k1);           // K1^{-1}
  const Mat3 B = intrinsics_inverse(k2).transpose();  // K2^{-T}
  const Mat3 S = skew(p.t());
  const Vec3 r = p.r();
  const Mat3 Rx = rotation_x(r.x()), Ry = rotation_y(r.y()),
             Rz = rotation_z(r.z());
  const Mat3 R = Rx * Ry * Rz;

  Jacobian9x8 jac;
  auto put = [&jac](int col, const Mat3& dF) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) jac(3 * i + j, col) = dF(i, j);
  };

  put(0, B * S * R * detail::d_intrinsics_inverse(p.f1(), c1.x(), c1.y()));
  put(1, detail::d_intrinsics_inverse(p.f2(), c2.x(), c2.y()).transpose() * S *
             R * C);
  for (int k = 0; k < 3; ++k) put(2 + k, B * detail::d_skew(k) * R * C);
  put(5, B * S * detail::d_rotation_x(r.x()) * Ry * Rz * C);
  put(6, B * S * Rx * detail::d_rotation_y(r.y()) * Rz * C);
  put(7, B * S * Rx * Ry * detail::d_rotation_z(r.z()) * C);
  return jac;
}

/// Reverse pass: dL/dtheta = J^T vec(dL/dF).
inline Vec8 reconstruct_backward(const ReconParams& p,
                                 const Eigen::Vector2d& c1,
                                 const Eigen::Vector2d& c2,
                                 const Mat3& upstream) {
  return reconstruct_jacobian(p, c1, c2).transpose() * vec9(upstream);
}

/// F = [f1 | f2 | alpha*f1 + beta*f2]; rank <= 2 structurally, and
/// F (alpha, beta, -1)^T = 0 identically.
inline FMat epi_forward(const EpiParams& p) {
  detail::check_epi(p);
  Mat3 f;
  f.col(0) = p.col1();
  f.col(1) = p.col2();
  f.col(2) = p.alpha() * p.col1() + p.beta() * p.col2();
  return FMat(f);
}

inline Vec8 epi_backward(const EpiParams& p, const Mat3& upstream) {
  detail::check_epi(p);
  Vec8 g;
  g.segment<3>(0) = upstream.col(0) + p.alpha() * upstream.col(2);
  g.segment<3>(3) = upstream.col(1) + p.beta() * upstream.col(2);
  g(6) = upstream.col(2).dot(p.col1());
  g(7) = upstream.col(2).dot(p.col2());
  return g;
}

inline Jacobian9x8 epi_jacobian(const EpiParams& p) {
  detail::check_epi(p);
  Jacobian9x8 jac = Jacobian9x8::Zero();
  // F(i,0) = v[i]; F(i,1) = v[3+i]; F(i,2) = alpha*v[i] + beta*v[3+i]
  for (int i = 0; i < 3; ++i) {
    jac(3 * i + 0, i) = 1.0;
    jac(3 * i + 1, 3 + i) = 1.0;
    jac(3 * i + 2, i) = p.alpha();
    jac(3 * i + 2, 3 + i) = p.beta();
    jac(3 * i + 2, 6) = p.v(i);
    jac(3 * i + 2, 7) = p.v(3 + i);
  }
  return jac;
}

constexpr double kEtrGuard = 1e-9;

namespace detail {

// First maximizer of |entry| in row-major order; the ABS backward pass
// attributes the scale derivative to it (a valid subgradient at ties).
inline std::pair<int, int> abs_argmax(const Mat3& f) {
  int bi = 0, bj = 0;
  double best = -1.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (std::abs(f(i, j)) > best) {
        best = std::abs(f(i, j));
        bi = i;
        bj = j;
      }
  return {bi, bj};
}

}  // namespace detail

inline FMat normalize(const FMat& f, NormKind kind) {
  switch (kind) {
    case NormKind::ETR: {
      const double d = f.m(2, 2);
      if (std::abs(d) <= kEtrGuard)
        raise(Errc::NearZeroDivisor,
              "ETR-Norm: |f33| below guard threshold 1e-9");
      return FMat(Mat3(f.m / d));
    }
    case NormKind::FBN: {
      const double n = f.m.norm();
      if (n == 0.0) raise(Errc::ZeroMatrix, "FBN-Norm of zero matrix");
      return FMat(Mat3(f.m / n));
    }
    case NormKind::ABS: {
      auto [i, j] = detail::abs_argmax(f.m);
      const double a = std::abs(f.m(i, j));
      if (a == 0.0) raise(Errc::ZeroMatrix, "ABS-Norm of zero matrix");
      return FMat(Mat3(f.m / a));
    }
  }
  raise(Errc::ParseError, "unreachable");
}

/// Quotient-rule gradient of each normalization w.r.t. the input matrix.
inline Mat3 normalize_backward(const FMat& f, NormKind kind,
                               const Mat3& upstream) {
  switch (kind) {
    case NormKind::ETR: {
      const double d = f.m(2, 2);
      if (std::abs(d) <= kEtrGuard)
        raise(Errc::NearZeroDivisor,
              "ETR-Norm: |f33| below guard threshold 1e-9");
      // Output (3,3) is constant 1: its upstream entry contributes nothing.
      Mat3 u = upstream;
      u(2, 2) = 0.0;
      Mat3 g = u / d;
      g(2, 2) = -u.cwiseProduct(f.m).sum() / (d * d);
      return g;
    }
    case NormKind::FBN: {
      const double n = f.m.norm();
      if (n == 0.0) raise(Errc::ZeroMatrix, "FBN-Norm of zero matrix");
      const Mat3 out = f.m / n;
      return (upstream - out.cwiseProduct(upstream).sum() * out) / n;
    }
    case NormKind::ABS: {
      auto [i, j] = detail::abs_argmax(f.m);
      const double a = std::abs(f.m(i, j));
      if (a == 0.0) raise(Errc::ZeroMatrix, "ABS-Norm of zero matrix");
      const double sgn = f.m(i, j) > 0.0 ? 1.0 : -1.0;
      Mat3 g = upstream / a;
      g(i, j) -= sgn * upstream.cwiseProduct(f.m).sum() / (a * a);
      return g;
    }
  }
  raise(Errc::ParseError, "unreachable");
}

/// Directional (forward-mode) derivative of normalize at F along V.
inline Mat3 normalize_forward_diff(const FMat& f, NormKind kind,
                                   const Mat3& v) {
  switch (kind) {
    case NormKind::ETR: {
      const double d = f.m(2, 2);
      if (std::abs(d) <= kEtrGuard)
        raise(Errc::NearZeroDivisor,
              "ETR-Norm: |f33| below guard threshold 1e-9");
      Mat3 g = v / d - (v(2, 2) / (d * d)) * f.m;
      g(2, 2) = 0.0;  // output entry pinned to 1
      return g;
    }
    case NormKind::FBN: {
      const double n = f.m.norm();
      if (n == 0.0) raise(Errc::ZeroMatrix, "FBN-Norm of zero matrix");
      const Mat3 out = f.m / n;
      return (v - out.cwiseProduct(v).sum() * out) / n;
    }
    case NormKind::ABS: {
      auto [i, j] = detail::abs_argmax(f.m);
      const double a = std::abs(f.m(i, j));
      if (a == 0.0) raise(Errc::ZeroMatrix, "ABS-Norm of zero matrix");
      const double sgn = f.m(i, j) > 0.0 ? 1.0 : -1.0;
      return v / a - (sgn * v(i, j) / (a * a)) * f.m;
    }
  }
  raise(Errc::ParseError, "unreachable");
}

struct LossWeights {
  double w1 = 1.0;  // L1
  double w2 = 1.0;  // L2
};

/// w1 * sum|dF| + w2 * sum(dF^2) between two already-normalized matrices,
/// plus the gradient w.r.t. the prediction. sign(0) is taken as 0.
inline std::pair<double, Mat3> loss_l1l2(const FMat& pred, const FMat& gt,
                                         const LossWeights& w = {}) {
  const Mat3 d = pred.m - gt.m;
  double value = 0.0;
  Mat3 grad;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double e = d(i, j);
      value += w.w1 * std::abs(e) + w.w2 * e * e;
      const double s = (e > 0.0) ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
      grad(i, j) = w.w1 * s + 2.0 * w.w2 * e;
    }
  return {value, grad};
}

/// Tagged variant: rejects mixing normalization conventions.
inline std::pair<double, Mat3> loss_l1l2(const FMat& pred, NormKind pred_kind,
                                         const FMat& gt, NormKind gt_kind,
                                         const LossWeights& w = {}) {
  if (pred_kind != gt_kind)
    raise(Errc::MixedNormalization,
          std::string("prediction normalized with ") +
              norm_kind_name(pred_kind) + ", ground truth with " +
              norm_kind_name(gt_kind));
  return loss_l1l2(pred, gt, w);
}

}  // namespace twoview
