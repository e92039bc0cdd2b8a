#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <cstddef>
#include <vector>

#include "twoview/errors.hpp"

namespace twoview {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec9 = Eigen::Matrix<double, 9, 1>;

/// Homogeneous 3x3 fundamental matrix. Values produced by the
/// parametrizations and estimators satisfy rank <= 2; raw matrices loaded
/// from files are not validated.
struct FMat {
  Mat3 m = Mat3::Zero();

  FMat() = default;
  explicit FMat(const Mat3& mm) : m(mm) {}

  double operator()(int i, int j) const { return m(i, j); }
};

/// Pinhole intrinsics with a single diagonal scale. `gamma` is the K
/// diagonal entry as-is; whether a caller treats it as focal length or its
/// inverse does not change expressiveness.
struct CameraIntrinsics {
  double gamma = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

/// Relative pose of camera 2 w.r.t. camera 1: X2 = R(r) * X1 + t.
/// Translation is meaningful up to scale; angles in radians.
struct RelativePose {
  Vec3 t = Vec3::Zero();
  Vec3 r = Vec3::Zero();  // (rx, ry, rz)
};

/// Pixel point with homogeneous coordinate pinned to 1 on construction.
struct HomoPoint {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;

  HomoPoint() = default;
  HomoPoint(double px, double py) : x(px), y(py), w(1.0) {}
  HomoPoint(double px, double py, double pw) : x(px), y(py), w(pw) {}

  Vec3 vec() const { return Vec3(x, y, w); }
};

struct Correspondence {
  HomoPoint p;  // image 1
  HomoPoint q;  // image 2
};

/// Paired correspondences; `labels` (1 = inlier) is either empty or the
/// same length as `pairs`.
struct CorrSet {
  std::vector<Correspondence> pairs;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  bool labeled() const { return !labels.empty(); }
};

/// Row-major vectorization (f11..f33); fixed convention across the library.
inline Vec9 vec9(const Mat3& m) {
  Vec9 v;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) v(3 * i + j) = m(i, j);
  return v;
}

inline Mat3 unvec9(const Vec9& v) {
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = v(3 * i + j);
  return m;
}

/// Cross-product matrix: skew(t) * x == t x x, with skew(t) * t == 0.
inline Mat3 skew(const Vec3& t) {
  Mat3 s;
  s << 0.0, -t.z(), t.y(),
       t.z(), 0.0, -t.x(),
      -t.y(), t.x(), 0.0;
  return s;
}

/// Right-handed elementary rotations; the composed order is Rx * Ry * Rz.
inline Mat3 rotation_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return m;
}

inline Mat3 rotation_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}

inline Mat3 rotation_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return m;
}

inline Mat3 rotation_from_euler(double rx, double ry, double rz) {
  return rotation_x(rx) * rotation_y(ry) * rotation_z(rz);
}

inline Mat3 rotation_from_euler(const Vec3& r) {
  return rotation_from_euler(r.x(), r.y(), r.z());
}

inline Mat3 intrinsics_matrix(const CameraIntrinsics& k) {
  if (!(k.gamma > 0.0))
    raise(Errc::NonPositiveFocal, "K diagonal must be positive");
  Mat3 m;
  m << k.gamma, 0, k.cx, 0, k.gamma, k.cy, 0, 0, 1;
  return m;
}

/// Closed-form inverse of the upper-triangular K (exact up to division).
inline Mat3 intrinsics_inverse(const CameraIntrinsics& k) {
  if (!(k.gamma > 0.0))
    raise(Errc::NonPositiveFocal, "K diagonal must be positive");
  const double g = 1.0 / k.gamma;
  Mat3 m;
  m << g, 0, -k.cx * g, 0, g, -k.cy * g, 0, 0, 1;
  return m;
}

/// F = K2^{-T} [t]x R K1^{-1}. Rank <= 2 by construction.
inline FMat compose_fundamental(const CameraIntrinsics& k1,
                                const CameraIntrinsics& k2,
                                const RelativePose& pose) {
  if (pose.t.norm() < 1e-12)
    raise(Errc::DegenerateTranslation, "translation norm below 1e-12");
  const Mat3 f = intrinsics_inverse(k2).transpose() * skew(pose.t) *
                 rotation_from_euler(pose.r) * intrinsics_inverse(k1);
  return FMat(f);
}

/// The scalar q^T F p.
inline double epipolar_residual(const FMat& f, const HomoPoint& p,
                                const HomoPoint& q) {
  return q.vec().dot(f.m * p.vec());
}

/// Unit generator of the right null space (F e = 0) of a rank-2 matrix.
inline Vec3 right_epipole(const FMat& f) {
  Eigen::JacobiSVD<Mat3> svd(f.m, Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  if (s(2) > 1e-6 * s(0))
    raise(Errc::FullRank, "matrix has no null space (rank 3)");
  if (s(1) <= 1e-9 * s(0))
    raise(Errc::RankDeficient, "null space is not one-dimensional");
  return svd.matrixV().col(2);
}

/// Shared up-to-scale comparison convention: unit Frobenius norm, then the
/// first entry (row-major) of largest magnitude is made positive.
inline FMat canonicalized(const FMat& f) {
  const double n = f.m.norm();
  if (n == 0.0) raise(Errc::ZeroMatrix, "cannot canonicalize zero matrix");
  Mat3 g = f.m / n;
  int bi = 0, bj = 0;
  double best = -1.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (std::abs(g(i, j)) > best) {
        best = std::abs(g(i, j));
        bi = i;
        bj = j;
      }
  if (g(bi, bj) < 0.0) g = -g;
  return FMat(g);
}

/// sigma_3 / sigma_1; 0 for an exactly rank-deficient matrix.
inline double rank2_defect(const FMat& f) {
  Eigen::JacobiSVD<Mat3> svd(f.m);
  const Vec3 s = svd.singularValues();
  if (s(0) == 0.0) return 0.0;
  return s(2) / s(0);
}

}  // namespace twoview
