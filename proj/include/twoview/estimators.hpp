#pragma once

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "twoview/geometry.hpp"
#include "twoview/metrics.hpp"
#include "twoview/rng.hpp"

namespace twoview {

/// n x 9 matrix with rows (x'x, x'y, x', y'x, y'y, y', x, y, 1), one per
/// correspondence; A vec(F) stacks the epipolar residuals.
inline Eigen::MatrixXd design_matrix(const CorrSet& corrs) {
  if (corrs.empty())
    raise(Errc::InsufficientCorrespondences, "need at least one pair");
  Eigen::MatrixXd a(corrs.size(), 9);
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const Vec3 p = corrs.pairs[i].p.vec();
    const Vec3 q = corrs.pairs[i].q.vec();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) a(i, 3 * r + c) = q(r) * p(c);
  }
  return a;
}

namespace detail {

// Right singular vector of the smallest (zero-padded) singular value.
// `gap` receives the separation between the two smallest singular values
// relative to the largest, which certifies nullspace uniqueness.
inline Vec9 smallest_right_vector(const Eigen::MatrixXd& a, double* gap) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(9);
  s.head(svd.singularValues().size()) = svd.singularValues();
  if (gap) *gap = s(0) > 0.0 ? (s(7) - s(8)) / s(0) : 0.0;
  return svd.matrixV().col(8);
}

constexpr double kNullspaceGap = 1e-9;

inline FMat rank2_projected(const Mat3& f) {
  Eigen::JacobiSVD<Mat3> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 s = svd.singularValues();
  s(2) = 0.0;
  return FMat(Mat3(svd.matrixU() * s.asDiagonal() *
                   svd.matrixV().transpose()));
}

// Distance used by the robust loops: sqrt of the symmetric epipolar
// distance, in pixels. +inf when the point sits on both epipoles.
inline double robust_residual_px(const FMat& f, const Correspondence& c) {
  const Vec3 l1 = f.m * c.p.vec();
  const Vec3 l2 = f.m.transpose() * c.q.vec();
  const double a = l1.x() * l1.x() + l1.y() * l1.y();
  const double b = l2.x() * l2.x() + l2.y() * l2.y();
  if (a == 0.0 && b == 0.0) return std::numeric_limits<double>::infinity();
  const double r = c.q.vec().dot(l1);
  double s = 0.0;
  if (a > 0.0) s += r * r / a;
  if (b > 0.0) s += r * r / b;
  return std::sqrt(s);
}

inline CorrSet subset(const CorrSet& corrs, const std::vector<std::size_t>& idx) {
  CorrSet out;
  out.pairs.reserve(idx.size());
  for (auto i : idx) out.pairs.push_back(corrs.pairs[i]);
  return out;
}

}  // namespace detail

/// Least-squares nullspace solution of the design system followed by the
/// SVD rank-2 projection; output canonicalized (unit Frobenius, fixed sign).
inline FMat eight_point(const CorrSet& corrs) {
  if (corrs.size() < 8)
    raise(Errc::InsufficientCorrespondences,
          "eight-point needs >= 8 pairs, got " + std::to_string(corrs.size()));
  const Eigen::MatrixXd a = design_matrix(corrs);
  double gap = 0.0;
  const Vec9 f = detail::smallest_right_vector(a, &gap);
  if (gap <= detail::kNullspaceGap)
    raise(Errc::DegenerateConfiguration,
          "design-matrix nullspace is not unique");
  return canonicalized(detail::rank2_projected(unvec9(f)));
}

/// Similarity transform moving the centroid to the origin and the mean
/// distance from it to sqrt(2), plus the transformed points.
inline std::pair<Mat3, std::vector<HomoPoint>> hartley_normalize(
    const std::vector<HomoPoint>& points) {
  if (points.size() < 2)
    raise(Errc::DegeneratePoints, "need at least two points");
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += p.x;
    my += p.y;
  }
  mx /= double(points.size());
  my /= double(points.size());
  double mean_dist = 0.0;
  for (const auto& p : points)
    mean_dist += std::hypot(p.x - mx, p.y - my);
  mean_dist /= double(points.size());
  if (mean_dist < 1e-12)
    raise(Errc::DegeneratePoints, "all points coincide");
  const double s = std::sqrt(2.0) / mean_dist;
  Mat3 t;
  t << s, 0, -s * mx, 0, s, -s * my, 0, 0, 1;
  std::vector<HomoPoint> out;
  out.reserve(points.size());
  for (const auto& p : points)
    out.emplace_back(s * (p.x - mx), s * (p.y - my));
  return {t, out};
}

/// Hartley-conditioned eight-point: estimate on normalized coordinates,
/// de-normalize with F = T2^T F_hat T1, re-canonicalize.
inline FMat normalized_eight_point(const CorrSet& corrs) {
  if (corrs.size() < 8)
    raise(Errc::InsufficientCorrespondences,
          "eight-point needs >= 8 pairs, got " + std::to_string(corrs.size()));
  std::vector<HomoPoint> ps, qs;
  ps.reserve(corrs.size());
  qs.reserve(corrs.size());
  for (const auto& c : corrs.pairs) {
    ps.push_back(c.p);
    qs.push_back(c.q);
  }
  auto [t1, pn] = hartley_normalize(ps);
  auto [t2, qn] = hartley_normalize(qs);
  CorrSet normed;
  normed.pairs.reserve(corrs.size());
  for (std::size_t i = 0; i < corrs.size(); ++i)
    normed.pairs.push_back({pn[i], qn[i]});
  const FMat fh = eight_point(normed);
  return canonicalized(FMat(Mat3(t2.transpose() * fh.m * t1)));
}

namespace detail {

// Real roots of c3 x^3 + c2 x^2 + c1 x + c0 via companion-matrix
// eigenvalues, degrading gracefully to lower degrees. Roots with
// |imag| <= 1e-9 (1 + |real|) are accepted as real.
inline std::vector<double> real_roots_up_to_cubic(double c3, double c2,
                                                  double c1, double c0) {
  const double scale =
      std::max({std::abs(c3), std::abs(c2), std::abs(c1), std::abs(c0)});
  if (scale == 0.0) return {};  // identically zero polynomial
  std::vector<double> coeffs;   // highest degree first, leading non-negligible
  if (std::abs(c3) > 1e-13 * scale)
    coeffs = {c3, c2, c1, c0};
  else if (std::abs(c2) > 1e-13 * scale)
    coeffs = {c2, c1, c0};
  else if (std::abs(c1) > 1e-13 * scale)
    coeffs = {c1, c0};
  else
    return {};

  const int deg = int(coeffs.size()) - 1;
  if (deg == 1) return {-coeffs[1] / coeffs[0]};

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(deg, deg);
  for (int i = 1; i < deg; ++i) companion(i, i - 1) = 1.0;
  for (int i = 0; i < deg; ++i)
    companion(i, deg - 1) = -coeffs[deg - i] / coeffs[0];

  Eigen::EigenSolver<Eigen::MatrixXd> eig(companion);
  std::vector<double> roots;
  for (int i = 0; i < deg; ++i) {
    const auto z = eig.eigenvalues()(i);
    if (std::abs(z.imag()) <= 1e-9 * (1.0 + std::abs(z.real())))
      roots.push_back(z.real());
  }
  std::sort(roots.begin(), roots.end());
  // collapse numerically repeated roots
  std::vector<double> out;
  for (double r : roots)
    if (out.empty() || std::abs(r - out.back()) > 1e-9 * (1.0 + std::abs(r)))
      out.push_back(r);
  return out;
}

}  // namespace detail

/// Minimal solver: with nullspace basis (F1, F2) of the 7x9 system, returns
/// one matrix per real root of det(l F1 + (1-l) F2) = 0; each is rank 2 by
/// construction and canonicalized.
inline std::vector<FMat> seven_point(const CorrSet& corrs) {
  if (corrs.size() != 7)
    raise(Errc::WrongSampleSize,
          "seven-point needs exactly 7 pairs, got " +
              std::to_string(corrs.size()));
  const Eigen::MatrixXd a = design_matrix(corrs);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd s = svd.singularValues();
  if (!(s(6) > detail::kNullspaceGap * s(0)))
    raise(Errc::DegenerateConfiguration,
          "seven-point nullspace dimension exceeds two");
  const Mat3 f1 = unvec9(svd.matrixV().col(7));
  const Mat3 f2 = unvec9(svd.matrixV().col(8));

  // det(l F1 + (1-l) F2) is cubic in l; coefficients by interpolation at
  // l = 0, 1, -1, 2.
  auto det_at = [&](double l) { return Mat3(l * f1 + (1.0 - l) * f2).determinant(); };
  const double d0 = det_at(0.0), d1 = det_at(1.0), dm1 = det_at(-1.0),
               d2 = det_at(2.0);
  const double c0 = d0;
  const double c2 = 0.5 * (d1 + dm1) - d0;
  const double k1 = d1 - d0 - c2;
  const double k2 = d2 - d0 - 4.0 * c2;
  const double c3 = (k2 - 2.0 * k1) / 6.0;
  const double c1 = k1 - c3;

  std::vector<double> roots = detail::real_roots_up_to_cubic(c3, c2, c1, c0);
  std::vector<FMat> out;
  if (roots.empty()) {
    // Degenerate pencil: the determinant vanishes identically, so the basis
    // matrices themselves are solutions.
    out.push_back(canonicalized(FMat(f2)));
    return out;
  }
  for (double l : roots) {
    Mat3 f = l * f1 + (1.0 - l) * f2;
    if (f.norm() < 1e-12) continue;
    out.push_back(canonicalized(FMat(f)));
  }
  if (out.empty())
    raise(Errc::DegenerateConfiguration, "all pencil roots vanish");
  return out;
}

/// Shared configuration for the robust estimators. `inlier_threshold` is in
/// pixels and compared against sqrt(symmetric epipolar distance).
struct RobustConfig {
  std::size_t max_iterations = 2000;
  double inlier_threshold = 2.0;
  std::uint64_t seed = 0;
  std::size_t min_inlier_count = 7;
  double confidence = 0.99;  // adaptive iteration bound; >= 1 disables it
  int refit_rounds = 2;
};

struct RobustResult {
  FMat f;
  std::vector<std::uint8_t> inlier_mask;
  std::size_t iterations = 0;
};

namespace detail {

constexpr std::uint64_t kHypothesisSalt = 0x52414e53ULL;  // hypothesis stream

inline std::size_t mask_count(const std::vector<std::uint8_t>& m) {
  std::size_t n = 0;
  for (auto v : m) n += v != 0;
  return n;
}

// Refit on the consensus set and re-derive the mask under the refit model.
// Recomputing the mask is what lets the final model claim the inliers a
// noisy minimal hypothesis misses.
inline void refit_and_remask(const CorrSet& corrs, double thr_px,
                             int rounds, FMat& f,
                             std::vector<std::uint8_t>& mask) {
  for (int r = 0; r < rounds; ++r) {
    if (mask_count(mask) < 8) return;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) idx.push_back(i);
    FMat refit;
    try {
      refit = normalized_eight_point(subset(corrs, idx));
    } catch (const Error&) {
      return;  // keep the previous model if the refit is degenerate
    }
    f = refit;
    for (std::size_t i = 0; i < corrs.size(); ++i)
      mask[i] = robust_residual_px(f, corrs.pairs[i]) < thr_px;
  }
}

}  // namespace detail

/// RANSAC over seven-point minimal samples, scored by inlier count under
/// the pixel threshold with summed-distance tie-breaking; deterministic
/// given cfg.seed (one RNG substream per hypothesis index).
inline RobustResult ransac(const CorrSet& corrs, const RobustConfig& cfg) {
  const std::size_t n = corrs.size();
  if (n < 7)
    raise(Errc::InsufficientCorrespondences,
          "ransac needs >= 7 pairs, got " + std::to_string(n));
  if (cfg.max_iterations < 1 || !(cfg.inlier_threshold > 0.0))
    raise(Errc::ParseError, "invalid RobustConfig");

  struct Best {
    std::size_t count = 0;
    double dist_sum = std::numeric_limits<double>::infinity();
    FMat f;
    std::vector<std::uint8_t> mask;
    bool valid = false;
  } best;

  std::size_t needed = cfg.max_iterations;
  std::size_t i = 0;
  for (; i < std::min(cfg.max_iterations, needed); ++i) {
    auto eng = make_engine(cfg.seed, i, detail::kHypothesisSalt);
    const auto sample = sample_distinct(eng, n, 7);
    std::vector<FMat> hyps;
    try {
      hyps = seven_point(detail::subset(corrs, sample));
    } catch (const Error&) {
      continue;  // degenerate sample
    }
    for (const FMat& f : hyps) {
      std::vector<std::uint8_t> mask(n, 0);
      std::size_t count = 0;
      double dist_sum = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double d = detail::robust_residual_px(f, corrs.pairs[k]);
        if (d < cfg.inlier_threshold) {
          mask[k] = 1;
          ++count;
          dist_sum += d;
        }
      }
      if (count > best.count ||
          (count == best.count && dist_sum < best.dist_sum)) {
        best = {count, dist_sum, f, std::move(mask), true};
        if (cfg.confidence < 1.0 && count > 0) {
          const double w = double(count) / double(n);
          const double denom = std::log1p(-std::min(
              std::pow(w, 7.0), 1.0 - std::numeric_limits<double>::epsilon()));
          if (denom < 0.0) {
            const double k_needed =
                std::ceil(std::log(1.0 - cfg.confidence) / denom);
            needed = std::size_t(
                std::clamp(k_needed, 1.0, double(cfg.max_iterations)));
          }
        }
      }
    }
  }

  if (!best.valid || best.count < cfg.min_inlier_count)
    raise(Errc::NoConsensus,
          "best consensus " + std::to_string(best.count) + " below minimum " +
              std::to_string(cfg.min_inlier_count));

  RobustResult res{best.f, std::move(best.mask), i};
  detail::refit_and_remask(corrs, cfg.inlier_threshold, cfg.refit_rounds,
                           res.f, res.inlier_mask);
  return res;
}

/// Least-median-of-squares: picks the seven-point hypothesis minimizing the
/// median symmetric epipolar distance, then derives the inlier cut from the
/// rescaled robust standard deviation.
inline RobustResult lemeds(const CorrSet& corrs, const RobustConfig& cfg) {
  const std::size_t n = corrs.size();
  // The finite-sample factor 1 + 5/(n-7) is undefined at n = 7.
  if (n < 8)
    raise(Errc::InsufficientCorrespondences,
          "lemeds needs >= 8 pairs, got " + std::to_string(n));
  if (cfg.max_iterations < 1)
    raise(Errc::ParseError, "invalid RobustConfig");

  struct Best {
    double median = std::numeric_limits<double>::infinity();
    FMat f;
    bool valid = false;
  } best;

  std::vector<double> sed(n);
  for (std::size_t i = 0; i < cfg.max_iterations; ++i) {
    auto eng = make_engine(cfg.seed, i, detail::kHypothesisSalt);
    const auto sample = sample_distinct(eng, n, 7);
    std::vector<FMat> hyps;
    try {
      hyps = seven_point(detail::subset(corrs, sample));
    } catch (const Error&) {
      continue;
    }
    for (const FMat& f : hyps) {
      for (std::size_t k = 0; k < n; ++k) {
        const double d = detail::robust_residual_px(f, corrs.pairs[k]);
        sed[k] = d * d;  // squared distances, px^2
      }
      std::vector<double> tmp = sed;
      const std::size_t mid = n / 2;
      std::nth_element(tmp.begin(), tmp.begin() + mid, tmp.end());
      double med = tmp[mid];
      if (n % 2 == 0) {
        const double hi = med;
        std::nth_element(tmp.begin(), tmp.begin() + (mid - 1), tmp.end());
        med = 0.5 * (tmp[mid - 1] + hi);
      }
      if (med < best.median) best = {med, f, true};
    }
  }
  if (!best.valid) raise(Errc::DegenerateConfiguration, "no valid hypothesis");

  const double sigma =
      1.4826 * (1.0 + 5.0 / double(n - 7)) * std::sqrt(best.median);
  RobustResult res;
  res.f = best.f;
  res.iterations = cfg.max_iterations;
  res.inlier_mask.assign(n, 0);
  for (std::size_t k = 0; k < n; ++k)
    res.inlier_mask[k] =
        detail::robust_residual_px(best.f, corrs.pairs[k]) <= 2.5 * sigma;
  detail::refit_and_remask(corrs, std::max(2.5 * sigma, 1e-12),
                           cfg.refit_rounds, res.f, res.inlier_mask);
  return res;
}

struct AlgMinResult {
  FMat f;
  std::vector<double> objective_trace;  // ||A vec(F)|| with ||vec(F)|| = 1
  std::vector<FMat> iterates;           // accepted F per iteration
};

/// Iterative algebraic minimization: alternate between extracting the right
/// epipole of the current estimate and solving min ||A E m|| s.t.
/// ||E m|| = 1 over the rank-6 range of E built from [e]x.
inline AlgMinResult algebraic_minimization(const CorrSet& corrs,
                                           const FMat& f_init,
                                           std::size_t max_iterations = 100,
                                           double rel_tol = 1e-10) {
  if (corrs.size() < 8)
    raise(Errc::InsufficientCorrespondences,
          "algebraic minimization needs >= 8 pairs");
  Vec3 e;
  try {
    e = right_epipole(f_init);
  } catch (const Error& err) {
    raise(Errc::RankDeficientInit,
          std::string("initial estimate is not rank 2 (") + err.what() + ")");
  }

  const Eigen::MatrixXd a = design_matrix(corrs);
  Mat3 f = f_init.m / f_init.m.norm();
  AlgMinResult res;
  res.objective_trace.push_back((a * vec9(f)).norm());

  for (std::size_t it = 0; it < max_iterations; ++it) {
    // vec(M [e]x) = (I3 kron [e]x^T) vec(M), row-major convention
    const Mat3 st = skew(e).transpose();
    Eigen::Matrix<double, 9, 9> big = Eigen::Matrix<double, 9, 9>::Zero();
    for (int b = 0; b < 3; ++b) big.block<3, 3>(3 * b, 3 * b) = st;

    Eigen::JacobiSVD<Eigen::Matrix<double, 9, 9>> esvd(
        big, Eigen::ComputeFullU);
    const auto& sv = esvd.singularValues();
    int rank = 0;
    while (rank < 9 && sv(rank) > 1e-12 * sv(0)) ++rank;
    const Eigen::MatrixXd u = esvd.matrixU().leftCols(rank);

    Eigen::JacobiSVD<Eigen::MatrixXd> bsvd(a * u, Eigen::ComputeFullV);
    const Eigen::VectorXd y = bsvd.matrixV().col(rank - 1);
    const Vec9 fvec = u * y;
    const double obj = (a * fvec).norm();
    if (obj > res.objective_trace.back() * (1.0 + 1e-12)) break;
    f = unvec9(fvec);
    res.iterates.push_back(FMat(f));
    const double prev = res.objective_trace.back();
    res.objective_trace.push_back(obj);
    if (prev - obj < rel_tol * std::max(prev, 1e-300)) break;

    Eigen::JacobiSVD<Mat3> fs(f, Eigen::ComputeFullV);
    e = fs.matrixV().col(2);
  }
  res.f = canonicalized(FMat(f));
  return res;
}

}  // namespace twoview
