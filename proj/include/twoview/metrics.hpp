#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "twoview/geometry.hpp"
#include "twoview/io.hpp"

namespace twoview {

/// Sum of |q^T F p| over the set.
inline double epi_abs(const FMat& f, const CorrSet& corrs) {
  double s = 0.0;
  for (const auto& c : corrs.pairs)
    s += std::abs(epipolar_residual(f, c.p, c.q));
  return s;
}

/// Sum of (q^T F p)^2 over the set.
inline double epi_sqr(const FMat& f, const CorrSet& corrs) {
  double s = 0.0;
  for (const auto& c : corrs.pairs) {
    const double r = epipolar_residual(f, c.p, c.q);
    s += r * r;
  }
  return s;
}

/// Squared point-to-epipolar-line distance summed over both images (px^2);
/// invariant to rescaling of F.
inline double symmetric_epipolar_distance(const FMat& f, const HomoPoint& p,
                                          const HomoPoint& q) {
  const Vec3 l1 = f.m * p.vec();             // line in image 2
  const Vec3 l2 = f.m.transpose() * q.vec();  // line in image 1
  const double a = l1.x() * l1.x() + l1.y() * l1.y();
  const double b = l2.x() * l2.x() + l2.y() * l2.y();
  if (a == 0.0 && b == 0.0)
    raise(Errc::DegenerateLine, "both epipolar line normals vanish");
  const double r = q.vec().dot(l1);
  double s = 0.0;
  if (a > 0.0) s += r * r / a;
  if (b > 0.0) s += r * r / b;
  return s;
}

/// High-confidence subset: pairs whose symmetric epipolar distance under
/// `f_gt` is below `threshold` (px^2), order preserved. Labels follow.
inline CorrSet select_high_confidence(const CorrSet& corrs, const FMat& f_gt,
                                      double threshold = 2.0) {
  CorrSet out;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const auto& c = corrs.pairs[i];
    if (symmetric_epipolar_distance(f_gt, c.p, c.q) < threshold) {
      out.pairs.push_back(c);
      if (corrs.labeled()) out.labels.push_back(corrs.labels[i]);
    }
  }
  if (out.empty())
    raise(Errc::EmptySelection, "no correspondence passes the threshold");
  return out;
}

/// Frobenius distance after canonicalization (unit norm, fixed sign);
/// range [0, 2]. Pseudo-metric on rays through the origin.
inline double fmat_distance(const FMat& f1, const FMat& f2) {
  return (canonicalized(f1).m - canonicalized(f2).m).norm();
}

/// Evaluation record; sums are the literal metric definitions, means are
/// per-point (both are reported since the aggregation convention differs
/// between consumers).
struct MetricReport {
  double epi_abs_sum = 0.0;
  double epi_sqr_sum = 0.0;
  std::size_t n_points = 0;
  std::optional<std::vector<double>> per_point;

  double epi_abs_mean() const {
    return n_points ? epi_abs_sum / double(n_points) : 0.0;
  }
  double epi_sqr_mean() const {
    return n_points ? epi_sqr_sum / double(n_points) : 0.0;
  }

  std::string to_text() const {
    std::string s;
    s += "n_points " + std::to_string(n_points) + "\n";
    s += "epi_abs " + format_double(epi_abs_sum) + "\n";
    s += "epi_sqr " + format_double(epi_sqr_sum) + "\n";
    s += "epi_abs_mean " + format_double(epi_abs_mean()) + "\n";
    s += "epi_sqr_mean " + format_double(epi_sqr_mean()) + "\n";
    return s;
  }

  std::string to_csv() const {
    return "n_points,epi_abs,epi_sqr,epi_abs_mean,epi_sqr_mean\n" +
           std::to_string(n_points) + "," + format_double(epi_abs_sum) + "," +
           format_double(epi_sqr_sum) + "," + format_double(epi_abs_mean()) +
           "," + format_double(epi_sqr_mean()) + "\n";
  }
};

inline MetricReport evaluate_metrics(const FMat& f, const CorrSet& corrs,
                                     bool keep_per_point = false) {
  if (corrs.empty()) raise(Errc::EmptySelection, "empty correspondence set");
  MetricReport rep;
  rep.n_points = corrs.size();
  if (keep_per_point) rep.per_point.emplace();
  for (const auto& c : corrs.pairs) {
    const double r = epipolar_residual(f, c.p, c.q);
    rep.epi_abs_sum += std::abs(r);
    rep.epi_sqr_sum += r * r;
    if (keep_per_point) rep.per_point->push_back(r);
  }
  return rep;
}

}  // namespace twoview
