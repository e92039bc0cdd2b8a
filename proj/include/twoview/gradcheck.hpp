#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "twoview/io.hpp"
#include "twoview/layers.hpp"
#include "twoview/rng.hpp"

namespace twoview {

enum class GradCheckLayer { RECON, EPI, NORM_ETR, NORM_FBN, NORM_ABS, LOSS };

inline const char* gradcheck_layer_name(GradCheckLayer l) {
  switch (l) {
    case GradCheckLayer::RECON: return "recon";
    case GradCheckLayer::EPI: return "epi";
    case GradCheckLayer::NORM_ETR: return "norm-etr";
    case GradCheckLayer::NORM_FBN: return "norm-fbn";
    case GradCheckLayer::NORM_ABS: return "norm-abs";
    case GradCheckLayer::LOSS: return "loss";
  }
  return "?";
}

struct GradCheckReport {
  std::size_t trials = 0;
  std::size_t failures = 0;
  double worst_rel_error = 0.0;
  std::string worst_point;
  std::vector<std::string> notes;

  bool passed() const { return failures == 0; }
};

namespace detail {

constexpr double kGradTol = 1e-5;

// Central difference of a scalar function, h scaled per coordinate.
inline double central_diff(const std::function<double(double)>& f, double x) {
  const double h = 1e-6 * (1.0 + std::abs(x));
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Relative agreement with an absolute floor so that near-zero pairs of
// derivatives compare as equal.
inline double rel_error(double a, double fd, double scale) {
  const double diff = std::abs(a - fd);
  const double mag = std::max(std::abs(a), std::abs(fd));
  if (diff <= 1e-8 * (1.0 + scale)) return 0.0;
  return diff / std::max(mag, 1e-300);
}

template <typename VecT>
inline void compare_gradients(const VecT& analytic,
                              const std::function<double(int, double)>& probe,
                              const VecT& point, const std::string& desc,
                              GradCheckReport& rep) {
  const double scale = analytic.cwiseAbs().maxCoeff();
  bool fail = false;
  double worst = 0.0;
  for (int k = 0; k < analytic.size(); ++k) {
    const double fd =
        central_diff([&](double x) { return probe(k, x); }, point(k));
    const double err = rel_error(analytic(k), fd, scale);
    worst = std::max(worst, err);
    if (err > kGradTol) fail = true;
  }
  ++rep.trials;
  if (fail) ++rep.failures;
  if (worst > rep.worst_rel_error) {
    rep.worst_rel_error = worst;
    rep.worst_point = desc;
  }
}

inline Mat3 random_mat3(std::mt19937_64& eng, double lo = -2.0,
                        double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = u(eng);
  return m;
}

inline std::string describe_mat(const Mat3& m) {
  std::ostringstream os;
  os << "F = [";
  for (int k = 0; k < 9; ++k)
    os << format_double(m(k / 3, k % 3)) << (k < 8 ? " " : "]");
  return os.str();
}

inline std::string describe_vec8(const Vec8& v, const char* tag) {
  std::ostringstream os;
  os << tag << " = [";
  for (int k = 0; k < 8; ++k)
    os << format_double(v(k)) << (k < 7 ? " " : "]");
  return os.str();
}

}  // namespace detail

/// Checks the reconstruction layer's backward pass against central finite
/// differences of the scalar probe <U, F(theta)>.
inline GradCheckReport gradcheck_recon(std::size_t trials,
                                       std::uint64_t seed) {
  GradCheckReport rep;
  for (std::size_t t = 0; t < trials; ++t) {
    auto eng = make_engine(seed, t, /*salt=*/0x6763726bULL);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    // alternate unit-ish and pixel-scale focal regimes
    std::uniform_real_distribution<double> fsmall(0.5, 2.0), flarge(100.0, 800.0);
    std::uniform_real_distribution<double> cdist(0.0, 200.0);
    const bool large = (t % 2) == 1;
    Vec8 theta;
    theta(0) = large ? flarge(eng) : fsmall(eng);
    theta(1) = large ? flarge(eng) : fsmall(eng);
    Vec3 tr;
    do {
      tr = Vec3(u(eng), u(eng), u(eng));
    } while (tr.norm() < 0.5);
    theta.segment<3>(2) = tr;
    theta.segment<3>(5) = Vec3(u(eng), u(eng), u(eng));
    const Eigen::Vector2d c1(cdist(eng), cdist(eng));
    const Eigen::Vector2d c2(cdist(eng), cdist(eng));
    const Mat3 up = detail::random_mat3(eng, -1.0, 1.0);

    const Vec8 analytic = reconstruct_backward(ReconParams(theta), c1, c2, up);
    auto probe = [&](int k, double x) {
      Vec8 th = theta;
      th(k) = x;
      return up.cwiseProduct(reconstruct_forward(ReconParams(th), c1, c2).m)
          .sum();
    };
    detail::compare_gradients(analytic, probe, theta,
                              detail::describe_vec8(theta, "theta"), rep);
  }
  return rep;
}

inline GradCheckReport gradcheck_epi(std::size_t trials, std::uint64_t seed) {
  GradCheckReport rep;
  for (std::size_t t = 0; t < trials; ++t) {
    auto eng = make_engine(seed, t, /*salt=*/0x67636570ULL);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    Vec8 v;
    do {
      for (int k = 0; k < 8; ++k) v(k) = u(eng);
    } while (v.segment<3>(0).cross(v.segment<3>(3)).norm() <
             1e-3 * v.segment<3>(0).norm() * v.segment<3>(3).norm());
    const Mat3 up = detail::random_mat3(eng, -1.0, 1.0);

    const Vec8 analytic = epi_backward(EpiParams(v), up);
    auto probe = [&](int k, double x) {
      Vec8 vv = v;
      vv(k) = x;
      return up.cwiseProduct(epi_forward(EpiParams(vv)).m).sum();
    };
    detail::compare_gradients(analytic, probe, v,
                              detail::describe_vec8(v, "v"), rep);
  }
  return rep;
}

inline GradCheckReport gradcheck_norm(NormKind kind, std::size_t trials,
                                      std::uint64_t seed) {
  GradCheckReport rep;
  for (std::size_t t = 0; t < trials; ++t) {
    auto eng = make_engine(seed, t, /*salt=*/0x67636e6fULL);
    Mat3 f;
    for (;;) {
      f = detail::random_mat3(eng);
      if (kind == NormKind::ETR && std::abs(f(2, 2)) < 0.1) continue;
      if (kind == NormKind::ABS) {
        // unique maximizer, with a gap so finite differences stay one-sided
        double top = 0.0, second = 0.0;
        for (int k = 0; k < 9; ++k) {
          const double a = std::abs(f(k / 3, k % 3));
          if (a > top) {
            second = top;
            top = a;
          } else if (a > second) {
            second = a;
          }
        }
        if (top - second < 1e-2) continue;
      }
      if (f.norm() < 0.1) continue;
      break;
    }
    const Mat3 up = detail::random_mat3(eng, -1.0, 1.0);
    const Mat3 analytic = normalize_backward(FMat(f), kind, up);

    Eigen::Matrix<double, 9, 1> avec = vec9(analytic), point = vec9(f);
    auto probe = [&](int k, double x) {
      Mat3 ff = f;
      ff(k / 3, k % 3) = x;
      return up.cwiseProduct(normalize(FMat(ff), kind).m).sum();
    };
    detail::compare_gradients(avec, probe, point, detail::describe_mat(f),
                              rep);
  }

  if (kind == NormKind::ABS) {
    // Constructed tie: entries (0,0) and (1,1) share the maximum magnitude.
    // The backward pass attributes the scale term to the first row-major
    // maximizer; verify it matches the strict-maximizer limit from that side.
    Mat3 f = Mat3::Identity() * 0.5;
    f(0, 0) = 2.0;
    f(1, 1) = 2.0;
    auto eng = make_engine(seed, trials + 1, /*salt=*/0x67636e6fULL);
    const Mat3 up = detail::random_mat3(eng, -1.0, 1.0);
    const Mat3 at_tie = normalize_backward(FMat(f), kind, up);
    Mat3 nudged = f;
    nudged(0, 0) += 1e-7;
    const Mat3 limit = normalize_backward(FMat(nudged), kind, up);
    const double err = (at_tie - limit).norm() / std::max(limit.norm(), 1e-300);
    if (err < 1e-5)
      rep.notes.push_back(
          "tie point excluded from differentiable trials; subgradient "
          "membership check passed");
    else {
      ++rep.failures;
      rep.notes.push_back("tie-point subgradient check FAILED, error " +
                          format_double(err));
    }
  }
  return rep;
}

/// Checks d(loss)/d(pred) for pure-L1, pure-L2 and mixed weights, away
/// from the L1 kinks.
inline GradCheckReport gradcheck_loss(std::size_t trials, std::uint64_t seed) {
  GradCheckReport rep;
  const LossWeights weight_sets[] = {{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}};
  for (std::size_t t = 0; t < trials; ++t) {
    auto eng = make_engine(seed, t, /*salt=*/0x67636c6fULL);
    Mat3 pred, gt;
    for (;;) {
      pred = detail::random_mat3(eng, -1.0, 1.0);
      gt = detail::random_mat3(eng, -1.0, 1.0);
      if ((pred - gt).cwiseAbs().minCoeff() > 1e-3) break;
    }
    const LossWeights& w = weight_sets[t % 3];
    auto [value, grad] = loss_l1l2(FMat(pred), FMat(gt), w);
    (void)value;

    Eigen::Matrix<double, 9, 1> avec = vec9(grad), point = vec9(pred);
    auto probe = [&](int k, double x) {
      Mat3 pp = pred;
      pp(k / 3, k % 3) = x;
      return loss_l1l2(FMat(pp), FMat(gt), w).first;
    };
    detail::compare_gradients(avec, probe, point, detail::describe_mat(pred),
                              rep);
  }
  return rep;
}

inline GradCheckReport run_gradcheck(GradCheckLayer layer, std::size_t trials,
                                     std::uint64_t seed) {
  switch (layer) {
    case GradCheckLayer::RECON: return gradcheck_recon(trials, seed);
    case GradCheckLayer::EPI: return gradcheck_epi(trials, seed);
    case GradCheckLayer::NORM_ETR:
      return gradcheck_norm(NormKind::ETR, trials, seed);
    case GradCheckLayer::NORM_FBN:
      return gradcheck_norm(NormKind::FBN, trials, seed);
    case GradCheckLayer::NORM_ABS:
      return gradcheck_norm(NormKind::ABS, trials, seed);
    case GradCheckLayer::LOSS: return gradcheck_loss(trials, seed);
  }
  raise(Errc::ParseError, "unreachable");
}

}  // namespace twoview
