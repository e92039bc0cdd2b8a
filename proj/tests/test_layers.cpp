#include <catch2/catch_amalgamated.hpp>

#include "oracle.hpp"
#include "twoview/layers.hpp"
#include "twoview/rng.hpp"

using namespace twoview;

namespace {

Vec8 random_recon_theta(std::mt19937_64& eng, bool pixel_scale) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> fs(0.5, 2.0), fl(100.0, 800.0);
  Vec8 theta;
  theta(0) = pixel_scale ? fl(eng) : fs(eng);
  theta(1) = pixel_scale ? fl(eng) : fs(eng);
  Vec3 t;
  do {
    t = oracle::random_vec3(eng);
  } while (t.norm() < 0.5);
  theta.segment<3>(2) = t;
  theta.segment<3>(5) = oracle::random_vec3(eng);
  return theta;
}

Vec8 random_epi_v(std::mt19937_64& eng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Vec8 v;
  do {
    for (int k = 0; k < 8; ++k) v(k) = u(eng);
  } while (v.segment<3>(0).cross(v.segment<3>(3)).norm() <
           1e-2 * v.segment<3>(0).norm() * v.segment<3>(3).norm());
  return v;
}

}  // namespace

TEST_CASE("reconstruct_forward reduces to skew and matches compose") {
  ReconParams p(1.0, 1.0, Vec3(1, 0, 0), Vec3::Zero());
  const FMat f = reconstruct_forward(p, {0, 0}, {0, 0});
  CHECK(f.m.isApprox(skew(Vec3(1, 0, 0)), 0.0));

  auto eng = make_engine(21);
  for (int i = 0; i < 20; ++i) {
    const Vec8 theta = random_recon_theta(eng, i % 2 == 1);
    const ReconParams rp(theta);
    const Eigen::Vector2d c(320.0, 240.0);
    const FMat a = reconstruct_forward(rp, c, c);
    const FMat b = compose_fundamental({rp.f1(), c.x(), c.y()},
                                       {rp.f2(), c.x(), c.y()},
                                       {rp.t(), rp.r()});
    REQUIRE(a.m.isApprox(b.m, 0.0));  // definitional equality, bitwise
    REQUIRE(rank2_defect(a) <= 1e-10);
  }
}

TEST_CASE("reconstruct_forward propagates parameter guards") {
  CHECK_THROWS_AS(
      reconstruct_forward(ReconParams(-1.0, 1.0, Vec3(1, 0, 0), Vec3::Zero()),
                          {0, 0}, {0, 0}),
      Error);
  CHECK_THROWS_AS(
      reconstruct_forward(ReconParams(1.0, 1.0, Vec3::Zero(), Vec3::Zero()),
                          {0, 0}, {0, 0}),
      Error);
}

TEST_CASE("reconstruct_backward matches finite differences") {
  auto eng = make_engine(22);
  for (int i = 0; i < 100; ++i) {
    const Vec8 theta = random_recon_theta(eng, i % 2 == 1);
    std::uniform_real_distribution<double> cu(0.0, 200.0);
    const Eigen::Vector2d c1(cu(eng), cu(eng)), c2(cu(eng), cu(eng));
    const Mat3 up = oracle::random_mat3(eng, -1.0, 1.0);

    const Vec8 analytic =
        reconstruct_backward(ReconParams(theta), c1, c2, up);
    const Vec8 fd = oracle::fd_grad8(
        [&](const Vec8& th) {
          return up
              .cwiseProduct(reconstruct_forward(ReconParams(th), c1, c2).m)
              .sum();
        },
        theta);
    REQUIRE(oracle::grads_match(analytic, fd));
  }
}

TEST_CASE("reconstruct_backward zero upstream gives zero gradient") {
  const ReconParams p(1.5, 0.8, Vec3(0.3, 0.2, 0.9), Vec3(0.1, -0.2, 0.3));
  CHECK(reconstruct_backward(p, {0, 0}, {0, 0}, Mat3::Zero()).isZero(0.0));
}

TEST_CASE("translation derivative at identity cameras is the skew pattern") {
  // with K = I and r = 0, dF/dtx is exactly d[t]x/dtx
  const Vec3 t(0.4, 0.1, 0.7);
  const ReconParams p(1.0, 1.0, t, Vec3::Zero());
  const Jacobian9x8 jac = reconstruct_jacobian(p, {0, 0}, {0, 0});

  const double h = 1e-6 * (1.0 + t.x());
  const Mat3 fd_skew =
      (skew(Vec3(t.x() + h, t.y(), t.z())) - skew(Vec3(t.x() - h, t.y(), t.z()))) /
      (2.0 * h);
  CHECK(unvec9(jac.col(2)).isApprox(fd_skew, 1e-9));

  Mat3 expect;
  expect << 0, 0, 0, 0, 0, -1, 0, 1, 0;
  CHECK(unvec9(jac.col(2)).isApprox(expect, 1e-12));
}

TEST_CASE("epi_forward builds the third column and keeps rank 2") {
  EpiParams p(Vec3(1, 0, 0), Vec3(0, 1, 0), 0.0, 0.0);
  Mat3 expect;
  expect << 1, 0, 0, 0, 1, 0, 0, 0, 0;
  CHECK(epi_forward(p).m.isApprox(expect, 0.0));

  auto eng = make_engine(23);
  for (int i = 0; i < 100; ++i) {
    const EpiParams v(random_epi_v(eng));
    const FMat f = epi_forward(v);
    const double scale = f.m.norm();
    REQUIRE(std::abs(f.m.determinant()) <= 1e-12 * scale * scale * scale);
    // epipole property: F (alpha, beta, -1)^T = 0
    REQUIRE((f.m * Vec3(v.alpha(), v.beta(), -1.0)).norm() <=
            1e-12 * scale * (1.0 + Vec3(v.alpha(), v.beta(), -1.0).norm()));
  }
}

TEST_CASE("epi_forward rejects dependent columns") {
  CHECK_THROWS_MATCHES(
      epi_forward(EpiParams(Vec3(1, 2, 3), Vec3(2, 4, 6), 0.5, 0.5)), Error,
      Catch::Matchers::Predicate<Error>(
          [](const Error& e) { return e.code() == Errc::DependentColumns; }));
}

TEST_CASE("epi_backward matches finite differences and the bilinear rule") {
  auto eng = make_engine(24);
  for (int i = 0; i < 100; ++i) {
    const Vec8 v = random_epi_v(eng);
    const Mat3 up = oracle::random_mat3(eng, -1.0, 1.0);
    const Vec8 analytic = epi_backward(EpiParams(v), up);
    const Vec8 fd = oracle::fd_grad8(
        [&](const Vec8& vv) {
          return up.cwiseProduct(epi_forward(EpiParams(vv)).m).sum();
        },
        v);
    REQUIRE(oracle::grads_match(analytic, fd, 1e-6));
  }

  // dF33/dalpha = third entry of the first column, exactly
  const Vec8 v = random_epi_v(eng);
  Mat3 up = Mat3::Zero();
  up(2, 2) = 1.0;
  const Vec8 g = epi_backward(EpiParams(v), up);
  CHECK(g(6) == v(2));
  CHECK(g(7) == v(5));

  CHECK(epi_backward(EpiParams(v), Mat3::Zero()).isZero(0.0));
}

TEST_CASE("normalize: ETR, FBN, ABS behavior") {
  auto eng = make_engine(25);
  Mat3 m = oracle::random_mat3(eng);
  m /= m.norm();

  const FMat doubled(Mat3(2.0 * m));
  CHECK(normalize(doubled, NormKind::FBN).m.isApprox(m, 1e-15));

  Mat3 a = oracle::random_mat3(eng, -4.0, 4.0);
  a(1, 2) = 4.0;  // pin the max
  const FMat fa = normalize(FMat(a), NormKind::ABS);
  CHECK(fa.m.cwiseAbs().maxCoeff() == 1.0);
  CHECK(fa.m.isApprox(Mat3(a / 4.0), 0.0));

  Mat3 tiny = oracle::random_mat3(eng);
  tiny(2, 2) = 1e-15;
  CHECK_THROWS_MATCHES(normalize(FMat(tiny), NormKind::ETR), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == Errc::NearZeroDivisor;
                       }));
  CHECK_THROWS_AS(normalize(FMat(Mat3::Zero()), NormKind::FBN), Error);
  CHECK_THROWS_AS(normalize(FMat(Mat3::Zero()), NormKind::ABS), Error);

  Mat3 e = oracle::random_mat3(eng);
  e(2, 2) = 0.7;
  CHECK(normalize(FMat(e), NormKind::ETR).m(2, 2) == 1.0);
}

TEST_CASE("normalization idempotence and scale invariance") {
  auto eng = make_engine(26);
  for (int i = 0; i < 50; ++i) {
    Mat3 m = oracle::random_mat3(eng);
    if (std::abs(m(2, 2)) < 0.1) m(2, 2) = 0.5;
    for (NormKind k : {NormKind::FBN, NormKind::ABS}) {
      const FMat once = normalize(FMat(m), k);
      const FMat twice = normalize(once, k);
      REQUIRE((twice.m - once.m).norm() <= 1e-15 * once.m.norm());
      const FMat scaled = normalize(FMat(Mat3(3.25 * m)), k);
      REQUIRE((scaled.m - once.m).norm() < 1e-12);
    }
    const FMat etr_once = normalize(FMat(m), NormKind::ETR);
    CHECK(normalize(etr_once, NormKind::ETR).m.isApprox(etr_once.m, 0.0));
    const FMat etr_scaled = normalize(FMat(Mat3(-2.5 * m)), NormKind::ETR);
    CHECK((etr_scaled.m - etr_once.m).norm() < 1e-12);
  }
}

TEST_CASE("normalized outputs are scalar multiples of each other") {
  auto eng = make_engine(27);
  Mat3 m = oracle::random_mat3(eng);
  m(2, 2) = 0.8;
  const Mat3 fbn = normalize(FMat(m), NormKind::FBN).m;
  const Mat3 abs = normalize(FMat(m), NormKind::ABS).m;
  const double ratio = fbn(0, 0) / abs(0, 0);
  CHECK(ratio > 0.0);
  CHECK(fbn.isApprox(Mat3(ratio * abs), 1e-12));
}

TEST_CASE("normalize_backward matches finite differences") {
  auto eng = make_engine(28);
  for (int i = 0; i < 100; ++i) {
    Mat3 f = oracle::random_mat3(eng);
    if (std::abs(f(2, 2)) < 0.1) f(2, 2) = f(2, 2) < 0 ? -0.5 : 0.5;
    const Mat3 up = oracle::random_mat3(eng, -1.0, 1.0);
    for (NormKind k : {NormKind::ETR, NormKind::FBN, NormKind::ABS}) {
      if (k == NormKind::ABS) {
        double top = 0, second = 0;
        for (int e = 0; e < 9; ++e) {
          const double a = std::abs(f(e / 3, e % 3));
          if (a > top) {
            second = top;
            top = a;
          } else if (a > second)
            second = a;
        }
        if (top - second < 1e-2) continue;
      }
      const Mat3 analytic = normalize_backward(FMat(f), k, up);
      const Mat3 fd = oracle::fd_grad_mat3(
          [&](const Mat3& m) {
            return up.cwiseProduct(normalize(FMat(m), k).m).sum();
          },
          f);
      REQUIRE(oracle::grads_match(vec9(analytic), vec9(fd)));
    }
  }
}

TEST_CASE("forward-mode normalization derivative is adjoint to backward") {
  auto eng = make_engine(29);
  for (int i = 0; i < 50; ++i) {
    Mat3 f = oracle::random_mat3(eng);
    if (std::abs(f(2, 2)) < 0.1) f(2, 2) = 0.5;
    const Mat3 u = oracle::random_mat3(eng, -1.0, 1.0);
    const Mat3 v = oracle::random_mat3(eng, -1.0, 1.0);
    for (NormKind k : {NormKind::ETR, NormKind::FBN, NormKind::ABS}) {
      const double lhs =
          u.cwiseProduct(normalize_forward_diff(FMat(f), k, v)).sum();
      const double rhs =
          v.cwiseProduct(normalize_backward(FMat(f), k, u)).sum();
      REQUIRE(std::abs(lhs - rhs) <= 1e-10 * (1.0 + std::abs(lhs)));
    }
  }
}

TEST_CASE("FBN backward tangent-space identity") {
  auto eng = make_engine(30);
  Mat3 f = oracle::random_mat3(eng);
  f /= f.norm();
  Mat3 up = oracle::random_mat3(eng);
  up -= up.cwiseProduct(f).sum() * f;  // entrywise-orthogonal to f
  const Mat3 g = normalize_backward(FMat(f), NormKind::FBN, up);
  CHECK(g.isApprox(up, 1e-12));
}

TEST_CASE("ETR backward: output (3,3) depends on nothing") {
  auto eng = make_engine(31);
  Mat3 f = oracle::random_mat3(eng);
  f(2, 2) = 0.6;
  Mat3 up = Mat3::Zero();
  up(2, 2) = 1.0;  // upstream only on the pinned entry
  CHECK(normalize_backward(FMat(f), NormKind::ETR, up).isZero(0.0));
}

TEST_CASE("loss value, gradient, and guards") {
  auto eng = make_engine(32);
  const Mat3 g = oracle::random_mat3(eng);
  auto [v0, g0] = loss_l1l2(FMat(g), FMat(g));
  CHECK(v0 == 0.0);
  CHECK(g0.isZero(0.0));

  Mat3 p = g;
  p(1, 1) += 0.5;
  auto [v1, g1] = loss_l1l2(FMat(p), FMat(g));
  CHECK(v1 == Catch::Approx(0.75).margin(1e-15));
  CHECK(g1(1, 1) == Catch::Approx(2.0).margin(1e-15));

  CHECK_THROWS_MATCHES(
      loss_l1l2(FMat(p), NormKind::FBN, FMat(g), NormKind::ABS), Error,
      Catch::Matchers::Predicate<Error>([](const Error& e) {
        return e.code() == Errc::MixedNormalization;
      }));
  CHECK_NOTHROW(loss_l1l2(FMat(p), NormKind::FBN, FMat(g), NormKind::FBN));
}

TEST_CASE("loss gradient matches finite differences away from kinks") {
  auto eng = make_engine(33);
  for (int i = 0; i < 100; ++i) {
    Mat3 pred, gt;
    do {
      pred = oracle::random_mat3(eng, -1.0, 1.0);
      gt = oracle::random_mat3(eng, -1.0, 1.0);
    } while ((pred - gt).cwiseAbs().minCoeff() < 1e-3);
    const LossWeights w{i % 3 == 0 ? 1.0 : 0.3, i % 3 == 1 ? 1.0 : 0.7};
    const Mat3 analytic = loss_l1l2(FMat(pred), FMat(gt), w).second;
    const Mat3 fd = oracle::fd_grad_mat3(
        [&](const Mat3& m) { return loss_l1l2(FMat(m), FMat(gt), w).first; },
        pred);
    REQUIRE(oracle::grads_match(vec9(analytic), vec9(fd), 1e-6));
  }
}

TEST_CASE("ABS tie point: first row-major maximizer takes the derivative") {
  Mat3 f = Mat3::Identity() * 0.5;
  f(0, 0) = 2.0;
  f(1, 1) = 2.0;  // tie with (0,0)
  auto eng = make_engine(34);
  const Mat3 up = oracle::random_mat3(eng);
  const Mat3 at_tie = normalize_backward(FMat(f), NormKind::ABS, up);
  Mat3 nudged = f;
  nudged(0, 0) += 1e-9;  // make the chosen maximizer strict
  const Mat3 limit = normalize_backward(FMat(nudged), NormKind::ABS, up);
  CHECK((at_tie - limit).norm() < 1e-6 * limit.norm());
}
