#pragma once

#include <json.hpp>
#include <random>
#include <string>

#include "twoview/geometry.hpp"
#include "twoview/io.hpp"
#include "twoview/metrics.hpp"
#include "twoview/rng.hpp"

namespace twoview {

/// Scene generation parameters. The principal point is the image center
/// (derived, not configured). Pose components are drawn uniformly within
/// +-t_range / +-r_range; translation is rescaled to unit norm before the
/// ground-truth F is composed (F is blind to its magnitude).
struct SceneConfig {
  std::size_t n_points = 60;
  double zmin = 4.0;
  double zmax = 10.0;
  double width = 640.0;
  double height = 480.0;
  double gamma = 500.0;
  Vec3 t_range = Vec3(0.5, 0.5, 0.2);
  Vec3 r_range = Vec3(0.3, 0.3, 0.3);
  double noise_sigma = 0.0;
  double outlier_fraction = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_points == 0) raise(Errc::ParseError, "n_points must be >= 1");
    if (!(zmin > 0.0)) raise(Errc::ParseError, "zmin must be > 0");
    if (!(zmax >= zmin)) raise(Errc::ParseError, "zmax must be >= zmin");
    if (!(width > 0.0) || !(height > 0.0))
      raise(Errc::ParseError, "image size must be positive");
    if (!(gamma > 0.0)) raise(Errc::ParseError, "gamma must be > 0");
    if (noise_sigma < 0.0) raise(Errc::ParseError, "noise_sigma must be >= 0");
    if (outlier_fraction < 0.0 || outlier_fraction >= 1.0)
      raise(Errc::ParseError, "outlier_fraction must be in [0, 1)");
  }
};

inline SceneConfig scene_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) raise(Errc::ParseError, "scene config: not an object");

  static const char* known[] = {"n_points", "depth_range", "image_size",
                                "gamma",    "t_range",     "r_range",
                                "noise_sigma", "outlier_fraction", "seed"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok)
      raise(Errc::ParseError, "scene config: unknown key '" + it.key() + "'");
  }

  SceneConfig cfg;
  try {
    if (j.contains("n_points")) cfg.n_points = j["n_points"].get<std::size_t>();
    if (j.contains("depth_range")) {
      auto d = j["depth_range"];
      if (!d.is_array() || d.size() != 2)
        raise(Errc::ParseError, "scene config: depth_range must be [zmin, zmax]");
      cfg.zmin = d[0].get<double>();
      cfg.zmax = d[1].get<double>();
    }
    if (j.contains("image_size")) {
      auto d = j["image_size"];
      if (!d.is_array() || d.size() != 2)
        raise(Errc::ParseError, "scene config: image_size must be [w, h]");
      cfg.width = d[0].get<double>();
      cfg.height = d[1].get<double>();
    }
    if (j.contains("gamma")) cfg.gamma = j["gamma"].get<double>();
    auto vec3_of = [](const nlohmann::json& d, const char* key) {
      if (!d.is_array() || d.size() != 3)
        raise(Errc::ParseError,
              std::string("scene config: ") + key + " must be [x, y, z]");
      return Vec3(d[0].get<double>(), d[1].get<double>(), d[2].get<double>());
    };
    if (j.contains("t_range")) cfg.t_range = vec3_of(j["t_range"], "t_range");
    if (j.contains("r_range")) cfg.r_range = vec3_of(j["r_range"], "r_range");
    if (j.contains("noise_sigma"))
      cfg.noise_sigma = j["noise_sigma"].get<double>();
    if (j.contains("outlier_fraction"))
      cfg.outlier_fraction = j["outlier_fraction"].get<double>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::ParseError, std::string("scene config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline SceneConfig scene_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::ParseError, std::string("scene config: ") + e.what());
  }
  return scene_config_from_json(j);
}

inline std::string scene_config_to_json(const SceneConfig& cfg) {
  nlohmann::json j;
  j["n_points"] = cfg.n_points;
  j["depth_range"] = {cfg.zmin, cfg.zmax};
  j["image_size"] = {cfg.width, cfg.height};
  j["gamma"] = cfg.gamma;
  j["t_range"] = {cfg.t_range.x(), cfg.t_range.y(), cfg.t_range.z()};
  j["r_range"] = {cfg.r_range.x(), cfg.r_range.y(), cfg.r_range.z()};
  j["noise_sigma"] = cfg.noise_sigma;
  j["outlier_fraction"] = cfg.outlier_fraction;
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

struct CameraView {
  CameraIntrinsics k;
  RelativePose pose;  // world (= camera-1 frame) to this camera
};

struct SyntheticScene {
  std::vector<Vec3> points3d;
  CameraView cam1;
  CameraView cam2;
  CorrSet corrs_exact;
  CorrSet corrs_noisy;  // labeled
  FMat f_gt;            // canonicalized
};

/// Pinhole projection of a world point through (K, pose).
inline HomoPoint project(const Vec3& point, const CameraIntrinsics& k,
                         const RelativePose& pose) {
  const Vec3 xc = rotation_from_euler(pose.r) * point + pose.t;
  if (xc.z() <= 0.0) raise(Errc::BehindCamera, "point has non-positive depth");
  return HomoPoint(k.gamma * xc.x() / xc.z() + k.cx,
                   k.gamma * xc.y() / xc.z() + k.cy);
}

/// Gaussian pixel noise on inlier pairs; outlier pairs (floor(fraction*n)
/// of them, chosen uniformly) get the second point redrawn uniformly over
/// the image. Labels record the generative truth.
inline CorrSet perturb(const CorrSet& corrs, double noise_sigma,
                       double outlier_fraction, double width, double height,
                       std::uint64_t seed) {
  if (outlier_fraction < 0.0 || outlier_fraction >= 1.0)
    raise(Errc::ParseError, "outlier_fraction must be in [0, 1)");
  const std::size_t n = corrs.size();
  auto eng = make_engine(seed, 0, /*salt=*/0x70657274ULL);
  std::normal_distribution<double> gauss(0.0, noise_sigma);
  std::uniform_real_distribution<double> ux(0.0, width), uy(0.0, height);

  const std::size_t n_out = std::size_t(outlier_fraction * double(n));
  const auto out_idx = sample_distinct(eng, n, n_out);
  std::vector<std::uint8_t> is_out(n, 0);
  for (auto i : out_idx) is_out[i] = 1;

  CorrSet out;
  out.pairs.reserve(n);
  out.labels.assign(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    Correspondence c = corrs.pairs[i];
    if (noise_sigma > 0.0) {
      c.p = HomoPoint(c.p.x + gauss(eng), c.p.y + gauss(eng));
      if (!is_out[i]) c.q = HomoPoint(c.q.x + gauss(eng), c.q.y + gauss(eng));
    }
    if (is_out[i]) {
      c.q = HomoPoint(ux(eng), uy(eng));
      out.labels[i] = 0;
    }
    out.pairs.push_back(c);
  }
  return out;
}

/// Full oracle: cameras, co-visible points, exact and noisy correspondence
/// sets, ground-truth F from the camera parameters.
inline SyntheticScene generate_scene(const SceneConfig& cfg) {
  cfg.validate();
  auto eng = make_engine(cfg.seed, 0, /*salt=*/0x7363656eULL);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  SyntheticScene scene;
  const Eigen::Vector2d c(cfg.width / 2.0, cfg.height / 2.0);
  scene.cam1.k = CameraIntrinsics{cfg.gamma, c.x(), c.y()};
  scene.cam2.k = scene.cam1.k;
  scene.cam1.pose = RelativePose{};  // identity; world frame = camera 1

  Vec3 t;
  do {
    t = Vec3(unit(eng) * cfg.t_range.x(), unit(eng) * cfg.t_range.y(),
             unit(eng) * cfg.t_range.z());
  } while (t.norm() < 1e-9);
  t.normalize();
  const Vec3 r(unit(eng) * cfg.r_range.x(), unit(eng) * cfg.r_range.y(),
               unit(eng) * cfg.r_range.z());
  scene.cam2.pose = RelativePose{t, r};

  scene.f_gt = canonicalized(
      compose_fundamental(scene.cam1.k, scene.cam2.k, scene.cam2.pose));

  const Mat3 kinv = intrinsics_inverse(scene.cam1.k);
  std::uniform_real_distribution<double> ux(0.0, cfg.width),
      uy(0.0, cfg.height), uz(cfg.zmin, cfg.zmax);

  std::size_t attempts = 0;
  const std::size_t max_attempts = 100 * cfg.n_points;
  while (scene.points3d.size() < cfg.n_points) {
    if (attempts++ >= max_attempts)
      raise(Errc::InfeasibleConfig,
            "co-visible point sampling failed after " +
                std::to_string(max_attempts) + " attempts");
    const HomoPoint p(ux(eng), uy(eng));
    const Vec3 x = uz(eng) * (kinv * p.vec());
    HomoPoint q;
    try {
      q = project(x, scene.cam2.k, scene.cam2.pose);
    } catch (const Error&) {
      continue;
    }
    if (q.x < 0.0 || q.x > cfg.width || q.y < 0.0 || q.y > cfg.height)
      continue;
    scene.points3d.push_back(x);
    scene.corrs_exact.pairs.push_back({p, q});
  }

  scene.corrs_noisy = perturb(scene.corrs_exact, cfg.noise_sigma,
                              cfg.outlier_fraction, cfg.width, cfg.height,
                              substream_seed(cfg.seed, 1, 0x7363656eULL));

  // Redraw outliers that landed near the true epipolar geometry so labeled
  // outliers reliably fail the threshold-2 selection under f_gt.
  auto fix_eng = make_engine(cfg.seed, 2, /*salt=*/0x7363656eULL);
  for (std::size_t i = 0; i < scene.corrs_noisy.size(); ++i) {
    if (scene.corrs_noisy.labels[i]) continue;
    auto& pair = scene.corrs_noisy.pairs[i];
    for (int tries = 0; tries < 100; ++tries) {
      if (symmetric_epipolar_distance(scene.f_gt, pair.p, pair.q) >= 10.0)
        break;
      pair.q = HomoPoint(ux(fix_eng), uy(fix_eng));
    }
  }
  return scene;
}

/// F from projection matrices: F = [e']x P2 pinv(P1), e' = P2 C1 with C1
/// the camera-1 center. Agrees with the parameter composition up to scale.
inline FMat fundamental_from_projections(const Mat34& p1, const Mat34& p2) {
  Eigen::JacobiSVD<Mat34> svd1(p1, Eigen::ComputeFullV);
  Eigen::JacobiSVD<Mat34> svd2(p2);
  if (svd1.singularValues()(2) <= 1e-12 * svd1.singularValues()(0))
    raise(Errc::RankDeficientCamera, "P1 is rank deficient");
  if (svd2.singularValues()(2) <= 1e-12 * svd2.singularValues()(0))
    raise(Errc::RankDeficientCamera, "P2 is rank deficient");

  const Eigen::Vector4d c1 = svd1.matrixV().col(3);  // null space of P1
  const Vec3 ep = p2 * c1;                           // epipole in image 2
  if (ep.norm() <= 1e-9 * p2.norm() * c1.norm())
    raise(Errc::CoincidentCenters, "camera centers coincide");

  const Eigen::Matrix<double, 4, 3> p1_pinv =
      p1.completeOrthogonalDecomposition().pseudoInverse();
  return FMat(Mat3(skew(ep) * (p2 * p1_pinv)));
}

/// Projection matrix K [R | t] of a camera view.
inline Mat34 projection_matrix(const CameraView& cam) {
  Mat34 rt;
  rt.block<3, 3>(0, 0) = rotation_from_euler(cam.pose.r);
  rt.col(3) = cam.pose.t;
  return intrinsics_matrix(cam.k) * rt;
}

}  // namespace twoview
