#pragma once

#include <atomic>
#include <exception>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "twoview/estimators.hpp"
#include "twoview/fit.hpp"
#include "twoview/synthetic.hpp"

namespace twoview {

enum class Method {
  EIGHT_POINT,
  NORM_EIGHT_POINT,
  RANSAC,
  LEMEDS,
  ALG_MIN,
  FIT_RECON,
  FIT_EPI,
};

inline const char* method_name(Method m) {
  switch (m) {
    case Method::EIGHT_POINT: return "eight_point";
    case Method::NORM_EIGHT_POINT: return "norm_eight_point";
    case Method::RANSAC: return "ransac";
    case Method::LEMEDS: return "lemeds";
    case Method::ALG_MIN: return "alg_min";
    case Method::FIT_RECON: return "fit_recon";
    case Method::FIT_EPI: return "fit_epi";
  }
  return "?";
}

/// Table-1-style run: rows are (normalization, method) pairs evaluated on
/// the high-confidence points of each trial's scene, plus a ground-truth
/// row per normalization group.
struct BenchmarkSpec {
  std::vector<Method> methods;
  std::vector<NormKind> norms;
  SceneConfig scene;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  double select_threshold = 2.0;  // px^2, section-4.1 rule
  RobustConfig robust;            // seed field is ignored (per-trial streams)
  std::size_t fit_max_steps = 300;
  std::size_t fit_n_starts = 8;

  void validate() const {
    if (methods.empty()) raise(Errc::ParseError, "benchmark: no methods");
    if (norms.empty()) raise(Errc::ParseError, "benchmark: no norms");
    if (trials < 1) raise(Errc::ParseError, "benchmark: trials must be >= 1");
    scene.validate();
  }
};

inline Method method_from_name(const std::string& s) {
  for (Method m : {Method::EIGHT_POINT, Method::NORM_EIGHT_POINT,
                   Method::RANSAC, Method::LEMEDS, Method::ALG_MIN,
                   Method::FIT_RECON, Method::FIT_EPI})
    if (s == method_name(m)) return m;
  raise(Errc::ParseError, "unknown method '" + s + "'");
}

inline NormKind norm_from_name(const std::string& s) {
  for (NormKind k : {NormKind::ETR, NormKind::FBN, NormKind::ABS})
    if (s == norm_kind_name(k)) return k;
  raise(Errc::ParseError, "unknown normalization '" + s + "'");
}

inline BenchmarkSpec benchmark_spec_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::ParseError, std::string("benchmark spec: ") + e.what());
  }
  if (!j.is_object()) raise(Errc::ParseError, "benchmark spec: not an object");
  static const char* known[] = {"methods", "norms",  "scene", "trials",
                                "seed",    "robust", "fit",   "select_threshold"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok)
      raise(Errc::ParseError,
            "benchmark spec: unknown key '" + it.key() + "'");
  }
  BenchmarkSpec spec;
  try {
    if (!j.contains("methods") || !j.contains("norms") || !j.contains("scene"))
      raise(Errc::ParseError,
            "benchmark spec: methods, norms and scene are required");
    for (const auto& m : j["methods"])
      spec.methods.push_back(method_from_name(m.get<std::string>()));
    for (const auto& n : j["norms"])
      spec.norms.push_back(norm_from_name(n.get<std::string>()));
    spec.scene = scene_config_from_json(j["scene"]);
    if (j.contains("trials")) spec.trials = j["trials"].get<std::size_t>();
    if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("select_threshold"))
      spec.select_threshold = j["select_threshold"].get<double>();
    if (j.contains("robust")) {
      const auto& r = j["robust"];
      static const char* rknown[] = {"max_iterations", "inlier_threshold",
                                     "min_inlier_count", "confidence"};
      for (auto it = r.begin(); it != r.end(); ++it) {
        bool ok = false;
        for (const char* k : rknown) ok = ok || it.key() == k;
        if (!ok)
          raise(Errc::ParseError,
                "benchmark spec: unknown robust key '" + it.key() + "'");
      }
      if (r.contains("max_iterations"))
        spec.robust.max_iterations = r["max_iterations"].get<std::size_t>();
      if (r.contains("inlier_threshold"))
        spec.robust.inlier_threshold = r["inlier_threshold"].get<double>();
      if (r.contains("min_inlier_count"))
        spec.robust.min_inlier_count = r["min_inlier_count"].get<std::size_t>();
      if (r.contains("confidence"))
        spec.robust.confidence = r["confidence"].get<double>();
    }
    if (j.contains("fit")) {
      const auto& f = j["fit"];
      static const char* fknown[] = {"max_steps", "n_starts"};
      for (auto it = f.begin(); it != f.end(); ++it) {
        bool ok = false;
        for (const char* k : fknown) ok = ok || it.key() == k;
        if (!ok)
          raise(Errc::ParseError,
                "benchmark spec: unknown fit key '" + it.key() + "'");
      }
      if (f.contains("max_steps"))
        spec.fit_max_steps = f["max_steps"].get<std::size_t>();
      if (f.contains("n_starts"))
        spec.fit_n_starts = f["n_starts"].get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::ParseError, std::string("benchmark spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

struct BenchmarkRow {
  std::string norm;
  std::string method;
  std::size_t trials = 0;
  double epi_abs_median = 0.0;
  double epi_sqr_median = 0.0;
  double epi_abs_trial_mean = 0.0;
  double epi_sqr_trial_mean = 0.0;
  double epi_abs_per_point_median = 0.0;
  double epi_sqr_per_point_median = 0.0;
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;

  std::string to_csv() const {
    std::string s =
        "norm,method,trials,epi_abs_median,epi_sqr_median,"
        "epi_abs_trial_mean,epi_sqr_trial_mean,"
        "epi_abs_per_point_median,epi_sqr_per_point_median\n";
    for (const auto& r : rows) {
      s += r.norm + "," + r.method + "," + std::to_string(r.trials) + "," +
           format_double(r.epi_abs_median) + "," +
           format_double(r.epi_sqr_median) + "," +
           format_double(r.epi_abs_trial_mean) + "," +
           format_double(r.epi_sqr_trial_mean) + "," +
           format_double(r.epi_abs_per_point_median) + "," +
           format_double(r.epi_sqr_per_point_median) + "\n";
    }
    return s;
  }

  std::string to_table() const {
    std::ostringstream os;
    os << std::left;
    std::string cur;
    for (const auto& r : rows) {
      if (r.norm != cur) {
        cur = r.norm;
        os << cur << "-Norm\n";
        os << "  " << std::setw(18) << "Method" << std::setw(14) << "EPI-ABS"
           << std::setw(14) << "EPI-SQR" << "\n";
      }
      os << "  " << std::setw(18) << r.method << std::setw(14)
         << std::setprecision(6) << r.epi_abs_median << std::setw(14)
         << std::setprecision(6) << r.epi_sqr_median << "\n";
    }
    return os.str();
  }

  const BenchmarkRow& row(const std::string& norm,
                          const std::string& method) const {
    for (const auto& r : rows)
      if (r.norm == norm && r.method == method) return r;
    raise(Errc::ParseError, "no benchmark row " + norm + "/" + method);
  }
};

namespace detail {

struct TrialMetrics {
  double abs_sum = 0.0, sqr_sum = 0.0, abs_mean = 0.0, sqr_mean = 0.0;
};

inline TrialMetrics eval_on(const FMat& f, NormKind norm,
                            const CorrSet& eval_set) {
  const FMat fn = normalize(f, norm);
  TrialMetrics t;
  for (const auto& c : eval_set.pairs) {
    const double r = epipolar_residual(fn, c.p, c.q);
    t.abs_sum += std::abs(r);
    t.sqr_sum += r * r;
  }
  t.abs_mean = t.abs_sum / double(eval_set.size());
  t.sqr_mean = t.sqr_sum / double(eval_set.size());
  return t;
}

inline double median_of(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    std::nth_element(v.begin(), v.begin() + (mid - 1), v.end());
    m = 0.5 * (v[mid - 1] + m);
  }
  return m;
}

constexpr std::uint64_t kTrialSceneSalt = 0x62736365ULL;
constexpr std::uint64_t kTrialMethodSalt = 0x626d6574ULL;

}  // namespace detail

/// Runs the benchmark; `n_threads` only affects wall time, never output
/// (per-trial seed substreams, aggregation in trial order).
inline BenchmarkResult run_benchmark(const BenchmarkSpec& spec,
                                     unsigned n_threads = 1) {
  spec.validate();
  const std::size_t n_methods = spec.methods.size();
  const std::size_t n_norms = spec.norms.size();
  // per trial: [method x norm] metrics plus ground-truth per norm
  struct TrialOut {
    std::vector<detail::TrialMetrics> cells;  // n_methods * n_norms
    std::vector<detail::TrialMetrics> gt;     // n_norms
  };
  std::vector<TrialOut> out(spec.trials);
  std::vector<std::exception_ptr> errors(spec.trials);

  auto run_trial = [&](std::size_t t) {
    SceneConfig cfg = spec.scene;
    cfg.seed = substream_seed(spec.seed, t, detail::kTrialSceneSalt);
    const SyntheticScene scene = generate_scene(cfg);
    const CorrSet eval_set = select_high_confidence(
        scene.corrs_noisy, scene.f_gt, spec.select_threshold);

    TrialOut& res = out[t];
    res.cells.resize(n_methods * n_norms);
    res.gt.resize(n_norms);
    for (std::size_t ni = 0; ni < n_norms; ++ni)
      res.gt[ni] = detail::eval_on(scene.f_gt, spec.norms[ni], eval_set);

    for (std::size_t mi = 0; mi < n_methods; ++mi) {
      const Method m = spec.methods[mi];
      const std::uint64_t mseed = substream_seed(
          spec.seed, t * 64 + mi, detail::kTrialMethodSalt);
      // estimators that do not depend on the normalization run once
      std::optional<FMat> shared;
      switch (m) {
        case Method::EIGHT_POINT:
          shared = eight_point(scene.corrs_noisy);
          break;
        case Method::NORM_EIGHT_POINT:
          shared = normalized_eight_point(scene.corrs_noisy);
          break;
        case Method::RANSAC: {
          RobustConfig rc = spec.robust;
          rc.seed = mseed;
          shared = ransac(scene.corrs_noisy, rc).f;
          break;
        }
        case Method::LEMEDS: {
          RobustConfig rc = spec.robust;
          rc.seed = mseed;
          shared = lemeds(scene.corrs_noisy, rc).f;
          break;
        }
        case Method::ALG_MIN:
          shared = algebraic_minimization(scene.corrs_noisy,
                                          eight_point(scene.corrs_noisy))
                       .f;
          break;
        default:
          break;
      }
      for (std::size_t ni = 0; ni < n_norms; ++ni) {
        FMat f;
        if (shared) {
          f = *shared;
        } else {
          FitConfig fc;
          fc.parametrization = m == Method::FIT_RECON ? Parametrization::RECON
                                                      : Parametrization::EPI;
          fc.norm = spec.norms[ni];
          fc.objective = FitObjective::EPI_SQR_LOSS;
          fc.max_steps = spec.fit_max_steps;
          fc.principal1 = Eigen::Vector2d(cfg.width / 2.0, cfg.height / 2.0);
          fc.principal2 = fc.principal1;
          fc.init_f_min = cfg.gamma / 4.0;
          fc.init_f_max = cfg.gamma * 2.0;
          FitData fd;
          fd.corrs = scene.corrs_noisy;
          f = multi_start_fit(fc, fd, spec.fit_n_starts, mseed + ni).final_f;
        }
        res.cells[mi * n_norms + ni] =
            detail::eval_on(f, spec.norms[ni], eval_set);
      }
    }
  };

  const unsigned workers = std::max(1u, n_threads);
  if (workers == 1) {
    for (std::size_t t = 0; t < spec.trials; ++t) {
      try {
        run_trial(t);
      } catch (...) {
        errors[t] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t t = next.fetch_add(1);
          if (t >= spec.trials) return;
          try {
            run_trial(t);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        }
      });
    for (auto& th : pool) th.join();
  }
  for (std::size_t t = 0; t < spec.trials; ++t)
    if (errors[t]) std::rethrow_exception(errors[t]);  // lowest trial first

  BenchmarkResult result;
  auto aggregate = [&](const std::string& norm, const std::string& method,
                       auto getter) {
    std::vector<double> a, s, am, sm;
    a.reserve(spec.trials);
    for (std::size_t t = 0; t < spec.trials; ++t) {
      const detail::TrialMetrics& tm = getter(out[t]);
      a.push_back(tm.abs_sum);
      s.push_back(tm.sqr_sum);
      am.push_back(tm.abs_mean);
      sm.push_back(tm.sqr_mean);
    }
    BenchmarkRow row;
    row.norm = norm;
    row.method = method;
    row.trials = spec.trials;
    row.epi_abs_median = detail::median_of(a);
    row.epi_sqr_median = detail::median_of(s);
    row.epi_abs_trial_mean =
        std::accumulate(a.begin(), a.end(), 0.0) / double(a.size());
    row.epi_sqr_trial_mean =
        std::accumulate(s.begin(), s.end(), 0.0) / double(s.size());
    row.epi_abs_per_point_median = detail::median_of(am);
    row.epi_sqr_per_point_median = detail::median_of(sm);
    result.rows.push_back(row);
  };

  for (std::size_t ni = 0; ni < n_norms; ++ni) {
    const std::string norm = norm_kind_name(spec.norms[ni]);
    for (std::size_t mi = 0; mi < n_methods; ++mi)
      aggregate(norm, method_name(spec.methods[mi]),
                [&, mi, ni](const TrialOut& o) -> const detail::TrialMetrics& {
                  return o.cells[mi * n_norms + ni];
                });
    aggregate(norm, "ground_truth",
              [&, ni](const TrialOut& o) -> const detail::TrialMetrics& {
                return o.gt[ni];
              });
  }
  return result;
}

}  // namespace twoview
