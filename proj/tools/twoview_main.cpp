#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>

#include "twoview/benchmark.hpp"
#include "twoview/estimators.hpp"
#include "twoview/fit.hpp"
#include "twoview/gradcheck.hpp"
#include "twoview/io.hpp"
#include "twoview/metrics.hpp"
#include "twoview/synthetic.hpp"

namespace {

using namespace twoview;

constexpr int kExitUsage = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitInsufficient = 4;
constexpr int kExitDegenerate = 5;
constexpr int kExitGradFail = 6;

int exit_code_for(Errc c) {
  switch (c) {
    case Errc::ParseError:
      return kExitUsage;
    case Errc::InfeasibleConfig:
      return kExitInfeasible;
    case Errc::InsufficientCorrespondences:
    case Errc::WrongSampleSize:
    case Errc::EmptySelection:
    case Errc::NoConsensus:
      return kExitInsufficient;
    default:
      return kExitDegenerate;
  }
}

std::uint64_t seed_or_draw(const std::optional<std::uint64_t>& seed) {
  if (seed) return *seed;
  std::random_device rd;
  const std::uint64_t s =
      (std::uint64_t(rd()) << 32) ^ std::uint64_t(rd());
  std::cout << "seed " << s << "\n";
  return s;
}

NormKind parse_norm(const std::string& s) {
  if (s == "etr") return NormKind::ETR;
  if (s == "fbn") return NormKind::FBN;
  if (s == "abs") return NormKind::ABS;
  raise(Errc::ParseError, "unknown normalization '" + s + "'");
}

int cmd_generate(const std::string& config_path, const std::string& out_dir,
                 const std::optional<std::uint64_t>& seed) {
  SceneConfig cfg = scene_config_from_json(read_text_file(config_path));
  if (seed) cfg.seed = *seed;
  const SyntheticScene scene = generate_scene(cfg);

  std::filesystem::create_directories(out_dir);
  const auto dir = std::filesystem::path(out_dir);
  write_corrset((dir / "correspondences.csv").string(), scene.corrs_noisy);
  write_calibration((dir / "calibration.txt").string(),
                    projection_matrix(scene.cam1),
                    projection_matrix(scene.cam2));
  write_fmat((dir / "F_gt.txt").string(), scene.f_gt);
  std::cout << "wrote " << (dir / "correspondences.csv").string() << ", "
            << (dir / "calibration.txt").string() << ", "
            << (dir / "F_gt.txt").string() << "\n";
  return 0;
}

int cmd_estimate(const std::string& method, const std::string& corrs_path,
                 const std::string& norm, const std::string& out_path,
                 const std::string& report_path, const std::string& format,
                 const std::optional<std::uint64_t>& seed,
                 std::size_t iterations, double threshold) {
  const CorrSet corrs = read_corrset(corrs_path);
  FMat f;
  if (method == "eight-point") {
    f = eight_point(corrs);
  } else if (method == "norm-eight-point") {
    f = normalized_eight_point(corrs);
  } else if (method == "alg-min") {
    f = algebraic_minimization(corrs, eight_point(corrs)).f;
  } else if (method == "ransac" || method == "lemeds") {
    RobustConfig rc;
    rc.max_iterations = iterations;
    rc.inlier_threshold = threshold;
    rc.seed = seed_or_draw(seed);
    f = (method == "ransac") ? ransac(corrs, rc).f : lemeds(corrs, rc).f;
  } else {
    raise(Errc::ParseError, "unknown method '" + method + "'");
  }

  write_fmat(out_path, f);
  const MetricReport rep = evaluate_metrics(normalize(f, parse_norm(norm)), corrs);
  const std::string text = format == "csv" ? rep.to_csv() : rep.to_text();
  std::cout << text;
  if (!report_path.empty()) write_text_file(report_path, text);
  return 0;
}

int cmd_fit(const std::string& parametrization, const std::string& corrs_path,
            const std::string& target_path, const std::string& norm,
            const std::string& objective, std::size_t steps, double step_size,
            double tol, std::size_t starts, const std::string& out_path,
            const std::optional<std::uint64_t>& seed) {
  FitConfig cfg;
  if (parametrization == "recon")
    cfg.parametrization = Parametrization::RECON;
  else if (parametrization == "epi")
    cfg.parametrization = Parametrization::EPI;
  else
    raise(Errc::ParseError, "parametrization must be recon or epi");
  if (norm != "none") cfg.norm = parse_norm(norm);
  if (objective == "epi-sqr")
    cfg.objective = FitObjective::EPI_SQR_LOSS;
  else if (objective == "supervised")
    cfg.objective = FitObjective::SUPERVISED_L1L2;
  else
    raise(Errc::ParseError, "objective must be epi-sqr or supervised");
  cfg.max_steps = steps;
  cfg.step_size = step_size;
  cfg.grad_tolerance = tol;

  FitData data;
  if (!corrs_path.empty()) data.corrs = read_corrset(corrs_path);
  if (!target_path.empty()) data.target = read_fmat(target_path);
  if (!data.corrs.empty()) {
    // principal point defaults to the correspondence bounding-box center
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& c : data.corrs.pairs) {
      xmin = std::min({xmin, c.p.x, c.q.x});
      xmax = std::max({xmax, c.p.x, c.q.x});
      ymin = std::min({ymin, c.p.y, c.q.y});
      ymax = std::max({ymax, c.p.y, c.q.y});
    }
    cfg.principal1 = Eigen::Vector2d(0.5 * (xmin + xmax), 0.5 * (ymin + ymax));
    cfg.principal2 = cfg.principal1;
  }

  const FitTrace trace = multi_start_fit(cfg, data, starts, seed_or_draw(seed));
  write_text_file(out_path, trace.to_text());
  std::cout << "final_objective " << format_double(trace.final_objective())
            << "\nsteps " << trace.steps << "\nconverged "
            << int(trace.converged) << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& layer, std::size_t trials,
                  const std::optional<std::uint64_t>& seed) {
  if (trials < 1) raise(Errc::ParseError, "--trials must be >= 1");
  GradCheckLayer l;
  if (layer == "recon")
    l = GradCheckLayer::RECON;
  else if (layer == "epi")
    l = GradCheckLayer::EPI;
  else if (layer == "norm-etr")
    l = GradCheckLayer::NORM_ETR;
  else if (layer == "norm-fbn")
    l = GradCheckLayer::NORM_FBN;
  else if (layer == "norm-abs")
    l = GradCheckLayer::NORM_ABS;
  else if (layer == "loss")
    l = GradCheckLayer::LOSS;
  else
    raise(Errc::ParseError, "unknown layer '" + layer + "'");

  const GradCheckReport rep = run_gradcheck(l, trials, seed_or_draw(seed));
  std::cout << "layer " << layer << "\ntrials " << rep.trials << "\nfailures "
            << rep.failures << "\nworst_rel_error "
            << format_double(rep.worst_rel_error) << "\nworst_point "
            << rep.worst_point << "\n";
  for (const auto& n : rep.notes) std::cout << "note " << n << "\n";
  if (!rep.passed()) {
    std::cout << "RESULT FAIL\n";
    return kExitGradFail;
  }
  std::cout << "RESULT PASS\n";
  return 0;
}

int cmd_benchmark(const std::string& spec_path, const std::string& out_path,
                  unsigned threads, const std::optional<std::uint64_t>& seed) {
  BenchmarkSpec spec = benchmark_spec_from_json(read_text_file(spec_path));
  if (seed) spec.seed = *seed;
  const BenchmarkResult result = run_benchmark(spec, threads);
  write_text_file(out_path, result.to_csv());
  std::cout << result.to_table();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-view epipolar geometry toolkit"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "RNG seed (drawn and printed if omitted)");

  // generate
  auto* gen = app.add_subcommand("generate", "generate a synthetic scene");
  std::string gen_config, gen_out = ".";
  gen->add_option("--config", gen_config, "scene config JSON")->required();
  gen->add_option("--output", gen_out, "output directory");

  // estimate
  auto* est = app.add_subcommand("estimate", "estimate F from correspondences");
  std::string est_method, est_corrs, est_norm, est_out = "F_estimated.txt";
  std::string est_report, est_format = "text";
  std::size_t est_iters = 2000;
  double est_thresh = 2.0;
  est->add_option("--method", est_method,
                  "eight-point | norm-eight-point | ransac | lemeds | alg-min")
      ->required();
  est->add_option("--corrs", est_corrs, "correspondence file")->required();
  est->add_option("--norm", est_norm, "etr | fbn | abs (metric report)")
      ->required();
  est->add_option("--output", est_out, "output F file");
  est->add_option("--report", est_report, "also write the report here");
  est->add_option("--format", est_format, "text | csv");
  est->add_option("--iterations", est_iters, "robust hypothesis budget");
  est->add_option("--threshold", est_thresh, "robust inlier threshold (px)");

  // fit
  auto* fitc = app.add_subcommand("fit", "gradient-based fit through the layers");
  std::string fit_param = "recon", fit_corrs, fit_target, fit_norm = "fbn";
  std::string fit_obj = "epi-sqr", fit_out = "fit_trace.txt";
  std::size_t fit_steps = 2000, fit_starts = 8;
  double fit_step_size = 1e-2, fit_tol = 1e-10;
  fitc->add_option("--parametrization", fit_param, "recon | epi");
  fitc->add_option("--corrs", fit_corrs, "correspondence file");
  fitc->add_option("--target", fit_target, "target F file (supervised)");
  fitc->add_option("--norm", fit_norm, "etr | fbn | abs | none");
  fitc->add_option("--objective", fit_obj, "epi-sqr | supervised");
  fitc->add_option("--steps", fit_steps, "max steps");
  fitc->add_option("--step-size", fit_step_size, "gradient-mode step size");
  fitc->add_option("--tol", fit_tol, "gradient tolerance");
  fitc->add_option("--starts", fit_starts, "multi-start count");
  fitc->add_option("--output", fit_out, "trace output file");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "analytic vs finite differences");
  std::string gc_layer;
  std::size_t gc_trials = 100;
  gc->add_option("--layer", gc_layer,
                 "recon | epi | norm-etr | norm-fbn | norm-abs | loss")
      ->required();
  gc->add_option("--trials", gc_trials, "number of random points");

  // benchmark
  auto* bm = app.add_subcommand("benchmark", "Table-style benchmark");
  std::string bm_spec, bm_out = "benchmark.csv";
  unsigned bm_threads = 1;
  bm->add_option("--spec", bm_spec, "benchmark spec JSON")->required();
  bm->add_option("--output", bm_out, "CSV output path");
  bm->add_option("--threads", bm_threads, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_generate(gen_config, gen_out, seed);
    if (est->parsed())
      return cmd_estimate(est_method, est_corrs, est_norm, est_out, est_report,
                          est_format, seed, est_iters, est_thresh);
    if (fitc->parsed())
      return cmd_fit(fit_param, fit_corrs, fit_target, fit_norm, fit_obj,
                     fit_steps, fit_step_size, fit_tol, fit_starts, fit_out,
                     seed);
    if (gc->parsed()) return cmd_gradcheck(gc_layer, gc_trials, seed);
    if (bm->parsed()) return cmd_benchmark(bm_spec, bm_out, bm_threads, seed);
  } catch (const twoview::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
