#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "twoview/estimators.hpp"
#include "twoview/layers.hpp"
#include "twoview/rng.hpp"

namespace twoview {

enum class Parametrization { RECON, EPI };
enum class FitObjective { EPI_SQR_LOSS, SUPERVISED_L1L2 };

/// Step rule. AUTO picks GAUSS_NEWTON for the least-squares correspondence
/// objective and GRADIENT for the non-smooth supervised loss. GRADIENT is
/// plain steepest descent with a halving backtracking line search;
/// GAUSS_NEWTON takes damped Gauss-Newton steps built from the analytic
/// layer Jacobians (the plain mode cannot reach tight tolerances on the
/// badly scaled 8-parameter problem).
enum class DescentMode { AUTO, GRADIENT, GAUSS_NEWTON };

struct FitConfig {
  Parametrization parametrization = Parametrization::RECON;
  std::optional<NormKind> norm;  // applied inside the differentiable chain
  FitObjective objective = FitObjective::EPI_SQR_LOSS;
  double step_size = 1e-2;
  std::size_t max_steps = 2000;
  double grad_tolerance = 1e-10;
  std::uint64_t seed = 0;
  DescentMode descent = DescentMode::AUTO;
  LossWeights weights;
  Eigen::Vector2d principal1 = Eigen::Vector2d::Zero();  // RECON only
  Eigen::Vector2d principal2 = Eigen::Vector2d::Zero();
  std::array<bool, 8> frozen{};  // masked-out parameters keep their value
  double lm_lambda0 = 100.0;     // initial Gauss-Newton damping

  // Sampling ranges for RECON multi-start initialization.
  double init_f_min = 100.0;
  double init_f_max = 1000.0;
  double init_t_span = 1.0;
  double init_r_span = 0.3;
};

struct FitData {
  CorrSet corrs;               // EPI_SQR_LOSS data; also seeds the EPI init
  std::optional<FMat> target;  // SUPERVISED_L1L2 ground truth
};

struct FitTrace {
  std::vector<double> objectives;  // value at init, then per accepted step
  Vec8 final_params = Vec8::Zero();
  FMat final_f;
  bool converged = false;
  bool line_search_failed = false;
  std::size_t steps = 0;

  double final_objective() const {
    return objectives.empty() ? 0.0 : objectives.back();
  }

  std::string to_text() const;
};

namespace detail {

inline FMat param_forward(const Vec8& params, const FitConfig& cfg) {
  if (cfg.parametrization == Parametrization::RECON)
    return reconstruct_forward(ReconParams(params), cfg.principal1,
                               cfg.principal2);
  return epi_forward(EpiParams(params));
}

inline Vec8 param_backward(const Vec8& params, const FitConfig& cfg,
                           const Mat3& upstream) {
  if (cfg.parametrization == Parametrization::RECON)
    return reconstruct_backward(ReconParams(params), cfg.principal1,
                                cfg.principal2, upstream);
  return epi_backward(EpiParams(params), upstream);
}

inline Jacobian9x8 param_jacobian(const Vec8& params, const FitConfig& cfg) {
  if (cfg.parametrization == Parametrization::RECON)
    return reconstruct_jacobian(ReconParams(params), cfg.principal1,
                                cfg.principal2);
  return epi_jacobian(EpiParams(params));
}

inline void check_fit_data(const FitConfig& cfg, const FitData& data) {
  if (cfg.objective == FitObjective::EPI_SQR_LOSS && data.corrs.empty())
    raise(Errc::ParseError, "EPI_SQR_LOSS requires correspondences");
  if (cfg.objective == FitObjective::SUPERVISED_L1L2 && !data.target)
    raise(Errc::ParseError, "SUPERVISED_L1L2 requires a target F");
  if (!(cfg.step_size > 0.0) || cfg.max_steps < 1)
    raise(Errc::ParseError, "invalid FitConfig");
}

}  // namespace detail

/// Objective value and analytic parameter gradient, assembled through the
/// layer backward passes: params -> F -> (normalize) -> loss.
inline std::pair<double, Vec8> objective_and_gradient(const Vec8& params,
                                                      const FitConfig& cfg,
                                                      const FitData& data) {
  detail::check_fit_data(cfg, data);
  const FMat f_raw = detail::param_forward(params, cfg);
  const FMat f = cfg.norm ? normalize(f_raw, *cfg.norm) : f_raw;

  double value = 0.0;
  Mat3 df = Mat3::Zero();
  if (cfg.objective == FitObjective::EPI_SQR_LOSS) {
    for (const auto& c : data.corrs.pairs) {
      const double r = epipolar_residual(f, c.p, c.q);
      value += r * r;
      df += 2.0 * r * c.q.vec() * c.p.vec().transpose();
    }
  } else {
    const FMat gt =
        cfg.norm ? normalize(*data.target, *cfg.norm) : *data.target;
    auto [v, g] = loss_l1l2(f, gt, cfg.weights);
    value = v;
    df = g;
  }

  const Mat3 df_raw =
      cfg.norm ? normalize_backward(f_raw, *cfg.norm, df) : df;
  Vec8 grad = detail::param_backward(params, cfg, df_raw);
  for (int k = 0; k < 8; ++k)
    if (cfg.frozen[std::size_t(k)]) grad(k) = 0.0;
  return {value, grad};
}

namespace detail {

// Residual vector and its n x 8 Jacobian for the correspondence objective
// (rows: d(q^T F~ p)/dtheta), used by the Gauss-Newton mode.
inline void residuals_and_jacobian(const Vec8& params, const FitConfig& cfg,
                                   const FitData& data,
                                   Eigen::VectorXd& res, Eigen::MatrixXd& jac) {
  const FMat f_raw = param_forward(params, cfg);
  const FMat f = cfg.norm ? normalize(f_raw, *cfg.norm) : f_raw;
  const Jacobian9x8 layer_jac = param_jacobian(params, cfg);
  Jacobian9x8 chain = layer_jac;
  if (cfg.norm)
    for (int k = 0; k < 8; ++k)
      chain.col(k) =
          vec9(normalize_forward_diff(f_raw, *cfg.norm, unvec9(layer_jac.col(k))));
  const std::size_t n = data.corrs.size();
  res.resize(Eigen::Index(n));
  jac.resize(Eigen::Index(n), 8);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = data.corrs.pairs[i];
    res(Eigen::Index(i)) = epipolar_residual(f, c.p, c.q);
    const Vec9 outer = vec9(c.q.vec() * c.p.vec().transpose());
    jac.row(Eigen::Index(i)) = (outer.transpose() * chain);
  }
  for (int k = 0; k < 8; ++k)
    if (cfg.frozen[std::size_t(k)]) jac.col(k).setZero();
}

inline bool params_admissible(const Vec8& params, const FitConfig& cfg) {
  if (cfg.parametrization == Parametrization::RECON)
    return params(0) > 0.0 && params(1) > 0.0 &&
           params.segment<3>(2).norm() >= 1e-12;
  Eigen::Matrix<double, 3, 2> cols;
  cols.col(0) = params.segment<3>(0);
  cols.col(1) = params.segment<3>(3);
  Eigen::JacobiSVD<Eigen::Matrix<double, 3, 2>> svd(cols);
  return svd.singularValues()(1) > 1e-8 * svd.singularValues()(0);
}

}  // namespace detail

/// Descent with monotone step acceptance. Evaluation failures at candidate
/// points reject the candidate; failures at the current point propagate.
inline FitTrace fit(const Vec8& init, const FitConfig& cfg,
                    const FitData& data) {
  detail::check_fit_data(cfg, data);
  DescentMode mode = cfg.descent;
  if (mode == DescentMode::AUTO)
    mode = cfg.objective == FitObjective::EPI_SQR_LOSS
               ? DescentMode::GAUSS_NEWTON
               : DescentMode::GRADIENT;
  if (mode == DescentMode::GAUSS_NEWTON &&
      cfg.objective != FitObjective::EPI_SQR_LOSS)
    mode = DescentMode::GRADIENT;  // supervised loss has an L1 kink

  FitTrace trace;
  Vec8 params = init;
  auto [value, grad] = objective_and_gradient(params, cfg, data);
  trace.objectives.push_back(value);

  double lambda = cfg.lm_lambda0;
  Eigen::VectorXd res;
  Eigen::MatrixXd jac;
  for (std::size_t step = 0; step < cfg.max_steps; ++step) {
    if (grad.norm() < cfg.grad_tolerance) {
      trace.converged = true;
      break;
    }
    bool accepted = false;
    Vec8 next;
    double next_value = 0.0;

    if (mode == DescentMode::GRADIENT) {
      double alpha = cfg.step_size;
      for (int h = 0; h < 30 && !accepted; ++h, alpha *= 0.5) {
        const Vec8 cand = params - alpha * grad;
        if (!detail::params_admissible(cand, cfg)) continue;
        try {
          auto [v, g] = objective_and_gradient(cand, cfg, data);
          if (v < value) {
            accepted = true;
            next = cand;
            next_value = v;
            grad = g;
          }
        } catch (const Error&) {
        }
      }
    } else {
      detail::residuals_and_jacobian(params, cfg, data, res, jac);
      const Eigen::Matrix<double, 8, 8> h = 2.0 * jac.transpose() * jac;
      const Vec8 g2 = 2.0 * jac.transpose() * res;
      Vec8 damp = h.diagonal().cwiseMax(1e-12);
      for (int t = 0; t < 30 && !accepted; ++t) {
        Eigen::Matrix<double, 8, 8> m = h;
        m.diagonal() += lambda * damp;
        const Vec8 d = m.ldlt().solve(-g2);
        const Vec8 cand = params + d;
        if (!detail::params_admissible(cand, cfg)) {
          lambda *= 10.0;
          continue;
        }
        try {
          auto [v, g] = objective_and_gradient(cand, cfg, data);
          if (v < value) {
            accepted = true;
            next = cand;
            next_value = v;
            grad = g;
            lambda = std::max(lambda * 0.7, 1e-14);
            break;
          }
        } catch (const Error&) {
        }
        lambda *= 10.0;
      }
    }

    if (!accepted) {
      trace.line_search_failed = true;
      break;
    }
    params = next;
    value = next_value;
    trace.objectives.push_back(value);
    trace.steps = step + 1;
  }

  trace.final_params = params;
  trace.final_f = detail::param_forward(params, cfg);
  return trace;
}

/// Deterministic multi-start driver: one RNG substream per start, lowest
/// final objective wins (start index breaks ties).
inline FitTrace multi_start_fit(const FitConfig& cfg, const FitData& data,
                                std::size_t n_starts, std::uint64_t seed) {
  if (n_starts < 1) raise(Errc::ParseError, "n_starts must be >= 1");
  detail::check_fit_data(cfg, data);

  // Base init for the EPI parametrization: columns of the eight-point
  // estimate (or of the supervised target), third column regressed onto
  // the first two.
  std::optional<Vec8> epi_base;
  if (cfg.parametrization == Parametrization::EPI) {
    FMat base;
    if (!data.corrs.empty() && data.corrs.size() >= 8)
      base = eight_point(data.corrs);
    else if (data.target)
      base = canonicalized(*data.target);
    else
      raise(Errc::ParseError, "EPI initialization needs >= 8 pairs or a target");
    Eigen::Matrix<double, 3, 2> cols;
    cols.col(0) = base.m.col(0);
    cols.col(1) = base.m.col(1);
    const Eigen::Vector2d ab =
        cols.colPivHouseholderQr().solve(base.m.col(2));
    Vec8 v;
    v << base.m.col(0), base.m.col(1), ab.x(), ab.y();
    epi_base = v;
  }

  std::optional<FitTrace> best;
  std::size_t failures = 0;
  for (std::size_t s = 0; s < n_starts; ++s) {
    auto eng = make_engine(seed, s, /*salt=*/0x6d756c74ULL);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec8 init;
    if (cfg.parametrization == Parametrization::RECON) {
      std::uniform_real_distribution<double> fdist(cfg.init_f_min,
                                                   cfg.init_f_max);
      init(0) = fdist(eng);
      init(1) = fdist(eng);
      Vec3 t;
      do {
        t = Vec3(unit(eng), unit(eng), unit(eng)) * cfg.init_t_span;
      } while (t.norm() < 1e-6);
      init.segment<3>(2) = t;
      init.segment<3>(5) =
          Vec3(unit(eng), unit(eng), unit(eng)) * cfg.init_r_span;
    } else {
      init = *epi_base;
      if (s > 0) {
        const double scale = 0.3 * init.cwiseAbs().maxCoeff();
        for (int k = 0; k < 8; ++k) init(k) += scale * gauss(eng);
      }
    }
    try {
      FitTrace t = fit(init, cfg, data);
      if (!best || t.final_objective() < best->final_objective()) best = t;
    } catch (const Error&) {
      ++failures;
    }
  }
  if (!best)
    raise(Errc::AllStartsFailed,
          "all " + std::to_string(failures) + " starts raised layer errors");
  return *best;
}

inline std::string FitTrace::to_text() const {
  std::string s;
  s += "steps," + std::to_string(steps) + "\n";
  s += "converged," + std::to_string(int(converged)) + "\n";
  s += "line_search_failed," + std::to_string(int(line_search_failed)) + "\n";
  s += "final_objective," + format_double(final_objective()) + "\n";
  s += "step,objective\n";
  for (std::size_t i = 0; i < objectives.size(); ++i)
    s += std::to_string(i) + "," + format_double(objectives[i]) + "\n";
  s += "final_F\n";
  s += fmat_to_text(final_f);
  return s;
}

}  // namespace twoview
