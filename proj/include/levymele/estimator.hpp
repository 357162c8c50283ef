#pragma once

// Outer minimization of the integrated objective over theta: Nelder-Mead in
// transformed coordinates with random restarts, then the sandwich covariance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "levymele/asymptotics.hpp"
#include "levymele/el_engine.hpp"
#include "levymele/error.hpp"
#include "levymele/nelder_mead.hpp"
#include "levymele/params.hpp"
#include "levymele/rng.hpp"

namespace levymele {

enum class Transform { Identity, Log, LogShift, Logit };

/// Coordinates the simplex moves in: log for scales, log(eta1 - 1), logit for probabilities.
inline Transform transform_for(const std::string& name) {
  if (name == "mu" || name == "mu_j") return Transform::Identity;
  if (name == "eta1") return Transform::LogShift;
  if (name == "p" || name == "alpha") return Transform::Logit;
  return Transform::Log;
}

inline double to_search(Transform t, double x) {
  switch (t) {
    case Transform::Identity: return x;
    case Transform::Log: return std::log(x);
    case Transform::LogShift: return std::log(x - 1.0);
    case Transform::Logit: return std::log(x / (1.0 - x));
  }
  return x;
}

inline double from_search(Transform t, double z) {
  switch (t) {
    case Transform::Identity: return z;
    case Transform::Log: return std::exp(z);
    case Transform::LogShift: return 1.0 + std::exp(z);
    case Transform::Logit: return 1.0 / (1.0 + std::exp(-z));
  }
  return z;
}

struct ParameterBounds {
  std::vector<double> lower;
  std::vector<double> upper;

  static ParameterBounds defaults(ModelKind kind, bool with_pref) {
    ParameterBounds b;
    for (const auto& name : parameter_names(kind, with_pref)) {
      double lo = 0.0, hi = 0.0;
      if (name == "mu" || name == "mu_j") {
        lo = -2.0, hi = 2.0;
      } else if (name == "sigma" || name == "sigma_j") {
        lo = 1e-3, hi = 2.0;
      } else if (name == "lambda") {
        lo = 0.01, hi = 20.0;
      } else if (name == "p" || name == "alpha") {
        lo = 1e-4, hi = 1.0 - 1e-4;
      } else if (name == "eta1") {
        lo = 1.01, hi = 100.0;
      } else if (name == "eta2") {
        lo = 0.5, hi = 100.0;
      }
      b.lower.push_back(lo);
      b.upper.push_back(hi);
    }
    return b;
  }
};

struct EstimatorOptions {
  int restarts = 5;              // random starts in addition to the supplied initial value
  std::uint64_t seed = 20240601;
  double simplex_tol = 1e-6;     // in transformed coordinates
  int max_evals_per_start = 3000;
  double initial_step = 0.1;     // fraction of the transformed box width
  bool polish = true;            // one more simplex from the best point found
  bool compute_covariance = true;
  bool keep_details = false;     // keep per-node multipliers and weights at theta_hat
  InnerOptions inner;
};

struct EstimationDiagnostics {
  int evaluations = 0;
  int infeasible_evaluations = 0;
  long inner_iterations = 0;
  int starts = 0;
  int converged_starts = 0;
  bool at_boundary = false;
  std::vector<std::string> boundary_parameters;
  std::string covariance_note;
};

struct EstimationResult {
  ModelParams theta_hat;
  double objective = kInf;
  std::size_t sample_size = 0;
  bool has_covariance = false;
  Eigen::MatrixXd sigma_hat;             // covariance of sqrt(n) (theta_hat - theta)
  std::vector<double> standard_errors;   // sqrt(diag(sigma_hat) / n)
  ObjectiveEvaluation details;
  EstimationDiagnostics diagnostics;
};

inline EstimationResult estimate(const ReturnSeries& returns, const ConstraintSet& cset, const ModelParams& init,
                                 const ParameterBounds& bounds, const EstimatorOptions& opt = {}) {
  const ModelKind kind = init.kind();
  const bool with_pref = init.has_pref();
  const std::vector<std::string> names = parameter_names(kind, with_pref);
  const std::size_t d = names.size();
  if (bounds.lower.size() != d || bounds.upper.size() != d) {
    throw Error(ErrorCode::InvalidArgument, "bounds do not match the parameter count");
  }

  std::vector<Transform> tf(d);
  std::vector<double> zlo(d), zhi(d), step(d);
  for (std::size_t i = 0; i < d; ++i) {
    tf[i] = transform_for(names[i]);
    zlo[i] = to_search(tf[i], bounds.lower[i]);
    zhi[i] = to_search(tf[i], bounds.upper[i]);
    if (!(std::isfinite(zlo[i]) && std::isfinite(zhi[i]) && zlo[i] < zhi[i])) {
      throw Error(ErrorCode::InvalidArgument, "invalid bounds for " + names[i]);
    }
    step[i] = opt.initial_step * (zhi[i] - zlo[i]);
  }

  auto to_theta = [&](const std::vector<double>& z) {
    std::vector<double> v(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = from_search(tf[i], z[i]);
    return from_vector(kind, with_pref, v);
  };

  const ObjectiveFunction obj(returns, cset, opt.inner);
  EstimationResult res;
  auto& diag = res.diagnostics;
  ObjectiveFunction::WarmStart warm;
  auto f = [&](const std::vector<double>& z) {
    ++diag.evaluations;
    const ObjectiveEvaluation e = obj.evaluate(to_theta(z), false, &warm);
    if (!e.feasible) ++diag.infeasible_evaluations;
    diag.inner_iterations += e.inner_iterations;
    return e.surrogate;
  };

  std::vector<std::vector<double>> starts;
  {
    const std::vector<double> v = to_vector(init);
    std::vector<double> z(d);
    for (std::size_t i = 0; i < d; ++i) z[i] = std::clamp(to_search(tf[i], v[i]), zlo[i], zhi[i]);
    starts.push_back(z);
  }
  Rng rng(opt.seed);
  for (int r = 0; r < opt.restarts; ++r) {
    std::vector<double> z(d);
    for (int attempt = 0; attempt < 50; ++attempt) {
      for (std::size_t i = 0; i < d; ++i) z[i] = zlo[i] + (zhi[i] - zlo[i]) * rng.uniform();
      if (obj.evaluate(to_theta(z)).feasible) break;
    }
    starts.push_back(z);
  }

  NelderMeadOptions nm;
  nm.diameter_tol = opt.simplex_tol;
  nm.max_evals = opt.max_evals_per_start;
  NelderMeadResult best;
  best.fx = kInf;
  for (const auto& z0 : starts) {
    const NelderMeadResult r = nelder_mead(f, z0, step, zlo, zhi, nm);
    ++diag.starts;
    if (r.converged) ++diag.converged_starts;
    if (r.fx < best.fx) best = r;
  }
  if (opt.polish && std::isfinite(best.fx)) {
    std::vector<double> small(d);
    for (std::size_t i = 0; i < d; ++i) small[i] = 0.1 * step[i];
    const NelderMeadResult r = nelder_mead(f, best.x, small, zlo, zhi, nm);
    ++diag.starts;
    if (r.converged) ++diag.converged_starts;
    if (r.fx <= best.fx) best = r;
  }

  for (std::size_t i = 0; i < d; ++i) {
    const double margin = 1e-3 * (zhi[i] - zlo[i]);
    if (best.x[i] - zlo[i] < margin || zhi[i] - best.x[i] < margin) {
      diag.at_boundary = true;
      diag.boundary_parameters.push_back(names[i]);
    }
  }

  if (!(best.fx < kInfeasiblePenalty)) {
    // Report where the hull violation was smallest; degenerate data (sigma = 0)
    // ends up on the lower bound of sigma.
    std::string msg = "no parameter value keeps zero inside every convex hull; closest point";
    const std::vector<double> v = to_vector(to_theta(best.x));
    for (std::size_t i = 0; i < d; ++i) msg += " " + names[i] + "=" + std::to_string(v[i]);
    if (diag.at_boundary) {
      msg += ", on the search boundary for";
      for (const auto& b : diag.boundary_parameters) msg += " " + b;
    }
    throw Error(ErrorCode::InfeasibleEverywhere, msg);
  }
  if (diag.converged_starts == 0) {
    throw Error(ErrorCode::NoConvergence, "no simplex reached diameter " + std::to_string(opt.simplex_tol));
  }

  res.theta_hat = to_theta(best.x);
  res.details = obj.evaluate(res.theta_hat, opt.keep_details);
  res.objective = res.details.value;
  res.sample_size = returns.size();

  if (opt.compute_covariance) {
    try {
      const SandwichResult sw = sandwich_sigma(obj, res.theta_hat);
      res.sigma_hat = sw.sigma;
      res.standard_errors = sw.standard_errors();
      res.has_covariance = true;
      diag.covariance_note = sw.note;
    } catch (const Error& e) {
      diag.covariance_note = e.what();
    }
  }
  return res;
}

}  // namespace levymele
