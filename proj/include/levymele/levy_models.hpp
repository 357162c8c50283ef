#pragma once

// Characteristic functions, return densities and changes of measure for the
// Black-Scholes, Merton jump-diffusion and Kou double-exponential models.
//
// All functions take the period length explicitly through MarketEnv::delta so
// that multi-period constraints can reuse them with horizon k * delta.

#include <cmath>
#include <complex>
#include <numbers>
#include <type_traits>
#include <variant>

#include "levymele/error.hpp"
#include "levymele/numerics.hpp"
#include "levymele/params.hpp"

namespace levymele {

inline constexpr cplx kI{0.0, 1.0};

// ---------------------------------------------------------------------------
// Levy exponents. For a log-return X over horizon T, E[exp(iuX)] = exp(T psi(u)).
// Complex u is allowed (needed by the Fourier pricers); the caller is
// responsible for staying inside the model's moment strip.
// ---------------------------------------------------------------------------

/// Diffusion part with log-drift `log_drift` (already Ito-corrected).
inline cplx diffusion_exponent(cplx u, double log_drift, double sigma) {
  return kI * u * log_drift - 0.5 * sigma * sigma * u * u;
}

inline cplx merton_jump_exponent(cplx u, const MertonParams& p) {
  return p.lambda * (std::exp(kI * u * p.mu_j - 0.5 * p.sigma_j * p.sigma_j * u * u) - 1.0);
}

inline cplx kou_jump_exponent(cplx u, const KouParams& p) {
  return p.lambda * (p.p * p.eta1 / (p.eta1 - kI * u) + (1.0 - p.p) * p.eta2 / (p.eta2 + kI * u) - 1.0);
}

/// Physical-measure Levy exponent of the log-return.
inline cplx physical_exponent(cplx u, const BsParams& p) {
  return diffusion_exponent(u, p.mu - 0.5 * p.sigma * p.sigma, p.sigma);
}
inline cplx physical_exponent(cplx u, const MertonParams& p) {
  const double drift = p.mu - p.lambda * p.kappa() - 0.5 * p.sigma * p.sigma;
  return diffusion_exponent(u, drift, p.sigma) + merton_jump_exponent(u, p);
}
/// Kou's drift is not jump-compensated under the physical measure.
inline cplx physical_exponent(cplx u, const KouParams& p) {
  return diffusion_exponent(u, p.mu - 0.5 * p.sigma * p.sigma, p.sigma) + kou_jump_exponent(u, p);
}

/// Risk-neutral log-drift per year: r - sigma^2/2 - lambda * E[e^Y - 1].
inline double risk_neutral_log_drift(const BsParams& p, double r) { return r - 0.5 * p.sigma * p.sigma; }
inline double risk_neutral_log_drift(const MertonParams& p, double r) {
  return r - 0.5 * p.sigma * p.sigma - p.lambda * p.kappa();
}
inline double risk_neutral_log_drift(const KouParams& p, double r) {
  return r - 0.5 * p.sigma * p.sigma - p.lambda * p.zeta();
}

/// Levy exponent under the jump-risk-neutral martingale measure (jump law unchanged).
inline cplx risk_neutral_exponent(cplx u, const BsParams& p, double r) {
  return diffusion_exponent(u, risk_neutral_log_drift(p, r), p.sigma);
}
inline cplx risk_neutral_exponent(cplx u, const MertonParams& p, double r) {
  return diffusion_exponent(u, risk_neutral_log_drift(p, r), p.sigma) + merton_jump_exponent(u, p);
}
inline cplx risk_neutral_exponent(cplx u, const KouParams& p, double r) {
  return diffusion_exponent(u, risk_neutral_log_drift(p, r), p.sigma) + kou_jump_exponent(u, p);
}

// ---------------------------------------------------------------------------
// One-period characteristic functions under P.
// ---------------------------------------------------------------------------

inline cplx cf_bs(double t, const BsParams& p, const MarketEnv& env) {
  return std::exp(env.delta * physical_exponent(cplx(t), p));
}

inline cplx cf_merton(double t, const MertonParams& p, const MarketEnv& env) {
  return std::exp(env.delta * physical_exponent(cplx(t), p));
}

/// Built from the Levy density of the double-exponential jumps.
inline cplx cf_kou(double t, const KouParams& p, const MarketEnv& env) {
  return std::exp(env.delta * physical_exponent(cplx(t), p));
}

inline cplx cf(double t, const ModelParams& theta, const MarketEnv& env) {
  return std::exp(env.delta * std::visit([t](const auto& p) { return physical_exponent(cplx(t), p); },
                                         theta.dynamics));
}

// ---------------------------------------------------------------------------
// Densities.
// ---------------------------------------------------------------------------

namespace detail {
inline double log_normal_density(double x, double mean, double variance) {
  const double z = x - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * variance) - 0.5 * z * z / variance;
}
}  // namespace detail

inline constexpr int kMertonMaxTerms = 60;

/// log of the Poisson-mixture density of the Merton one-period log-return.
/// `drift` is mu for the physical law and r for the risk-neutral one.
///
/// The series is cut once a bound on the remaining tail falls below 1e-14 of
/// the partial sum; reaching kMertonMaxTerms with a relative bound above 1e-10
/// throws TruncationNotConverged.
inline double log_density_merton(double x, const MertonParams& p, const MarketEnv& env, double drift) {
  const double delta = env.delta;
  const double base = (drift - 0.5 * p.sigma * p.sigma - p.lambda * p.kappa()) * delta;
  const double diffusion_var = delta * p.sigma * p.sigma;
  const double jump_var = p.sigma_j * p.sigma_j;
  const double intensity = p.lambda * delta;

  if (intensity == 0.0) return detail::log_normal_density(x, base, diffusion_var);

  const double log_intensity = std::log(intensity);
  LogSumExp sum;
  double log_weight = -intensity;  // log Poisson weight of n jumps
  for (int n = 0;; ++n) {
    const double var = diffusion_var + n * jump_var;
    sum.add(log_weight + detail::log_normal_density(x, base + n * p.mu_j, var));

    const double next_log_weight = log_weight + log_intensity - std::log(n + 1.0);
    if (n + 2 > intensity) {
      // P(N > n) <= w_{n+1} / (1 - intensity / (n + 2)); each density <= 1/sqrt(2 pi v_{n+1}).
      const double log_tail = next_log_weight - std::log1p(-intensity / (n + 2.0)) -
                              0.5 * std::log(2.0 * std::numbers::pi * (diffusion_var + (n + 1) * jump_var));
      const double rel_tail = std::exp(log_tail - sum.value());
      if (rel_tail < 1e-14) break;
      if (n + 1 >= kMertonMaxTerms) {
        if (rel_tail > 1e-10) {
          throw Error(ErrorCode::TruncationNotConverged,
                      "Merton density series tail bound " + std::to_string(rel_tail) + " at x = " + std::to_string(x));
        }
        break;
      }
    }
    log_weight = next_log_weight;
  }
  return sum.value();
}

inline double density_merton(double x, const MertonParams& p, const MarketEnv& env, double drift) {
  return std::exp(log_density_merton(x, p, env, drift));
}

/// log of the one-jump approximation to Kou's return density: a (1 - lambda delta)
/// weighted normal plus lambda delta weighted normal-plus-exponential terms.
/// `drift` is the per-year location of the diffusion part, so lambda = 0 gives
/// N(drift * delta, sigma^2 delta).
///
/// The two branches are summed (the one-jump mixture), not equated.
inline double log_density_kou_approx(double x, const KouParams& p, const MarketEnv& env, double drift) {
  const double delta = env.delta;
  const double intensity = p.lambda * delta;
  if (intensity >= 1.0) {
    throw Error(ErrorCode::InvalidRegime, "lambda * delta = " + std::to_string(intensity) + " >= 1");
  }
  const double sd = p.sigma * std::sqrt(delta);
  const double y = x - drift * delta;
  const double s2d = p.sigma * p.sigma * delta;

  LogSumExp sum;
  sum.add(std::log1p(-intensity) + detail::log_normal_density(y, 0.0, s2d));
  if (intensity > 0.0 && p.p > 0.0) {
    sum.add(std::log(intensity * p.p * p.eta1) + 0.5 * s2d * p.eta1 * p.eta1 - y * p.eta1 +
            log_norm_cdf((y - s2d * p.eta1) / sd));
  }
  if (intensity > 0.0 && p.p < 1.0) {
    sum.add(std::log(intensity * (1.0 - p.p) * p.eta2) + 0.5 * s2d * p.eta2 * p.eta2 + y * p.eta2 +
            log_norm_cdf(-(y + s2d * p.eta2) / sd));
  }
  return sum.value();
}

inline double density_kou_approx(double x, const KouParams& p, const MarketEnv& env, double drift) {
  return std::exp(log_density_kou_approx(x, p, env, drift));
}

// ---------------------------------------------------------------------------
// Radon-Nikodym derivatives dQ/dP evaluated at a one-period log-return R.
// ---------------------------------------------------------------------------

inline double rn_bs(double R, const BsParams& p, const MarketEnv& env) {
  const double s2 = p.sigma * p.sigma;
  const double d = env.r - p.mu;
  return std::exp(d / s2 * R - (env.r * env.r - p.mu * p.mu) / (2.0 * s2) * env.delta + 0.5 * d * env.delta);
}

/// Ratio of the risk-neutral (drift r) to the physical (drift mu) mixture density.
inline double rn_merton(double R, const MertonParams& p, const MarketEnv& env) {
  if (p.mu == env.r) return 1.0;
  return std::exp(log_density_merton(R, p, env, env.r) - log_density_merton(R, p, env, p.mu));
}

/// Ratio of approximate densities. The risk-neutral location carries the jump
/// compensator r - sigma^2/2 - lambda zeta; the physical one is mu - sigma^2/2.
inline double rn_kou(double R, const KouParams& p, const MarketEnv& env) {
  const double half_var = 0.5 * p.sigma * p.sigma;
  const double q_drift = risk_neutral_log_drift(p, env.r);
  const double p_drift = p.mu - half_var;
  if (q_drift == p_drift) return 1.0;
  return std::exp(log_density_kou_approx(R, p, env, q_drift) - log_density_kou_approx(R, p, env, p_drift));
}

/// Utility-based change of measure for a power-utility investor whose
/// endowment is the asset itself.
inline double rn_risk_premium(double R, double mu, double sigma, RiskPreference pref, const MarketEnv& env) {
  const double a = pref.alpha;
  return std::exp(env.delta * ((1.0 - a) * mu - 0.5 * sigma * sigma * (1.0 - a) * (2.0 - a)) + R * (a - 1.0));
}

inline double rn(double R, const ModelParams& theta, const MarketEnv& env) {
  if (theta.pref) {
    return rn_risk_premium(R, drift_of(theta.dynamics), sigma_of(theta.dynamics), *theta.pref, env);
  }
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, BsParams>) {
          return rn_bs(R, p, env);
        } else if constexpr (std::is_same_v<T, MertonParams>) {
          return rn_merton(R, p, env);
        } else {
          return rn_kou(R, p, env);
        }
      },
      theta.dynamics);
}

// ---------------------------------------------------------------------------
// Moment generating exponents: E[exp(x X_t)] = exp(G(x) t) with
// G(x) = mu_tilde x + x^2 sigma^2 / 2 + lambda (E[e^{xY}] - 1).
// ---------------------------------------------------------------------------

template <class T>
T mgf_exponent(T x, const BsParams& p, double mu_tilde) {
  return mu_tilde * x + 0.5 * x * x * p.sigma * p.sigma;
}

template <class T>
T mgf_exponent(T x, const MertonParams& p, double mu_tilde) {
  return mu_tilde * x + 0.5 * x * x * p.sigma * p.sigma +
         p.lambda * (std::exp(p.mu_j * x + 0.5 * p.sigma_j * p.sigma_j * x * x) - 1.0);
}

/// Defined on the strip -eta2 < Re x < eta1.
template <class T>
T mgf_exponent(T x, const KouParams& p, double mu_tilde) {
  const double re = std::real(x);
  if (!(re < p.eta1 && re > -p.eta2)) {
    throw Error(ErrorCode::DomainError, "Kou MGF undefined at Re x = " + std::to_string(re));
  }
  return mu_tilde * x + 0.5 * x * x * p.sigma * p.sigma +
         p.lambda * (p.p * p.eta1 / (p.eta1 - x) + (1.0 - p.p) * p.eta2 / (p.eta2 + x) - 1.0);
}

/// Upper end of the MGF strip: E[e^{xX}] < inf requires x < moment_bound.
inline double moment_bound(const BsParams&) { return kInf; }
inline double moment_bound(const MertonParams&) { return kInf; }
inline double moment_bound(const KouParams& p) { return p.eta1; }

inline double lower_moment_bound(const BsParams&) { return -kInf; }
inline double lower_moment_bound(const MertonParams&) { return -kInf; }
inline double lower_moment_bound(const KouParams& p) { return -p.eta2; }

}  // namespace levymele
