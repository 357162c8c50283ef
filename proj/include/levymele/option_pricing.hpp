#pragma once

// Normalized European call prices c = C / S as a function of moneyness
// m = S / K. Spot is fixed at 1, so the strike is 1/m.

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>

#include "levymele/error.hpp"
#include "levymele/levy_models.hpp"
#include "levymele/numerics.hpp"
#include "levymele/params.hpp"

namespace levymele {

struct PricerConfig {
  double carr_madan_alpha = 1.5;
  bool auto_damping = true;   // shrink alpha to 0.75 (bound - 1) when the moment strip binds
  int fourier_intervals = 4096;
  double fourier_limit = 400.0;
  double fourier_tol = 1e-8;  // allowed change when the Simpson grid is doubled
  double laplace_c = 1.0;     // abscissa of the Bromwich line
  double laplace_tol = 1e-9;
  int merton_trunc = 200;
  double cross_check_tol = 1e-3;
};

inline void validate(const PricerConfig& cfg) {
  detail::require(cfg.fourier_intervals >= 64, "fourier_intervals must be >= 64");
  detail::require(cfg.fourier_limit > 0.0, "fourier_limit must be positive");
  detail::require(cfg.fourier_tol > 0.0 && cfg.laplace_tol > 0.0, "tolerances must be positive");
  detail::require(cfg.laplace_c > 0.0, "laplace_c must be positive");
  detail::require(cfg.merton_trunc >= 1, "merton_trunc must be >= 1");
}

/// Lower no-arbitrage bound max(1 - e^{-rT}/m, 0).
inline double intrinsic_bound(double m, double r, double T) { return std::max(1.0 - std::exp(-r * T) / m, 0.0); }

/// Black-Scholes call over horizon env.delta.
inline double price_bs(double m, double sigma, const MarketEnv& env) {
  const double T = env.delta;
  const double vol = sigma * std::sqrt(T);
  if (vol < 1e-12) return intrinsic_bound(m, env.r, T);
  const double d1 = (std::log(m) + (env.r + 0.5 * sigma * sigma) * T) / vol;
  const double d2 = d1 - vol;
  return norm_cdf(d1) - std::exp(-env.r * T) / m * norm_cdf(d2);
}

/// Poisson mixture of Black-Scholes prices with jump-adjusted volatility and rate.
inline double price_merton_series(double m, const MertonParams& p, const MarketEnv& env,
                                  const PricerConfig& cfg = {}) {
  if (p.lambda == 0.0) return price_bs(m, p.sigma, env);
  const double T = env.delta;
  const double kappa = p.kappa();
  const double jump_log_mean = p.mu_j + 0.5 * p.sigma_j * p.sigma_j;  // log(1 + kappa)
  const double intensity = p.lambda * (1.0 + kappa) * T;

  double total = 0.0;
  double log_weight = -intensity;
  for (int n = 0; n <= cfg.merton_trunc; ++n) {
    const double sigma_n = std::sqrt(p.sigma * p.sigma + n * p.sigma_j * p.sigma_j / T);
    const double r_n = env.r - p.lambda * kappa + n * jump_log_mean / T;
    total += std::exp(log_weight) * price_bs(m, sigma_n, MarketEnv{r_n, T});

    const double next = log_weight + std::log(intensity) - std::log(n + 1.0);
    if (n + 2 > intensity) {
      // Normalized calls are at most 1, so the Poisson tail mass bounds the remainder.
      const double tail = std::exp(next) / (1.0 - intensity / (n + 2.0));
      if (tail < 1e-16) return total;
    }
    log_weight = next;
  }
  const double tail = std::exp(log_weight);
  if (tail > 1e-10) {
    throw Error(ErrorCode::TruncationNotConverged,
                "Merton price series still has tail mass " + std::to_string(tail) + " after " +
                    std::to_string(cfg.merton_trunc) + " terms");
  }
  return total;
}

namespace detail {

/// Damping used by Carr-Madan given E[S_T^x] < inf for lower < x < upper.
inline double carr_madan_damping(const PricerConfig& cfg, double lower, double upper) {
  double a = cfg.carr_madan_alpha;
  if (a >= -1.0 && a <= 0.0) {
    throw Error(ErrorCode::DampingInvalid, "damping must be > 0 (call) or < -1 (put), got " + std::to_string(a));
  }
  if (a > 0.0 && a + 1.0 >= upper) {
    if (!cfg.auto_damping || upper <= 1.0) {
      throw Error(ErrorCode::DampingInvalid, "alpha + 1 = " + std::to_string(a + 1.0) +
                                                 " outside moment strip (upper " + std::to_string(upper) + ")");
    }
    a = 0.75 * (upper - 1.0);
  }
  if (a < -1.0 && a + 1.0 <= lower) {
    throw Error(ErrorCode::DampingInvalid, "alpha + 1 = " + std::to_string(a + 1.0) +
                                               " outside moment strip (lower " + std::to_string(lower) + ")");
  }
  return a;
}

}  // namespace detail

/// Carr-Madan damped Fourier price. `cf_q(u)` is E^Q[exp(iu log S_T)] with
/// S_0 = 1, for complex u in the moment strip (lower, upper) on the imaginary
/// axis. A negative damping below -1 returns the put instead of the call.
template <class Cf>
double price_carr_madan(double m, Cf&& cf_q, double T, double r, const PricerConfig& cfg = {},
                        double upper_moment = kInf, double lower_moment = -kInf) {
  const double alpha = detail::carr_madan_damping(cfg, lower_moment, upper_moment);
  const double k = -std::log(m);
  const double disc = std::exp(-r * T);

  auto integrand = [&](double u) {
    const cplx shifted(u, -(alpha + 1.0));
    const cplx denom(alpha * alpha + alpha - u * u, (2.0 * alpha + 1.0) * u);
    return (std::exp(cplx(0.0, -u * k)) * disc * cf_q(shifted) / denom).real();
  };
  auto envelope = [&](double u) {
    const cplx shifted(u, -(alpha + 1.0));
    const cplx denom(alpha * alpha + alpha - u * u, (2.0 * alpha + 1.0) * u);
    return std::abs(disc * cf_q(shifted) / denom);
  };

  const double scale = std::exp(-alpha * k) / std::numbers::pi;
  const double h0 = cfg.fourier_limit / cfg.fourier_intervals;
  double limit = cfg.fourier_limit;
  while (scale * envelope(limit) * limit > 1e-14) {
    limit *= 2.0;
    if (limit > 1e6) {
      throw Error(ErrorCode::QuadratureNotConverged, "Fourier integrand has not decayed by u = 1e6");
    }
  }

  int intervals = static_cast<int>(std::ceil(limit / h0));
  intervals = (intervals + 3) / 4 * 4;  // the halved grid must still have an even count
  double previous = kInf;
  for (int attempt = 0; attempt < 4; ++attempt) {
    const double h = limit / intervals;
    double odd = 0.0, even_odd = 0.0, even_even = 0.0;
    const double f0 = integrand(0.0);
    const double fN = integrand(limit);
    for (int i = 1; i < intervals; ++i) {
      const double v = integrand(i * h);
      if (i % 2 == 1) {
        odd += v;
      } else if ((i / 2) % 2 == 1) {
        even_odd += v;
      } else {
        even_even += v;
      }
    }
    const double fine = h / 3.0 * (f0 + fN + 4.0 * odd + 2.0 * (even_odd + even_even));
    const double coarse = 2.0 * h / 3.0 * (f0 + fN + 4.0 * even_odd + 2.0 * even_even);
    const double diff = scale * std::abs(fine - coarse);
    if (diff <= cfg.fourier_tol || scale * std::abs(fine - previous) <= cfg.fourier_tol) {
      return scale * fine;
    }
    previous = fine;
    intervals *= 2;
  }
  throw Error(ErrorCode::QuadratureNotConverged,
              "Simpson estimate still changing after grid doubling at m = " + std::to_string(m));
}

/// Risk-neutral characteristic function of log S_T (S_0 = 1) for any model.
template <class Model>
auto risk_neutral_cf(const Model& p, double r, double T) {
  return [p, r, T](cplx u) { return std::exp(T * risk_neutral_exponent(u, p, r)); };
}

/// Call price by inverting its Laplace transform in log-moneyness,
///   f(xi) = e^{-rT} exp(G(xi + 1) T) / (xi (xi + 1)),
/// along the vertical line Re xi = c with the trapezoid rule. The integrand is
/// analytic in a strip around the line, so the rule converges geometrically.
template <class Model>
double price_laplace(double m, const Model& p, const MarketEnv& env, const PricerConfig& cfg = {}) {
  const double T = env.delta;
  const double c = cfg.laplace_c;
  const double upper = moment_bound(p);
  if (!(c > 0.0) || !(c + 1.0 < upper)) {
    throw Error(ErrorCode::ContourInvalid, "Bromwich abscissa c = " + std::to_string(c) +
                                               " needs 0 < c and c + 1 < " + std::to_string(upper));
  }
  const double mu_tilde = risk_neutral_log_drift(p, env.r);
  const double log_m = std::log(m);
  const double disc = std::exp(-env.r * T);

  auto integrand = [&](double y) {
    const cplx xi(c, y);
    const cplx g = mgf_exponent(xi + 1.0, p, mu_tilde);
    return (std::exp(xi * log_m + g * T) * disc / (xi * (xi + 1.0))).real();
  };
  auto magnitude = [&](double y) {
    const cplx xi(c, y);
    const cplx g = mgf_exponent(xi + 1.0, p, mu_tilde);
    return std::abs(std::exp(xi * log_m + g * T) * disc / (xi * (xi + 1.0)));
  };

  // Distance from the line to the nearest singularity sets the step.
  const double width = std::min(c, upper - 1.0 - c);
  double h = 2.0 * std::numbers::pi * width / 64.0;
  const double var = p.sigma * p.sigma * T;
  double limit = var > 0.0 ? std::sqrt(74.0 / var) + 10.0 : 1e3;
  while (magnitude(limit) * limit > 1e-15) {
    limit *= 2.0;
    if (limit > 1e7) throw Error(ErrorCode::InversionNotConverged, "Bromwich integrand has not decayed");
  }

  for (int attempt = 0; attempt < 4; ++attempt) {
    const long nodes = static_cast<long>(std::ceil(limit / h));
    if (nodes > 20'000'000) break;
    double all = 0.5 * integrand(0.0);
    double even = all;
    for (long j = 1; j <= nodes; ++j) {
      const double v = integrand(j * h);
      all += v;
      if (j % 2 == 0) even += v;
    }
    const double fine = h / std::numbers::pi * all;
    const double coarse = 2.0 * h / std::numbers::pi * even;
    if (std::abs(fine - coarse) <= cfg.laplace_tol) return fine;
    h *= 0.5;
  }
  throw Error(ErrorCode::InversionNotConverged, "trapezoid estimate still changing at m = " + std::to_string(m));
}

/// Price under the utility-based measure dQ/dP = exp(T c0 + (alpha - 1) X_T):
/// the Carr-Madan route applied to the tilted transform
/// exp(T c0) E^P[exp((iu + alpha - 1) X_T)].
inline double price_risk_premium(double m, const ModelParams& theta, const MarketEnv& env,
                                  const PricerConfig& cfg = {}) {
  if (!theta.pref) throw Error(ErrorCode::InvalidArgument, "risk preference required");
  const double a = theta.pref->alpha;
  const double mu = drift_of(theta.dynamics);
  const double sigma = sigma_of(theta.dynamics);
  const double T = env.delta;
  const double c0 = (1.0 - a) * mu - 0.5 * sigma * sigma * (1.0 - a) * (2.0 - a);
  return std::visit(
      [&](const auto& p) {
        const cplx shift(0.0, 1.0 - a);
        auto cf = [&](cplx u) { return std::exp(T * (c0 + physical_exponent(u + shift, p))); };
        // Re(-i(u + shift)) = Im(u) + (1 - a) must stay inside the physical strip.
        return price_carr_madan(m, cf, T, env.r, cfg, moment_bound(p) + 1.0 - a, lower_moment_bound(p) + 1.0 - a);
      },
      theta.dynamics);
}

/// Prices from every route that applies to the model, for inspection.
struct RouteComparison {
  double authoritative = 0.0;
  std::optional<double> closed_form;
  std::optional<double> series;
  std::optional<double> fourier;
  std::optional<double> laplace;
};

/// Single authoritative price of a call maturing after `periods` periods.
inline double price(const ModelParams& theta, double m, int periods, const MarketEnv& env,
                    const PricerConfig& cfg = {});

inline RouteComparison price_routes(const ModelParams& theta, double m, int periods, const MarketEnv& env,
                                    const PricerConfig& cfg = {}) {
  if (periods < 1) throw Error(ErrorCode::InvalidArgument, "maturity must be at least one period");
  const MarketEnv horizon = env.with_horizon(periods * env.delta);
  const double T = horizon.delta;
  RouteComparison out;
  if (theta.pref) {
    out.fourier = price_risk_premium(m, theta, horizon, cfg);
    out.authoritative = *out.fourier;
    return out;
  }
  std::visit(
      [&](const auto& p) {
        using M = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<M, BsParams>) {
          out.closed_form = price_bs(m, p.sigma, horizon);
          out.fourier = price_carr_madan(m, risk_neutral_cf(p, env.r, T), T, env.r, cfg);
          out.laplace = price_laplace(m, p, horizon, cfg);
          out.authoritative = *out.closed_form;
        } else {
          if (p.lambda == 0.0) out.closed_form = price_bs(m, p.sigma, horizon);
          PricerConfig lcfg = cfg;
          lcfg.laplace_c = std::min(cfg.laplace_c, 0.5 * (moment_bound(p) - 1.0));
          out.fourier = price_carr_madan(m, risk_neutral_cf(p, env.r, T), T, env.r, cfg, moment_bound(p),
                                         lower_moment_bound(p));
          out.laplace = price_laplace(m, p, horizon, lcfg);
          if constexpr (std::is_same_v<M, MertonParams>) {
            out.series = price_merton_series(m, p, horizon, cfg);
            out.authoritative = out.closed_form ? *out.closed_form : *out.series;
          } else {
            out.authoritative = out.closed_form ? *out.closed_form : *out.fourier;
          }
        }
      },
      theta.dynamics);
  return out;
}

inline double price(const ModelParams& theta, double m, int periods, const MarketEnv& env,
                    const PricerConfig& cfg) {
  if (periods < 1) throw Error(ErrorCode::InvalidArgument, "maturity must be at least one period");
  if (!(m > 0.0)) throw Error(ErrorCode::InvalidArgument, "moneyness must be positive");
  const MarketEnv horizon = env.with_horizon(periods * env.delta);
  if (theta.pref) return price_risk_premium(m, theta, horizon, cfg);
  return std::visit(
      [&](const auto& p) -> double {
        using M = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<M, BsParams>) {
          return price_bs(m, p.sigma, horizon);
        } else if constexpr (std::is_same_v<M, MertonParams>) {
          return price_merton_series(m, p, horizon, cfg);
        } else {
          if (p.lambda == 0.0) return price_bs(m, p.sigma, horizon);
          const double T = horizon.delta;
          const double fourier =
              price_carr_madan(m, risk_neutral_cf(p, env.r, T), T, env.r, cfg, moment_bound(p), lower_moment_bound(p));
          PricerConfig lcfg = cfg;
          lcfg.laplace_c = std::min(cfg.laplace_c, 0.5 * (moment_bound(p) - 1.0));
          const double laplace = price_laplace(m, p, horizon, lcfg);
          if (std::abs(fourier - laplace) > cfg.cross_check_tol) {
            throw Error(ErrorCode::QuadratureNotConverged, "Fourier and Laplace routes disagree: " +
                                                               std::to_string(fourier) + " vs " +
                                                               std::to_string(laplace));
          }
          return fourier;
        }
      },
      theta.dynamics);
}

}  // namespace levymele
