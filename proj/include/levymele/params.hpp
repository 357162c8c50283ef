#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "levymele/error.hpp"

namespace levymele {

/// Risk-free rate per year and observation period length in years.
struct MarketEnv {
  double r = 0.0;
  double delta = 1.0 / 52.0;

  MarketEnv with_horizon(double horizon) const { return {r, horizon}; }
  MarketEnv with_rate(double rate) const { return {rate, delta}; }
};

struct BsParams {
  double mu = 0.0;
  double sigma = 0.0;
};

/// Diffusion plus compound Poisson with normal log-jumps N(mu_j, sigma_j^2).
struct MertonParams {
  double mu = 0.0;
  double sigma = 0.0;
  double lambda = 0.0;
  double mu_j = 0.0;
  double sigma_j = 0.0;

  /// Mean relative jump E[J - 1]; the compound-Poisson compensator is lambda * kappa.
  double kappa() const { return std::expm1(mu_j + 0.5 * sigma_j * sigma_j); }
};

/// Diffusion plus compound Poisson with asymmetric double-exponential log-jumps.
struct KouParams {
  double mu = 0.0;
  double sigma = 0.0;
  double lambda = 0.0;
  double p = 0.0;
  double eta1 = 0.0;
  double eta2 = 0.0;

  /// E[e^Y] - 1, finite for eta1 > 1.
  double zeta() const { return p * eta1 / (eta1 - 1.0) + (1.0 - p) * eta2 / (eta2 + 1.0) - 1.0; }
};

/// Curvature of the representative investor's power utility.
struct RiskPreference {
  double alpha = 0.0;
};

enum class ModelKind { BlackScholes, Merton, Kou };

using Dynamics = std::variant<BsParams, MertonParams, KouParams>;

/// Parameter vector theta: the return dynamics plus an optional risk preference.
/// When `pref` is present the change of measure is the utility-based one.
struct ModelParams {
  Dynamics dynamics;
  std::optional<RiskPreference> pref;

  ModelKind kind() const { return static_cast<ModelKind>(dynamics.index()); }
  bool has_pref() const { return pref.has_value(); }
};

inline std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::BlackScholes: return "bs";
    case ModelKind::Merton: return "merton";
    case ModelKind::Kou: return "kou";
  }
  return "unknown";
}

inline ModelKind parse_model_kind(std::string_view name) {
  if (name == "bs" || name == "black-scholes" || name == "blackscholes") return ModelKind::BlackScholes;
  if (name == "merton" || name == "bsmj" || name == "bs-mj") return ModelKind::Merton;
  if (name == "kou" || name == "dejd") return ModelKind::Kou;
  throw Error(ErrorCode::InvalidArgument, "unknown model '" + std::string(name) + "'");
}

// Common accessors: every model has a drift and a diffusion volatility.
inline double drift_of(const Dynamics& d) {
  return std::visit([](const auto& p) { return p.mu; }, d);
}
inline double sigma_of(const Dynamics& d) {
  return std::visit([](const auto& p) { return p.sigma; }, d);
}

inline std::vector<std::string> parameter_names(ModelKind kind, bool with_pref) {
  std::vector<std::string> names;
  switch (kind) {
    case ModelKind::BlackScholes: names = {"mu", "sigma"}; break;
    case ModelKind::Merton: names = {"mu", "sigma", "lambda", "mu_j", "sigma_j"}; break;
    case ModelKind::Kou: names = {"mu", "sigma", "lambda", "p", "eta1", "eta2"}; break;
  }
  if (with_pref) names.emplace_back("alpha");
  return names;
}

inline std::vector<double> to_vector(const ModelParams& theta) {
  std::vector<double> v = std::visit(
      [](const auto& p) -> std::vector<double> {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, BsParams>) {
          return {p.mu, p.sigma};
        } else if constexpr (std::is_same_v<T, MertonParams>) {
          return {p.mu, p.sigma, p.lambda, p.mu_j, p.sigma_j};
        } else {
          return {p.mu, p.sigma, p.lambda, p.p, p.eta1, p.eta2};
        }
      },
      theta.dynamics);
  if (theta.pref) v.push_back(theta.pref->alpha);
  return v;
}

inline ModelParams from_vector(ModelKind kind, bool with_pref, std::span<const double> v) {
  const std::size_t expected = parameter_names(kind, with_pref).size();
  if (v.size() != expected) {
    throw Error(ErrorCode::InvalidArgument, "parameter vector has " + std::to_string(v.size()) +
                                                " entries, expected " + std::to_string(expected));
  }
  ModelParams theta;
  switch (kind) {
    case ModelKind::BlackScholes: theta.dynamics = BsParams{v[0], v[1]}; break;
    case ModelKind::Merton: theta.dynamics = MertonParams{v[0], v[1], v[2], v[3], v[4]}; break;
    case ModelKind::Kou: theta.dynamics = KouParams{v[0], v[1], v[2], v[3], v[4], v[5]}; break;
  }
  if (with_pref) theta.pref = RiskPreference{v.back()};
  return theta;
}

namespace detail {
inline void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::InvariantViolation, what);
}
}  // namespace detail

inline void validate(const MarketEnv& env) {
  detail::require(env.delta > 0.0 && std::isfinite(env.delta), "delta must be positive");
  detail::require(std::isfinite(env.r), "r must be finite");
}

inline void validate(const BsParams& p) {
  detail::require(std::isfinite(p.mu), "mu must be finite");
  detail::require(p.sigma > 0.0 && std::isfinite(p.sigma), "sigma must be positive");
}

inline void validate(const MertonParams& p) {
  detail::require(std::isfinite(p.mu) && std::isfinite(p.mu_j), "mu, mu_j must be finite");
  detail::require(p.sigma > 0.0 && std::isfinite(p.sigma), "sigma must be positive");
  detail::require(p.lambda >= 0.0 && std::isfinite(p.lambda), "lambda must be nonnegative");
  detail::require(p.sigma_j >= 0.0 && std::isfinite(p.sigma_j), "sigma_j must be nonnegative");
}

inline void validate(const KouParams& p) {
  detail::require(std::isfinite(p.mu), "mu must be finite");
  detail::require(p.sigma > 0.0 && std::isfinite(p.sigma), "sigma must be positive");
  detail::require(p.lambda >= 0.0 && std::isfinite(p.lambda), "lambda must be nonnegative");
  detail::require(p.p >= 0.0 && p.p <= 1.0, "p must lie in [0, 1]");
  detail::require(p.eta1 > 1.0, "eta1 must exceed 1");
  detail::require(p.eta2 > 0.0, "eta2 must be positive");
}

inline void validate(const RiskPreference& pref) {
  detail::require(pref.alpha >= 0.0 && pref.alpha < 1.0, "alpha must lie in [0, 1)");
}

inline void validate(const ModelParams& theta) {
  std::visit([](const auto& p) { validate(p); }, theta.dynamics);
  if (theta.pref) validate(*theta.pref);
}

}  // namespace levymele
