#pragma once

#include <cmath>
#include <cstdint>
#include <type_traits>
#include <variant>
#include <vector>

#include "levymele/error.hpp"
#include "levymele/params.hpp"
#include "levymele/rng.hpp"

namespace levymele {

/// How Merton jumps are drawn. Both split a period into 200 sub-intervals with
/// at most one jump each. The literal scheme uses success probability
/// (lambda delta / 200) exp(-lambda delta / 200); thinning uses
/// lambda delta / 200, which converges to the Poisson count.
enum class MertonJumpScheme { BernoulliLiteral, BernoulliThinning, ExactPoisson };

inline constexpr int kMertonSubintervals = 200;

struct SimSpec {
  ModelParams model_params;
  MarketEnv env;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;  // substream index, e.g. the replicate number
  double log_s0 = 100.0;
  MertonJumpScheme merton_scheme = MertonJumpScheme::BernoulliLiteral;
};

struct ReturnSeries {
  std::vector<double> returns;
  double delta = 1.0 / 52.0;
  double log_s_last = 0.0;

  std::size_t size() const { return returns.size(); }
};

namespace detail {

inline void check_spec(const SimSpec& spec) {
  validate(spec.env);
  if (spec.n < 2) throw Error(ErrorCode::InvariantViolation, "simulation needs n >= 2");
}

// sigma = 0 is allowed here so degenerate paths can be generated on purpose.
template <class Step>
ReturnSeries simulate_with(const SimSpec& spec, Step&& step) {
  check_spec(spec);
  Rng rng = Rng::substream(spec.seed, spec.stream);
  ReturnSeries out;
  out.delta = spec.env.delta;
  out.returns.resize(spec.n);
  double log_s = spec.log_s0;
  for (auto& r : out.returns) {
    r = step(rng);
    log_s += r;
  }
  out.log_s_last = log_s;
  return out;
}

inline double draw_double_exponential(Rng& rng, double p, double eta1, double eta2) {
  return rng.uniform() < p ? rng.exponential(eta1) : -rng.exponential(eta2);
}

}  // namespace detail

inline ReturnSeries simulate_bs(const SimSpec& spec, const BsParams& p) {
  const double delta = spec.env.delta;
  const double mean = (p.mu - 0.5 * p.sigma * p.sigma) * delta;
  const double sd = p.sigma * std::sqrt(delta);
  return detail::simulate_with(spec, [&](Rng& rng) { return mean + sd * rng.normal(); });
}

inline ReturnSeries simulate_merton(const SimSpec& spec, const MertonParams& p) {
  const double delta = spec.env.delta;
  const double mean = (p.mu - p.lambda * p.kappa() - 0.5 * p.sigma * p.sigma) * delta;
  const double sd = p.sigma * std::sqrt(delta);
  const double sub_intensity = p.lambda * delta / kMertonSubintervals;
  const double prob = spec.merton_scheme == MertonJumpScheme::BernoulliLiteral
                          ? sub_intensity * std::exp(-sub_intensity)
                          : sub_intensity;
  return detail::simulate_with(spec, [&](Rng& rng) {
    double r = mean + sd * rng.normal();
    if (p.lambda == 0.0) return r;
    if (spec.merton_scheme == MertonJumpScheme::ExactPoisson) {
      const auto count = rng.poisson(p.lambda * delta);
      for (std::uint64_t i = 0; i < count; ++i) r += p.mu_j + p.sigma_j * rng.normal();
    } else {
      for (int l = 0; l < kMertonSubintervals; ++l) {
        if (rng.bernoulli(prob)) r += p.mu_j + p.sigma_j * rng.normal();
      }
    }
    return r;
  });
}

inline ReturnSeries simulate_kou(const SimSpec& spec, const KouParams& p) {
  const double delta = spec.env.delta;
  const double mean = (p.mu - 0.5 * p.sigma * p.sigma) * delta;
  const double sd = p.sigma * std::sqrt(delta);
  return detail::simulate_with(spec, [&](Rng& rng) {
    double r = mean + sd * rng.normal();
    if (p.lambda == 0.0) return r;
    const auto count = rng.poisson(p.lambda * delta);
    for (std::uint64_t i = 0; i < count; ++i) r += detail::draw_double_exponential(rng, p.p, p.eta1, p.eta2);
    return r;
  });
}

/// Physical-measure simulation for whichever model `spec.model_params` holds.
/// A risk preference does not change the physical dynamics.
inline ReturnSeries simulate(const SimSpec& spec) {
  return std::visit(
      [&](const auto& p) {
        using M = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<M, BsParams>) {
          return simulate_bs(spec, p);
        } else if constexpr (std::is_same_v<M, MertonParams>) {
          return simulate_merton(spec, p);
        } else {
          return simulate_kou(spec, p);
        }
      },
      spec.model_params.dynamics);
}

}  // namespace levymele
