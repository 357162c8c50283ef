#pragma once

// Empirical likelihood machinery: residual vectors built from the empirical
// characteristic function and option payoffs, the inner Lagrange problem at
// one frequency t, and the integrated objective over a frequency grid.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "levymele/error.hpp"
#include "levymele/levy_models.hpp"
#include "levymele/params.hpp"
#include "levymele/path_simulator.hpp"

namespace levymele {

struct OptionQuote {
  int maturity_periods = 1;
  double moneyness = 1.0;  // S / K
  double rate = 0.0;
  double price_normalized = 0.0;  // C / S
};

inline void validate(const OptionQuote& q) {
  detail::require(q.maturity_periods >= 1, "maturity_periods must be >= 1");
  detail::require(q.moneyness > 0.0 && std::isfinite(q.moneyness), "moneyness must be positive");
  detail::require(std::isfinite(q.rate), "rate must be finite");
  detail::require(q.price_normalized >= 0.0 && q.price_normalized <= 1.0 + 1e-9,
                  "normalized price must lie in [0, 1], got " + std::to_string(q.price_normalized));
}

/// Discounted call payoff in normalized units, e^{-rT} (e^R - 1/m)^+.
inline double discounted_payoff(double R, double m, double r, double T) {
  return std::exp(-r * T) * std::max(std::exp(R) - 1.0 / m, 0.0);
}

/// Nodes and weights of a discrete probability weight on frequencies t.
struct QuadratureGrid {
  std::vector<double> nodes;
  std::vector<double> weights;

  /// Midpoint rule for the uniform weight on [-a, a].
  static QuadratureGrid uniform(double a, int count) {
    detail::require(a > 0.0 && std::isfinite(a), "quadrature half-width must be positive");
    detail::require(count >= 1, "quadrature needs at least one node");
    QuadratureGrid g;
    g.nodes.resize(count);
    g.weights.assign(count, 1.0 / count);
    const double h = 2.0 * a / count;
    for (int i = 0; i < count; ++i) g.nodes[i] = -a + (i + 0.5) * h;
    return g;
  }

  std::size_t size() const { return nodes.size(); }

  /// True when nodes come in (t, -t) pairs of equal weight.
  bool symmetric() const {
    const std::size_t n = nodes.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (nodes[i] != -nodes[n - 1 - i] || weights[i] != weights[n - 1 - i]) return false;
    }
    return true;
  }
};

/// Frequency grid plus option quotes grouped by maturity (in periods).
struct ConstraintSet {
  QuadratureGrid grid = QuadratureGrid::uniform(5.0, 100);
  MarketEnv env;
  std::map<int, std::vector<OptionQuote>> quotes_by_maturity;

  void add_quote(const OptionQuote& q) {
    validate(q);
    quotes_by_maturity[q.maturity_periods].push_back(q);
  }

  /// Maturity groups contributing to the summed objective; {1} without quotes.
  std::vector<int> maturities() const {
    if (quotes_by_maturity.empty()) return {1};
    std::vector<int> out;
    for (const auto& [k, qs] : quotes_by_maturity) out.push_back(k);
    return out;
  }

  const std::vector<OptionQuote>& quotes(int k) const {
    static const std::vector<OptionQuote> none;
    const auto it = quotes_by_maturity.find(k);
    return it == quotes_by_maturity.end() ? none : it->second;
  }

  std::size_t quote_count() const {
    std::size_t c = 0;
    for (const auto& [k, qs] : quotes_by_maturity) c += qs.size();
    return c;
  }
};

/// Sums of k consecutive, non-overlapping returns; a trailing remainder is dropped.
inline std::vector<double> aggregate_returns(std::span<const double> returns, int k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "aggregation length must be >= 1");
  std::vector<double> out(returns.size() / k, 0.0);
  for (std::size_t j = 0; j < out.size(); ++j) {
    for (int i = 0; i < k; ++i) out[j] += returns[j * k + i];
  }
  return out;
}

/// Residual vectors g_j(t; theta), one row per observation:
///   [cos(t R_j) - Re phi(t), sin(t R_j) - Im phi(t), payoff_q(R_j) dQ/dP(R_j) - c_q, ...].
/// `env.delta` is the horizon of one observation R_j.
using ResidualBlock = Eigen::MatrixXd;

inline ResidualBlock build_residuals(std::span<const double> returns, const ModelParams& theta, double t,
                                     const std::vector<OptionQuote>& quotes, const MarketEnv& env) {
  const Eigen::Index n = static_cast<Eigen::Index>(returns.size());
  ResidualBlock g(n, 2 + static_cast<Eigen::Index>(quotes.size()));
  const cplx phi = cf(t, theta, env);
  for (Eigen::Index j = 0; j < n; ++j) {
    g(j, 0) = std::cos(t * returns[j]) - phi.real();
    g(j, 1) = std::sin(t * returns[j]) - phi.imag();
  }
  for (std::size_t q = 0; q < quotes.size(); ++q) {
    const MarketEnv qenv{quotes[q].rate, env.delta};
    for (Eigen::Index j = 0; j < n; ++j) {
      g(j, 2 + q) = discounted_payoff(returns[j], quotes[q].moneyness, qenv.r, qenv.delta) * rn(returns[j], theta, qenv) -
                    quotes[q].price_normalized;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Inner problem: maximize sum log(1 + lambda' g_j) over lambda.
// ---------------------------------------------------------------------------

enum class InnerStatus { Converged, HullViolation, MaxIterations, NonFinite };

inline std::string_view to_string(InnerStatus s) {
  switch (s) {
    case InnerStatus::Converged: return "converged";
    case InnerStatus::HullViolation: return "hull_violation";
    case InnerStatus::MaxIterations: return "max_iterations";
    case InnerStatus::NonFinite: return "non_finite";
  }
  return "unknown";
}

struct InnerOptions {
  double tol = 1e-10;  // on |(1/n) sum g_j / (1 + lambda' g_j)|
  int max_iter = 50;
  bool want_weights = false;
};

struct InnerSolution {
  Eigen::VectorXd lambda;
  Eigen::VectorXd weights;  // p_j, filled when requested
  double local_logel = kInf;
  InnerStatus status = InnerStatus::HullViolation;
  int iterations = 0;
  double stationarity = kInf;

  bool converged() const { return status == InnerStatus::Converged; }
};

namespace detail {

// Owen's pseudo-logarithm: log z for z >= eps, quadratic continuation below.
struct LogStar {
  double eps;
  double log_eps;

  double value(double z) const {
    if (z >= eps) return std::log(z);
    const double u = z / eps;
    return log_eps - 1.5 + 2.0 * u - 0.5 * u * u;
  }
  double d1(double z) const { return z >= eps ? 1.0 / z : (2.0 - z / eps) / eps; }
  double d2(double z) const { return z >= eps ? -1.0 / (z * z) : -1.0 / (eps * eps); }
};

template <int Q>
void accumulate_fixed(const Eigen::MatrixXd& xt, const Eigen::VectorXd& z, const LogStar& ls, Eigen::VectorXd& score,
                      Eigen::MatrixXd& hess) {
  double sc[Q] = {};
  double h[Q][Q] = {};
  const Eigen::Index n = z.size();
  const double* x = xt.data();
  for (Eigen::Index j = 0; j < n; ++j, x += Q) {
    const double zj = z[j];
    double a, b;
    if (zj >= ls.eps) {
      a = 1.0 / zj;
      b = a * a;
    } else {
      a = (2.0 - zj / ls.eps) / ls.eps;
      b = 1.0 / (ls.eps * ls.eps);
    }
    for (int c = 0; c < Q; ++c) {
      sc[c] += a * x[c];
      const double bx = b * x[c];
      for (int c2 = 0; c2 <= c; ++c2) h[c][c2] += bx * x[c2];
    }
  }
  for (int c = 0; c < Q; ++c) {
    score[c] = sc[c];
    for (int c2 = 0; c2 <= c; ++c2) hess(c, c2) = h[c][c2];
  }
}

// Gradient (negated) and lower triangle of the Hessian of the dual at z.
inline void accumulate_newton(const Eigen::MatrixXd& xt, const Eigen::VectorXd& z, const LogStar& ls,
                              Eigen::VectorXd& score, Eigen::MatrixXd& hess) {
  switch (xt.rows()) {
    case 1: return accumulate_fixed<1>(xt, z, ls, score, hess);
    case 2: return accumulate_fixed<2>(xt, z, ls, score, hess);
    case 3: return accumulate_fixed<3>(xt, z, ls, score, hess);
    case 4: return accumulate_fixed<4>(xt, z, ls, score, hess);
    case 5: return accumulate_fixed<5>(xt, z, ls, score, hess);
    case 6: return accumulate_fixed<6>(xt, z, ls, score, hess);
    default: break;
  }
  const Eigen::Index qa = xt.rows();
  score.setZero();
  hess.setZero();
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    const double a = ls.d1(z[j]);
    const double b = -ls.d2(z[j]);
    const double* xj = xt.data() + j * qa;
    for (Eigen::Index c = 0; c < qa; ++c) {
      score[c] += a * xj[c];
      const double bx = b * xj[c];
      for (Eigen::Index c2 = 0; c2 <= c; ++c2) hess(c, c2) += bx * xj[c2];
    }
  }
}

}  // namespace detail

/// Damped Newton on the convex dual -sum log*(1 + lambda' g_j). Columns are
/// rescaled to unit RMS first (the likelihood ratio is scale invariant);
/// identically zero columns carry no constraint and get a zero multiplier.
///
/// The dual is self-concordant, so once the Newton decrement is below 1/4 the
/// full step is taken without a line search. A step direction that raises
/// every 1 + lambda' g_j certifies that zero is outside the convex hull.
/// `start`, when given, is a multiplier from a nearby problem (e.g. the same
/// node at a nearby theta); it is used only if it keeps every 1 + lambda' g_j
/// above 1/n.
inline InnerSolution solve_inner(const Eigen::Ref<const Eigen::MatrixXd>& g, const InnerOptions& opt = {},
                                 const Eigen::VectorXd* start = nullptr) {
  const Eigen::Index n = g.rows();
  const Eigen::Index q = g.cols();
  if (n < 1) throw Error(ErrorCode::InsufficientData, "empty residual block");

  InnerSolution sol;
  sol.lambda = Eigen::VectorXd::Zero(q);
  if (!g.allFinite()) {
    sol.status = InnerStatus::NonFinite;
    return sol;
  }

  std::vector<Eigen::Index> active;
  std::vector<double> scale;
  for (Eigen::Index c = 0; c < q; ++c) {
    const double s = std::sqrt(g.col(c).squaredNorm() / n);
    if (s > 0.0) {
      active.push_back(c);
      scale.push_back(s);
    }
  }
  const Eigen::Index qa = static_cast<Eigen::Index>(active.size());
  if (qa == 0) {
    sol.local_logel = 0.0;
    sol.status = InnerStatus::Converged;
    sol.stationarity = 0.0;
    if (opt.want_weights) sol.weights = Eigen::VectorXd::Constant(n, 1.0 / n);
    return sol;
  }

  // Observation j is column j of xt, so each pass over the data is contiguous.
  Eigen::MatrixXd xt(qa, n);
  for (Eigen::Index c = 0; c < qa; ++c) {
    xt.row(c) = g.col(active[c]).transpose() / scale[c];
    // A one-signed column keeps zero out of the convex hull.
    if (xt.row(c).minCoeff() >= 0.0 || xt.row(c).maxCoeff() <= 0.0) {
      sol.status = InnerStatus::HullViolation;
      return sol;
    }
  }
  const Eigen::Map<const Eigen::VectorXd> s(scale.data(), qa);

  const double eps = 1.0 / static_cast<double>(n);
  const detail::LogStar ls{eps, std::log(eps)};
  const double target = 1e-3 * opt.tol * std::max(1.0, s.maxCoeff());

  Eigen::VectorXd lam = Eigen::VectorXd::Zero(qa);
  Eigen::VectorXd z = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd dz(n), trial_z(n), score(qa);
  Eigen::MatrixXd hess(qa, qa);

  auto objective = [&](const Eigen::VectorXd& zz) {
    double f = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) f -= ls.value(zz[j]);
    return f;
  };

  double f = 0.0;  // value at z; refreshed lazily after full steps
  bool f_current = true;
  if (start != nullptr && start->size() == q && start->allFinite()) {
    Eigen::VectorXd lam0(qa);
    for (Eigen::Index c = 0; c < qa; ++c) lam0[c] = (*start)[active[c]] * scale[c];
    trial_z.noalias() = xt.transpose() * lam0;
    trial_z.array() += 1.0;
    if (trial_z.minCoeff() >= eps) {
      lam = lam0;
      z = trial_z;
      f_current = false;
    }
  }
  double stat = kInf;
  bool outside = false;
  int iter = 0;
  for (;; ++iter) {
    detail::accumulate_newton(xt, z, ls, score, hess);
    stat = (s.array() * score.array()).matrix().norm() / n;
    if (stat <= target || iter >= opt.max_iter) break;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess.selfadjointView<Eigen::Lower>());
    Eigen::VectorXd step = ldlt.solve(score);
    const double dmax = ldlt.vectorD().cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || !step.allFinite() || !(ldlt.vectorD().minCoeff() > 1e-12 * dmax)) {
      // Fewer independent observations than constraints (or collinear
      // columns): take the minimum-norm step. Null-space directions leave
      // every 1 + lambda' g_j unchanged.
      const Eigen::MatrixXd full = hess.selfadjointView<Eigen::Lower>();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(full);
      const Eigen::VectorXd ev = es.eigenvalues();
      const double cut = 1e-12 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
      Eigen::VectorXd inv(ev.size());
      for (Eigen::Index c = 0; c < ev.size(); ++c) inv[c] = ev[c] > cut ? 1.0 / ev[c] : 0.0;
      step = es.eigenvectors() * inv.asDiagonal() * (es.eigenvectors().transpose() * score);
    }
    const double decrement2 = score.dot(step);
    if (!(decrement2 > 0.0)) break;

    dz.noalias() = xt.transpose() * step;
    if (dz.minCoeff() >= 0.0) {
      outside = true;
      break;
    }

    if (decrement2 < 0.0625) {
      trial_z = z + dz;
      if (trial_z.minCoeff() >= eps) {
        lam += step;
        z = trial_z;
        f_current = false;
        if (z.minCoeff() >= 1.0) {
          outside = true;
          break;
        }
        continue;
      }
    }

    if (!f_current) {
      f = objective(z);
      f_current = true;
    }
    double t = 1.0;
    bool accepted = false;
    for (int ls_iter = 0; ls_iter < 60; ++ls_iter) {
      trial_z = z + t * dz;
      const double ft = objective(trial_z);
      if (ft <= f - 1e-4 * t * decrement2) {
        accepted = ft < f || stat > opt.tol;
        lam += t * step;
        z = trial_z;
        f = ft;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    // lambda' g_j >= 0 for every j is itself a separating direction.
    if (z.minCoeff() >= 1.0 || lam.cwiseAbs().maxCoeff() > 1e12) {
      outside = true;
      break;
    }
  }

  sol.iterations = iter;
  sol.stationarity = stat;
  for (Eigen::Index c = 0; c < qa; ++c) sol.lambda[active[c]] = lam[c] / scale[c];

  if (outside || z.minCoeff() < eps) {
    sol.status = InnerStatus::HullViolation;
    return sol;
  }
  if (!f_current) f = objective(z);
  sol.status = stat <= opt.tol ? InnerStatus::Converged : InnerStatus::MaxIterations;
  sol.local_logel = std::max(0.0, -2.0 * f);
  if (opt.want_weights) {
    sol.weights = (1.0 / (static_cast<double>(n) * z.array())).matrix();
    sol.weights /= sol.weights.sum();
  }
  return sol;
}

/// log(1 + n gbar' V^{-1} gbar) with V the centered covariance, plus the
/// unscaled sqrt(n) |gbar|, which still orders theta when V degenerates
/// (identical rows). Finite everywhere; steers the outer search out of
/// infeasible regions.
inline double euclidean_discrepancy(const Eigen::Ref<const Eigen::MatrixXd>& g) {
  const double n = static_cast<double>(g.rows());
  if (!g.allFinite()) return 1e12;
  const Eigen::VectorXd mean = g.colwise().mean().transpose();
  const Eigen::MatrixXd centered = g.rowwise() - mean.transpose();
  Eigen::MatrixXd v = centered.transpose() * centered / n;
  const Eigen::VectorXd second = g.colwise().squaredNorm().transpose() / n;
  for (Eigen::Index c = 0; c < v.rows(); ++c) v(c, c) += 1e-8 * second[c] + 1e-300;
  const double val = n * mean.dot(v.ldlt().solve(mean));
  // log1p keeps a saturated first term from swamping the second in rounding.
  const double scaled = std::isfinite(val) ? std::log1p(std::max(val, 0.0)) : 700.0;
  return std::min(scaled + std::sqrt(n) * mean.norm(), 1e12);
}

// ---------------------------------------------------------------------------
// Integrated objective.
// ---------------------------------------------------------------------------

struct NodeResult {
  double t = 0.0;
  double weight = 0.0;
  InnerSolution solution;
};

struct GroupEvaluation {
  int maturity = 1;
  std::size_t observations = 0;
  double value = 0.0;
  std::vector<NodeResult> nodes;  // filled only when details are requested
};

struct ObjectiveEvaluation {
  double value = 0.0;      // +inf when some node is infeasible
  double surrogate = 0.0;  // finite everywhere; equals value when feasible
  bool feasible = true;
  int infeasible_nodes = 0;
  long inner_iterations = 0;
  std::vector<GroupEvaluation> groups;
};

inline constexpr double kInfeasiblePenalty = 1e8;

/// Integrated objective for fixed data and constraints. Everything that does
/// not depend on theta (aggregated returns, cos/sin tables, payoffs) is
/// precomputed, so one evaluation costs one inner solve per frequency node.
class ObjectiveFunction {
 public:
  struct Group {
    int maturity = 1;
    MarketEnv env;  // delta is the horizon maturity * period
    std::vector<OptionQuote> quotes;
    std::vector<double> returns;
    Eigen::MatrixXd cos_t;   // observations x nodes
    Eigen::MatrixXd sin_t;
    Eigen::MatrixXd payoff;  // observations x quotes
  };

  ObjectiveFunction(const ReturnSeries& series, ConstraintSet cset, InnerOptions inner = {})
      : cset_(std::move(cset)), inner_(inner), n_(series.size()) {
    validate(cset_.env);
    for (const double r : series.returns) {
      if (!std::isfinite(r)) throw Error(ErrorCode::NonFiniteValue, "non-finite return");
    }
    double wsum = 0.0;
    for (const double w : cset_.grid.weights) wsum += w;
    detail::require(std::abs(wsum - 1.0) < 1e-9, "quadrature weights must sum to 1");
    symmetric_ = cset_.grid.symmetric();

    const auto& nodes = cset_.grid.nodes;
    const Eigen::Index nn = static_cast<Eigen::Index>(nodes.size());
    for (const int k : cset_.maturities()) {
      Group grp;
      grp.maturity = k;
      grp.env = cset_.env.with_horizon(k * cset_.env.delta);
      grp.quotes = cset_.quotes(k);
      grp.returns = aggregate_returns(series.returns, k);
      const Eigen::Index nk = static_cast<Eigen::Index>(grp.returns.size());
      const std::size_t dim = 2 + grp.quotes.size();
      if (static_cast<std::size_t>(nk) < dim + 1) {
        throw Error(ErrorCode::InsufficientData, std::to_string(nk) + " observations at maturity " + std::to_string(k) +
                                                     " for " + std::to_string(dim) + " constraints");
      }
      grp.cos_t.resize(nk, nn);
      grp.sin_t.resize(nk, nn);
      for (Eigen::Index i = 0; i < nn; ++i) {
        for (Eigen::Index j = 0; j < nk; ++j) {
          grp.cos_t(j, i) = std::cos(nodes[i] * grp.returns[j]);
          grp.sin_t(j, i) = std::sin(nodes[i] * grp.returns[j]);
        }
      }
      grp.payoff.resize(nk, static_cast<Eigen::Index>(grp.quotes.size()));
      for (std::size_t q = 0; q < grp.quotes.size(); ++q) {
        for (Eigen::Index j = 0; j < nk; ++j) {
          grp.payoff(j, q) = discounted_payoff(grp.returns[j], grp.quotes[q].moneyness, grp.quotes[q].rate, grp.env.delta);
        }
      }
      groups_.push_back(std::move(grp));
    }
  }

  /// Multipliers from the previous evaluation, one per group and node, used
  /// to start the next inner solves. Owned by the caller.
  struct WarmStart {
    std::vector<std::vector<Eigen::VectorXd>> lambda;
  };

  double operator()(const ModelParams& theta) const { return evaluate(theta).value; }

  /// With `details`, every node is solved (no symmetry shortcut) and the
  /// multipliers and implied weights are kept.
  ObjectiveEvaluation evaluate(const ModelParams& theta, bool details = false, WarmStart* warm = nullptr) const {
    ObjectiveEvaluation out;
    InnerOptions inner = inner_;
    inner.want_weights = details;
    const auto& nodes = cset_.grid.nodes;
    const auto& weights = cset_.grid.weights;
    const std::size_t nn = nodes.size();

    double penalty = 0.0;
    std::vector<std::pair<double, double>> penalty_terms;  // (weight, discrepancy) per solved node
    if (warm != nullptr && warm->lambda.size() != groups_.size()) {
      warm->lambda.assign(groups_.size(), std::vector<Eigen::VectorXd>(nn));
    }
    for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
      const Group& grp = groups_[gi];
      GroupEvaluation ge;
      ge.maturity = grp.maturity;
      ge.observations = grp.returns.size();

      Eigen::MatrixXd block(static_cast<Eigen::Index>(grp.returns.size()), 2 + grp.payoff.cols());
      try {
        fill_option_columns(theta, grp, block);
      } catch (const Error&) {
        // The change of measure is undefined here (e.g. an invalid regime).
        out.feasible = false;
        out.infeasible_nodes += static_cast<int>(nn);
        penalty += 1e12;
        out.groups.push_back(std::move(ge));
        continue;
      }

      Eigen::VectorXd previous;
      for (std::size_t i = 0; i < nn; ++i) {
        double w = weights[i];
        if (symmetric_ && !details) {
          if (nodes[i] < 0.0) continue;
          if (nodes[i] > 0.0) w *= 2.0;
        }
        fill_cf_columns(theta, grp, static_cast<Eigen::Index>(i), block);
        penalty_terms.emplace_back(w, 0.0);
        if (!out.feasible && !details) {
          // The value is already +inf; only the surrogate is still needed.
          penalty_terms.back().second = euclidean_discrepancy(block);
          continue;
        }
        // Start from this node's multiplier at the previous theta, else from the
        // neighbouring node at this theta; lambda(t) is smooth in t.
        Eigen::VectorXd* slot = warm != nullptr ? &warm->lambda[gi][i] : nullptr;
        const Eigen::VectorXd* start = slot != nullptr && slot->size() > 0 ? slot : (previous.size() > 0 ? &previous : nullptr);
        InnerSolution sol = solve_inner(block, inner, start);
        out.inner_iterations += sol.iterations;
        if (sol.converged()) {
          previous = sol.lambda;
          if (slot != nullptr) *slot = sol.lambda;
        }
        if (sol.converged()) {
          ge.value += w * sol.local_logel;
        } else {
          out.feasible = false;
          ++out.infeasible_nodes;
        }
        if (!out.feasible) penalty_terms.back().second = euclidean_discrepancy(block);
        if (details) ge.nodes.push_back({nodes[i], weights[i], std::move(sol)});
      }
      out.groups.push_back(std::move(ge));
    }

    double total = 0.0;
    for (const auto& ge : out.groups) total += ge.value;
    if (out.feasible) {
      out.value = total;
      out.surrogate = total;
    } else {
      // Node terms computed before the first infeasible node are filled in
      // here so the surrogate does not depend on solve order.
      out.value = kInf;
      std::size_t idx = 0;
      for (std::size_t gi = 0; gi < groups_.size() && penalty < 1e12; ++gi) {
        Eigen::MatrixXd block(static_cast<Eigen::Index>(groups_[gi].returns.size()), 2 + groups_[gi].payoff.cols());
        fill_option_columns(theta, groups_[gi], block);
        for (std::size_t i = 0; i < nn; ++i) {
          if (symmetric_ && !details && nodes[i] < 0.0) continue;
          auto& [w, term] = penalty_terms[idx++];
          if (term == 0.0) {
            fill_cf_columns(theta, groups_[gi], static_cast<Eigen::Index>(i), block);
            term = euclidean_discrepancy(block);
          }
          penalty += w * term;
        }
      }
      out.surrogate = kInfeasiblePenalty + std::min(penalty, 1e12);
    }
    return out;
  }

  /// Residual block of one maturity group at grid node `node`.
  Eigen::MatrixXd block(const ModelParams& theta, std::size_t group, std::size_t node) const {
    const Group& grp = groups_.at(group);
    Eigen::MatrixXd b(static_cast<Eigen::Index>(grp.returns.size()), 2 + grp.payoff.cols());
    fill_option_columns(theta, grp, b);
    fill_cf_columns(theta, grp, static_cast<Eigen::Index>(node), b);
    return b;
  }

  const ConstraintSet& constraints() const { return cset_; }
  const std::vector<Group>& groups() const { return groups_; }
  std::size_t sample_size() const { return n_; }

 private:
  void fill_cf_columns(const ModelParams& theta, const Group& grp, Eigen::Index node, Eigen::MatrixXd& b) const {
    const cplx phi = cf(cset_.grid.nodes[node], theta, grp.env);
    b.col(0) = grp.cos_t.col(node).array() - phi.real();
    b.col(1) = grp.sin_t.col(node).array() - phi.imag();
  }

  void fill_option_columns(const ModelParams& theta, const Group& grp, Eigen::MatrixXd& b) const {
    const Eigen::Index nk = b.rows();
    Eigen::VectorXd density_ratio(nk);
    double cached_rate = kInf;
    for (std::size_t q = 0; q < grp.quotes.size(); ++q) {
      if (grp.quotes[q].rate != cached_rate) {
        cached_rate = grp.quotes[q].rate;
        const MarketEnv qenv{cached_rate, grp.env.delta};
        for (Eigen::Index j = 0; j < nk; ++j) density_ratio[j] = rn(grp.returns[j], theta, qenv);
      }
      b.col(2 + q) = grp.payoff.col(q).cwiseProduct(density_ratio).array() - grp.quotes[q].price_normalized;
    }
  }

  ConstraintSet cset_;
  InnerOptions inner_;
  std::size_t n_ = 0;
  bool symmetric_ = false;
  std::vector<Group> groups_;
};

/// Objective of one maturity group: returns aggregated over k periods,
/// weighted sum of local log-EL ratios over the grid.
inline double integrated_logel(const ReturnSeries& returns, const ModelParams& theta, const ConstraintSet& cset,
                               int maturity) {
  ConstraintSet single = cset;
  single.quotes_by_maturity.clear();
  if (const auto it = cset.quotes_by_maturity.find(maturity); it != cset.quotes_by_maturity.end()) {
    single.quotes_by_maturity[maturity] = it->second;
  } else if (maturity != 1) {
    throw Error(ErrorCode::InvalidArgument, "no quotes at maturity " + std::to_string(maturity));
  }
  return ObjectiveFunction(returns, std::move(single))(theta);
}

/// Sum of integrated objectives over all maturity groups.
inline double total_objective(const ReturnSeries& returns, const ModelParams& theta, const ConstraintSet& cset) {
  return ObjectiveFunction(returns, cset)(theta);
}

}  // namespace levymele
