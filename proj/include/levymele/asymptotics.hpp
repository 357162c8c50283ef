#pragma once

// Plug-in sandwich covariance of sqrt(n) (theta_hat - theta_0) for the
// integrated empirical likelihood estimator.
//
// Per node t, with S(t) = E[g g'] = -s11(t) and J(t) = E[dg/dtheta] = s12(t):
//   bread = sum_t w_t J' S^{-1} J
//   meat  = sum_{t1,t2} w_t1 w_t2 J(t1)' S(t1)^{-1} Gamma(t1,t2) S(t2)^{-1} J(t2)
// with Gamma(t1,t2) = E[g(t1) g(t2)'] taken across nodes. The meat is formed as
// the second moment of u_j = sum_t w_t J' S^{-1} g_j(t), which equals the
// double sum without the quadratic cost in the number of nodes.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "levymele/el_engine.hpp"
#include "levymele/error.hpp"
#include "levymele/levy_models.hpp"
#include "levymele/params.hpp"

namespace levymele {

namespace detail {

inline std::vector<double> fd_steps(const std::vector<double>& v) {
  std::vector<double> h(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) h[i] = 1e-5 * std::max(1.0, std::abs(v[i]));
  return h;
}

/// Moore-Penrose inverse of a symmetric PSD matrix.
inline Eigen::MatrixXd psd_pinv(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  const Eigen::VectorXd ev = es.eigenvalues();
  const double cut = 1e-12 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  Eigen::VectorXd inv(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) inv[i] = ev[i] > cut ? 1.0 / ev[i] : 0.0;
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// E[dg/dtheta] at every grid node of one maturity group, by central
/// differences with steps 1e-5 max(1, |theta_i|). The option rows do not
/// depend on t, so their columns are shared.
inline std::vector<Eigen::MatrixXd> estimate_jacobians(const ObjectiveFunction& obj, const ModelParams& theta,
                                                       std::size_t group) {
  const auto& grp = obj.groups().at(group);
  const auto& nodes = obj.constraints().grid.nodes;
  const std::vector<double> v = to_vector(theta);
  const std::vector<double> h = detail::fd_steps(v);
  const Eigen::Index d = static_cast<Eigen::Index>(v.size());
  const Eigen::Index q = 2 + static_cast<Eigen::Index>(grp.quotes.size());
  const Eigen::Index nk = static_cast<Eigen::Index>(grp.returns.size());

  std::vector<Eigen::MatrixXd> jac(nodes.size(), Eigen::MatrixXd::Zero(q, d));
  for (Eigen::Index i = 0; i < d; ++i) {
    std::vector<double> up = v, down = v;
    up[i] += h[i];
    down[i] -= h[i];
    const ModelParams tu = from_vector(theta.kind(), theta.has_pref(), up);
    const ModelParams td = from_vector(theta.kind(), theta.has_pref(), down);
    const double denom = 2.0 * h[i];
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const cplx dphi = (cf(nodes[k], tu, grp.env) - cf(nodes[k], td, grp.env)) / denom;
      jac[k](0, i) = -dphi.real();
      jac[k](1, i) = -dphi.imag();
    }
    for (std::size_t qi = 0; qi < grp.quotes.size(); ++qi) {
      const MarketEnv qenv{grp.quotes[qi].rate, grp.env.delta};
      double acc = 0.0;
      for (Eigen::Index j = 0; j < nk; ++j) {
        acc += grp.payoff(j, qi) * (rn(grp.returns[j], tu, qenv) - rn(grp.returns[j], td, qenv));
      }
      const double col = acc / (static_cast<double>(nk) * denom);
      for (auto& m : jac) m(2 + qi, i) = col;
    }
  }
  return jac;
}

/// s12(t) for the first maturity group of `cset` at a single frequency t.
inline Eigen::MatrixXd estimate_jacobian(const ReturnSeries& returns, const ModelParams& theta, double t,
                                         ConstraintSet cset) {
  cset.grid = QuadratureGrid{{t}, {1.0}};
  const ObjectiveFunction obj(returns, std::move(cset));
  return estimate_jacobians(obj, theta, 0).front();
}

/// Gamma(t1, t2) = sample mean of g_j(t1) g_j(t2)' for the first maturity group.
inline Eigen::MatrixXd estimate_second_moments(const ReturnSeries& returns, const ModelParams& theta, double t1,
                                               double t2, ConstraintSet cset) {
  cset.grid = QuadratureGrid{{t1, t2}, {0.5, 0.5}};
  const ObjectiveFunction obj(returns, std::move(cset));
  const Eigen::MatrixXd g1 = obj.block(theta, 0, 0);
  const Eigen::MatrixXd g2 = obj.block(theta, 0, 1);
  return g1.transpose() * g2 / static_cast<double>(g1.rows());
}

struct SandwichResult {
  Eigen::MatrixXd sigma;  // covariance of sqrt(n) (theta_hat - theta)
  Eigen::MatrixXd bread;  // sum_k n_k B_k / n
  Eigen::MatrixXd meat;   // sum_k n_k M_k / n
  std::size_t n = 0;
  double min_eigenvalue_raw = 0.0;  // before flooring at zero
  bool floored = false;
  bool rank_deficient_jacobian = false;
  std::string note;

  std::vector<double> standard_errors() const {
    std::vector<double> se(static_cast<std::size_t>(sigma.rows()));
    for (Eigen::Index i = 0; i < sigma.rows(); ++i) se[i] = std::sqrt(std::max(sigma(i, i), 0.0) / n);
    return se;
  }
};

/// Sandwich covariance at theta_hat. Maturity groups reuse the same returns,
/// but their scores are combined as if independent.
inline SandwichResult sandwich_sigma(const ObjectiveFunction& obj, const ModelParams& theta_hat) {
  const auto& grid = obj.constraints().grid;
  const Eigen::Index d = static_cast<Eigen::Index>(to_vector(theta_hat).size());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(d, d);
  SandwichResult out;
  out.n = obj.sample_size();

  for (std::size_t gi = 0; gi < obj.groups().size(); ++gi) {
    const auto jac = estimate_jacobians(obj, theta_hat, gi);
    const Eigen::Index nk = static_cast<Eigen::Index>(obj.groups()[gi].returns.size());
    Eigen::MatrixXd bread = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(nk, d);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const Eigen::MatrixXd g = obj.block(theta_hat, gi, k);
      const Eigen::MatrixXd s = g.transpose() * g / static_cast<double>(nk);
      const Eigen::MatrixXd a = jac[k].transpose() * detail::psd_pinv(s);  // d x q
      bread += grid.weights[k] * a * jac[k];
      u += grid.weights[k] * g * a.transpose();
      Eigen::FullPivLU<Eigen::MatrixXd> lu(jac[k]);
      if (lu.rank() < std::min(jac[k].rows(), jac[k].cols()) && grid.nodes[k] != 0.0) out.rank_deficient_jacobian = true;
    }
    const Eigen::MatrixXd meat = u.transpose() * u / static_cast<double>(nk);
    h += static_cast<double>(nk) * bread;
    v += static_cast<double>(nk) * meat;
  }

  const double n = static_cast<double>(out.n);
  out.bread = h / n;
  out.meat = v / n;
  const Eigen::MatrixXd hs = 0.5 * (h + h.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> hes(hs);
  const double hmax = hes.eigenvalues().cwiseAbs().maxCoeff();
  const double hmin = hes.eigenvalues().cwiseAbs().minCoeff();
  if (!(hmin > 0.0) || hmax / hmin > 1e12) {
    throw Error(ErrorCode::BreadSingular, "bread condition number " + std::to_string(hmin > 0.0 ? hmax / hmin : kInf));
  }
  const Eigen::MatrixXd hinv = hs.inverse();
  Eigen::MatrixXd sigma = n * hinv * v * hinv;
  sigma = 0.5 * (sigma + sigma.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ses(sigma);
  out.min_eigenvalue_raw = ses.eigenvalues().minCoeff();
  if (out.min_eigenvalue_raw < 0.0) {
    out.floored = true;
    if (out.min_eigenvalue_raw < -1e-8) out.note = "negative eigenvalue " + std::to_string(out.min_eigenvalue_raw) + " floored";
    const Eigen::VectorXd ev = ses.eigenvalues().cwiseMax(0.0);
    sigma = ses.eigenvectors() * ev.asDiagonal() * ses.eigenvectors().transpose();
    sigma = 0.5 * (sigma + sigma.transpose()).eval();
  }
  if (out.rank_deficient_jacobian) {
    if (!out.note.empty()) out.note += "; ";
    out.note += "rank-deficient Jacobian at some node";
  }
  out.sigma = sigma;
  return out;
}

inline SandwichResult sandwich_sigma(const ReturnSeries& returns, const ModelParams& theta_hat,
                                     const ConstraintSet& cset) {
  return sandwich_sigma(ObjectiveFunction(returns, cset), theta_hat);
}

struct MonotonicityReport {
  Eigen::MatrixXd difference;  // sigma_reduced - sigma_full
  double min_eigenvalue = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Dropping an estimating equation should not shrink the asymptotic covariance.
inline MonotonicityReport monotonicity_check(const ReturnSeries& returns, const ModelParams& theta,
                                             const ConstraintSet& cset_full, const ConstraintSet& cset_reduced) {
  const SandwichResult full = sandwich_sigma(returns, theta, cset_full);
  const SandwichResult reduced = sandwich_sigma(returns, theta, cset_reduced);
  MonotonicityReport rep;
  rep.difference = reduced.sigma - full.sigma;
  const Eigen::MatrixXd sym = 0.5 * (rep.difference + rep.difference.transpose());
  rep.min_eigenvalue = sym.size() == 0 ? 0.0 : Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym).eigenvalues().minCoeff();
  rep.tolerance = 1e-6 * std::abs(full.sigma.trace());
  rep.pass = rep.min_eigenvalue >= -rep.tolerance;
  return rep;
}

}  // namespace levymele
