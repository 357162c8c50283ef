#include <cmath>

#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace levymele;
using namespace levymele::testing;

namespace {

const MarketEnv kEnv{0.03, 1.0 / 52.0};

ConstraintSet one_strike(const ModelParams& th) {
  ConstraintSet cset;
  cset.env = kEnv;
  cset.add_quote({1, 1.0 / 0.99, kEnv.r, price(th, 1.0 / 0.99, 1, kEnv)});
  return cset;
}

bool symmetric_psd(const Eigen::MatrixXd& s) {
  if ((s - s.transpose()).norm() > 1e-12 * std::max(1.0, s.norm())) return false;
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s).eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, s.norm());
}

}  // namespace

TEST(Jacobian, BlackScholesRowsMatchAnalyticDerivatives) {
  const BsParams p{0.05, 0.3};
  const ReturnSeries s = draw(bs(p.mu, p.sigma), 500, 1);
  ConstraintSet cset;
  cset.env = kEnv;
  const double d = kEnv.delta;
  for (double t : {-4.0, -0.7, 0.3, 1.9, 4.6}) {
    const Eigen::MatrixXd j = estimate_jacobian(s, bs(p.mu, p.sigma), t, cset);
    const cplx phi = cf_bs(t, p, kEnv);
    const cplx dmu = phi * cplx(0.0, d * t);
    const cplx dsigma = phi * cplx(-p.sigma * t * t * d, -p.sigma * t * d);
    const double scale = std::max(std::abs(dmu), std::abs(dsigma));
    EXPECT_NEAR(j(0, 0), -dmu.real(), 1e-6 * scale) << t;
    EXPECT_NEAR(j(1, 0), -dmu.imag(), 1e-6 * scale) << t;
    EXPECT_NEAR(j(0, 1), -dsigma.real(), 1e-6 * scale) << t;
    EXPECT_NEAR(j(1, 1), -dsigma.imag(), 1e-6 * scale) << t;
  }
}

TEST(Jacobian, ParameterFreeRowIsZero) {
  // A strike so far out of the money that no observed return pays off.
  const ReturnSeries s = draw(bs(0.05, 0.3), 300, 2);
  ConstraintSet cset;
  cset.env = kEnv;
  cset.add_quote({1, 0.01, kEnv.r, 0.0});
  const Eigen::MatrixXd j = estimate_jacobian(s, bs(0.05, 0.3), 1.0, cset);
  EXPECT_EQ(j.row(2).norm(), 0.0);
  EXPECT_GT(j.row(1).norm(), 0.0);
}

TEST(Jacobian, DisjointHalvesAgree) {
  const ModelParams th = merton(kMertonTruth);
  const ReturnSeries s = draw(th, 100000, 3, kEnv, MertonJumpScheme::ExactPoisson);
  ReturnSeries a = s, b = s;
  a.returns.assign(s.returns.begin(), s.returns.begin() + 50000);
  b.returns.assign(s.returns.begin() + 50000, s.returns.end());
  const ConstraintSet cset = one_strike(th);
  const Eigen::MatrixXd ja = estimate_jacobian(a, th, 1.5, cset);
  const Eigen::MatrixXd jb = estimate_jacobian(b, th, 1.5, cset);
  // The cf rows do not depend on the data; the option row is a sample mean
  // whose per-observation terms give the standard error.
  const std::vector<double> v = to_vector(th);
  for (Eigen::Index c = 0; c < ja.cols(); ++c) {
    EXPECT_NEAR(ja(0, c), jb(0, c), 1e-12);
    EXPECT_NEAR(ja(1, c), jb(1, c), 1e-12);
    std::vector<double> up = v, down = v;
    const double h = 1e-5 * std::max(1.0, std::abs(v[c]));
    up[c] += h;
    down[c] -= h;
    const ModelParams tu = from_vector(th.kind(), false, up), td = from_vector(th.kind(), false, down);
    auto term = [&](double R) {
      return discounted_payoff(R, 1.0 / 0.99, kEnv.r, kEnv.delta) * (rn(R, tu, kEnv) - rn(R, td, kEnv)) / (2.0 * h);
    };
    const MeanSe ma = mc_mean(a.returns, term), mb = mc_mean(b.returns, term);
    EXPECT_NEAR(ja(2, c), ma.mean, 1e-9 * std::max(1.0, std::abs(ma.mean)));
    EXPECT_NEAR(ja(2, c), jb(2, c), 3.0 * std::hypot(ma.se, mb.se)) << c;
  }
}

TEST(SecondMoments, DiagonalIsResidualGram) {
  const ModelParams th = bs(0.05, 0.3);
  const ReturnSeries s = draw(th, 400, 4);
  const ConstraintSet cset = one_strike(th);
  const Eigen::MatrixXd gamma = estimate_second_moments(s, th, 1.3, 1.3, cset);
  const ResidualBlock g = build_residuals(s.returns, th, 1.3, cset.quotes(1), kEnv);
  const Eigen::MatrixXd s11 = -(g.transpose() * g) / static_cast<double>(g.rows());
  EXPECT_LE((gamma + s11).norm(), 1e-13);
}

TEST(SecondMoments, StackedGramIsPsd) {
  const ModelParams th = kou(kKouTruth);
  const ReturnSeries s = draw(th, 400, 5);
  const ConstraintSet cset = one_strike(th);
  const double t1 = -2.0, t2 = 3.5;
  Eigen::MatrixXd big(6, 6);
  big << estimate_second_moments(s, th, t1, t1, cset), estimate_second_moments(s, th, t1, t2, cset),
      estimate_second_moments(s, th, t2, t1, cset), estimate_second_moments(s, th, t2, t2, cset);
  EXPECT_TRUE(symmetric_psd(0.5 * (big + big.transpose())));
  EXPECT_LE((big - big.transpose()).norm(), 1e-13);
}

TEST(SecondMoments, MatchPopulationValues) {
  const BsParams p{0.05, 0.3};
  const ReturnSeries s = draw(bs(p.mu, p.sigma), 200000, 6);
  ConstraintSet cset;
  cset.env = kEnv;
  const double t1 = 2.0, t2 = 4.5;
  const Eigen::MatrixXd gamma = estimate_second_moments(s, bs(p.mu, p.sigma), t1, t2, cset);
  auto phi = [&](double t) { return cf_bs(t, p, kEnv); };
  // E[cos(t1 R) cos(t2 R)] = Re(phi(t1 + t2) + phi(t1 - t2)) / 2, and so on.
  const cplx sum = phi(t1 + t2), diff = phi(t1 - t2), a = phi(t1), b = phi(t2);
  Eigen::Matrix2d pop;
  pop(0, 0) = 0.5 * (sum.real() + diff.real()) - a.real() * b.real();
  pop(1, 1) = 0.5 * (diff.real() - sum.real()) - a.imag() * b.imag();
  pop(0, 1) = 0.5 * (sum.imag() - diff.imag()) - a.real() * b.imag();
  pop(1, 0) = 0.5 * (sum.imag() + diff.imag()) - a.imag() * b.real();
  const ResidualBlock g1 = build_residuals(s.returns, bs(p.mu, p.sigma), t1, {}, kEnv);
  const ResidualBlock g2 = build_residuals(s.returns, bs(p.mu, p.sigma), t2, {}, kEnv);
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      std::vector<double> prod(g1.rows());
      for (Eigen::Index j = 0; j < g1.rows(); ++j) prod[j] = g1(j, r) * g2(j, c);
      const MeanSe m = mc_mean(prod, [](double x) { return x; });
      EXPECT_NEAR(gamma(r, c), pop(r, c), 3.0 * m.se + 1e-12) << r << c;
    }
  }
}

TEST(Sandwich, SymmetricPsdOnFixtures) {
  const std::vector<ModelParams> models = {bs(0.05, 0.3), merton(kMertonTruth), kou(kKouTruth)};
  for (std::size_t i = 0; i < models.size(); ++i) {
    const ReturnSeries s = draw(models[i], 1000, 10 + i);
    for (bool strikes : {false, true}) {
      ConstraintSet cset = strikes ? one_strike(models[i]) : ConstraintSet{};
      cset.env = kEnv;
      const SandwichResult r = sandwich_sigma(s, models[i], cset);
      EXPECT_TRUE(symmetric_psd(r.sigma)) << i << strikes;
      EXPECT_GE(r.min_eigenvalue_raw, -1e-8 * std::max(1.0, r.sigma.norm())) << i << strikes;
    }
  }
}

TEST(Sandwich, InvariantToDuplicatingObservations) {
  const ModelParams th = bs(0.05, 0.3);
  const ReturnSeries s = draw(th, 500, 20);
  ReturnSeries twice = s;
  twice.returns.insert(twice.returns.end(), s.returns.begin(), s.returns.end());
  const ConstraintSet cset = one_strike(th);
  const Eigen::MatrixXd a = sandwich_sigma(s, th, cset).sigma;
  const Eigen::MatrixXd b = sandwich_sigma(twice, th, cset).sigma;
  EXPECT_LE((a - b).norm(), 1e-10 * a.norm());
}

TEST(Sandwich, IndependentDatasetsAgree) {
  const ModelParams th = bs(0.05, 0.3);
  ConstraintSet cset;
  cset.env = kEnv;
  const Eigen::MatrixXd a = sandwich_sigma(draw(th, 20000, 21), th, cset).sigma;
  const Eigen::MatrixXd b = sandwich_sigma(draw(th, 20000, 22), th, cset).sigma;
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(a(i, i) / b(i, i), 1.0, 0.1) << i;
}

TEST(Sandwich, BlackScholesStandardErrorScale) {
  const ModelParams th = bs(0.05, 0.3);
  ConstraintSet cset;
  cset.env = kEnv;
  const SandwichResult r = sandwich_sigma(draw(th, 1000, 23), th, cset);
  const double se = r.standard_errors()[1];
  EXPECT_GT(se, 0.007 / 2.0);
  EXPECT_LT(se, 0.007 * 2.0);
}

TEST(Sandwich, SingularBreadIsReported) {
  ConstraintSet cset;
  cset.env = kEnv;
  cset.grid = QuadratureGrid{{0.0}, {1.0}};
  EXPECT_THROW(sandwich_sigma(draw(bs(0.05, 0.3), 200, 24), bs(0.05, 0.3), cset), Error);
}

TEST(Monotonicity, IdenticalSetsGiveZeroDifference) {
  const ModelParams th = bs(0.05, 0.3);
  const ReturnSeries s = draw(th, 500, 30);
  const ConstraintSet cset = one_strike(th);
  const MonotonicityReport rep = monotonicity_check(s, th, cset, cset);
  EXPECT_EQ(rep.difference.norm(), 0.0);
  EXPECT_TRUE(rep.pass);
}

TEST(Monotonicity, DroppingTheOptionRowAtLargeN) {
  const ModelParams th = bs(0.05, 0.3);
  const ReturnSeries s = draw(th, 10000, 31);
  const ConstraintSet full = one_strike(th);
  ConstraintSet reduced;
  reduced.env = kEnv;
  const MonotonicityReport rep = monotonicity_check(s, th, full, reduced);
  EXPECT_TRUE(rep.pass) << rep.min_eigenvalue << " tol " << rep.tolerance;
}

TEST(Monotonicity, RandomizedThetaSweep) {
  Rng rng(32);
  int passes = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const ModelParams th = bs(0.05 + 0.05 * (rng.uniform() - 0.5), 0.3 * (0.9 + 0.2 * rng.uniform()));
    SimSpec spec{th, kEnv, 2000, 33, static_cast<std::uint64_t>(trial)};
    const ReturnSeries s = simulate(spec);
    ConstraintSet reduced;
    reduced.env = kEnv;
    if (monotonicity_check(s, th, one_strike(th), reduced).pass) ++passes;
  }
  std::cout << "monotonicity pass rate " << passes << "/20\n";
  EXPECT_GE(passes, 18);
}
