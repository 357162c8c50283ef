#pragma once

// Box-constrained Nelder-Mead with dimension-adaptive coefficients
// (Gao and Han). Trial points are clamped onto the box.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace levymele {

struct NelderMeadOptions {
  double diameter_tol = 1e-6;  // stop when every vertex is this close to the best one
  int max_evals = 4000;
};

struct NelderMeadResult {
  std::vector<double> x;
  double fx = 0.0;
  int evaluations = 0;
  bool converged = false;
};

template <class F>
NelderMeadResult nelder_mead(F&& f, std::vector<double> x0, const std::vector<double>& step,
                             const std::vector<double>& lower, const std::vector<double>& upper,
                             const NelderMeadOptions& opt = {}) {
  const std::size_t d = x0.size();
  const double nd = static_cast<double>(d);
  const double expand = 1.0 + 2.0 / nd;
  const double contract = 0.75 - 0.5 / nd;
  const double shrink = 1.0 - 1.0 / nd;

  auto clamp = [&](std::vector<double>& x) {
    for (std::size_t i = 0; i < d; ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
  };

  NelderMeadResult res;
  auto eval = [&](const std::vector<double>& x) {
    ++res.evaluations;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };

  clamp(x0);
  std::vector<std::vector<double>> simplex(d + 1, x0);
  std::vector<double> values(d + 1);
  values[0] = eval(x0);
  for (std::size_t i = 0; i < d; ++i) {
    auto& v = simplex[i + 1];
    v[i] += step[i];
    if (v[i] > upper[i]) v[i] = x0[i] - step[i];  // step away from the wall instead
    clamp(v);
    values[i + 1] = eval(v);
  }

  std::vector<std::size_t> order(d + 1);
  std::vector<double> centroid(d), xr(d), xe(d), xc(d);
  auto point = [&](const std::vector<double>& from, double coef, std::vector<double>& out) {
    for (std::size_t i = 0; i < d; ++i) out[i] = centroid[i] + coef * (centroid[i] - from[i]);
    clamp(out);
  };

  while (true) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order[0];
    const std::size_t worst = order[d];
    const std::size_t second = order[d - 1];

    double diameter = 0.0;
    for (std::size_t v = 0; v <= d; ++v) {
      for (std::size_t i = 0; i < d; ++i) diameter = std::max(diameter, std::abs(simplex[v][i] - simplex[best][i]));
    }
    if (diameter < opt.diameter_tol) {
      res.converged = true;
      break;
    }
    if (res.evaluations >= opt.max_evals) break;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t v = 0; v <= d; ++v) {
      if (v == worst) continue;
      for (std::size_t i = 0; i < d; ++i) centroid[i] += simplex[v][i] / nd;
    }

    point(simplex[worst], 1.0, xr);
    const double fr = eval(xr);
    if (fr < values[best]) {
      point(simplex[worst], expand, xe);
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[worst] = xe;
        values[worst] = fe;
      } else {
        simplex[worst] = xr;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[second]) {
      simplex[worst] = xr;
      values[worst] = fr;
      continue;
    }
    // Outside contraction when the reflection improved on the worst point, inside otherwise.
    const bool outside = fr < values[worst];
    point(simplex[worst], outside ? contract : -contract, xc);
    const double fc = eval(xc);
    if (fc < (outside ? fr : values[worst])) {
      simplex[worst] = xc;
      values[worst] = fc;
      continue;
    }
    for (std::size_t v = 0; v <= d; ++v) {
      if (v == best) continue;
      for (std::size_t i = 0; i < d; ++i) simplex[v][i] = simplex[best][i] + shrink * (simplex[v][i] - simplex[best][i]);
      values[v] = eval(simplex[v]);
    }
  }

  const auto it = std::min_element(values.begin(), values.end());
  res.x = simplex[static_cast<std::size_t>(it - values.begin())];
  res.fx = *it;
  return res;
}

}  // namespace levymele
