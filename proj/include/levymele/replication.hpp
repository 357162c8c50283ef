#pragma once

// Desk-scale replication of the simulation tables, single estimations on user
// data, and price inspection. Each replicate draws from its own RNG substream
// of the master seed, so results do not depend on the worker count.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "levymele/el_engine.hpp"
#include "levymele/error.hpp"
#include "levymele/estimator.hpp"
#include "levymele/io.hpp"
#include "levymele/option_pricing.hpp"
#include "levymele/params.hpp"
#include "levymele/path_simulator.hpp"
#include "levymele/rng.hpp"

namespace levymele {

/// Worker count: the request (or the hardware) capped by LEVY_MELEE_THREADS.
inline int worker_count(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* cap = std::getenv("LEVY_MELEE_THREADS")) {
    const int c = std::atoi(cap);
    if (c > 0) n = std::min(n, c);
  }
  return std::max(n, 1);
}

/// Runs task(i) for i in [0, count) on a small pool; the first exception is rethrown.
inline void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& task) {
  workers = std::max(1, std::min<int>(workers, static_cast<int>(count)));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Option quotes for a strike menu, priced at `theta`.
inline QuoteBook synthesize_quotes(const ModelParams& theta, const StrikeColumn& column, const MarketEnv& env) {
  QuoteBook book;
  for (const auto& s : column.strikes) {
    OptionQuote q;
    q.maturity_periods = s.maturity_periods;
    q.moneyness = s.moneyness();
    q.rate = env.r;
    q.price_normalized = price(theta, q.moneyness, q.maturity_periods, env);
    book[q.maturity_periods].push_back(q);
  }
  return book;
}

inline ConstraintSet make_constraints(const RunConfig& cfg, const QuoteBook& quotes) {
  ConstraintSet cset;
  cset.grid = cfg.grid();
  cset.env = cfg.env;
  for (const auto& [k, qs] : quotes) {
    for (const auto& q : qs) cset.add_quote(q);
  }
  return cset;
}

struct ReportRow {
  std::string parameter;
  double truth = 0.0;
  std::vector<double> mean;  // one entry per strike column
  std::vector<double> sd;    // unbiased (n - 1)
};

struct ReplicationReport {
  RunConfig config;
  std::vector<std::string> names;
  // estimates[column][replicate], empty when that replicate failed
  std::vector<std::vector<std::optional<std::vector<double>>>> estimates;
  std::vector<int> excluded;         // per column
  std::vector<std::string> failures;  // "replicate i, column j: message", in index order
  std::vector<ReportRow> rows;

  std::string format() const;
};

namespace detail {

inline void mean_sd(const std::vector<double>& x, double& mean, double& sd) {
  mean = 0.0;
  sd = 0.0;
  if (x.empty()) {
    mean = sd = std::nan("");
    return;
  }
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  if (x.size() < 2) return;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  sd = std::sqrt(ss / static_cast<double>(x.size() - 1));
}

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace detail

inline std::string ReplicationReport::format() const {
  std::string out;
  out += "# model = " + std::string(to_string(config.model)) + (config.with_pref ? " + risk preference" : "") + "\n";
  out += "# n = " + std::to_string(config.n) + ", replicates = " + std::to_string(config.paths) +
         ", delta = " + detail::format_double(config.env.delta) + ", r = " + detail::format_double(config.env.r) + "\n";
  out += "# seed = " + std::to_string(config.seed) + "\n";
  out += "# quadrature: a = " + detail::format_double(config.a) + ", nodes = " + std::to_string(config.tnodes) + "\n";
  out += "# strikes (K/S) = " + format_strike_columns(config.strikes) + "\n";
  out += "# cells are mean (SD) over successful replicates; SD uses the unbiased n-1 divisor\n";
  out += detail::pad("parameter", 11) + detail::pad("truth", 10);
  for (const auto& c : config.strikes) out += detail::pad(c.label(), 22);
  out += "\n";
  for (const auto& row : rows) {
    out += detail::pad(row.parameter, 11) + detail::pad(detail::fixed(row.truth, 4), 10);
    for (std::size_t c = 0; c < row.mean.size(); ++c) {
      out += detail::pad(detail::fixed(row.mean[c], 4) + " (" + detail::fixed(row.sd[c], 4) + ")", 22);
    }
    out += "\n";
  }
  out += detail::pad("excluded", 21);
  for (int e : excluded) out += detail::pad(std::to_string(e), 22);
  out += "\n";
  for (const auto& f : failures) out += "# failed: " + f + "\n";
  return out;
}

/// Progress hook: (replicate, column) just finished.
using ProgressFn = std::function<void(std::size_t, std::size_t)>;

inline ReplicationReport run_replication(const RunConfig& cfg, const ProgressFn& progress = {}) {
  validate(cfg);
  const ModelParams truth = cfg.truth_or_default();
  const ModelParams init = cfg.init_or_default();
  if (truth.kind() != cfg.model || init.kind() != cfg.model) {
    throw Error(ErrorCode::ModelMismatch, "truth and init must match the configured model");
  }

  ReplicationReport rep;
  rep.config = cfg;
  rep.names = parameter_names(cfg.model, cfg.with_pref);
  const std::size_t paths = static_cast<std::size_t>(cfg.paths);
  const std::size_t cols = cfg.strikes.size();
  rep.estimates.assign(cols, std::vector<std::optional<std::vector<double>>>(paths));
  std::vector<std::string> errors(paths * cols);

  // Quotes do not depend on the path: they are priced at the truth.
  std::vector<QuoteBook> books(cols);
  for (std::size_t c = 0; c < cols; ++c) books[c] = synthesize_quotes(truth, cfg.strikes[c], cfg.env);
  const ParameterBounds bounds = ParameterBounds::defaults(cfg.model, cfg.with_pref);

  std::mutex progress_mu;
  parallel_for(paths * cols, worker_count(cfg.threads), [&](std::size_t task) {
    const std::size_t i = task / cols;
    const std::size_t c = task % cols;
    try {
      SimSpec spec;
      spec.model_params = truth;
      spec.env = cfg.env;
      spec.n = cfg.n;
      spec.seed = cfg.seed;
      spec.stream = i;
      spec.merton_scheme = cfg.merton_scheme;
      const ReturnSeries returns = simulate(spec);

      EstimatorOptions opt;
      opt.restarts = cfg.restarts;
      opt.seed = Rng::substream(cfg.seed ^ 0x9e3779b97f4a7c15ULL, i).next_u64();
      opt.compute_covariance = false;
      const EstimationResult res = estimate(returns, make_constraints(cfg, books[c]), init, bounds, opt);
      rep.estimates[c][i] = to_vector(res.theta_hat);
    } catch (const Error& e) {
      errors[task] = e.what();
    }
    if (progress) {
      std::lock_guard<std::mutex> lock(progress_mu);
      progress(i, c);
    }
  });

  rep.excluded.assign(cols, 0);
  for (std::size_t task = 0; task < errors.size(); ++task) {
    if (errors[task].empty()) continue;
    ++rep.excluded[task % cols];
    rep.failures.push_back("replicate " + std::to_string(task / cols) + ", column " + std::to_string(task % cols) +
                           ": " + errors[task]);
  }

  const std::vector<double> tv = to_vector(truth);
  for (std::size_t p = 0; p < rep.names.size(); ++p) {
    ReportRow row;
    row.parameter = rep.names[p];
    row.truth = tv[p];
    for (std::size_t c = 0; c < cols; ++c) {
      std::vector<double> x;
      for (const auto& e : rep.estimates[c]) {
        if (e) x.push_back((*e)[p]);
      }
      double m = 0.0, s = 0.0;
      detail::mean_sd(x, m, s);
      row.mean.push_back(m);
      row.sd.push_back(s);
    }
    rep.rows.push_back(row);
  }
  return rep;
}

/// Flat `key = value` result file; no timestamps, so reruns are byte-identical.
inline std::string format_result(const EstimationResult& res, const std::vector<std::string>& names, std::uint64_t seed,
                                 int excluded) {
  const std::vector<double> v = to_vector(res.theta_hat);
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) out += "theta." + names[i] + " = " + detail::format_double(v[i]) + "\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double se = res.has_covariance ? res.standard_errors[i] : std::nan("");
    out += "se." + names[i] + " = " + (std::isnan(se) ? std::string("nan") : detail::format_double(se)) + "\n";
  }
  out += "objective = " + detail::format_double(res.objective) + "\n";
  out += "seed = " + std::to_string(seed) + "\n";
  out += "excluded_replicates = " + std::to_string(excluded) + "\n";
  return out;
}

/// Estimation on user data. Without a quotes file the objective uses the
/// characteristic-function constraints alone.
inline EstimationResult run_estimate(const RunConfig& cfg, std::ostream& log) {
  validate(cfg);
  if (cfg.returns_path.empty()) throw Error(ErrorCode::InvalidArgument, "estimate needs a returns file");
  const ReturnSeries returns = load_returns(cfg.returns_path, cfg.env.delta);
  const QuoteBook quotes = cfg.quotes_path.empty() ? QuoteBook{} : load_quotes(cfg.quotes_path);
  const ModelParams init = cfg.init_or_default();
  if (init.kind() != cfg.model) throw Error(ErrorCode::ModelMismatch, "init does not match the configured model");

  EstimatorOptions opt;
  opt.restarts = cfg.restarts;
  opt.seed = cfg.seed;
  const EstimationResult res =
      estimate(returns, make_constraints(cfg, quotes), init, ParameterBounds::defaults(cfg.model, cfg.with_pref), opt);

  const auto names = parameter_names(cfg.model, cfg.with_pref);
  const std::vector<double> v = to_vector(res.theta_hat);
  std::size_t nq = 0;
  for (const auto& [k, qs] : quotes) nq += qs.size();
  log << "model " << to_string(cfg.model) << ", n = " << returns.size() << ", quotes = " << nq << "\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    log << detail::pad(names[i], 10) << detail::fixed(v[i], 6);
    if (res.has_covariance) log << "  (se " << detail::fixed(res.standard_errors[i], 6) << ")";
    log << "\n";
  }
  log << "objective " << detail::format_double(res.objective) << "\n";
  if (res.diagnostics.at_boundary) {
    log << "warning: estimate on the search boundary for";
    for (const auto& b : res.diagnostics.boundary_parameters) log << " " << b;
    log << "\n";
  }
  if (!res.has_covariance || !res.diagnostics.covariance_note.empty()) {
    log << "covariance: " << (res.diagnostics.covariance_note.empty() ? "unavailable" : res.diagnostics.covariance_note)
        << "\n";
  }
  if (!cfg.out_path.empty()) detail::write_atomically(cfg.out_path, format_result(res, names, cfg.seed, 0));
  return res;
}

/// Prices every strike of the configured menus at the truth and prints the
/// spread between routes. Returns false when a jump-model cross-check fails.
inline bool run_price(const RunConfig& cfg, std::ostream& log, double tolerance = 1e-3) {
  validate(cfg);
  const ModelParams theta = cfg.truth_or_default();
  bool ok = true;
  log << "model " << to_string(cfg.model) << ", r = " << cfg.env.r << ", delta = " << cfg.env.delta << "\n";
  log << detail::pad("K/S", 8) << detail::pad("periods", 9) << detail::pad("price", 14) << "routes\n";
  for (const auto& col : cfg.strikes) {
    for (const auto& s : col.strikes) {
      const RouteComparison rc = price_routes(theta, s.moneyness(), s.maturity_periods, cfg.env);
      log << detail::pad(detail::fixed(s.strike_ratio, 4), 8) << detail::pad(std::to_string(s.maturity_periods), 9)
          << detail::pad(detail::fixed(rc.authoritative, 10), 14);
      auto show = [&](const char* name, const std::optional<double>& v) {
        if (!v) return;
        const double diff = std::abs(*v - rc.authoritative);
        log << name << " " << detail::fixed(*v, 10) << " (diff " << detail::format_double(diff) << ")  ";
      };
      show("closed", rc.closed_form);
      show("series", rc.series);
      show("fourier", rc.fourier);
      show("laplace", rc.laplace);
      if (cfg.model != ModelKind::BlackScholes && rc.fourier && rc.laplace) {
        const double diff = std::abs(*rc.fourier - *rc.laplace);
        const bool pass = diff < tolerance;
        ok = ok && pass;
        log << (pass ? "PASS" : "FAIL");
      }
      log << "\n";
    }
  }
  return ok;
}

/// Simulates one path at the truth and writes it, plus quotes for the first
/// non-empty strike menu when a quotes path is configured.
inline ReturnSeries run_simulate(const RunConfig& cfg) {
  validate(cfg);
  SimSpec spec;
  spec.model_params = cfg.truth_or_default();
  spec.env = cfg.env;
  spec.n = cfg.n;
  spec.seed = cfg.seed;
  spec.merton_scheme = cfg.merton_scheme;
  const ReturnSeries s = simulate(spec);
  if (!cfg.returns_path.empty()) write_returns(cfg.returns_path, s);
  if (!cfg.quotes_path.empty()) {
    for (const auto& col : cfg.strikes) {
      if (col.strikes.empty()) continue;
      write_quotes(cfg.quotes_path, synthesize_quotes(spec.model_params, col, cfg.env));
      break;
    }
  }
  return s;
}

}  // namespace levymele
