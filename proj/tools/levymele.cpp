// levymele: replicate | estimate | price | simulate
//
// Exit codes: 0 success, 1 numerical failure, 2 input error.

#include <algorithm>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "levymele/levymele.hpp"

namespace {

using namespace levymele;

struct Overrides {
  std::string config;
  std::optional<std::string> model;
  std::optional<std::size_t> n;
  std::optional<int> paths;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> returns;
  std::optional<std::string> quotes;
  std::optional<std::string> out;
  std::optional<double> a;
  std::optional<int> tnodes;
  std::optional<std::string> strikes;
  std::optional<int> threads;
  std::optional<int> restarts;
  std::optional<double> rate;
  std::optional<double> delta;
  bool progress = false;
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "INI-style config file; flags override it");
  app->add_option("--model", o.model, "bs | merton | kou");
  app->add_option("--n", o.n, "observations per path");
  app->add_option("--paths", o.paths, "replicates");
  app->add_option("--seed", o.seed, "master seed");
  app->add_option("--returns", o.returns, "returns CSV (date,log_return)");
  app->add_option("--quotes", o.quotes, "quotes CSV (maturity_periods,moneyness,rate,price_normalized)");
  app->add_option("--out", o.out, "output file");
  app->add_option("--a", o.a, "frequency grid half-width");
  app->add_option("--tnodes", o.tnodes, "frequency grid nodes");
  app->add_option("--strikes", o.strikes, "strike menus as K/S ratios, e.g. none|0.99|0.99,1.01");
  app->add_option("--threads", o.threads, "worker threads (capped by LEVY_MELEE_THREADS)");
  app->add_option("--restarts", o.restarts, "random restarts of the simplex search");
  app->add_option("--rate", o.rate, "risk-free rate per year");
  app->add_option("--delta", o.delta, "observation period in years");
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.model) {
    const ModelKind k = parse_model_kind(*o.model);
    if (k != c.model) {
      c.model = k;
      c.truth.reset();
      c.init.reset();
    }
  }
  if (o.n) c.n = *o.n;
  if (o.paths) c.paths = *o.paths;
  if (o.seed) c.seed = *o.seed;
  if (o.returns) c.returns_path = *o.returns;
  if (o.quotes) c.quotes_path = *o.quotes;
  if (o.out) c.out_path = *o.out;
  if (o.a) c.a = *o.a;
  if (o.tnodes) c.tnodes = *o.tnodes;
  if (o.strikes) c.strikes = parse_strike_columns(*o.strikes);
  if (o.threads) c.threads = *o.threads;
  if (o.restarts) c.restarts = *o.restarts;
  if (o.rate) c.env.r = *o.rate;
  if (o.delta) c.env.delta = *o.delta;
  validate(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Empirical likelihood estimation of Levy return models from returns and option prices"};
  app.require_subcommand(1);
  Overrides o;
  auto* rep = app.add_subcommand("replicate", "Monte Carlo replication table");
  auto* est = app.add_subcommand("estimate", "estimate on a returns file and optional quotes");
  auto* prc = app.add_subcommand("price", "price the strike menu at the truth by every route");
  auto* sim = app.add_subcommand("simulate", "simulate one path (and quotes) at the truth");
  for (auto* s : {rep, est, prc, sim}) add_common(s, o);
  rep->add_flag("--progress", o.progress, "report each finished replicate on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const RunConfig cfg = resolve(o);
    if (rep->parsed()) {
      ProgressFn progress;
      if (o.progress) {
        progress = [](std::size_t i, std::size_t c) { std::cerr << "replicate " << i << " column " << c << " done\n"; };
      }
      const ReplicationReport report = run_replication(cfg, progress);
      const std::string text = report.format();
      std::cout << text;
      if (!cfg.out_path.empty()) detail::write_atomically(cfg.out_path, text);
    } else if (est->parsed()) {
      run_estimate(cfg, std::cout);
    } else if (prc->parsed()) {
      RunConfig pc = cfg;
      const bool any = std::any_of(pc.strikes.begin(), pc.strikes.end(), [](const auto& c) { return !c.strikes.empty(); });
      if (!any) pc.strikes = parse_strike_columns("0.98,0.99,1.0,1.01,1.02");
      return run_price(pc, std::cout) ? 0 : 1;
    } else if (sim->parsed()) {
      if (cfg.returns_path.empty()) throw Error(ErrorCode::InvalidArgument, "simulate needs --returns");
      const ReturnSeries s = run_simulate(cfg);
      std::cout << "wrote " << s.size() << " returns to " << cfg.returns_path << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_input_error(e.code()) || e.code() == ErrorCode::ModelMismatch ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
