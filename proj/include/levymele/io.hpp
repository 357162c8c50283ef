#pragma once

// CSV ingestion for returns and option quotes, the run configuration
// (INI-style `key = value` with [section] headers) and strike menus.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "levymele/el_engine.hpp"
#include "levymele/error.hpp"
#include "levymele/params.hpp"
#include "levymele/path_simulator.hpp"

namespace levymele {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string where(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line);
}

// Locale-independent; a leading '+' is accepted.
inline double parse_double(std::string_view tok, const std::string& ctx) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec == std::errc::result_out_of_range) throw Error(ErrorCode::NonFiniteValue, ctx + ": value out of range");
  if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty()) {
    throw Error(ErrorCode::ParseError, ctx + ": cannot parse '" + std::string(tok) + "' as a number");
  }
  if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, ctx + ": non-finite value '" + std::string(tok) + "'");
  return v;
}

inline long long parse_int(std::string_view tok, const std::string& ctx) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty()) {
    throw Error(ErrorCode::ParseError, ctx + ": cannot parse '" + std::string(tok) + "' as an integer");
  }
  return v;
}

inline std::uint64_t parse_u64(std::string_view tok, const std::string& ctx) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty()) {
    throw Error(ErrorCode::ParseError, ctx + ": cannot parse '" + std::string(tok) + "' as an unsigned integer");
  }
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline bool is_iso_date(std::string_view s) {
  if (s.size() < 10) return false;
  for (std::size_t i = 0; i < 10; ++i) {
    const bool dash = i == 4 || i == 7;
    if (dash ? s[i] != '-' : !(s[i] >= '0' && s[i] <= '9')) return false;
  }
  if (s.size() != 10 && s[10] != 'T' && s[10] != ' ') return false;
  auto digits = [&](std::size_t from, std::size_t len) {
    unsigned v = 0;
    for (std::size_t i = from; i < from + len; ++i) v = 10 * v + static_cast<unsigned>(s[i] - '0');
    return v;
  };
  const std::chrono::year_month_day ymd{std::chrono::year(static_cast<int>(digits(0, 4))),
                                        std::chrono::month(digits(5, 2)), std::chrono::day(digits(8, 2))};
  return ymd.ok();
}

inline bool is_integer(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

// Data lines of a CSV with the given header; blank lines are skipped.
template <class Row>
void read_csv(const std::string& path, std::string_view header, std::size_t columns, Row&& row) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, path + ": cannot open file");
  std::string line;
  std::size_t lineno = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view body = trim(line);
    if (body.empty()) continue;
    if (!seen_header) {
      if (body != header) {
        throw Error(ErrorCode::ParseError,
                    where(path, lineno) + ": expected header '" + std::string(header) + "', got '" + std::string(body) + "'");
      }
      seen_header = true;
      continue;
    }
    const auto cells = split(body, ',');
    if (cells.size() != columns) {
      throw Error(ErrorCode::ParseError, where(path, lineno) + ": expected " + std::to_string(columns) + " fields, got " +
                                             std::to_string(cells.size()));
    }
    row(cells, where(path, lineno));
  }
  if (!seen_header) throw Error(ErrorCode::ParseError, path + ": missing header");
}

// Write to a sibling temporary file, then rename over the target.
inline void write_atomically(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + tmp);
    out << content;
    if (!out) throw Error(ErrorCode::InvalidArgument, "write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw Error(ErrorCode::InvalidArgument, "cannot rename " + tmp + " to " + path);
  }
}

}  // namespace detail

/// Returns CSV `date,log_return`; dates are ISO-8601 or integer indices. The
/// period length comes from the caller, never from the dates.
inline ReturnSeries load_returns(const std::string& path, double delta) {
  ReturnSeries s;
  s.delta = delta;
  detail::read_csv(path, "date,log_return", 2, [&](const auto& cells, const std::string& ctx) {
    if (!detail::is_integer(cells[0]) && !detail::is_iso_date(cells[0])) {
      throw Error(ErrorCode::ParseError, ctx + ": bad date '" + std::string(cells[0]) + "'");
    }
    s.returns.push_back(detail::parse_double(cells[1], ctx));
  });
  if (s.returns.empty()) throw Error(ErrorCode::ParseError, path + ": no observations");
  for (double r : s.returns) s.log_s_last += r;
  return s;
}

inline void write_returns(const std::string& path, const ReturnSeries& s) {
  std::string out = "date,log_return\n";
  for (std::size_t i = 0; i < s.returns.size(); ++i) {
    out += std::to_string(i + 1) + "," + detail::format_double(s.returns[i]) + "\n";
  }
  detail::write_atomically(path, out);
}

using QuoteBook = std::map<int, std::vector<OptionQuote>>;

/// Quotes CSV `maturity_periods,moneyness,rate,price_normalized`, grouped by maturity.
inline QuoteBook load_quotes(const std::string& path) {
  QuoteBook book;
  detail::read_csv(path, "maturity_periods,moneyness,rate,price_normalized", 4,
                   [&](const auto& cells, const std::string& ctx) {
                     OptionQuote q;
                     const long long k = detail::parse_int(cells[0], ctx);
                     if (k < 1 || k > 1000000) throw Error(ErrorCode::InvariantViolation, ctx + ": maturity_periods must be >= 1");
                     q.maturity_periods = static_cast<int>(k);
                     q.moneyness = detail::parse_double(cells[1], ctx);
                     q.rate = detail::parse_double(cells[2], ctx);
                     q.price_normalized = detail::parse_double(cells[3], ctx);
                     try {
                       validate(q);
                     } catch (const Error& e) {
                       throw Error(ErrorCode::InvariantViolation, ctx + ": " + e.message());
                     }
                     book[q.maturity_periods].push_back(q);
                   });
  if (book.empty()) throw Error(ErrorCode::ParseError, path + ": no observations");
  return book;
}

inline void write_quotes(const std::string& path, const QuoteBook& book) {
  std::string out = "maturity_periods,moneyness,rate,price_normalized\n";
  for (const auto& [k, qs] : book) {
    for (const auto& q : qs) {
      out += std::to_string(q.maturity_periods) + "," + detail::format_double(q.moneyness) + "," +
             detail::format_double(q.rate) + "," + detail::format_double(q.price_normalized) + "\n";
    }
  }
  detail::write_atomically(path, out);
}

/// One strike of a menu: K/S ratio and maturity in periods.
struct StrikeSpec {
  double strike_ratio = 1.0;
  int maturity_periods = 1;

  double moneyness() const { return 1.0 / strike_ratio; }  // S / K
};

/// One column of a replication table, e.g. {0.99S, 1.01S}.
struct StrikeColumn {
  std::vector<StrikeSpec> strikes;

  std::string label() const {
    if (strikes.empty()) return "0 strikes";
    return std::to_string(strikes.size()) + (strikes.size() == 1 ? " strike" : " strikes");
  }
};

/// "none|0.99|0.99,1.01" -> three columns. An entry may carry a maturity, "0.99@4".
inline std::vector<StrikeColumn> parse_strike_columns(std::string_view text) {
  std::vector<StrikeColumn> cols;
  for (const auto col : detail::split(detail::trim(text), '|')) {
    StrikeColumn c;
    if (col != "none" && col != "0" && !col.empty()) {
      for (const auto item : detail::split(col, ',')) {
        StrikeSpec s;
        const auto at = item.find('@');
        const std::string ctx = "strike menu '" + std::string(col) + "'";
        s.strike_ratio = detail::parse_double(detail::trim(item.substr(0, at)), ctx);
        if (at != std::string_view::npos) {
          s.maturity_periods = static_cast<int>(detail::parse_int(detail::trim(item.substr(at + 1)), ctx));
        }
        if (!(s.strike_ratio > 0.0) || s.maturity_periods < 1) {
          throw Error(ErrorCode::InvalidArgument, ctx + ": strikes must be positive and maturities >= 1");
        }
        c.strikes.push_back(s);
      }
    }
    cols.push_back(c);
  }
  return cols;
}

inline std::string format_strike_columns(const std::vector<StrikeColumn>& cols) {
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) out += "|";
    if (cols[i].strikes.empty()) out += "none";
    for (std::size_t j = 0; j < cols[i].strikes.size(); ++j) {
      if (j) out += ",";
      out += detail::format_double(cols[i].strikes[j].strike_ratio);
      if (cols[i].strikes[j].maturity_periods != 1) out += "@" + std::to_string(cols[i].strikes[j].maturity_periods);
    }
  }
  return out;
}

/// Simulation truth used by the replication tables.
inline ModelParams default_truth(ModelKind kind, bool with_pref = false) {
  ModelParams theta;
  switch (kind) {
    case ModelKind::BlackScholes: theta.dynamics = BsParams{0.05, 0.30}; break;
    case ModelKind::Merton: theta.dynamics = MertonParams{0.0875, 0.30, 2.0, -0.2, 0.60}; break;
    case ModelKind::Kou: theta.dynamics = KouParams{0.095, 0.30, 2.0, 0.05, 7.5, 9.0}; break;
  }
  if (with_pref) theta.pref = RiskPreference{0.60};
  return theta;
}

struct RunConfig {
  ModelKind model = ModelKind::BlackScholes;
  bool with_pref = false;
  std::optional<ModelParams> truth;
  std::optional<ModelParams> init;
  MarketEnv env{0.03, 1.0 / 52.0};
  double a = 5.0;
  int tnodes = 100;
  std::vector<StrikeColumn> strikes{StrikeColumn{}};
  int paths = 100;
  std::size_t n = 500;
  std::uint64_t seed = 20240601;
  int restarts = 5;
  int threads = 0;  // 0: hardware concurrency, capped by LEVY_MELEE_THREADS
  MertonJumpScheme merton_scheme = MertonJumpScheme::BernoulliLiteral;
  std::string returns_path;
  std::string quotes_path;
  std::string out_path;

  ModelParams truth_or_default() const { return truth ? *truth : default_truth(model, with_pref); }
  ModelParams init_or_default() const { return init ? *init : truth_or_default(); }
  QuadratureGrid grid() const { return QuadratureGrid::uniform(a, tnodes); }
};

inline void validate(const RunConfig& c) {
  detail::require(c.paths >= 1, "replication paths must be >= 1");
  detail::require(c.n >= 2, "sample size must be >= 2");
  detail::require(c.tnodes >= 1, "quadrature needs at least one node");
  detail::require(c.a > 0.0 && std::isfinite(c.a), "quadrature half-width must be positive");
  detail::require(c.restarts >= 0, "restarts must be >= 0");
  detail::require(!c.strikes.empty(), "at least one strike column is required");
  validate(c.env);
  if (c.truth) validate(*c.truth);
  if (c.init) validate(*c.init);
}

namespace detail {

inline ModelParams read_params(const boost::property_tree::ptree& sec, ModelKind kind, bool with_pref,
                               const std::string& section) {
  const ModelParams base = default_truth(kind, with_pref);
  std::vector<double> v = to_vector(base);
  const auto names = parameter_names(kind, with_pref);
  for (const auto& [key, node] : sec) {
    const auto it = std::find(names.begin(), names.end(), key);
    if (it == names.end()) {
      throw Error(ErrorCode::ParseError, "[" + section + "] unknown parameter '" + key + "' for model " +
                                             std::string(to_string(kind)));
    }
    v[static_cast<std::size_t>(it - names.begin())] = parse_double(trim(node.data()), "[" + section + "] " + key);
  }
  return from_vector(kind, with_pref, v);
}

inline MertonJumpScheme parse_merton_scheme(std::string_view s) {
  if (s == "bernoulli") return MertonJumpScheme::BernoulliLiteral;
  if (s == "thinning") return MertonJumpScheme::BernoulliThinning;
  if (s == "poisson") return MertonJumpScheme::ExactPoisson;
  throw Error(ErrorCode::ParseError, "unknown merton jump scheme '" + std::string(s) + "'");
}

inline bool parse_bool(std::string_view s, const std::string& ctx) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw Error(ErrorCode::ParseError, ctx + ": expected a boolean, got '" + std::string(s) + "'");
}

}  // namespace detail

/// Reads an INI-style config. Unknown sections or keys are errors so that
/// typos do not silently fall back to defaults.
inline RunConfig parse_config(std::istream& in, const std::string& name = "config") {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::ParseError, name + ":" + std::to_string(e.line()) + ": " + e.message());
  }

  RunConfig c;
  auto text = [](const pt::ptree& node) { return std::string(detail::trim(node.data())); };
  auto unknown = [&](const std::string& sec, const std::string& key) {
    return Error(ErrorCode::ParseError, name + ": unknown key '" + key + "' in [" + sec + "]");
  };

  // [model] first: the parameter sections depend on it.
  if (const auto m = tree.get_child_optional("model")) {
    for (const auto& [key, node] : *m) {
      if (key == "kind") {
        c.model = parse_model_kind(text(node));
      } else if (key == "risk_preference") {
        c.with_pref = detail::parse_bool(text(node), "[model] risk_preference");
      } else {
        throw unknown("model", key);
      }
    }
  }

  for (const auto& [sec, body] : tree) {
    const std::string ctx = "[" + sec + "]";
    if (sec == "model") continue;
    if (!body.data().empty() && body.empty()) {
      throw Error(ErrorCode::ParseError, name + ": key '" + sec + "' outside any section");
    }
    if (sec == "truth") {
      c.truth = detail::read_params(body, c.model, c.with_pref, sec);
    } else if (sec == "init") {
      c.init = detail::read_params(body, c.model, c.with_pref, sec);
    } else if (sec == "market") {
      for (const auto& [key, node] : body) {
        if (key == "r") c.env.r = detail::parse_double(text(node), ctx + " r");
        else if (key == "delta") c.env.delta = detail::parse_double(text(node), ctx + " delta");
        else throw unknown(sec, key);
      }
    } else if (sec == "quadrature") {
      for (const auto& [key, node] : body) {
        if (key == "a") c.a = detail::parse_double(text(node), ctx + " a");
        else if (key == "nodes") c.tnodes = static_cast<int>(detail::parse_int(text(node), ctx + " nodes"));
        else throw unknown(sec, key);
      }
    } else if (sec == "strikes") {
      for (const auto& [key, node] : body) {
        if (key == "columns") c.strikes = parse_strike_columns(text(node));
        else throw unknown(sec, key);
      }
    } else if (sec == "replication") {
      for (const auto& [key, node] : body) {
        if (key == "paths") c.paths = static_cast<int>(detail::parse_int(text(node), ctx + " paths"));
        else if (key == "n") c.n = static_cast<std::size_t>(detail::parse_int(text(node), ctx + " n"));
        else if (key == "seed") c.seed = detail::parse_u64(text(node), ctx + " seed");
        else if (key == "restarts") c.restarts = static_cast<int>(detail::parse_int(text(node), ctx + " restarts"));
        else if (key == "threads") c.threads = static_cast<int>(detail::parse_int(text(node), ctx + " threads"));
        else if (key == "merton_scheme") c.merton_scheme = detail::parse_merton_scheme(text(node));
        else throw unknown(sec, key);
      }
    } else if (sec == "io") {
      for (const auto& [key, node] : body) {
        if (key == "returns") c.returns_path = text(node);
        else if (key == "quotes") c.quotes_path = text(node);
        else if (key == "out") c.out_path = text(node);
        else throw unknown(sec, key);
      }
    } else {
      throw Error(ErrorCode::ParseError, name + ": unknown section [" + sec + "]");
    }
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, path + ": cannot open config");
  return parse_config(in, path);
}

}  // namespace levymele
