#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "igroup/aggregation.hpp"
#include "igroup/apps/csv.hpp"
#include "igroup/bandwidth.hpp"
#include "igroup/error.hpp"
#include "igroup/parallel.hpp"
#include "igroup/random.hpp"

namespace igroup {

/// T days by K stocks of fractional daily returns with three factor series
/// (market excess, size, value) and the risk-free rate.
struct ReturnPanel {
  Eigen::MatrixXd returns;  // T x K
  Eigen::MatrixXd factors;  // T x 3
  Eigen::VectorXd risk_free;
  std::vector<std::string> dates;
  std::vector<std::string> tickers;
  std::size_t dropped_rows = 0;   // malformed or unparseable CSV rows
  std::size_t dropped_dates = 0;  // dates missing a ticker or factor row

  std::size_t days() const { return static_cast<std::size_t>(returns.rows()); }
  std::size_t stocks() const { return static_cast<std::size_t>(returns.cols()); }

  void validate() const {
    const auto T = returns.rows();
    if (factors.rows() != T || factors.cols() != 3 || risk_free.size() != T) {
      fail(ErrorKind::InvalidInput, "return panel: factor and risk-free rows must match the return rows");
    }
    if (!dates.empty() && static_cast<Eigen::Index>(dates.size()) != T) {
      fail(ErrorKind::InvalidInput, "return panel: date labels do not match");
    }
    if (!tickers.empty() && static_cast<Eigen::Index>(tickers.size()) != returns.cols()) {
      fail(ErrorKind::InvalidInput, "return panel: ticker labels do not match");
    }
  }
};

struct FactorFit {
  double intercept = 0.0;
  std::array<double, 3> loadings{};
};

/// OLS of excess returns r - rf on the factors over days [t - S, t - 1].
inline FactorFit fit_factor_loadings(const ReturnPanel& panel, std::size_t t, std::size_t k, std::size_t S) {
  if (S < 4) fail(ErrorKind::Configuration, "factor regression window must be at least 4 days");
  if (t < S || t > panel.days()) fail(ErrorKind::InsufficientData, "not enough history before day " + std::to_string(t));
  if (k >= panel.stocks()) fail(ErrorKind::InvalidInput, "stock index out of range");
  const auto s = static_cast<Eigen::Index>(S);
  const auto t0 = static_cast<Eigen::Index>(t - S);
  Eigen::MatrixXd X(s, 4);
  X.col(0).setOnes();
  X.rightCols(3) = panel.factors.middleRows(t0, s);
  const Eigen::VectorXd y =
      panel.returns.col(static_cast<Eigen::Index>(k)).segment(t0, s) - panel.risk_free.segment(t0, s);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < 4) {
    fail(ErrorKind::Regression, "singular factor design in window [" + std::to_string(t - S) + ", " +
                                    std::to_string(t - 1) + "]");
  }
  const Eigen::VectorXd beta = qr.solve(y);
  return {beta(0), {beta(1), beta(2), beta(3)}};
}

enum class VarMethod { Individual, Market, IGroup };

inline std::string_view to_string(VarMethod m) {
  switch (m) {
    case VarMethod::Individual: return "individual";
    case VarMethod::Market: return "market";
    case VarMethod::IGroup: return "igroup";
  }
  return "unknown";
}

inline VarMethod parse_var_method(std::string_view s) {
  if (s == "individual") return VarMethod::Individual;
  if (s == "market") return VarMethod::Market;
  if (s == "igroup") return VarMethod::IGroup;
  fail(ErrorKind::Configuration, "unknown VaR method '" + std::string(s) + "'");
}

struct VarConfig {
  double alpha = 0.01;
  std::size_t window = 100;
  std::vector<double> grid;
  KernelSpec kernel{};
  unsigned threads = 1;

  void validate(const ReturnPanel& panel) const {
    if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::Configuration, "alpha must lie in (0, 1)");
    if (window < 4) fail(ErrorKind::Configuration, "window must be at least 4 days");
    if (window >= panel.days()) {
      fail(ErrorKind::InsufficientData, "window (" + std::to_string(window) + ") must be shorter than the panel (" +
                                            std::to_string(panel.days()) + " days)");
    }
    if (panel.stocks() == 0) fail(ErrorKind::InsufficientData, "panel has no stocks");
  }
};

/// Loading-distance bandwidths from 0.01 to 10, log spaced.
inline std::vector<double> default_var_grid(std::size_t points = 12) { return log_grid(1.0, points, 0.01, 10.0); }

struct VarResult {
  VarMethod method = VarMethod::Individual;
  double bandwidth = std::numeric_limits<double>::quiet_NaN();
  double rmse = 0.0;
  std::size_t first_day = 0;
  std::vector<double> exceedance;  // per stock
  Eigen::MatrixXd var;             // evaluation days x K; VaR stored as the (negative) quantile
};

namespace detail {

/// Factor loadings z_{t,k} (K x 3) for every evaluation day t in [S, T).
inline std::vector<Eigen::MatrixXd> all_loadings(const ReturnPanel& panel, std::size_t S, unsigned threads) {
  const std::size_t T = panel.days();
  const std::size_t K = panel.stocks();
  std::vector<Eigen::MatrixXd> out(T - S);
  parallel_for(T - S, threads, [&](std::size_t i) {
    Eigen::MatrixXd z(static_cast<Eigen::Index>(K), 3);
    for (std::size_t k = 0; k < K; ++k) {
      const auto fit = fit_factor_loadings(panel, S + i, k, S);
      for (int j = 0; j < 3; ++j) z(static_cast<Eigen::Index>(k), j) = fit.loadings[static_cast<std::size_t>(j)];
    }
    out[i] = std::move(z);
  });
  return out;
}

struct PooledWindow {
  std::vector<double> values;        // ascending
  std::vector<std::uint32_t> owner;  // stock of each value
};

inline PooledWindow pooled_window(const ReturnPanel& panel, std::size_t t, std::size_t S) {
  const std::size_t K = panel.stocks();
  std::vector<std::pair<double, std::uint32_t>> cells;
  cells.reserve(K * S);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t d = t - S; d < t; ++d) {
      cells.emplace_back(panel.returns(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k)),
                         static_cast<std::uint32_t>(k));
    }
  }
  std::sort(cells.begin(), cells.end());
  PooledWindow w;
  w.values.reserve(cells.size());
  w.owner.reserve(cells.size());
  for (const auto& [v, o] : cells) {
    w.values.push_back(v);
    w.owner.push_back(o);
  }
  return w;
}

/// Left-continuous alpha-quantile of the pooled window where every value
/// of stock l carries weight stock_weight[l]. Same threshold rule as
/// weighted_quantile.
inline double pooled_quantile(const PooledWindow& w, std::span<const double> stock_weight, std::size_t per_stock,
                              double alpha) {
  double total = 0.0;
  for (double x : stock_weight) total += x;
  total *= static_cast<double>(per_stock);
  if (total <= kMinWeightSum) fail(ErrorKind::EmptyNeighborhood, "pooled VaR sample has zero weight");
  const double threshold = alpha * total * (1.0 - 1e-12);
  double cumulative = 0.0;
  const std::size_t n = w.values.size();
  for (std::size_t i = 0; i < n; ++i) {
    cumulative += stock_weight[w.owner[i]];
    const bool last_of_tie = i + 1 == n || w.values[i + 1] != w.values[i];
    if (last_of_tie && cumulative >= threshold) return w.values[i];
  }
  return w.values.back();
}

inline void finish(VarResult& r, const ReturnPanel& panel, std::size_t S, double alpha) {
  const auto E = r.var.rows();
  const auto K = r.var.cols();
  r.exceedance.assign(static_cast<std::size_t>(K), 0.0);
  double ss = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) {
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < E; ++i) {
      if (panel.returns(static_cast<Eigen::Index>(S) + i, k) <= r.var(i, k)) ++hits;
    }
    const double f = static_cast<double>(hits) / static_cast<double>(E);
    r.exceedance[static_cast<std::size_t>(k)] = f;
    ss += (f - alpha) * (f - alpha);
  }
  r.rmse = std::sqrt(ss / static_cast<double>(K));
}

}  // namespace detail

/// VaR backtest of one method on every day t >= S. For the igroup method
/// `bandwidth` sets the loading-space kernel width.
inline VarResult var_backtest(const ReturnPanel& panel, const VarConfig& cfg, VarMethod method,
                              double bandwidth = std::numeric_limits<double>::quiet_NaN());

/// RMSE of the igroup method at every grid bandwidth, sharing the loadings
/// and pooled windows across the grid.
inline std::vector<VarResult> var_bandwidth_sweep(const ReturnPanel& panel, const VarConfig& cfg) {
  panel.validate();
  cfg.validate(panel);
  if (cfg.grid.empty()) fail(ErrorKind::Configuration, "bandwidth grid is empty");
  for (double b : cfg.grid) {
    if (!(b > 0.0) || !std::isfinite(b)) fail(ErrorKind::InvalidBandwidth, "bandwidths must be positive and finite");
  }
  const std::size_t S = cfg.window;
  const std::size_t T = panel.days();
  const std::size_t K = panel.stocks();
  const auto E = static_cast<Eigen::Index>(T - S);
  const auto loadings = detail::all_loadings(panel, S, cfg.threads);

  std::vector<VarResult> out(cfg.grid.size());
  for (std::size_t g = 0; g < cfg.grid.size(); ++g) {
    out[g].method = VarMethod::IGroup;
    out[g].bandwidth = cfg.grid[g];
    out[g].first_day = S;
    out[g].var.resize(E, static_cast<Eigen::Index>(K));
  }
  parallel_for(T - S, cfg.threads, [&](std::size_t i) {
    const auto pooled = detail::pooled_window(panel, S + i, S);
    const auto& z = loadings[i];
    std::vector<double> w(K);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t g = 0; g < cfg.grid.size(); ++g) {
        const double inv_b = 1.0 / cfg.grid[g];
        double top = 0.0;
        for (std::size_t l = 0; l < K; ++l) {
          const double d = (z.row(static_cast<Eigen::Index>(l)) - z.row(static_cast<Eigen::Index>(k))).norm();
          w[l] = kernel_eval(cfg.kernel, d * inv_b);
          top = std::max(top, w[l]);
        }
        for (auto& x : w) {
          if (x < 1e-12 * top) x = 0.0;
        }
        out[g].var(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
            detail::pooled_quantile(pooled, w, S, cfg.alpha);
      }
    }
  });
  for (auto& r : out) detail::finish(r, panel, S, cfg.alpha);
  return out;
}

inline VarResult var_backtest(const ReturnPanel& panel, const VarConfig& cfg, VarMethod method, double bandwidth) {
  if (method == VarMethod::IGroup) {
    VarConfig one = cfg;
    one.grid = {bandwidth};
    if (std::isnan(bandwidth)) fail(ErrorKind::Configuration, "igroup VaR needs a bandwidth");
    return var_bandwidth_sweep(panel, one).front();
  }
  panel.validate();
  cfg.validate(panel);
  const std::size_t S = cfg.window;
  const std::size_t T = panel.days();
  const std::size_t K = panel.stocks();
  VarResult r;
  r.method = method;
  r.first_day = S;
  r.var.resize(static_cast<Eigen::Index>(T - S), static_cast<Eigen::Index>(K));
  const std::vector<double> unit(S, 1.0);
  const std::vector<double> all_ones(K, 1.0);
  parallel_for(T - S, cfg.threads, [&](std::size_t i) {
    const std::size_t t = S + i;
    if (method == VarMethod::Market) {
      const double q = detail::pooled_quantile(detail::pooled_window(panel, t, S), all_ones, S, cfg.alpha);
      r.var.row(static_cast<Eigen::Index>(i)).setConstant(q);
      return;
    }
    std::vector<double> window(S);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t d = 0; d < S; ++d) {
        window[d] = panel.returns(static_cast<Eigen::Index>(t - S + d), static_cast<Eigen::Index>(k));
      }
      r.var(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = weighted_quantile(window, unit, cfg.alpha);
    }
  });
  detail::finish(r, panel, S, cfg.alpha);
  return r;
}

// ---------------------------------------------------------------------------
// Synthetic panels

struct LoadingRegime {
  std::array<double, 3> center{};
  double loading_sd = 0.0;
  double idio_sd = 0.01;
};

/// Factor-model returns r = rf + z . f + e with stocks assigned to regimes
/// round-robin.
struct SyntheticPanelSpec {
  std::size_t stocks = 60;
  std::size_t days = 350;
  std::array<double, 3> factor_sd{0.015, 0.01, 0.01};
  double risk_free = 1e-4;
  std::vector<LoadingRegime> regimes;
  std::uint64_t seed = 1;

  /// Two volatility regimes separated in loading space.
  static SyntheticPanelSpec heterogeneous(std::uint64_t seed = 1) {
    SyntheticPanelSpec s;
    s.seed = seed;
    s.regimes = {{{0.6, -0.5, 0.5}, 0.1, 0.01}, {{1.4, 0.8, -0.5}, 0.1, 0.025}};
    return s;
  }

  /// i.i.d. N(0, 1) returns with zero factor exposure.
  static SyntheticPanelSpec homogeneous(std::size_t stocks, std::size_t days, std::uint64_t seed = 1) {
    SyntheticPanelSpec s;
    s.stocks = stocks;
    s.days = days;
    s.risk_free = 0.0;
    s.seed = seed;
    s.regimes = {{{0.0, 0.0, 0.0}, 0.0, 1.0}};
    return s;
  }
};

inline ReturnPanel synthetic_panel(const SyntheticPanelSpec& spec) {
  if (spec.regimes.empty()) fail(ErrorKind::Configuration, "synthetic panel needs at least one regime");
  const auto T = static_cast<Eigen::Index>(spec.days);
  const auto K = static_cast<Eigen::Index>(spec.stocks);
  ReturnPanel p;
  p.returns.resize(T, K);
  p.factors.resize(T, 3);
  p.risk_free = Eigen::VectorXd::Constant(T, spec.risk_free);
  for (Eigen::Index t = 0; t < T; ++t) {
    CounterRng rng(spec.seed, 0, static_cast<std::uint64_t>(t), Stream::Noise);
    for (int j = 0; j < 3; ++j) p.factors(t, j) = rng.normal(0.0, spec.factor_sd[static_cast<std::size_t>(j)]);
    p.dates.push_back("d" + std::to_string(t));
  }
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& reg = spec.regimes[static_cast<std::size_t>(k) % spec.regimes.size()];
    CounterRng rng(spec.seed, 1, static_cast<std::uint64_t>(k), Stream::Data);
    Eigen::Vector3d z;
    for (int j = 0; j < 3; ++j) z(j) = rng.normal(reg.center[static_cast<std::size_t>(j)], reg.loading_sd);
    for (Eigen::Index t = 0; t < T; ++t) {
      p.returns(t, k) = spec.risk_free + p.factors.row(t).dot(z) + rng.normal(0.0, reg.idio_sd);
    }
    p.tickers.push_back("S" + std::to_string(k));
  }
  return p;
}

// ---------------------------------------------------------------------------
// CSV ingestion

/// Returns CSV (date, ticker, return) joined with factors CSV (date, mkt_rf,
/// smb, hml, rf). Tickers are sorted; dates keep the factor file's order.
/// Rows with unparseable cells are dropped and counted; dates where any
/// ticker or the factor row is missing are dropped as well.
inline ReturnPanel panel_from_tables(const csv::Table& returns, const csv::Table& factors) {
  const auto rc = returns.require({"date", "ticker", "return"});
  const auto fc = factors.require({"date", "mkt_rf", "smb", "hml", "rf"});
  if (returns.rows.empty()) fail(ErrorKind::Schema, returns.origin + ": no data rows");
  if (factors.rows.empty()) fail(ErrorKind::Schema, factors.origin + ": no data rows");

  ReturnPanel p;
  p.dropped_rows = returns.malformed + factors.malformed;

  std::vector<std::string> date_order;
  std::map<std::string, std::array<double, 4>> factor_rows;
  for (const auto& row : factors.rows) {
    std::array<double, 4> v{};
    bool ok = !row[fc[0]].empty();
    for (std::size_t j = 0; j < 4 && ok; ++j) {
      const auto x = csv::parse_double(row[fc[j + 1]]);
      ok = x.has_value();
      if (ok) v[j] = *x;
    }
    if (!ok || factor_rows.count(row[fc[0]])) {
      ++p.dropped_rows;
      continue;
    }
    factor_rows.emplace(row[fc[0]], v);
    date_order.push_back(row[fc[0]]);
  }

  std::set<std::string> ticker_set;
  std::map<std::pair<std::string, std::string>, double> cells;
  for (const auto& row : returns.rows) {
    const auto x = csv::parse_double(row[rc[2]]);
    if (!x || row[rc[0]].empty() || row[rc[1]].empty()) {
      ++p.dropped_rows;
      continue;
    }
    ticker_set.insert(row[rc[1]]);
    cells[{row[rc[0]], row[rc[1]]}] = *x;
  }
  p.tickers.assign(ticker_set.begin(), ticker_set.end());

  std::vector<std::string> kept;
  for (const auto& d : date_order) {
    bool complete = true;
    for (const auto& tk : p.tickers) {
      if (!cells.count({d, tk})) {
        complete = false;
        break;
      }
    }
    if (complete) {
      kept.push_back(d);
    } else {
      ++p.dropped_dates;
    }
  }
  // Return dates without a factor row are incomplete too.
  std::set<std::string> return_dates;
  for (const auto& [key, v] : cells) return_dates.insert(key.first);
  for (const auto& d : return_dates) {
    if (!factor_rows.count(d)) ++p.dropped_dates;
  }
  if (kept.empty()) fail(ErrorKind::Schema, returns.origin + ": no complete dates after joining with factors");

  const auto T = static_cast<Eigen::Index>(kept.size());
  const auto K = static_cast<Eigen::Index>(p.tickers.size());
  p.returns.resize(T, K);
  p.factors.resize(T, 3);
  p.risk_free.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto& d = kept[static_cast<std::size_t>(t)];
    const auto& f = factor_rows.at(d);
    p.factors(t, 0) = f[0];
    p.factors(t, 1) = f[1];
    p.factors(t, 2) = f[2];
    p.risk_free(t) = f[3];
    for (Eigen::Index k = 0; k < K; ++k) p.returns(t, k) = cells.at({d, p.tickers[static_cast<std::size_t>(k)]});
  }
  p.dates = std::move(kept);
  return p;
}

inline ReturnPanel ingest_returns_csv(const std::string& returns_path, const std::string& factors_path) {
  return panel_from_tables(csv::read_file(returns_path), csv::read_file(factors_path));
}

}  // namespace igroup
