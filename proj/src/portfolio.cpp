#include "ssai/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "ssai/errors.hpp"

namespace ssai {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::size_t> universe_columns(const MarketPanel& panel,
                                          const std::vector<std::string>& universe) {
  std::vector<std::size_t> cols;
  if (universe.empty()) {
    cols.resize(panel.num_tickers());
    std::iota(cols.begin(), cols.end(), 0);
    return cols;
  }
  for (const auto& t : universe) {
    auto j = panel.ticker_index(t);
    if (!j) throw ValidationError("universe ticker not in panel: " + t);
    cols.push_back(*j);
  }
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  return cols;
}

/// Top-k target builder shared by score-driven strategies.
std::vector<std::optional<Eigen::VectorXd>> topk_targets(
    const MarketPanel& panel, std::size_t begin, std::size_t end,
    const std::vector<std::size_t>& universe, const BacktestConfig& config, Weighting weighting,
    const std::function<double(std::size_t row, std::size_t col)>& score_of,
    std::vector<std::string>& warnings) {
  const std::size_t m = end - begin;
  const auto N = static_cast<Eigen::Index>(panel.num_tickers());
  std::vector<std::optional<Eigen::VectorXd>> targets(m);
  std::vector<std::size_t> previous;
  bool first = true;
  for (std::size_t i = 0; i + 1 < m; ++i) {
    const std::size_t row = begin + i;
    std::vector<std::pair<double, std::size_t>> ranked;
    for (auto j : universe) {
      const double s = score_of(row, j);
      if (std::isfinite(s)) ranked.emplace_back(s, j);
    }
    std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return panel.tickers[a.second] < panel.tickers[b.second];
    });
    const std::size_t take = std::min(config.k, ranked.size());
    if (take < config.k) {
      warnings.push_back(fmt::format("{}: only {} scored tickers, basket shrinks from {} to {}",
                                     panel.dates[row].iso(), ranked.size(), config.k, take));
    }
    std::vector<std::size_t> basket;
    for (std::size_t q = 0; q < take; ++q) basket.push_back(ranked[q].second);
    std::vector<std::size_t> key = basket;
    std::sort(key.begin(), key.end());
    const bool changed = first || key != previous;
    first = false;
    previous = key;
    if (!changed && config.rebalance == RebalanceRule::OnChange) continue;

    Eigen::VectorXd w = Eigen::VectorXd::Zero(N);
    if (take > 0) {
      if (weighting.kind == Weighting::Kind::Equal) {
        for (auto j : basket) w(static_cast<Eigen::Index>(j)) = 1.0 / static_cast<double>(take);
      } else {
        const double top = ranked.front().first;
        double z = 0.0;
        for (std::size_t q = 0; q < take; ++q) z += std::exp((ranked[q].first - top) / weighting.temperature);
        for (std::size_t q = 0; q < take; ++q) {
          w(static_cast<Eigen::Index>(ranked[q].second)) =
              std::exp((ranked[q].first - top) / weighting.temperature) / z;
        }
      }
    }
    targets[i] = std::move(w);
  }
  return targets;
}

}  // namespace

std::optional<std::size_t> CompositeScore::row_of(const Date& d) const {
  auto it = std::lower_bound(dates.begin(), dates.end(), d);
  if (it == dates.end() || *it != d) return std::nullopt;
  return static_cast<std::size_t>(it - dates.begin());
}

void BacktestConfig::validate(std::size_t universe_size) const {
  if (k < 1 || k > universe_size) {
    throw ValidationError(fmt::format("basket size k={} must lie in [1, {}]", k, universe_size));
  }
  if (!(cost_rate >= 0.0)) throw ValidationError("cost_rate must be non-negative");
  if (period.last < period.first) throw ValidationError("backtest period is reversed");
}

EquityCurve simulate_targets(const MarketPanel& panel, std::size_t begin, std::size_t end,
                             const std::vector<std::optional<Eigen::VectorXd>>& targets,
                             double cost_rate, const std::string& label) {
  if (end <= begin + 1 || end > panel.num_dates()) throw RangeError("backtest needs at least 2 dates");
  const std::size_t m = end - begin;
  if (targets.size() != m) throw ValidationError("target schedule length mismatch");
  const auto N = static_cast<Eigen::Index>(panel.num_tickers());

  EquityCurve curve;
  curve.label = label;
  curve.dates.assign(panel.dates.begin() + static_cast<std::ptrdiff_t>(begin),
                     panel.dates.begin() + static_cast<std::ptrdiff_t>(end));
  curve.tickers = panel.tickers;
  curve.wealth.assign(m, 0.0);
  curve.daily_returns.assign(m, 0.0);
  curve.cost_paid.assign(m, 0.0);
  curve.holdings.setZero(static_cast<Eigen::Index>(m), N);

  Eigen::VectorXd w = Eigen::VectorXd::Zero(N);
  double cash = 1.0;
  double post_trade = 1.0;
  double pending_cost = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = static_cast<Eigen::Index>(begin + i);
    double wealth = 1.0;
    if (i > 0) {
      const Eigen::VectorXd growth =
          (panel.close.row(row).array() / panel.close.row(row - 1).array()).matrix().transpose();
      const Eigen::VectorXd grown = w.cwiseProduct(growth);
      const double gross = cash + grown.sum();
      wealth = post_trade * gross;
      w = grown / gross;
      cash /= gross;
      curve.cost_paid[i] = pending_cost;
      curve.daily_returns[i] = wealth / curve.wealth[i - 1] - 1.0;
    }
    curve.wealth[i] = wealth;
    pending_cost = 0.0;
    post_trade = wealth;
    if (i + 1 < m && targets[i]) {
      const Eigen::VectorXd& t = *targets[i];
      if (t.size() != N || (t.array() < 0.0).any() || t.sum() > 1.0 + 1e-9) {
        throw ValidationError("target weights must be non-negative and sum to at most 1");
      }
      const double turnover = (t - w).cwiseAbs().sum();
      pending_cost = cost_rate * turnover * wealth;
      post_trade = wealth - pending_cost;
      w = t;
      cash = 1.0 - t.sum();
    }
    curve.holdings.row(static_cast<Eigen::Index>(i)) = w.transpose();
  }
  return curve;
}

BacktestResult backtest_topk(const CompositeScore& scores, const MarketPanel& panel,
                             const BacktestConfig& config, Weighting weighting,
                             const std::string& label) {
  const auto universe = universe_columns(panel, config.universe);
  config.validate(universe.size());
  if (weighting.kind == Weighting::Kind::Scw && !(weighting.temperature > 0.0)) {
    throw ValidationError("SCW temperature must be positive");
  }
  const auto [begin, end] = panel.date_span(config.period);

  // Map panel rows to score rows and columns.
  std::vector<std::optional<std::size_t>> score_col(panel.num_tickers());
  for (auto j : universe) {
    auto it = std::find(scores.tickers.begin(), scores.tickers.end(), panel.tickers[j]);
    if (it != scores.tickers.end()) score_col[j] = static_cast<std::size_t>(it - scores.tickers.begin());
  }
  std::vector<std::size_t> score_row(end - begin);
  for (std::size_t i = 0; i + 1 < end - begin; ++i) {
    auto r = scores.row_of(panel.dates[begin + i]);
    if (!r) throw AlignmentError("no scores for " + panel.dates[begin + i].iso());
    score_row[i] = *r;
  }
  BacktestResult result;
  auto score_of = [&](std::size_t row, std::size_t col) {
    if (!score_col[col]) return kNaN;
    return scores.values(static_cast<Eigen::Index>(score_row[row - begin]),
                         static_cast<Eigen::Index>(*score_col[col]));
  };
  auto targets = topk_targets(panel, begin, end, universe, config, weighting, score_of, result.warnings);
  result.curve = simulate_targets(panel, begin, end, targets, config.cost_rate, label);
  return result;
}

std::string baseline_label(const BaselineSpec& spec) {
  switch (spec.kind) {
    case BaselineKind::EwBuyAndHold: return "Buy & Hold (EW)";
    case BaselineKind::EwDailyRebalanced: return "EW (daily rebalanced)";
    case BaselineKind::Momentum: return fmt::format("Momentum (lookback {})", spec.momentum_lookback);
    case BaselineKind::EqualVol: return fmt::format("Equal-Vol (window {})", spec.vol_window);
  }
  return "baseline";
}

BacktestResult baseline(const MarketPanel& panel, const BaselineSpec& spec,
                        const BacktestConfig& config) {
  const auto universe = universe_columns(panel, config.universe);
  if (!(config.cost_rate >= 0.0)) throw ValidationError("cost_rate must be non-negative");
  const auto [begin, end] = panel.date_span(config.period);
  const std::size_t m = end - begin;
  const auto N = static_cast<Eigen::Index>(panel.num_tickers());
  const std::string label = baseline_label(spec);
  BacktestResult result;

  switch (spec.kind) {
    case BaselineKind::EwBuyAndHold: {
      if (m < 2) throw RangeError("baseline needs at least 2 dates");
      EquityCurve& c = result.curve;
      c.label = label;
      c.dates.assign(panel.dates.begin() + static_cast<std::ptrdiff_t>(begin),
                     panel.dates.begin() + static_cast<std::ptrdiff_t>(end));
      c.tickers = panel.tickers;
      c.wealth.assign(m, 0.0);
      c.daily_returns.assign(m, 0.0);
      c.cost_paid.assign(m, 0.0);
      c.holdings.setZero(static_cast<Eigen::Index>(m), N);
      const double share = 1.0 / static_cast<double>(universe.size());
      for (std::size_t i = 0; i < m; ++i) {
        const auto row = static_cast<Eigen::Index>(begin + i);
        double index = 0.0;
        for (auto j : universe) {
          const auto jj = static_cast<Eigen::Index>(j);
          const double rel = panel.close(row, jj) / panel.close(static_cast<Eigen::Index>(begin), jj);
          c.holdings(static_cast<Eigen::Index>(i), jj) = share * rel;
          index += share * rel;
        }
        c.holdings.row(static_cast<Eigen::Index>(i)) /= index;
        c.wealth[i] = index;
        if (i > 0) c.daily_returns[i] = index / c.wealth[i - 1] - 1.0;
      }
      return result;
    }
    case BaselineKind::EwDailyRebalanced: {
      Eigen::VectorXd w = Eigen::VectorXd::Zero(N);
      for (auto j : universe) w(static_cast<Eigen::Index>(j)) = 1.0 / static_cast<double>(universe.size());
      std::vector<std::optional<Eigen::VectorXd>> targets(m, w);
      result.curve = simulate_targets(panel, begin, end, targets, config.cost_rate, label);
      return result;
    }
    case BaselineKind::Momentum: {
      const std::size_t L = spec.momentum_lookback;
      if (L < 1 || begin < L) {
        throw RangeError(fmt::format("momentum lookback {} needs {} rows before the period start", L, L));
      }
      config.validate(universe.size());
      auto score_of = [&](std::size_t row, std::size_t col) {
        const auto c = static_cast<Eigen::Index>(col);
        return panel.close(static_cast<Eigen::Index>(row), c) /
                   panel.close(static_cast<Eigen::Index>(row - L), c) - 1.0;
      };
      auto targets = topk_targets(panel, begin, end, universe, config, Weighting::equal(), score_of,
                                  result.warnings);
      result.curve = simulate_targets(panel, begin, end, targets, config.cost_rate, label);
      return result;
    }
    case BaselineKind::EqualVol: {
      const std::size_t W = spec.vol_window;
      if (W < 2 || begin < W) {
        throw RangeError(fmt::format("equal-vol window {} needs {} rows before the period start", W, W));
      }
      std::vector<std::optional<Eigen::VectorXd>> targets(m);
      for (std::size_t i = 0; i + 1 < m; ++i) {
        const std::size_t row = begin + i;
        Eigen::VectorXd w = Eigen::VectorXd::Zero(N);
        double total = 0.0;
        for (auto j : universe) {
          const auto jj = static_cast<Eigen::Index>(j);
          double mean = 0.0;
          std::vector<double> r(W);
          for (std::size_t q = 0; q < W; ++q) {
            const auto t = static_cast<Eigen::Index>(row + 1 - W + q);
            r[q] = panel.close(t, jj) / panel.close(t - 1, jj) - 1.0;
            mean += r[q];
          }
          mean /= static_cast<double>(W);
          double ss = 0.0;
          for (double x : r) ss += (x - mean) * (x - mean);
          const double sd = std::sqrt(ss / static_cast<double>(W - 1));
          w(jj) = 1.0 / std::max(sd, 1e-12);
          total += w(jj);
        }
        targets[i] = w / total;
      }
      result.curve = simulate_targets(panel, begin, end, targets, config.cost_rate, label);
      return result;
    }
  }
  return result;
}

CostSweepTable cost_sweep(const CompositeScore& scores, const MarketPanel& panel,
                          const BacktestConfig& config, Weighting weighting,
                          const std::vector<double>& costs) {
  if (costs.empty()) throw ValidationError("cost sweep needs at least one cost");
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (!(costs[i] >= 0.0)) throw ValidationError("costs must be non-negative");
    if (i > 0 && costs[i] < costs[i - 1]) throw ValidationError("costs must be sorted ascending");
  }
  CostSweepTable table;
  for (double c : costs) {
    BacktestConfig cfg = config;
    cfg.cost_rate = c;
    auto res = backtest_topk(scores, panel, cfg, weighting);
    table.rows.push_back({c, metrics(res.curve)});
  }
  table.buy_and_hold = metrics(baseline(panel, {BaselineKind::EwBuyAndHold}, config).curve);
  return table;
}

std::vector<StratumRow> stratified_backtest(const CompositeScore& scores, const MarketPanel& panel,
                                            const CoverageReport& coverage, std::size_t k_per_stratum,
                                            const BacktestConfig& config) {
  std::vector<StratumRow> rows;
  for (auto t : {Tercile::Low, Tercile::Mid, Tercile::High}) {
    StratumRow row;
    row.tercile = t;
    for (const auto& name : coverage.members(t)) {
      if (config.universe.empty() ||
          std::find(config.universe.begin(), config.universe.end(), name) != config.universe.end()) {
        row.tickers.push_back(name);
      }
    }
    if (row.tickers.empty()) throw ValidationError("tercile " + tercile_name(t) + " is empty");
    BacktestConfig cfg = config;
    cfg.universe = row.tickers;
    cfg.k = k_per_stratum;
    if (cfg.k > row.tickers.size()) {
      row.warnings.push_back(fmt::format("tercile {} has {} tickers, basket shrinks from {}",
                                         tercile_name(t), row.tickers.size(), cfg.k));
      cfg.k = row.tickers.size();
    }
    auto res = backtest_topk(scores, panel, cfg, Weighting::equal(), "SFP " + tercile_name(t));
    row.warnings.insert(row.warnings.end(), res.warnings.begin(), res.warnings.end());
    row.strategy = metrics(res.curve);
    row.buy_and_hold = metrics(baseline(panel, {BaselineKind::EwBuyAndHold}, cfg).curve);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<SubperiodRow> subperiod_report(const EquityCurve& curve, const EquityCurve& benchmark,
                                           const std::vector<NamedPeriod>& periods) {
  for (std::size_t i = 0; i < periods.size(); ++i) {
    if (periods[i].range.last < periods[i].range.first) {
      throw ValidationError("period " + periods[i].name + " is reversed");
    }
    if (i > 0 && !(periods[i - 1].range.last < periods[i].range.first)) {
      throw ValidationError("periods must be ordered and non-overlapping");
    }
  }
  std::vector<SubperiodRow> rows;
  for (const auto& p : periods) {
    SubperiodRow row;
    row.name = p.name;
    double g = 1.0, gb = 1.0;
    std::vector<double> rets;
    for (std::size_t i = 0; i < curve.size(); ++i) {
      if (!p.range.contains(curve.dates[i])) continue;
      auto it = std::lower_bound(benchmark.dates.begin(), benchmark.dates.end(), curve.dates[i]);
      if (it == benchmark.dates.end() || *it != curve.dates[i]) {
        throw AlignmentError("benchmark lacks " + curve.dates[i].iso());
      }
      const auto k = static_cast<std::size_t>(it - benchmark.dates.begin());
      ++row.days;
      g *= 1.0 + curve.daily_returns[i];
      gb *= 1.0 + benchmark.daily_returns[k];
      if (i > 0) rets.push_back(curve.daily_returns[i]);
    }
    if (row.days == 0) throw RangeError("period " + p.name + " has no curve dates");
    row.cr = g - 1.0;
    row.benchmark_cr = gb - 1.0;
    row.delta_cr = row.cr - row.benchmark_cr;
    try {
      row.sharpe = sharpe_ratio(rets);
    } catch (const UndefinedMetricError&) {
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<NamedPeriod> calendar_years(const std::vector<Date>& dates) {
  std::vector<NamedPeriod> out;
  for (const auto& d : dates) {
    if (out.empty() || out.back().range.last.year() != d.year()) {
      out.push_back({std::to_string(d.year()), {d, d}});
    } else {
      out.back().range.last = d;
    }
  }
  return out;
}

std::string format_cost_sweep(const CostSweepTable& t) {
  std::string out = "cost_pct,cr_pct,sharpe,mdd_pct,bh_cr_pct,excess_cr_pct\n";
  for (const auto& r : t.rows) {
    out += fmt::format("{:.4f},{:.6f},{},{:.6f},{:.6f},{:.6f}\n", 100.0 * r.cost, 100.0 * r.metrics.cr,
                       r.metrics.sharpe_value ? fmt::format("{:.6f}", *r.metrics.sharpe_value) : "nan",
                       100.0 * r.metrics.mdd, 100.0 * t.buy_and_hold.cr,
                       100.0 * (r.metrics.cr - t.buy_and_hold.cr));
  }
  return out;
}

std::string format_strata(const std::vector<StratumRow>& rows) {
  std::string out = "tercile,n_tickers,sfp_cr_pct,sfp_sharpe,bh_cr_pct,bh_sharpe,excess_cr_pct\n";
  auto opt = [](const std::optional<double>& v) { return v ? fmt::format("{:.6f}", *v) : std::string("nan"); };
  for (const auto& r : rows) {
    out += fmt::format("{},{},{:.6f},{},{:.6f},{},{:.6f}\n", tercile_name(r.tercile), r.tickers.size(),
                       100.0 * r.strategy.cr, opt(r.strategy.sharpe_value), 100.0 * r.buy_and_hold.cr,
                       opt(r.buy_and_hold.sharpe_value), 100.0 * (r.strategy.cr - r.buy_and_hold.cr));
  }
  return out;
}

std::string format_subperiods(const std::vector<SubperiodRow>& rows) {
  std::string out = "period,days,cr_pct,benchmark_cr_pct,delta_cr_pct,sharpe\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{:.6f},{:.6f},{:.6f},{}\n", r.name, r.days, 100.0 * r.cr,
                       100.0 * r.benchmark_cr, 100.0 * r.delta_cr,
                       r.sharpe ? fmt::format("{:.6f}", *r.sharpe) : "nan");
  }
  return out;
}

}  // namespace ssai
