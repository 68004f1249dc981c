#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ssai/composite_score.hpp"
#include "ssai/equity_curve.hpp"
#include "ssai/market_data.hpp"
#include "ssai/metrics.hpp"
#include "ssai/signals.hpp"

namespace ssai {

enum class RebalanceRule {
  /// Trade to fresh targets only when basket membership changes; otherwise drift.
  OnChange,
  /// Trade to fresh targets every day.
  Daily,
};

struct BacktestConfig {
  std::size_t k = 10;
  double cost_rate = 0.001;
  /// Empty means every panel ticker.
  std::vector<std::string> universe;
  DateRange period;
  RebalanceRule rebalance = RebalanceRule::OnChange;

  void validate(std::size_t universe_size) const;
};

struct Weighting {
  enum class Kind { Equal, Scw };
  Kind kind = Kind::Equal;
  double temperature = 1.0;

  static Weighting equal() { return {}; }
  static Weighting scw(double t) { return {Kind::Scw, t}; }
};

struct BacktestResult {
  EquityCurve curve;
  std::vector<std::string> warnings;
};

/// Low-level ledger. `targets[i]`, when set, is the weight vector traded to at the
/// close of row `begin + i`; unset rows let holdings drift. Costs are
/// `cost_rate * sum |target - current| * wealth`, both legs, paid from the book.
EquityCurve simulate_targets(const MarketPanel& panel, std::size_t begin, std::size_t end,
                             const std::vector<std::optional<Eigen::VectorXd>>& targets,
                             double cost_rate, const std::string& label);

/// Daily top-k long-only backtest. Targets for day d come from scores on d and are
/// traded at d's close; returns accrue from d to d+1. Ranking ties go to the
/// lexicographically smaller ticker. Fewer than k scored names shrink the basket
/// and add a warning.
BacktestResult backtest_topk(const CompositeScore& scores, const MarketPanel& panel,
                             const BacktestConfig& config, Weighting weighting = Weighting::equal(),
                             const std::string& label = "topk");

enum class BaselineKind { EwBuyAndHold, EwDailyRebalanced, Momentum, EqualVol };

struct BaselineSpec {
  BaselineKind kind = BaselineKind::EwBuyAndHold;
  std::size_t momentum_lookback = 126;
  std::size_t vol_window = 63;
};

std::string baseline_label(const BaselineSpec& spec);

/// EW buy-and-hold is the equal-weight price-average index: bought once, never
/// rebalanced, no cost. Momentum reuses the top-k machinery on trailing returns;
/// equal-vol rebalances daily to weights proportional to 1 / trailing volatility.
BacktestResult baseline(const MarketPanel& panel, const BaselineSpec& spec,
                        const BacktestConfig& config);

struct CostSweepRow {
  double cost = 0.0;
  MetricsReport metrics;
};

struct CostSweepTable {
  std::vector<CostSweepRow> rows;
  MetricsReport buy_and_hold;
};

/// One backtest per cost level; costs must be non-negative and sorted ascending.
CostSweepTable cost_sweep(const CompositeScore& scores, const MarketPanel& panel,
                          const BacktestConfig& config, Weighting weighting,
                          const std::vector<double>& costs);

struct StratumRow {
  Tercile tercile = Tercile::Low;
  std::vector<std::string> tickers;
  MetricsReport strategy;
  MetricsReport buy_and_hold;
  std::vector<std::string> warnings;
};

/// Per coverage tercile: top-k restricted to the tercile's tickers, paired with the
/// EW buy-and-hold of the same tickers.
std::vector<StratumRow> stratified_backtest(const CompositeScore& scores, const MarketPanel& panel,
                                            const CoverageReport& coverage, std::size_t k_per_stratum,
                                            const BacktestConfig& config);

struct NamedPeriod {
  std::string name;
  DateRange range;
};

struct SubperiodRow {
  std::string name;
  std::size_t days = 0;
  double cr = 0.0;
  double benchmark_cr = 0.0;
  double delta_cr = 0.0;
  std::optional<double> sharpe;
};

/// CR compounds the returns dated inside each period. Periods must be ordered and
/// non-overlapping.
std::vector<SubperiodRow> subperiod_report(const EquityCurve& curve, const EquityCurve& benchmark,
                                           const std::vector<NamedPeriod>& periods);

/// Calendar-year periods covering the curve.
std::vector<NamedPeriod> calendar_years(const std::vector<Date>& dates);

std::string format_cost_sweep(const CostSweepTable& table);
std::string format_strata(const std::vector<StratumRow>& rows);
std::string format_subperiods(const std::vector<SubperiodRow>& rows);

}  // namespace ssai
