#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssai/equity_curve.hpp"

namespace ssai {

inline constexpr double kTradingDaysPerYear = 252.0;

/// Table-column performance metrics. Ratios that are undefined for a curve
/// (zero dispersion, no drawdown, no losing tail) are empty; the accessors throw
/// UndefinedMetricError for them instead of returning infinities.
struct MetricsReport {
  double cr = 0.0;
  double ar = 0.0;
  double mdd = 0.0;
  double cvar5 = 0.0;
  std::optional<double> sharpe_value;
  std::optional<double> sortino_value;
  std::optional<double> calmar_value;
  std::optional<double> rachev_value;
  std::size_t n_days = 0;

  double sharpe() const;
  double sortino() const;
  double calmar() const;
  double rachev() const;
};

/// Geometric annualisation: (1 + cr)^(252 / n_days) - 1.
double annualised_return(double cr, std::size_t n_days);
/// ar / |mdd|. Throws UndefinedMetricError when mdd == 0.
double calmar_ratio(double ar, double mdd);
/// Worst peak-to-trough fraction of a wealth path, in [-1, 0].
double max_drawdown(std::span<const double> wealth);
/// mean / sample std * sqrt(252), rf = 0. Throws on zero std or fewer than 2 returns.
double sharpe_ratio(std::span<const double> returns);
/// mean / sqrt(mean(min(r, 0)^2)) * sqrt(252). Throws when there are no losses.
double sortino_ratio(std::span<const double> returns);
/// Mean of the worst 5% of returns, in percent (negative for losses).
double cvar5_percent(std::span<const double> returns);
/// Mean of the best 5% over |mean of the worst 5%|. Tail size is ceil(0.05 n).
double rachev_ratio(std::span<const double> returns);
double compounded_return(std::span<const double> returns);

/// n_days is the number of dates on the curve. Requires at least 2 returns.
MetricsReport metrics(const EquityCurve& curve);

/// One CSV row per strategy: `strategy,cr_pct,sharpe,sortino,mdd_pct,rachev,cvar5_pct,calmar`.
/// Undefined entries are written as `nan`.
std::string format_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace ssai
