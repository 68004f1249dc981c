#include "ssai/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <fmt/format.h>

#include "ssai/errors.hpp"
#include "ssai/util.hpp"

namespace ssai {

namespace {

double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

std::size_t tail_size(std::size_t n) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(n))));
}

template <typename T>
T require(const std::optional<T>& v, const char* name) {
  if (!v) throw UndefinedMetricError(std::string(name) + " is undefined for this curve");
  return *v;
}

template <typename F>
std::optional<double> try_metric(F&& f) {
  try {
    return f();
  } catch (const UndefinedMetricError&) {
    return std::nullopt;
  }
}

}  // namespace

double MetricsReport::sharpe() const { return require(sharpe_value, "Sharpe"); }
double MetricsReport::sortino() const { return require(sortino_value, "Sortino"); }
double MetricsReport::calmar() const { return require(calmar_value, "Calmar"); }
double MetricsReport::rachev() const { return require(rachev_value, "Rachev"); }

double annualised_return(double cr, std::size_t n_days) {
  if (n_days == 0) throw RangeError("annualisation needs at least one day");
  return std::pow(1.0 + cr, kTradingDaysPerYear / static_cast<double>(n_days)) - 1.0;
}

double calmar_ratio(double ar, double mdd) {
  if (mdd == 0.0) throw UndefinedMetricError("Calmar undefined: no drawdown");
  return ar / std::abs(mdd);
}

double max_drawdown(std::span<const double> wealth) {
  double peak = -std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (double w : wealth) {
    peak = std::max(peak, w);
    worst = std::min(worst, w / peak - 1.0);
  }
  return worst;
}

double sharpe_ratio(std::span<const double> returns) {
  if (returns.size() < 2) throw UndefinedMetricError("Sharpe needs at least 2 returns");
  const double m = mean_of(returns);
  double ss = 0.0;
  for (double r : returns) ss += (r - m) * (r - m);
  const double sd = std::sqrt(ss / static_cast<double>(returns.size() - 1));
  double big = 0.0;
  for (double r : returns) big = std::max(big, std::abs(r));
  // Returns come from wealth ratios, so spread below the rounding level of 1 + r is noise.
  if (sd <= 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + big)) {
    throw UndefinedMetricError("Sharpe undefined: zero return dispersion");
  }
  return m / sd * std::sqrt(kTradingDaysPerYear);
}

double sortino_ratio(std::span<const double> returns) {
  if (returns.size() < 2) throw UndefinedMetricError("Sortino needs at least 2 returns");
  double ss = 0.0;
  for (double r : returns) ss += r < 0.0 ? r * r : 0.0;
  const double dd = std::sqrt(ss / static_cast<double>(returns.size()));
  if (dd == 0.0) throw UndefinedMetricError("Sortino undefined: no negative returns");
  return mean_of(returns) / dd * std::sqrt(kTradingDaysPerYear);
}

double cvar5_percent(std::span<const double> returns) {
  if (returns.empty()) throw UndefinedMetricError("CVaR needs returns");
  std::vector<double> sorted(returns.begin(), returns.end());
  std::sort(sorted.begin(), sorted.end());
  const auto k = tail_size(sorted.size());
  return 100.0 * mean_of(std::span<const double>(sorted.data(), k));
}

double rachev_ratio(std::span<const double> returns) {
  if (returns.empty()) throw UndefinedMetricError("Rachev needs returns");
  std::vector<double> sorted(returns.begin(), returns.end());
  std::sort(sorted.begin(), sorted.end());
  const auto k = tail_size(sorted.size());
  const double worst = mean_of(std::span<const double>(sorted.data(), k));
  const double best = mean_of(std::span<const double>(sorted.data() + sorted.size() - k, k));
  if (worst == 0.0) throw UndefinedMetricError("Rachev undefined: flat left tail");
  return best / std::abs(worst);
}

double compounded_return(std::span<const double> returns) {
  double w = 1.0;
  for (double r : returns) w *= 1.0 + r;
  return w - 1.0;
}

MetricsReport metrics(const EquityCurve& curve) {
  if (curve.wealth.size() < 3 || curve.daily_returns.size() != curve.wealth.size()) {
    throw RangeError("metrics need at least 2 daily returns");
  }
  const auto rets = curve.returns();
  MetricsReport m;
  m.n_days = curve.size();
  m.cr = compounded_return(rets);
  m.ar = annualised_return(m.cr, m.n_days);
  m.mdd = max_drawdown(curve.wealth);
  m.cvar5 = cvar5_percent(rets);
  m.sharpe_value = try_metric([&] { return sharpe_ratio(rets); });
  m.sortino_value = try_metric([&] { return sortino_ratio(rets); });
  m.calmar_value = try_metric([&] { return calmar_ratio(m.ar, m.mdd); });
  m.rachev_value = try_metric([&] { return rachev_ratio(rets); });
  return m;
}

std::string format_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  auto opt = [](const std::optional<double>& v) {
    return v ? fmt::format("{:.6f}", *v) : std::string("nan");
  };
  std::string out = "strategy,cr_pct,sharpe,sortino,mdd_pct,rachev,cvar5_pct,calmar\n";
  for (const auto& [name, m] : rows) {
    out += fmt::format("{},{:.6f},{},{},{:.6f},{},{:.6f},{}\n", name, 100.0 * m.cr,
                       opt(m.sharpe_value), opt(m.sortino_value), 100.0 * m.mdd,
                       opt(m.rachev_value), m.cvar5, opt(m.calmar_value));
  }
  return out;
}

std::string format_equity_curve(const EquityCurve& curve) {
  std::string out = "date,wealth,daily_return,cost_paid\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    out += fmt::format("{},{},{},{}\n", curve.dates[i].iso(), format_exact(curve.wealth[i]),
                       format_exact(curve.daily_returns[i]), format_exact(curve.cost_paid[i]));
  }
  return out;
}

std::string format_holdings(const EquityCurve& curve) {
  std::string out = "date,ticker,weight\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    for (std::size_t j = 0; j < curve.tickers.size(); ++j) {
      const double w = curve.holdings(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (w != 0.0) {
        out += fmt::format("{},{},{}\n", curve.dates[i].iso(), curve.tickers[j], format_exact(w));
      }
    }
  }
  return out;
}

}  // namespace ssai
