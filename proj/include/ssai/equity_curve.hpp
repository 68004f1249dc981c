#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssai/date.hpp"

namespace ssai {

/// Output of one backtest or environment episode.
///
/// `wealth[0] == 1` and `wealth[i] == wealth[i-1] * (1 + daily_returns[i])`;
/// `daily_returns[0]` is 0. `holdings.row(i)` holds the weights carried from the
/// close of day i into day i+1. `cost_paid[i]` is the transaction cost deducted
/// inside the step that ends on day i, i.e. for trades made at the close of day i-1.
struct EquityCurve {
  std::string label;
  std::vector<Date> dates;
  std::vector<std::string> tickers;
  std::vector<double> wealth;
  std::vector<double> daily_returns;
  Eigen::MatrixXd holdings;
  std::vector<double> cost_paid;

  std::size_t size() const { return dates.size(); }
  /// Returns 1..n-1 (the first entry is the placeholder 0).
  std::vector<double> returns() const {
    return daily_returns.size() > 1 ? std::vector<double>(daily_returns.begin() + 1, daily_returns.end())
                                    : std::vector<double>{};
  }
  double total_cost() const {
    double s = 0.0;
    for (double c : cost_paid) s += c;
    return s;
  }
};

/// `date,wealth,daily_return,cost_paid`
std::string format_equity_curve(const EquityCurve& curve);
/// `date,ticker,weight`, non-zero weights only.
std::string format_holdings(const EquityCurve& curve);

}  // namespace ssai
