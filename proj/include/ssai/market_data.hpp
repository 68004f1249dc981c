#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssai/date.hpp"
#include "ssai/errors.hpp"

namespace ssai {

/// Aligned (date x ticker) price grid. Rows are dates, columns are tickers.
/// `open`, `high`, `low` and `volume` are either empty (0x0) or full-shape.
struct MarketPanel {
  std::vector<Date> dates;
  std::vector<std::string> tickers;
  Eigen::MatrixXd close;
  Eigen::MatrixXd open;
  Eigen::MatrixXd high;
  Eigen::MatrixXd low;
  Eigen::MatrixXd volume;

  std::size_t num_dates() const { return dates.size(); }
  std::size_t num_tickers() const { return tickers.size(); }
  bool has_ohlc() const { return open.size() > 0 && high.size() > 0 && low.size() > 0; }

  std::optional<std::size_t> ticker_index(const std::string& ticker) const;
  std::optional<std::size_t> date_index(const Date& d) const;
  /// Index range [begin, end) of dates inside `range`. Throws RangeError when empty.
  std::pair<std::size_t, std::size_t> date_span(const DateRange& range) const;

  /// Throws ValidationError on any broken invariant.
  void validate() const;

  MarketPanel slice_rows(std::size_t begin, std::size_t end) const;
  MarketPanel restrict_tickers(const std::vector<std::string>& subset) const;
};

/// One missing (ticker, date) cell found while aligning a long-form file.
struct AlignmentGap {
  std::string ticker;
  Date date;
};

/// Thrown by load_price_panel when tickers do not share one calendar.
class PanelAlignmentError : public AlignmentError {
 public:
  PanelAlignmentError(const std::string& what, std::vector<AlignmentGap> gaps)
      : AlignmentError(what), gaps_(std::move(gaps)) {}
  const std::vector<AlignmentGap>& gaps() const { return gaps_; }

 private:
  std::vector<AlignmentGap> gaps_;
};

/// Reads the long-form `date,ticker,open,high,low,close,volume` table.
MarketPanel load_price_panel(const std::filesystem::path& path);
MarketPanel parse_price_panel(std::string_view text);
std::string format_price_panel(const MarketPanel& panel);

// ---------------------------------------------------------------------------
// Technical indicators

enum class Indicator { Macd, BollUpper, BollLower, Rsi30, Cci30, Adx30, Sma30, Sma60 };

std::string indicator_name(Indicator ind);
Indicator parse_indicator(std::string_view name);
/// First row index at which the indicator is defined.
std::size_t indicator_first_valid(Indicator ind);

/// All eight named indicators, in declaration order.
std::vector<Indicator> default_indicators();

struct FeaturePanel {
  std::vector<Date> dates;
  std::vector<std::string> tickers;
  std::vector<Indicator> indicators;
  /// One (date x ticker) matrix per indicator; NaN on warm-up rows.
  std::vector<Eigen::MatrixXd> values;
  /// First row where every configured indicator is defined.
  std::size_t first_valid_row = 0;

  std::size_t num_indicators() const { return indicators.size(); }
  bool is_warmup(std::size_t row) const { return row < first_valid_row; }
  std::vector<std::string> names() const;
};

/// MACD = EMA12 - EMA26 (EMAs seeded with the SMA of their first window);
/// Bollinger SMA20 +/- 2 population sigma20; RSI, ADX with Wilder smoothing over 30;
/// CCI over 30 with the 0.015 constant. Typical price falls back to close without OHLC.
/// Throws WarmupError when the panel is shorter than the longest warm-up.
FeaturePanel compute_indicators(const MarketPanel& panel,
                                const std::vector<Indicator>& indicators = default_indicators());

// ---------------------------------------------------------------------------
// Turbulence

inline constexpr double kDefaultTurbulenceThreshold = 380.0;
inline constexpr std::size_t kDefaultTurbulenceWindow = 252;

struct TurbulenceSeries {
  std::vector<Date> dates;
  /// Squared Mahalanobis distance; NaN where unavailable.
  std::vector<double> values;
  double threshold = kDefaultTurbulenceThreshold;
  std::size_t window = kDefaultTurbulenceWindow;

  bool available(std::size_t row) const;
  /// True exactly when the value is available and strictly above the threshold.
  bool gated(std::size_t row) const;
  std::size_t gated_count() const;
};

/// Distance of each day's cross-sectional simple-return vector from the trailing
/// `window` days' mean under their sample covariance, ridge-regularised by
/// `ridge_scale * trace / N` on the diagonal. Requires window >= N + 2.
TurbulenceSeries compute_turbulence(const MarketPanel& panel,
                                    std::size_t window = kDefaultTurbulenceWindow,
                                    double threshold = kDefaultTurbulenceThreshold,
                                    double ridge_scale = 1e-6);

// ---------------------------------------------------------------------------
// Returns

struct ForwardReturns {
  std::vector<Date> dates;
  std::vector<std::string> tickers;
  std::size_t horizon = 0;
  /// close[d+h]/close[d] - 1; NaN on the last `horizon` rows.
  Eigen::MatrixXd values;

  bool available(std::size_t row) const { return row + horizon < dates.size(); }
};

ForwardReturns forward_returns(const MarketPanel& panel, std::size_t horizon);

/// Simple one-day returns; row 0 is NaN.
Eigen::MatrixXd daily_returns(const MarketPanel& panel);

}  // namespace ssai
