#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssai/date.hpp"

namespace ssai {

enum class Axis : std::size_t { Sentiment = 0, Risk = 1, Confidence = 2, VolatilityForecast = 3 };

inline constexpr std::size_t kNumAxes = 4;
inline constexpr double kNeutralScore = 3.0;
inline constexpr double kMinScore = 1.0;
inline constexpr double kMaxScore = 5.0;
inline constexpr std::array<Axis, kNumAxes> kAllAxes = {Axis::Sentiment, Axis::Risk,
                                                        Axis::Confidence, Axis::VolatilityForecast};

std::string axis_name(Axis a);
/// Throws ValidationError for anything outside the four axis names.
Axis parse_axis(std::string_view name);

/// Four-axis score vector. Article level holds integers; panel level holds means.
struct SignalVector {
  std::array<double, kNumAxes> values{kNeutralScore, kNeutralScore, kNeutralScore, kNeutralScore};

  double operator[](Axis a) const { return values[static_cast<std::size_t>(a)]; }
  double& operator[](Axis a) { return values[static_cast<std::size_t>(a)]; }
  bool is_neutral() const;
  bool operator==(const SignalVector&) const = default;

  static SignalVector neutral() { return {}; }
};

/// A set of axes; `all()` is the full projection to neutral.
class AxisSet {
 public:
  AxisSet() = default;
  AxisSet(std::initializer_list<Axis> axes);
  static AxisSet all();
  /// Accepts axis names or the single token "ALL".
  static AxisSet parse(const std::vector<std::string>& names);

  bool contains(Axis a) const { return bits_.test(static_cast<std::size_t>(a)); }
  bool empty() const { return bits_.none(); }
  bool is_all() const { return bits_.all(); }
  AxisSet operator|(const AxisSet& o) const;
  bool operator==(const AxisSet&) const = default;
  std::string str() const;

 private:
  std::bitset<kNumAxes> bits_;
};

struct ArticleScore {
  std::string ticker;
  Date published;
  SignalVector scores;
  std::string source_id;
};

/// Per-(date, ticker) aggregated scores. `non_neutral` records presence of
/// in-window news, not score value; false implies the stored vector equals the
/// neutral constant bit for bit.
class SignalPanel {
 public:
  SignalPanel() = default;
  /// All-neutral panel.
  SignalPanel(std::vector<Date> dates, std::vector<std::string> tickers);

  const std::vector<Date>& dates() const { return dates_; }
  const std::vector<std::string>& tickers() const { return tickers_; }
  std::size_t num_dates() const { return dates_.size(); }
  std::size_t num_tickers() const { return tickers_.size(); }

  const Eigen::MatrixXd& axis(Axis a) const { return scores_[static_cast<std::size_t>(a)]; }
  /// Matrix of (score - 3) for one axis.
  Eigen::MatrixXd deviation(Axis a) const;
  SignalVector at(std::size_t date, std::size_t ticker) const;
  bool non_neutral(std::size_t date, std::size_t ticker) const {
    return flags_(static_cast<Eigen::Index>(date), static_cast<Eigen::Index>(ticker)) != 0;
  }
  const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>& flags() const {
    return flags_;
  }
  const AxisSet& masked_axes() const { return masked_; }

  /// Sets a covered cell. Scores must lie in [1, 5].
  void set(std::size_t date, std::size_t ticker, const SignalVector& v);
  /// Resets a cell to the neutral default.
  void clear(std::size_t date, std::size_t ticker);

  std::optional<std::size_t> ticker_index(const std::string& ticker) const;
  std::optional<std::size_t> date_index(const Date& d) const;
  SignalPanel slice_rows(std::size_t begin, std::size_t end) const;
  SignalPanel restrict_tickers(const std::vector<std::string>& subset) const;

  /// Throws ValidationError on out-of-range scores or non-neutral content behind a
  /// false flag.
  void validate() const;

  bool operator==(const SignalPanel&) const;

 private:
  friend SignalPanel mask_axes(const SignalPanel& panel, const AxisSet& axes);

  std::vector<Date> dates_;
  std::vector<std::string> tickers_;
  std::array<Eigen::MatrixXd, kNumAxes> scores_;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> flags_;
  AxisSet masked_;
};

// ---------------------------------------------------------------------------
// Mock scorer

/// Target per-axis means for the hash-based scorer. Defaults follow the skew of
/// the reference article corpus: risk and volatility sit below neutral.
struct MockScorerConfig {
  std::array<double, kNumAxes> target_means{3.35, 2.47, 3.51, 2.74};
};

/// Deterministic integer scores in {1..5}. Each axis draws from the maximum-entropy
/// distribution on {1..5} with the configured mean, indexed by a hash of
/// (seed, ticker, text, axis).
ArticleScore mock_score(std::string_view text, const std::string& ticker, std::uint64_t seed,
                        const MockScorerConfig& config = {});

/// Probabilities over {1..5} with the given mean and maximal entropy.
std::array<double, 5> max_entropy_distribution(double mean);

// ---------------------------------------------------------------------------
// Aggregation

struct UnmatchedArticle {
  ArticleScore article;
  std::string reason;
};

struct AggregationResult {
  SignalPanel panel;
  std::vector<UnmatchedArticle> unmatched;
};

/// Per-axis mean of each ticker's articles whose trading-day index lies in
/// [d - window, d]. Articles dated on non-trading days count from the next trading
/// day. Unknown tickers and dates past the calendar are reported, never dropped.
AggregationResult aggregate_signals(const std::vector<ArticleScore>& articles,
                                    const std::vector<Date>& calendar,
                                    const std::vector<std::string>& tickers,
                                    std::size_t window = 3);

// ---------------------------------------------------------------------------
// Coverage

enum class Tercile { Low, Mid, High };
std::string tercile_name(Tercile t);

struct TickerCoverage {
  std::string ticker;
  std::size_t n_days = 0;
  /// Fraction of days with in-window news (presence flag), any axis / per axis.
  double presence_any = 0.0;
  std::array<double, kNumAxes> presence_axis{};
  /// Fraction of days whose score differs from 3.0 (value-based definition).
  double differs_any = 0.0;
  std::array<double, kNumAxes> differs_axis{};
  Tercile tercile = Tercile::Low;
};

struct CoverageReport {
  std::vector<TickerCoverage> tickers;

  std::vector<std::string> members(Tercile t) const;
  const TickerCoverage& of(const std::string& ticker) const;
};

/// Terciles rank tickers by presence_any ascending (ties by ticker name) and split
/// them into Low/Mid/High groups whose sizes differ by at most one; remainder
/// slots go to the lower groups first.
CoverageReport coverage_stats(const SignalPanel& panel);

// ---------------------------------------------------------------------------
// Masking and effective dimensionality

/// Sets the chosen axes to 3.0 everywhere. A cell loses its presence flag only
/// once every axis is masked.
SignalPanel mask_axes(const SignalPanel& panel, const AxisSet& axes);

struct PcaResult {
  Eigen::Vector4d loadings;
  std::array<double, kNumAxes> explained{};
  std::array<double, kNumAxes> eigenvalues{};
  std::array<double, kNumAxes> means{};
  std::array<double, kNumAxes> stds{};
  std::size_t n_rows = 0;
};

/// PCA of the standardised axes over non-neutral stock-days in rows
/// [row_begin, row_end). PC1 sign makes the sentiment loading non-negative.
PcaResult pca_effective_dim(const SignalPanel& panel, std::size_t row_begin = 0,
                            std::size_t row_end = SIZE_MAX);

// ---------------------------------------------------------------------------
// Files

struct CacheIssue {
  std::size_t line = 0;
  std::string message;
};

struct ArticleCacheContents {
  std::vector<ArticleScore> articles;
  std::vector<CacheIssue> issues;
};

/// Reads `source_id,ticker,date,sentiment,risk,confidence,volatility_forecast`.
/// Range and format problems are collected rather than thrown.
ArticleCacheContents read_article_cache(const std::filesystem::path& path);
ArticleCacheContents parse_article_cache(std::string_view text);
/// Strict variant: throws ParseError/ValidationError on the first issue.
std::vector<ArticleScore> load_article_cache(const std::filesystem::path& path);
std::string format_article_cache(const std::vector<ArticleScore>& articles);

/// Panel exchange format `date,ticker,sentiment,risk,confidence,volatility_forecast,non_neutral`.
std::string format_signal_panel(const SignalPanel& panel);
SignalPanel parse_signal_panel(std::string_view text);

}  // namespace ssai
