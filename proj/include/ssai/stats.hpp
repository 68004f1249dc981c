#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssai/equity_curve.hpp"
#include "ssai/signals.hpp"

namespace ssai {

/// Outcome of a test or interval estimate. `ci_low`/`ci_high` are in the units of
/// the tested quantity.
struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::string method;
  std::size_t n = 0;
};

/// Mid-ranks (1-based) with ties sharing their average rank.
std::vector<double> mid_ranks(std::span<const double> x);
double pearson(std::span<const double> x, std::span<const double> y);

/// Spearman rho with mid-rank ties; p from the t approximation with n-2 degrees of
/// freedom; CI from the Fisher z transform. Throws DegenerateError on constant input.
TestResult spearman_ic(std::span<const double> signal, std::span<const double> forward);

/// Pooled Spearman IC of one axis against forward returns over stock-days in
/// rows [row_begin, row_end) where the forward return exists. When
/// `non_neutral_only` is set, neutral-default cells are excluded.
TestResult spearman_ic(const SignalPanel& panel, Axis axis, const Eigen::MatrixXd& forward,
                       std::size_t row_begin, std::size_t row_end, bool non_neutral_only = false);

struct BootstrapOptions {
  std::size_t block_len = 20;
  std::size_t resamples = 10000;
  double level = 0.95;
  std::uint64_t seed = 0;
};

/// Circular moving-block bootstrap of the mean with a percentile interval. Each
/// resample draws from its own (seed, index) stream, so results do not depend on
/// evaluation order. The p-value is the two-sided share of resampled means on the
/// far side of zero.
TestResult block_bootstrap_ci(std::span<const double> series, const BootstrapOptions& options = {});

enum class ZeroMethod { Drop, Pratt };

/// Normal approximation with tie correction, two-sided, no continuity correction.
/// Needs at least 10 non-zero differences; all-zero input throws DegenerateError.
TestResult wilcoxon_signed_rank(std::span<const double> diffs, ZeroMethod zeros = ZeroMethod::Drop);

/// Two-sided Mann-Whitney U via the tie-corrected normal approximation. Both
/// groups need at least 3 observations. `statistic` is U for the first sample.
TestResult mann_whitney_u(std::span<const double> a, std::span<const double> b);

/// Exact two-sided binomial sign test of `wins` out of `trials` against 1/2.
double sign_test_p(std::size_t wins, std::size_t trials);

struct Lag1Result {
  std::string ticker;
  std::optional<double> coefficient;
  std::size_t n_pairs = 0;
  std::string skipped_reason;
};

/// Pearson correlation of (x_t, x_{t+1}) over consecutive non-neutral days per
/// ticker. Tickers with fewer than `min_obs` non-neutral days or a constant run are
/// skipped with a reason.
std::vector<Lag1Result> lag1_autocorr(const SignalPanel& panel, Axis axis, std::size_t min_obs = 20);

struct SeedSummary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
  std::optional<TestResult> vs_comparator;
};

/// Mean and sample std across seeds, optionally with a Mann-Whitney test against
/// a comparator seed set.
SeedSummary seed_summary(std::span<const double> values,
                         std::optional<std::span<const double>> comparator = std::nullopt);

/// Paired daily comparison of two curves on their common dates.
struct PairedComparison {
  std::string label;
  double mean_bp_day = 0.0;
  double ci_low_bp = 0.0;
  double ci_high_bp = 0.0;
  double delta_sharpe = 0.0;
  double win_pct = 0.0;
  double wilcoxon_p = 1.0;
};

PairedComparison compare_curves(const std::string& label, const EquityCurve& a,
                                const EquityCurve& b, const BootstrapOptions& options = {});

/// `comparison,mean_bp_day,ci_low,ci_high,delta_sharpe,win_pct,wilcoxon_p`
std::string format_comparisons(const std::vector<PairedComparison>& rows);

}  // namespace ssai
