#include "ssai/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "ssai/errors.hpp"
#include "ssai/metrics.hpp"
#include "ssai/util.hpp"

namespace ssai {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double two_sided_normal_p(double z) {
  boost::math::normal_distribution<double> nd;
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(nd, std::abs(z))));
}

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_var(std::span<const double> x) {
  const double m = mean_of(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

/// Sum of (t^3 - t) over tie groups of an already sorted sequence.
double tie_term(std::vector<double> sorted) {
  std::sort(sorted.begin(), sorted.end());
  double term = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t k = i;
    while (k < sorted.size() && sorted[k] == sorted[i]) ++k;
    const double t = static_cast<double>(k - i);
    term += t * t * t - t;
    i = k;
  }
  return term;
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::vector<double> mid_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t k = i;
    while (k < order.size() && x[order[k]] == x[order[i]]) ++k;
    const double r = 0.5 * static_cast<double>(i + 1 + k);
    for (std::size_t q = i; q < k; ++q) ranks[order[q]] = r;
    i = k;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw RangeError("pearson needs paired samples");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateError("correlation undefined for constant input");
  return sxy / std::sqrt(sxx * syy);
}

TestResult spearman_ic(std::span<const double> signal, std::span<const double> forward) {
  if (signal.size() != forward.size()) throw RangeError("spearman: samples differ in length");
  const std::size_t n = signal.size();
  if (n < 10) throw RangeError(fmt::format("spearman needs n >= 10, got {}", n));
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(signal[i]) || !std::isfinite(forward[i])) {
      throw ValidationError("spearman: non-finite sample");
    }
  }
  const auto rx = mid_ranks(signal);
  const auto ry = mid_ranks(forward);
  TestResult out;
  out.method = "spearman";
  out.n = n;
  out.statistic = pearson(rx, ry);
  const double rho = out.statistic;
  const double df = static_cast<double>(n - 2);
  if (std::abs(rho) >= 1.0) {
    out.p_value = 0.0;
  } else {
    const double t = rho * std::sqrt(df / (1.0 - rho * rho));
    boost::math::students_t_distribution<double> dist(df);
    out.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
  }
  const double r = std::clamp(rho, -0.999999999999, 0.999999999999);
  const double half = 1.959963984540054 / std::sqrt(static_cast<double>(n) - 3.0);
  out.ci_low = std::tanh(std::atanh(r) - half);
  out.ci_high = std::tanh(std::atanh(r) + half);
  return out;
}

TestResult spearman_ic(const SignalPanel& panel, Axis axis, const Eigen::MatrixXd& forward,
                       std::size_t row_begin, std::size_t row_end, bool non_neutral_only) {
  row_end = std::min<std::size_t>(row_end, panel.num_dates());
  if (static_cast<std::size_t>(forward.rows()) != panel.num_dates() ||
      static_cast<std::size_t>(forward.cols()) != panel.num_tickers()) {
    throw AlignmentError("forward returns not aligned with the signal panel");
  }
  std::vector<double> x, y;
  const auto& scores = panel.axis(axis);
  for (std::size_t d = row_begin; d < row_end; ++d) {
    for (std::size_t j = 0; j < panel.num_tickers(); ++j) {
      const double f = forward(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j));
      if (!std::isfinite(f)) continue;
      if (non_neutral_only && !panel.non_neutral(d, j)) continue;
      x.push_back(scores(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)));
      y.push_back(f);
    }
  }
  return spearman_ic(x, y);
}

TestResult block_bootstrap_ci(std::span<const double> series, const BootstrapOptions& o) {
  const std::size_t n = series.size();
  if (o.block_len < 1 || n < o.block_len) {
    throw RangeError(fmt::format("block bootstrap needs length >= block length {}", o.block_len));
  }
  if (o.resamples < 1 || !(o.level > 0.0 && o.level < 1.0)) {
    throw ValidationError("bootstrap needs resamples >= 1 and level in (0, 1)");
  }
  const std::size_t L = o.block_len;
  // Prefix sums over the circularly extended series give O(1) block sums.
  std::vector<double> prefix(n + L, 0.0);
  for (std::size_t i = 0; i + 1 < n + L; ++i) prefix[i + 1] = prefix[i] + series[i % n];
  const std::size_t blocks = (n + L - 1) / L;
  const std::size_t last_len = n - (blocks - 1) * L;

  std::vector<double> means(o.resamples);
  for (std::size_t r = 0; r < o.resamples; ++r) {
    std::mt19937_64 rng(mix_seed(o.seed, r));
    std::uniform_int_distribution<std::size_t> start(0, n - 1);
    double total = 0.0;
    for (std::size_t b = 0; b < blocks; ++b) {
      const std::size_t s = start(rng);
      const std::size_t len = b + 1 == blocks ? last_len : L;
      total += prefix[s + len] - prefix[s];
    }
    means[r] = total / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  TestResult out;
  out.method = fmt::format("circular block bootstrap (L={}, B={})", L, o.resamples);
  out.n = n;
  out.statistic = mean_of(series);
  const double alpha = 1.0 - o.level;
  out.ci_low = quantile_sorted(means, alpha / 2.0);
  out.ci_high = quantile_sorted(means, 1.0 - alpha / 2.0);
  const auto below = static_cast<double>(std::upper_bound(means.begin(), means.end(), 0.0) - means.begin());
  const auto above = static_cast<double>(means.end() - std::lower_bound(means.begin(), means.end(), 0.0));
  const double B = static_cast<double>(o.resamples);
  out.p_value = std::min(1.0, 2.0 * std::min(below, above) / B);
  return out;
}

TestResult wilcoxon_signed_rank(std::span<const double> diffs, ZeroMethod zeros) {
  const bool all_zero = std::all_of(diffs.begin(), diffs.end(), [](double d) { return d == 0.0; });
  if (diffs.empty() || all_zero) throw DegenerateError("Wilcoxon undefined: all differences are zero");
  std::vector<double> kept;
  std::size_t n_zero = 0;
  for (double d : diffs) {
    if (!std::isfinite(d)) throw ValidationError("Wilcoxon: non-finite difference");
    if (d == 0.0) {
      ++n_zero;
    } else {
      kept.push_back(d);
    }
  }
  const std::size_t n = kept.size();
  if (n < 10) throw RangeError(fmt::format("Wilcoxon needs >= 10 non-zero differences, got {}", n));

  double t_plus = 0.0;
  double mean = 0.0;
  double var = 0.0;
  if (zeros == ZeroMethod::Drop) {
    std::vector<double> absd(n);
    for (std::size_t i = 0; i < n; ++i) absd[i] = std::abs(kept[i]);
    const auto r = mid_ranks(absd);
    for (std::size_t i = 0; i < n; ++i) t_plus += kept[i] > 0.0 ? r[i] : 0.0;
    const double nn = static_cast<double>(n);
    mean = nn * (nn + 1.0) / 4.0;
    var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term(absd) / 48.0;
  } else {
    std::vector<double> absd;
    for (double d : diffs) absd.push_back(std::abs(d));
    const auto r = mid_ranks(absd);
    for (std::size_t i = 0; i < diffs.size(); ++i) t_plus += diffs[i] > 0.0 ? r[i] : 0.0;
    const double nt = static_cast<double>(diffs.size());
    const double nz = static_cast<double>(n_zero);
    mean = (nt * (nt + 1.0) - nz * (nz + 1.0)) / 4.0;
    std::vector<double> nonzero;
    for (double d : kept) nonzero.push_back(std::abs(d));
    var = (nt * (nt + 1.0) * (2.0 * nt + 1.0) - nz * (nz + 1.0) * (2.0 * nz + 1.0)) / 24.0 -
          tie_term(nonzero) / 48.0;
  }
  if (!(var > 0.0)) throw DegenerateError("Wilcoxon variance is zero");
  TestResult out;
  out.method = zeros == ZeroMethod::Drop ? "wilcoxon signed-rank (zeros dropped)"
                                         : "wilcoxon signed-rank (Pratt)";
  out.n = zeros == ZeroMethod::Drop ? n : diffs.size();
  out.statistic = t_plus;
  out.p_value = two_sided_normal_p((t_plus - mean) / std::sqrt(var));
  const double m = mean_of(kept);
  const double se = n > 1 ? std::sqrt(sample_var(kept) / static_cast<double>(n)) : 0.0;
  out.ci_low = m - 1.959963984540054 * se;
  out.ci_high = m + 1.959963984540054 * se;
  return out;
}

TestResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 3 || b.size() < 3) throw RangeError("Mann-Whitney needs at least 3 per group");
  std::vector<double> all(a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  const auto r = mid_ranks(all);
  const double n1 = static_cast<double>(a.size());
  const double n2 = static_cast<double>(b.size());
  const double N = n1 + n2;
  double r1 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r1 += r[i];
  const double u1 = r1 - n1 * (n1 + 1.0) / 2.0;
  const double mu = n1 * n2 / 2.0;
  const double var = n1 * n2 / 12.0 * ((N + 1.0) - tie_term(all) / (N * (N - 1.0)));
  if (!(var > 0.0)) throw DegenerateError("Mann-Whitney undefined: all observations tied");
  TestResult out;
  out.method = "mann-whitney U";
  out.n = a.size() + b.size();
  out.statistic = u1;
  out.p_value = two_sided_normal_p((u1 - mu) / std::sqrt(var));
  const double diff = mean_of(a) - mean_of(b);
  const double se = std::sqrt(sample_var(a) / n1 + sample_var(b) / n2);
  out.ci_low = diff - 1.959963984540054 * se;
  out.ci_high = diff + 1.959963984540054 * se;
  return out;
}

double sign_test_p(std::size_t wins, std::size_t trials) {
  if (wins > trials) throw RangeError("sign test: wins exceed trials");
  if (trials == 0) return 1.0;
  boost::math::binomial_distribution<double> dist(static_cast<double>(trials), 0.5);
  const double k = static_cast<double>(wins);
  const double lower = boost::math::cdf(dist, k);
  const double upper = wins == 0 ? 1.0 : boost::math::cdf(boost::math::complement(dist, k - 1.0));
  return std::min(1.0, 2.0 * std::min(lower, upper));
}

std::vector<Lag1Result> lag1_autocorr(const SignalPanel& panel, Axis axis, std::size_t min_obs) {
  std::vector<Lag1Result> out;
  const auto& scores = panel.axis(axis);
  for (std::size_t j = 0; j < panel.num_tickers(); ++j) {
    Lag1Result res;
    res.ticker = panel.tickers()[j];
    std::size_t obs = 0;
    std::vector<double> x, y;
    for (std::size_t d = 0; d < panel.num_dates(); ++d) {
      if (!panel.non_neutral(d, j)) continue;
      ++obs;
      if (d + 1 < panel.num_dates() && panel.non_neutral(d + 1, j)) {
        x.push_back(scores(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)));
        y.push_back(scores(static_cast<Eigen::Index>(d + 1), static_cast<Eigen::Index>(j)));
      }
    }
    res.n_pairs = x.size();
    if (obs < min_obs) {
      res.skipped_reason = fmt::format("only {} non-neutral observations (< {})", obs, min_obs);
    } else if (x.size() < 3) {
      res.skipped_reason = "fewer than 3 consecutive non-neutral pairs";
    } else {
      try {
        res.coefficient = pearson(x, y);
      } catch (const DegenerateError&) {
        res.skipped_reason = "constant scores";
      }
    }
    out.push_back(std::move(res));
  }
  return out;
}

SeedSummary seed_summary(std::span<const double> values,
                         std::optional<std::span<const double>> comparator) {
  if (values.size() < 2) throw RangeError("seed summary needs at least 2 seeds");
  SeedSummary s;
  s.n = values.size();
  s.mean = mean_of(values);
  s.std = std::sqrt(sample_var(values));
  if (comparator) s.vs_comparator = mann_whitney_u(values, *comparator);
  return s;
}

PairedComparison compare_curves(const std::string& label, const EquityCurve& a,
                                const EquityCurve& b, const BootstrapOptions& options) {
  std::vector<double> ra, rb;
  for (std::size_t i = 1, k = 1; i < a.size() && k < b.size();) {
    if (a.dates[i] < b.dates[k]) {
      ++i;
    } else if (b.dates[k] < a.dates[i]) {
      ++k;
    } else {
      ra.push_back(a.daily_returns[i++]);
      rb.push_back(b.daily_returns[k++]);
    }
  }
  if (ra.size() < 2) throw AlignmentError("curves share fewer than 2 return dates");
  std::vector<double> diff(ra.size());
  std::size_t wins = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    diff[i] = ra[i] - rb[i];
    wins += ra[i] > rb[i] ? 1 : 0;
  }
  PairedComparison out;
  out.label = label;
  out.mean_bp_day = 1e4 * mean_of(diff);
  auto ci = block_bootstrap_ci(diff, options);
  out.ci_low_bp = 1e4 * ci.ci_low;
  out.ci_high_bp = 1e4 * ci.ci_high;
  try {
    out.delta_sharpe = sharpe_ratio(ra) - sharpe_ratio(rb);
  } catch (const UndefinedMetricError&) {
    out.delta_sharpe = kNaN;
  }
  out.win_pct = 100.0 * static_cast<double>(wins) / static_cast<double>(ra.size());
  try {
    out.wilcoxon_p = wilcoxon_signed_rank(diff).p_value;
  } catch (const Error&) {
    out.wilcoxon_p = kNaN;
  }
  return out;
}

std::string format_comparisons(const std::vector<PairedComparison>& rows) {
  std::string out = "comparison,mean_bp_day,ci_low,ci_high,delta_sharpe,win_pct,wilcoxon_p\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f},{:.4f},{:.6g}\n", r.label, r.mean_bp_day,
                       r.ci_low_bp, r.ci_high_bp, r.delta_sharpe, r.win_pct, r.wilcoxon_p);
  }
  return out;
}

}  // namespace ssai
