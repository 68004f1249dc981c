#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "ssai/errors.hpp"
#include "ssai/metrics.hpp"
#include "ssai/stats.hpp"

using namespace ssai;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed, double mu = 0.0, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(mu, sd);
  std::vector<double> out(n);
  for (auto& x : out) x = z(rng);
  return out;
}

std::vector<double> wealth_from(const std::vector<double>& r) {
  std::vector<double> w{1.0};
  for (double x : r) w.push_back(w.back() * (1.0 + x));
  return w;
}

}  // namespace

TEST_CASE("drawdown examples") {
  const std::vector<double> w{1.0, 1.1, 0.99};
  CHECK(std::abs(max_drawdown(w) - (-0.1)) < 1e-12);
  const std::vector<double> up{1.0, 1.01, 1.02, 1.05};
  CHECK(max_drawdown(up) == 0.0);
  const auto m = metrics(oracle::curve_from_wealth(up));
  CHECK_FALSE(m.calmar_value);
  CHECK_THROWS_AS(m.calmar(), UndefinedMetricError);
  CHECK_THROWS_AS(calmar_ratio(0.1, 0.0), UndefinedMetricError);
}

TEST_CASE("annualisation reconciles reported CR, MDD and Calmar pairs") {
  // Five calendar years of trading days.
  const std::size_t n = 1258;
  const double ar_bh = annualised_return(2.43574, n);
  CHECK(std::abs(ar_bh - 0.2805) < 5e-4);
  CHECK(std::abs(calmar_ratio(ar_bh, -0.36705) - 0.764) < 5e-4);
  CHECK(std::abs(calmar_ratio(annualised_return(3.07199, n), -0.35643) - 0.911) < 5e-4);
}

TEST_CASE("metrics identities on random curves") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto r = normals(300 + seed, seed, 0.0004, 0.012);
    const auto w = wealth_from(r);
    const auto c = oracle::curve_from_wealth(w);
    const auto m = metrics(c);
    double g = 1.0;
    for (double x : r) g *= 1.0 + x;
    CHECK(std::abs(m.cr - (g - 1.0)) < 1e-10);
    CHECK(std::abs(m.ar - (std::pow(1.0 + m.cr, 252.0 / double(w.size())) - 1.0)) < 1e-10);
    CHECK(m.mdd <= 0.0);
    CHECK(m.mdd >= -1.0);
    REQUIRE(m.calmar_value);
    CHECK(std::abs(*m.calmar_value * std::abs(m.mdd) - m.ar) < 1e-9);

    double peak = w[0], mdd = 0.0;
    for (double x : w) {
      peak = std::max(peak, x);
      mdd = std::min(mdd, x / peak - 1.0);
    }
    CHECK(std::abs(m.mdd - mdd) < 1e-12);

    std::vector<double> scaled = r;
    for (auto& x : scaled) x *= 2.5;
    CHECK(std::abs(sharpe_ratio(scaled) - sharpe_ratio(r)) < 1e-9);
    std::vector<double> w2 = w;
    for (auto& x : w2) x *= 7.0;
    CHECK(std::abs(max_drawdown(w2) - max_drawdown(w)) < 1e-12);
  }
}

TEST_CASE("Sharpe, Sortino, CVaR and Rachev against direct formulas") {
  const auto r = normals(400, 77, 0.0005, 0.01);
  double mean = 0.0;
  for (double x : r) mean += x / double(r.size());
  double ss = 0.0, down = 0.0;
  for (double x : r) {
    ss += (x - mean) * (x - mean);
    down += std::min(x, 0.0) * std::min(x, 0.0);
  }
  const double sd = std::sqrt(ss / double(r.size() - 1));
  CHECK(std::abs(sharpe_ratio(r) - mean / sd * std::sqrt(252.0)) < 1e-12);
  CHECK(std::abs(sortino_ratio(r) - mean / std::sqrt(down / double(r.size())) * std::sqrt(252.0)) < 1e-12);

  auto sorted = r;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t tail = 20;  // ceil(0.05 * 400)
  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < tail; ++i) {
    lo += sorted[i] / tail;
    hi += sorted[sorted.size() - 1 - i] / tail;
  }
  CHECK(std::abs(cvar5_percent(r) - 100.0 * lo) < 1e-12);
  CHECK(std::abs(rachev_ratio(r) - hi / std::abs(lo)) < 1e-12);
}

TEST_CASE("undefined ratios raise instead of returning infinities") {
  const std::vector<double> flat(50, 0.001);
  CHECK_THROWS_AS(sharpe_ratio(flat), UndefinedMetricError);
  CHECK_THROWS_AS(sortino_ratio(flat), UndefinedMetricError);
  CHECK_THROWS_AS(sharpe_ratio(std::vector<double>{0.01}), UndefinedMetricError);
  const std::vector<double> zero_tail(40, 0.0);
  CHECK_THROWS_AS(rachev_ratio(zero_tail), UndefinedMetricError);
  const auto m = metrics(oracle::curve_from_wealth(wealth_from(flat)));
  CHECK_FALSE(m.sharpe_value);
  CHECK_THROWS_AS(m.sharpe(), UndefinedMetricError);
  const auto table = format_metrics_table({{"flat", m}});
  CHECK(table.rfind("strategy,cr_pct,sharpe,sortino,mdd_pct,rachev,cvar5_pct,calmar\n", 0) == 0);
  CHECK(table.find("flat,") != std::string::npos);
  CHECK(table.find("nan") != std::string::npos);
  CHECK_THROWS(metrics(oracle::curve_from_wealth({1.0, 1.1})));
}

TEST_CASE("Spearman matches the rank-then-Pearson oracle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto x = normals(200, 100 + seed);
    auto y = normals(200, 200 + seed);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += 0.3 * x[i];
    CHECK(std::abs(spearman_ic(x, y).statistic - oracle::spearman(x, y)) < 1e-12);
    for (auto& v : x) v = std::round(v * 2.0);  // heavy ties
    CHECK(std::abs(spearman_ic(x, y).statistic - oracle::spearman(x, y)) < 1e-12);
  }
  std::vector<double> a(30), b(30);
  for (int i = 0; i < 30; ++i) {
    a[i] = i;
    b[i] = std::exp(0.1 * i);
  }
  const auto t = spearman_ic(a, b);
  CHECK(t.statistic == doctest::Approx(1.0));
  CHECK(t.ci_low <= t.ci_high);
  CHECK_THROWS_AS(spearman_ic(std::vector<double>(30, 1.0), b), DegenerateError);
  CHECK(oracle::ranks({3.0, 1.0, 3.0, 2.0}) == mid_ranks(std::vector<double>{3.0, 1.0, 3.0, 2.0}));
}

TEST_CASE("Wilcoxon signed-rank examples") {
  std::vector<double> alt;
  for (int i = 0; i < 40; ++i) alt.push_back(i % 2 ? 1.0 : -1.0);
  CHECK(wilcoxon_signed_rank(alt).p_value > 0.99);
  std::vector<double> pos;
  for (int i = 1; i <= 20; ++i) pos.push_back(0.1 * i);
  CHECK(wilcoxon_signed_rank(pos).p_value < 0.001);
  CHECK_THROWS_AS(wilcoxon_signed_rank(std::vector<double>(15, 0.0)), DegenerateError);
  std::vector<double> few(8, 1.0);
  CHECK_THROWS(wilcoxon_signed_rank(few));
  std::vector<double> with_zeros = pos;
  with_zeros.insert(with_zeros.end(), 5, 0.0);
  CHECK(wilcoxon_signed_rank(with_zeros).n == 20);
  CHECK(wilcoxon_signed_rank(with_zeros, ZeroMethod::Pratt).n == 25);
}

TEST_CASE("Mann-Whitney U") {
  const std::vector<double> a{1, 2, 3, 4, 5, 6};
  const std::vector<double> b{7, 8, 9, 10, 11, 12};
  const auto r = mann_whitney_u(a, b);
  CHECK(r.statistic == 0.0);
  CHECK(r.p_value < 0.01);
  CHECK(mann_whitney_u(b, a).statistic == 36.0);
  CHECK(mann_whitney_u(a, a).p_value > 0.99);
  CHECK_THROWS(mann_whitney_u(std::vector<double>{1, 2}, b));
}

TEST_CASE("null p-values are uniform") {
  std::mt19937_64 rng(4242);
  std::normal_distribution<double> z;
  std::vector<double> pw, pm;
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<double> d(30), a(15), b(15);
    for (auto& x : d) x = z(rng);
    for (auto& x : a) x = z(rng);
    for (auto& x : b) x = z(rng);
    pw.push_back(wilcoxon_signed_rank(d).p_value);
    pm.push_back(mann_whitney_u(a, b).p_value);
  }
  CHECK(oracle::ks_uniform_p(pw) > 0.01);
  CHECK(oracle::ks_uniform_p(pm) > 0.01);
}

TEST_CASE("sign test") {
  CHECK(sign_test_p(10, 20) == doctest::Approx(1.0));
  CHECK(std::abs(sign_test_p(20, 20) - 2.0 * std::pow(0.5, 20)) < 1e-15);
  CHECK(std::abs(sign_test_p(0, 20) - 2.0 * std::pow(0.5, 20)) < 1e-15);
  // P(X >= 15) for Bin(20, 1/2) is 21700 / 2^20.
  CHECK(std::abs(sign_test_p(15, 20) - 2.0 * 21700.0 / 1048576.0) < 1e-12);
  CHECK(sign_test_p(15, 20) < 0.05);
  CHECK(sign_test_p(14, 20) > 0.05);
}

TEST_CASE("block bootstrap") {
  const std::vector<double> c(100, 0.25);
  const auto r = block_bootstrap_ci(c, {20, 500, 0.95, 1});
  CHECK(r.ci_low == 0.25);
  CHECK(r.ci_high == 0.25);

  const auto x = normals(300, 9, 0.1);
  const auto a = block_bootstrap_ci(x, {20, 2000, 0.95, 3});
  const auto b = block_bootstrap_ci(x, {20, 2000, 0.95, 3});
  CHECK(a.ci_low == b.ci_low);
  CHECK(a.ci_high == b.ci_high);
  CHECK(a.p_value == b.p_value);
  CHECK(a.ci_low <= a.ci_high);
  const auto d = block_bootstrap_ci(x, {20, 2000, 0.95, 4});
  CHECK(d.ci_low != a.ci_low);
  CHECK_THROWS(block_bootstrap_ci(std::vector<double>(10, 1.0), {20, 100, 0.95, 0}));
}

TEST_CASE("lag-1 autocorrelation") {
  const auto dates = business_days(Date{2020, 1, 6}, 2000);
  SignalPanel p(dates, {"AR", "IID", "FLAT", "THIN"});
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z(0.0, 0.2);
  double x = 0.0;
  for (std::size_t t = 0; t < dates.size(); ++t) {
    x = 0.5 * x + z(rng);
    SignalVector v;
    v[Axis::Sentiment] = 3.5 + x;
    p.set(t, 0, v);
    v[Axis::Sentiment] = 3.5 + z(rng);
    p.set(t, 1, v);
    v[Axis::Sentiment] = 4.0;
    p.set(t, 2, v);
    if (t % 200 == 0) p.set(t, 3, v);
  }
  const auto res = lag1_autocorr(p, Axis::Sentiment);
  REQUIRE(res.size() == 4);
  REQUIRE(res[0].coefficient);
  CHECK(std::abs(*res[0].coefficient - 0.5) < 0.06);
  REQUIRE(res[1].coefficient);
  CHECK(std::abs(*res[1].coefficient) < 0.06);
  CHECK_FALSE(res[2].coefficient);
  CHECK_FALSE(res[2].skipped_reason.empty());
  CHECK_FALSE(res[3].coefficient);
  CHECK(res[0].n_pairs == 1999);
}

TEST_CASE("seed summaries") {
  const std::vector<double> same(5, 1.25);
  const auto s = seed_summary(same);
  CHECK(s.mean == 1.25);
  CHECK(s.std == 0.0);
  CHECK_FALSE(s.vs_comparator);

  std::mt19937_64 rng(99);
  std::normal_distribution<double> z;
  int accept = 0;
  for (int rep = 0; rep < 400; ++rep) {
    std::vector<double> a(10), b(10);
    for (auto& v : a) v = z(rng);
    for (auto& v : b) v = z(rng);
    const auto r = seed_summary(a, std::span<const double>(b));
    REQUIRE(r.vs_comparator);
    if (r.vs_comparator->p_value > 0.05) ++accept;
  }
  CHECK(accept >= 360);
  CHECK(accept <= 396);
}

TEST_CASE("paired curve comparison") {
  const auto ra = normals(300, 31, 0.001, 0.01);
  auto rb = ra;
  for (auto& v : rb) v -= 0.0002;
  const auto a = oracle::curve_from_wealth(wealth_from(ra));
  const auto b = oracle::curve_from_wealth(wealth_from(rb));
  const auto cmp = compare_curves("a vs b", a, b, {20, 1000, 0.95, 5});
  CHECK(std::abs(cmp.mean_bp_day - 2.0) < 1e-6);
  CHECK(cmp.ci_low_bp <= cmp.mean_bp_day);
  CHECK(cmp.ci_high_bp >= cmp.mean_bp_day);
  CHECK(cmp.win_pct == doctest::Approx(100.0));
  CHECK(cmp.wilcoxon_p < 1e-6);
  CHECK(cmp.delta_sharpe > 0.0);
  const auto text = format_comparisons({cmp});
  CHECK(text.rfind("comparison,mean_bp_day,ci_low,ci_high,delta_sharpe,win_pct,wilcoxon_p\n", 0) == 0);
}
