#include "ssai/signals.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

#include "ssai/errors.hpp"
#include "ssai/util.hpp"

namespace ssai {

std::string axis_name(Axis a) {
  switch (a) {
    case Axis::Sentiment: return "sentiment";
    case Axis::Risk: return "risk";
    case Axis::Confidence: return "confidence";
    case Axis::VolatilityForecast: return "volatility_forecast";
  }
  return "unknown";
}

Axis parse_axis(std::string_view name) {
  for (auto a : kAllAxes) {
    if (axis_name(a) == name) return a;
  }
  throw ValidationError("unknown axis '" + std::string(name) + "'");
}

bool SignalVector::is_neutral() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == kNeutralScore; });
}

AxisSet::AxisSet(std::initializer_list<Axis> axes) {
  for (auto a : axes) bits_.set(static_cast<std::size_t>(a));
}

AxisSet AxisSet::all() {
  AxisSet s;
  s.bits_.set();
  return s;
}

AxisSet AxisSet::parse(const std::vector<std::string>& names) {
  AxisSet s;
  for (const auto& n : names) {
    if (n == "ALL" || n == "all") {
      s.bits_.set();
    } else {
      s.bits_.set(static_cast<std::size_t>(parse_axis(n)));
    }
  }
  return s;
}

AxisSet AxisSet::operator|(const AxisSet& o) const {
  AxisSet s;
  s.bits_ = bits_ | o.bits_;
  return s;
}

std::string AxisSet::str() const {
  if (is_all()) return "ALL";
  if (empty()) return "none";
  std::string out;
  for (auto a : kAllAxes) {
    if (!contains(a)) continue;
    if (!out.empty()) out += "+";
    out += axis_name(a);
  }
  return out;
}

// ---------------------------------------------------------------------------

SignalPanel::SignalPanel(std::vector<Date> dates, std::vector<std::string> tickers)
    : dates_(std::move(dates)), tickers_(std::move(tickers)) {
  const auto n = static_cast<Eigen::Index>(dates_.size());
  const auto m = static_cast<Eigen::Index>(tickers_.size());
  for (auto& s : scores_) s.setConstant(n, m, kNeutralScore);
  flags_.setZero(n, m);
}

Eigen::MatrixXd SignalPanel::deviation(Axis a) const {
  return (axis(a).array() - kNeutralScore).matrix();
}

SignalVector SignalPanel::at(std::size_t date, std::size_t ticker) const {
  SignalVector v;
  for (std::size_t k = 0; k < kNumAxes; ++k) {
    v.values[k] = scores_[k](static_cast<Eigen::Index>(date), static_cast<Eigen::Index>(ticker));
  }
  return v;
}

void SignalPanel::set(std::size_t date, std::size_t ticker, const SignalVector& v) {
  for (double x : v.values) {
    if (!(x >= kMinScore && x <= kMaxScore)) {
      throw ValidationError(fmt::format("score {} outside [1, 5] at ({}, {})", x,
                                        dates_.at(date).iso(), tickers_.at(ticker)));
    }
  }
  const auto i = static_cast<Eigen::Index>(date);
  const auto j = static_cast<Eigen::Index>(ticker);
  for (std::size_t k = 0; k < kNumAxes; ++k) scores_[k](i, j) = v.values[k];
  flags_(i, j) = 1;
}

void SignalPanel::clear(std::size_t date, std::size_t ticker) {
  const auto i = static_cast<Eigen::Index>(date);
  const auto j = static_cast<Eigen::Index>(ticker);
  for (auto& s : scores_) s(i, j) = kNeutralScore;
  flags_(i, j) = 0;
}

std::optional<std::size_t> SignalPanel::ticker_index(const std::string& ticker) const {
  auto it = std::find(tickers_.begin(), tickers_.end(), ticker);
  if (it == tickers_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - tickers_.begin());
}

std::optional<std::size_t> SignalPanel::date_index(const Date& d) const {
  auto it = std::lower_bound(dates_.begin(), dates_.end(), d);
  if (it == dates_.end() || *it != d) return std::nullopt;
  return static_cast<std::size_t>(it - dates_.begin());
}

SignalPanel SignalPanel::slice_rows(std::size_t begin, std::size_t end) const {
  if (begin > end || end > num_dates()) throw RangeError("row slice out of range");
  SignalPanel out;
  out.dates_.assign(dates_.begin() + static_cast<std::ptrdiff_t>(begin),
                    dates_.begin() + static_cast<std::ptrdiff_t>(end));
  out.tickers_ = tickers_;
  const auto b = static_cast<Eigen::Index>(begin);
  const auto len = static_cast<Eigen::Index>(end - begin);
  for (std::size_t k = 0; k < kNumAxes; ++k) out.scores_[k] = scores_[k].middleRows(b, len);
  out.flags_ = flags_.middleRows(b, len);
  out.masked_ = masked_;
  return out;
}

SignalPanel SignalPanel::restrict_tickers(const std::vector<std::string>& subset) const {
  SignalPanel out;
  out.dates_ = dates_;
  out.tickers_ = subset;
  out.masked_ = masked_;
  const auto n = static_cast<Eigen::Index>(dates_.size());
  const auto m = static_cast<Eigen::Index>(subset.size());
  for (auto& s : out.scores_) s.resize(n, m);
  out.flags_.resize(n, m);
  for (std::size_t c = 0; c < subset.size(); ++c) {
    auto j = ticker_index(subset[c]);
    if (!j) throw ValidationError("ticker not in signal panel: " + subset[c]);
    const auto cc = static_cast<Eigen::Index>(c);
    for (std::size_t k = 0; k < kNumAxes; ++k) out.scores_[k].col(cc) = scores_[k].col(*j);
    out.flags_.col(cc) = flags_.col(*j);
  }
  return out;
}

void SignalPanel::validate() const {
  for (std::size_t i = 1; i < dates_.size(); ++i) {
    if (!(dates_[i - 1] < dates_[i])) throw ValidationError("signal dates not strictly increasing");
  }
  for (std::size_t i = 0; i < num_dates(); ++i) {
    for (std::size_t j = 0; j < num_tickers(); ++j) {
      auto v = at(i, j);
      for (double x : v.values) {
        if (!(x >= kMinScore && x <= kMaxScore)) {
          throw ValidationError(fmt::format("score {} outside [1, 5] at ({}, {})", x,
                                            dates_[i].iso(), tickers_[j]));
        }
      }
      if (!non_neutral(i, j) && !v.is_neutral()) {
        throw ValidationError(fmt::format("neutral-flagged cell ({}, {}) carries scores",
                                          dates_[i].iso(), tickers_[j]));
      }
    }
  }
}

bool SignalPanel::operator==(const SignalPanel& o) const {
  if (dates_ != o.dates_ || tickers_ != o.tickers_ || !(masked_ == o.masked_)) return false;
  for (std::size_t k = 0; k < kNumAxes; ++k) {
    if (scores_[k].rows() != o.scores_[k].rows() || scores_[k].cols() != o.scores_[k].cols()) {
      return false;
    }
    if (scores_[k] != o.scores_[k]) return false;
  }
  return flags_ == o.flags_;
}

// ---------------------------------------------------------------------------

std::array<double, 5> max_entropy_distribution(double mean) {
  if (!(mean > kMinScore && mean < kMaxScore)) {
    throw ValidationError(fmt::format("target mean {} must lie strictly inside (1, 5)", mean));
  }
  auto probs = [](double theta) {
    std::array<double, 5> p{};
    double z = 0.0;
    for (int k = 0; k < 5; ++k) {
      p[k] = std::exp(theta * (k - 2));
      z += p[k];
    }
    for (auto& x : p) x /= z;
    return p;
  };
  auto mean_of = [](const std::array<double, 5>& p) {
    double m = 0.0;
    for (int k = 0; k < 5; ++k) m += (k + 1) * p[k];
    return m;
  };
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (mean_of(probs(mid)) < mean ? lo : hi) = mid;
  }
  return probs(0.5 * (lo + hi));
}

ArticleScore mock_score(std::string_view text, const std::string& ticker, std::uint64_t seed,
                        const MockScorerConfig& config) {
  ArticleScore out;
  out.ticker = ticker;
  const std::uint64_t key = stable_hash(ticker, seed) ^ stable_hash(text, ~seed);
  for (std::size_t k = 0; k < kNumAxes; ++k) {
    const auto p = max_entropy_distribution(config.target_means[k]);
    const double u = unit_interval(mix_seed(key, k));
    double acc = 0.0;
    int score = 5;
    for (int s = 0; s < 5; ++s) {
      acc += p[s];
      if (u < acc) {
        score = s + 1;
        break;
      }
    }
    out.scores.values[k] = score;
  }
  out.source_id = fmt::format("mock-{:016x}", key);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

bool is_integer_score(double v) {
  return v >= kMinScore && v <= kMaxScore && std::floor(v) == v;
}

}  // namespace

AggregationResult aggregate_signals(const std::vector<ArticleScore>& articles,
                                    const std::vector<Date>& calendar,
                                    const std::vector<std::string>& tickers, std::size_t window) {
  for (std::size_t i = 1; i < calendar.size(); ++i) {
    if (!(calendar[i - 1] < calendar[i])) {
      throw ValidationError("calendar not strictly increasing at " + calendar[i].iso());
    }
  }
  std::unordered_map<std::string, std::size_t> ticker_pos;
  for (std::size_t j = 0; j < tickers.size(); ++j) ticker_pos.emplace(tickers[j], j);

  const std::size_t n = calendar.size();
  const std::size_t m = tickers.size();
  // Per-ticker, per-trading-day sums and counts of articles assigned to that day.
  std::vector<std::array<double, kNumAxes>> sums(n * m, {0.0, 0.0, 0.0, 0.0});
  std::vector<double> counts(n * m, 0.0);

  AggregationResult result;
  for (const auto& art : articles) {
    for (double v : art.scores.values) {
      if (!is_integer_score(v)) {
        throw ValidationError(fmt::format("article {} has non-integer or out-of-range score {}",
                                          art.source_id, v));
      }
    }
    auto tp = ticker_pos.find(art.ticker);
    if (tp == ticker_pos.end()) {
      result.unmatched.push_back({art, "ticker not in universe"});
      continue;
    }
    auto it = std::lower_bound(calendar.begin(), calendar.end(), art.published);
    if (it == calendar.end()) {
      result.unmatched.push_back({art, "published after the last trading day"});
      continue;
    }
    const auto a = static_cast<std::size_t>(it - calendar.begin());
    auto& cell = sums[tp->second * n + a];
    for (std::size_t k = 0; k < kNumAxes; ++k) cell[k] += art.scores.values[k];
    counts[tp->second * n + a] += 1.0;
  }

  result.panel = SignalPanel(calendar, tickers);
  for (std::size_t j = 0; j < m; ++j) {
    // Prefix sums over the ticker's day-indexed article totals.
    std::vector<std::array<double, kNumAxes>> psum(n + 1, {0.0, 0.0, 0.0, 0.0});
    std::vector<double> pcount(n + 1, 0.0);
    for (std::size_t d = 0; d < n; ++d) {
      for (std::size_t k = 0; k < kNumAxes; ++k) psum[d + 1][k] = psum[d][k] + sums[j * n + d][k];
      pcount[d + 1] = pcount[d] + counts[j * n + d];
    }
    for (std::size_t d = 0; d < n; ++d) {
      const std::size_t lo = d >= window ? d - window : 0;
      const double c = pcount[d + 1] - pcount[lo];
      if (c == 0.0) continue;
      SignalVector v;
      for (std::size_t k = 0; k < kNumAxes; ++k) v.values[k] = (psum[d + 1][k] - psum[lo][k]) / c;
      result.panel.set(d, j, v);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

std::string tercile_name(Tercile t) {
  switch (t) {
    case Tercile::Low: return "Low";
    case Tercile::Mid: return "Mid";
    case Tercile::High: return "High";
  }
  return "?";
}

std::vector<std::string> CoverageReport::members(Tercile t) const {
  std::vector<std::string> out;
  for (const auto& tc : tickers) {
    if (tc.tercile == t) out.push_back(tc.ticker);
  }
  return out;
}

const TickerCoverage& CoverageReport::of(const std::string& ticker) const {
  for (const auto& tc : tickers) {
    if (tc.ticker == ticker) return tc;
  }
  throw ValidationError("ticker not in coverage report: " + ticker);
}

CoverageReport coverage_stats(const SignalPanel& panel) {
  CoverageReport report;
  const std::size_t n = panel.num_dates();
  const double denom = n ? static_cast<double>(n) : 1.0;
  for (std::size_t j = 0; j < panel.num_tickers(); ++j) {
    TickerCoverage tc;
    tc.ticker = panel.tickers()[j];
    tc.n_days = n;
    std::size_t present = 0, differs_any = 0;
    std::array<std::size_t, kNumAxes> differs{};
    for (std::size_t d = 0; d < n; ++d) {
      present += panel.non_neutral(d, j) ? 1 : 0;
      auto v = panel.at(d, j);
      bool any = false;
      for (std::size_t k = 0; k < kNumAxes; ++k) {
        if (v.values[k] != kNeutralScore) {
          ++differs[k];
          any = true;
        }
      }
      differs_any += any ? 1 : 0;
    }
    tc.presence_any = static_cast<double>(present) / denom;
    tc.differs_any = static_cast<double>(differs_any) / denom;
    for (std::size_t k = 0; k < kNumAxes; ++k) {
      tc.presence_axis[k] = panel.masked_axes().contains(kAllAxes[k]) ? 0.0 : tc.presence_any;
      tc.differs_axis[k] = static_cast<double>(differs[k]) / denom;
    }
    report.tickers.push_back(std::move(tc));
  }

  std::vector<std::size_t> order(report.tickers.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = report.tickers[a];
    const auto& y = report.tickers[b];
    if (x.presence_any != y.presence_any) return x.presence_any < y.presence_any;
    return x.ticker < y.ticker;
  });
  const std::size_t total = order.size();
  const std::size_t base = total / 3;
  const std::size_t rem = total % 3;
  const std::size_t low_end = base + (rem > 0 ? 1 : 0);
  const std::size_t mid_end = low_end + base + (rem > 1 ? 1 : 0);
  for (std::size_t r = 0; r < total; ++r) {
    report.tickers[order[r]].tercile = r < low_end ? Tercile::Low
                                       : r < mid_end ? Tercile::Mid
                                                     : Tercile::High;
  }
  return report;
}

// ---------------------------------------------------------------------------

SignalPanel mask_axes(const SignalPanel& panel, const AxisSet& axes) {
  SignalPanel out = panel;
  for (auto a : kAllAxes) {
    if (axes.contains(a)) out.scores_[static_cast<std::size_t>(a)].setConstant(kNeutralScore);
  }
  out.masked_ = panel.masked_ | axes;
  if (out.masked_.is_all()) out.flags_.setZero();
  return out;
}

PcaResult pca_effective_dim(const SignalPanel& panel, std::size_t row_begin, std::size_t row_end) {
  row_end = std::min(row_end, panel.num_dates());
  std::vector<std::array<double, kNumAxes>> rows;
  for (std::size_t d = row_begin; d < row_end; ++d) {
    for (std::size_t j = 0; j < panel.num_tickers(); ++j) {
      if (panel.non_neutral(d, j)) rows.push_back(panel.at(d, j).values);
    }
  }
  if (rows.size() < 5) {
    throw RankError(fmt::format("PCA needs at least 5 non-neutral stock-days, found {}",
                                rows.size()));
  }
  PcaResult out;
  out.n_rows = rows.size();
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd z(n, static_cast<Eigen::Index>(kNumAxes));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < kNumAxes; ++k) z(i, k) = rows[i][k];
  }
  for (std::size_t k = 0; k < kNumAxes; ++k) {
    const double mean = z.col(k).mean();
    const double var = (z.col(k).array() - mean).square().sum() / static_cast<double>(n - 1);
    if (!(var > 0.0)) {
      throw DegenerateError(axis_name(kAllAxes[k]) + " is constant on non-neutral stock-days");
    }
    out.means[k] = mean;
    out.stds[k] = std::sqrt(var);
    z.col(k) = ((z.col(k).array() - mean) / out.stds[k]).matrix();
  }
  const Eigen::Matrix4d corr = (z.transpose() * z) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(corr);
  if (eig.info() != Eigen::Success) throw NumericalError("PCA eigendecomposition failed");
  double total = 0.0;
  for (std::size_t k = 0; k < kNumAxes; ++k) {
    out.eigenvalues[k] = std::max(eig.eigenvalues()(3 - static_cast<Eigen::Index>(k)), 0.0);
    total += out.eigenvalues[k];
  }
  for (std::size_t k = 0; k < kNumAxes; ++k) out.explained[k] = out.eigenvalues[k] / total;
  out.loadings = eig.eigenvectors().col(3);
  if (out.loadings(0) < 0.0) out.loadings = -out.loadings;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kCacheHeader =
    "source_id,ticker,date,sentiment,risk,confidence,volatility_forecast";
constexpr std::string_view kPanelHeader =
    "date,ticker,sentiment,risk,confidence,volatility_forecast,non_neutral";

template <typename F>
void for_each_line(std::string_view text, F&& f) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    f(line, line_no);
  }
}

}  // namespace

ArticleCacheContents parse_article_cache(std::string_view text) {
  ArticleCacheContents out;
  bool header = false;
  for_each_line(text, [&](std::string_view line, std::size_t no) {
    if (!header) {
      if (line != kCacheHeader) {
        out.issues.push_back({no, "expected header '" + std::string(kCacheHeader) + "'"});
      }
      header = true;
      return;
    }
    auto f = split_csv(line);
    if (f.size() != 7) {
      out.issues.push_back({no, fmt::format("expected 7 fields, found {}", f.size())});
      return;
    }
    ArticleScore art;
    art.source_id = std::string(f[0]);
    art.ticker = std::string(f[1]);
    try {
      art.published = Date::parse(f[2]);
    } catch (const ParseError& e) {
      out.issues.push_back({no, e.what()});
      return;
    }
    for (std::size_t k = 0; k < kNumAxes; ++k) {
      int v = 0;
      auto field = f[3 + k];
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty()) {
        out.issues.push_back(
            {no, fmt::format("{} score '{}' is not an integer", axis_name(kAllAxes[k]), field)});
        return;
      }
      if (v < 1 || v > 5) {
        out.issues.push_back(
            {no, fmt::format("{} score {} outside [1, 5]", axis_name(kAllAxes[k]), v)});
        return;
      }
      art.scores.values[k] = v;
    }
    out.articles.push_back(std::move(art));
  });
  if (!header) out.issues.push_back({0, "missing header"});
  return out;
}

ArticleCacheContents read_article_cache(const std::filesystem::path& path) {
  return parse_article_cache(read_text_file(path));
}

std::vector<ArticleScore> load_article_cache(const std::filesystem::path& path) {
  auto contents = read_article_cache(path);
  if (!contents.issues.empty()) {
    const auto& is = contents.issues.front();
    if (is.message.find("outside [1, 5]") != std::string::npos) {
      throw ValidationError(fmt::format("{}: line {}: {}", path.string(), is.line, is.message));
    }
    throw ParseError(path.string() + ": " + is.message, is.line);
  }
  return std::move(contents.articles);
}

std::string format_article_cache(const std::vector<ArticleScore>& articles) {
  std::string out(kCacheHeader);
  out += '\n';
  for (const auto& a : articles) {
    out += fmt::format("{},{},{},{},{},{},{}\n", a.source_id, a.ticker, a.published.iso(),
                       static_cast<int>(a.scores.values[0]), static_cast<int>(a.scores.values[1]),
                       static_cast<int>(a.scores.values[2]), static_cast<int>(a.scores.values[3]));
  }
  return out;
}

std::string format_signal_panel(const SignalPanel& panel) {
  std::string out(kPanelHeader);
  out += '\n';
  for (std::size_t d = 0; d < panel.num_dates(); ++d) {
    for (std::size_t j = 0; j < panel.num_tickers(); ++j) {
      auto v = panel.at(d, j);
      out += fmt::format("{},{},{},{},{},{},{}\n", panel.dates()[d].iso(), panel.tickers()[j],
                         format_exact(v.values[0]), format_exact(v.values[1]),
                         format_exact(v.values[2]), format_exact(v.values[3]),
                         panel.non_neutral(d, j) ? 1 : 0);
    }
  }
  return out;
}

SignalPanel parse_signal_panel(std::string_view text) {
  struct Cell {
    SignalVector v;
    bool flag;
  };
  std::map<std::pair<Date, std::string>, Cell> cells;
  std::set<Date> dates;
  std::set<std::string> tickers;
  bool header = false;
  for_each_line(text, [&](std::string_view line, std::size_t no) {
    if (!header) {
      if (line != kPanelHeader) throw ParseError("expected signal panel header", no);
      header = true;
      return;
    }
    auto f = split_csv(line);
    if (f.size() != 7) throw ParseError("expected 7 fields", no);
    Date d;
    try {
      d = Date::parse(f[0]);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), no);
    }
    Cell c;
    for (std::size_t k = 0; k < kNumAxes; ++k) {
      double v = 0.0;
      auto field = f[2 + k];
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc{} || ptr != field.data() + field.size()) {
        throw ParseError("bad score '" + std::string(field) + "'", no);
      }
      c.v.values[k] = v;
    }
    if (f[6] != "0" && f[6] != "1") throw ParseError("non_neutral must be 0 or 1", no);
    c.flag = f[6] == "1";
    std::string t(f[1]);
    if (!cells.emplace(std::make_pair(d, t), c).second) throw ParseError("duplicate cell", no);
    dates.insert(d);
    tickers.insert(t);
  });
  if (!header) throw ParseError("missing header", 0);
  if (cells.size() != dates.size() * tickers.size()) {
    throw AlignmentError("signal panel is not a full date x ticker grid");
  }
  SignalPanel panel({dates.begin(), dates.end()}, {tickers.begin(), tickers.end()});
  std::size_t d = 0;
  for (const auto& date : dates) {
    std::size_t j = 0;
    for (const auto& t : tickers) {
      const auto& c = cells.at({date, t});
      if (c.flag) {
        panel.set(d, j, c.v);
      } else if (!c.v.is_neutral()) {
        throw ValidationError(
            fmt::format("neutral-flagged cell ({}, {}) carries scores", date.iso(), t));
      }
      ++j;
    }
    ++d;
  }
  return panel;
}

}  // namespace ssai
