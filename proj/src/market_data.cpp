#include "ssai/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "ssai/errors.hpp"
#include "ssai/util.hpp"

namespace ssai {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double parse_number(std::string_view field, std::string_view column, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty()) {
    throw ParseError(fmt::format("column '{}': cannot parse '{}' as a number", column, field),
                     line);
  }
  return v;
}

bool same_shape(const Eigen::MatrixXd& m, std::size_t rows, std::size_t cols) {
  return static_cast<std::size_t>(m.rows()) == rows && static_cast<std::size_t>(m.cols()) == cols;
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, std::size_t begin, std::size_t end) {
  if (m.size() == 0) return m;
  return m.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
}

Eigen::MatrixXd cols_of(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
  if (m.size() == 0) return m;
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(j) = m.col(idx[j]);
  return out;
}

}  // namespace

std::optional<std::size_t> MarketPanel::ticker_index(const std::string& ticker) const {
  auto it = std::find(tickers.begin(), tickers.end(), ticker);
  if (it == tickers.end()) return std::nullopt;
  return static_cast<std::size_t>(it - tickers.begin());
}

std::optional<std::size_t> MarketPanel::date_index(const Date& d) const {
  auto it = std::lower_bound(dates.begin(), dates.end(), d);
  if (it == dates.end() || *it != d) return std::nullopt;
  return static_cast<std::size_t>(it - dates.begin());
}

std::pair<std::size_t, std::size_t> MarketPanel::date_span(const DateRange& range) const {
  auto lo = std::lower_bound(dates.begin(), dates.end(), range.first);
  auto hi = std::upper_bound(dates.begin(), dates.end(), range.last);
  if (lo >= hi) throw RangeError("no panel dates inside " + range.str());
  return {static_cast<std::size_t>(lo - dates.begin()), static_cast<std::size_t>(hi - dates.begin())};
}

void MarketPanel::validate() const {
  const auto n = num_dates();
  const auto m = num_tickers();
  for (std::size_t i = 1; i < n; ++i) {
    if (!(dates[i - 1] < dates[i])) {
      throw ValidationError("dates not strictly increasing at " + dates[i].iso());
    }
  }
  if (!same_shape(close, n, m)) throw ValidationError("close matrix shape mismatch");
  for (const auto* opt : {&open, &high, &low, &volume}) {
    if (opt->size() != 0 && !same_shape(*opt, n, m)) {
      throw ValidationError("optional matrix shape mismatch");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      for (const auto* px : {&close, &open, &high, &low}) {
        if (px->size() == 0) continue;
        double v = (*px)(i, j);
        if (!(v > 0.0) || !std::isfinite(v)) {
          throw ValidationError(
              fmt::format("non-positive price {} at ({}, {})", v, dates[i].iso(), tickers[j]));
        }
      }
    }
  }
}

MarketPanel MarketPanel::slice_rows(std::size_t begin, std::size_t end) const {
  if (begin > end || end > num_dates()) throw RangeError("row slice out of range");
  MarketPanel out;
  out.dates.assign(dates.begin() + static_cast<std::ptrdiff_t>(begin),
                   dates.begin() + static_cast<std::ptrdiff_t>(end));
  out.tickers = tickers;
  out.close = rows_of(close, begin, end);
  out.open = rows_of(open, begin, end);
  out.high = rows_of(high, begin, end);
  out.low = rows_of(low, begin, end);
  out.volume = rows_of(volume, begin, end);
  return out;
}

MarketPanel MarketPanel::restrict_tickers(const std::vector<std::string>& subset) const {
  std::vector<std::size_t> idx;
  for (const auto& t : subset) {
    auto j = ticker_index(t);
    if (!j) throw ValidationError("ticker not in panel: " + t);
    idx.push_back(*j);
  }
  MarketPanel out;
  out.dates = dates;
  out.tickers = subset;
  out.close = cols_of(close, idx);
  out.open = cols_of(open, idx);
  out.high = cols_of(high, idx);
  out.low = cols_of(low, idx);
  out.volume = cols_of(volume, idx);
  return out;
}

MarketPanel load_price_panel(const std::filesystem::path& path) {
  return parse_price_panel(read_text_file(path));
}

MarketPanel parse_price_panel(std::string_view text) {
  static constexpr std::string_view kHeader = "date,ticker,open,high,low,close,volume";
  struct Row {
    double open, high, low, close, volume;
  };
  std::map<std::string, std::map<Date, Row>> by_ticker;
  std::size_t line_no = 0;
  bool saw_header = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!saw_header) {
      if (line != kHeader) {
        throw ParseError("expected header '" + std::string(kHeader) + "'", line_no);
      }
      saw_header = true;
      continue;
    }
    auto f = split_csv(line);
    if (f.size() != 7) {
      throw ParseError(fmt::format("expected 7 fields, found {}", f.size()), line_no);
    }
    Date d;
    try {
      d = Date::parse(f[0]);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
    if (f[1].empty()) throw ParseError("empty ticker", line_no);
    Row r{parse_number(f[2], "open", line_no), parse_number(f[3], "high", line_no),
          parse_number(f[4], "low", line_no), parse_number(f[5], "close", line_no),
          parse_number(f[6], "volume", line_no)};
    for (double px : {r.open, r.high, r.low, r.close}) {
      if (!(px > 0.0) || !std::isfinite(px)) {
        throw ValidationError(fmt::format("non-positive price at ({}, {}) on line {}", d.iso(),
                                          std::string(f[1]), line_no));
      }
    }
    if (r.volume < 0.0) {
      throw ValidationError(fmt::format("negative volume at ({}, {}) on line {}", d.iso(),
                                        std::string(f[1]), line_no));
    }
    auto& series = by_ticker[std::string(f[1])];
    if (!series.emplace(d, r).second) {
      throw ParseError(fmt::format("duplicate row for ({}, {})", d.iso(), std::string(f[1])),
                       line_no);
    }
  }
  if (!saw_header) throw ParseError("missing header", 0);
  if (by_ticker.empty()) throw AlignmentError("price panel has no data rows");

  std::vector<Date> all_dates;
  for (const auto& [ticker, series] : by_ticker) {
    for (const auto& [d, r] : series) all_dates.push_back(d);
  }
  std::sort(all_dates.begin(), all_dates.end());
  all_dates.erase(std::unique(all_dates.begin(), all_dates.end()), all_dates.end());

  std::vector<AlignmentGap> gaps;
  for (const auto& [ticker, series] : by_ticker) {
    for (const auto& d : all_dates) {
      if (!series.count(d)) gaps.push_back({ticker, d});
    }
  }
  if (!gaps.empty()) {
    std::string list;
    for (std::size_t i = 0; i < gaps.size() && i < 20; ++i) {
      list += fmt::format("{}{}@{}", i ? ", " : "", gaps[i].ticker, gaps[i].date.iso());
    }
    if (gaps.size() > 20) list += fmt::format(", ... ({} total)", gaps.size());
    throw PanelAlignmentError("tickers do not share one calendar; missing: " + list,
                              std::move(gaps));
  }

  MarketPanel panel;
  panel.dates = all_dates;
  const auto n = static_cast<Eigen::Index>(all_dates.size());
  const auto m = static_cast<Eigen::Index>(by_ticker.size());
  panel.close.resize(n, m);
  panel.open.resize(n, m);
  panel.high.resize(n, m);
  panel.low.resize(n, m);
  panel.volume.resize(n, m);
  Eigen::Index j = 0;
  for (const auto& [ticker, series] : by_ticker) {
    panel.tickers.push_back(ticker);
    Eigen::Index i = 0;
    for (const auto& [d, r] : series) {
      panel.open(i, j) = r.open;
      panel.high(i, j) = r.high;
      panel.low(i, j) = r.low;
      panel.close(i, j) = r.close;
      panel.volume(i, j) = r.volume;
      ++i;
    }
    ++j;
  }
  return panel;
}

std::string format_price_panel(const MarketPanel& panel) {
  std::string out = "date,ticker,open,high,low,close,volume\n";
  const bool ohlc = panel.has_ohlc();
  const bool vol = panel.volume.size() > 0;
  for (std::size_t i = 0; i < panel.num_dates(); ++i) {
    for (std::size_t j = 0; j < panel.num_tickers(); ++j) {
      double c = panel.close(i, j);
      out += fmt::format("{},{},{},{},{},{},{}\n", panel.dates[i].iso(), panel.tickers[j],
                         format_exact(ohlc ? panel.open(i, j) : c),
                         format_exact(ohlc ? panel.high(i, j) : c),
                         format_exact(ohlc ? panel.low(i, j) : c), format_exact(c),
                         format_exact(vol ? panel.volume(i, j) : 0.0));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string indicator_name(Indicator ind) {
  switch (ind) {
    case Indicator::Macd: return "macd";
    case Indicator::BollUpper: return "boll_ub";
    case Indicator::BollLower: return "boll_lb";
    case Indicator::Rsi30: return "rsi_30";
    case Indicator::Cci30: return "cci_30";
    case Indicator::Adx30: return "adx_30";
    case Indicator::Sma30: return "close_30_sma";
    case Indicator::Sma60: return "close_60_sma";
  }
  return "unknown";
}

Indicator parse_indicator(std::string_view name) {
  for (auto ind : {Indicator::Macd, Indicator::BollUpper, Indicator::BollLower, Indicator::Rsi30,
                   Indicator::Cci30, Indicator::Adx30, Indicator::Sma30, Indicator::Sma60}) {
    if (indicator_name(ind) == name) return ind;
  }
  throw ValidationError("unknown indicator '" + std::string(name) + "'");
}

std::size_t indicator_first_valid(Indicator ind) {
  switch (ind) {
    case Indicator::Macd: return 25;
    case Indicator::BollUpper:
    case Indicator::BollLower: return 19;
    case Indicator::Rsi30: return 30;
    case Indicator::Cci30:
    case Indicator::Sma30: return 29;
    case Indicator::Adx30:
    case Indicator::Sma60: return 59;
  }
  return 0;
}

std::vector<Indicator> default_indicators() {
  return {Indicator::Macd,  Indicator::BollUpper, Indicator::BollLower, Indicator::Rsi30,
          Indicator::Cci30, Indicator::Adx30,     Indicator::Sma30,     Indicator::Sma60};
}

std::vector<std::string> FeaturePanel::names() const {
  std::vector<std::string> out;
  for (auto ind : indicators) out.push_back(indicator_name(ind));
  return out;
}

namespace {

using Series = std::vector<double>;

Series sma(const Series& x, std::size_t n) {
  Series out(x.size(), kNaN);
  for (std::size_t t = n - 1; t < x.size(); ++t) {
    double s = 0.0;
    for (std::size_t k = t + 1 - n; k <= t; ++k) s += x[k];
    out[t] = s / static_cast<double>(n);
  }
  return out;
}

Series ema(const Series& x, std::size_t n) {
  Series out(x.size(), kNaN);
  if (x.size() < n) return out;
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += x[k];
  double e = s / static_cast<double>(n);
  out[n - 1] = e;
  const double alpha = 2.0 / (static_cast<double>(n) + 1.0);
  for (std::size_t t = n; t < x.size(); ++t) {
    e += alpha * (x[t] - e);
    out[t] = e;
  }
  return out;
}

Series bollinger(const Series& x, double sign) {
  constexpr std::size_t n = 20;
  Series out(x.size(), kNaN);
  for (std::size_t t = n - 1; t < x.size(); ++t) {
    double m = 0.0;
    for (std::size_t k = t + 1 - n; k <= t; ++k) m += x[k];
    m /= n;
    double v = 0.0;
    for (std::size_t k = t + 1 - n; k <= t; ++k) v += (x[k] - m) * (x[k] - m);
    out[t] = m + sign * 2.0 * std::sqrt(v / n);
  }
  return out;
}

Series rsi(const Series& x, std::size_t n) {
  Series out(x.size(), kNaN);
  if (x.size() <= n) return out;
  double gain = 0.0;
  double loss = 0.0;
  for (std::size_t t = 1; t <= n; ++t) {
    double d = x[t] - x[t - 1];
    gain += std::max(d, 0.0);
    loss += std::max(-d, 0.0);
  }
  gain /= static_cast<double>(n);
  loss /= static_cast<double>(n);
  auto value = [](double g, double l) {
    if (l == 0.0) return g == 0.0 ? 50.0 : 100.0;
    return 100.0 - 100.0 / (1.0 + g / l);
  };
  out[n] = value(gain, loss);
  for (std::size_t t = n + 1; t < x.size(); ++t) {
    double d = x[t] - x[t - 1];
    gain = (gain * (n - 1) + std::max(d, 0.0)) / n;
    loss = (loss * (n - 1) + std::max(-d, 0.0)) / n;
    out[t] = value(gain, loss);
  }
  return out;
}

Series cci(const Series& tp, std::size_t n) {
  Series out(tp.size(), kNaN);
  for (std::size_t t = n - 1; t < tp.size(); ++t) {
    double m = 0.0;
    for (std::size_t k = t + 1 - n; k <= t; ++k) m += tp[k];
    m /= n;
    double md = 0.0;
    for (std::size_t k = t + 1 - n; k <= t; ++k) md += std::abs(tp[k] - m);
    md /= n;
    out[t] = md == 0.0 ? 0.0 : (tp[t] - m) / (0.015 * md);
  }
  return out;
}

Series adx(const Series& high, const Series& low, const Series& close, std::size_t n) {
  const std::size_t len = close.size();
  Series out(len, kNaN);
  if (len < 2 * n) return out;
  Series tr(len, 0.0), pdm(len, 0.0), mdm(len, 0.0);
  for (std::size_t t = 1; t < len; ++t) {
    tr[t] = std::max({high[t] - low[t], std::abs(high[t] - close[t - 1]),
                      std::abs(low[t] - close[t - 1])});
    double up = high[t] - high[t - 1];
    double down = low[t - 1] - low[t];
    pdm[t] = (up > down && up > 0.0) ? up : 0.0;
    mdm[t] = (down > up && down > 0.0) ? down : 0.0;
  }
  double atr = 0.0, apdm = 0.0, amdm = 0.0;
  for (std::size_t t = 1; t <= n; ++t) {
    atr += tr[t];
    apdm += pdm[t];
    amdm += mdm[t];
  }
  atr /= n;
  apdm /= n;
  amdm /= n;
  auto dx_of = [](double a, double p, double m) {
    if (a == 0.0) return 0.0;
    double pdi = 100.0 * p / a;
    double mdi = 100.0 * m / a;
    double s = pdi + mdi;
    return s == 0.0 ? 0.0 : 100.0 * std::abs(pdi - mdi) / s;
  };
  Series dx(len, kNaN);
  dx[n] = dx_of(atr, apdm, amdm);
  for (std::size_t t = n + 1; t < len; ++t) {
    atr = (atr * (n - 1) + tr[t]) / n;
    apdm = (apdm * (n - 1) + pdm[t]) / n;
    amdm = (amdm * (n - 1) + mdm[t]) / n;
    dx[t] = dx_of(atr, apdm, amdm);
  }
  const std::size_t first = 2 * n - 1;
  double a = 0.0;
  for (std::size_t t = n; t <= first; ++t) a += dx[t];
  a /= n;
  out[first] = a;
  for (std::size_t t = first + 1; t < len; ++t) {
    a = (a * (n - 1) + dx[t]) / n;
    out[t] = a;
  }
  return out;
}

Series column(const Eigen::MatrixXd& m, std::size_t j) {
  Series out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m(i, j);
  return out;
}

}  // namespace

FeaturePanel compute_indicators(const MarketPanel& panel, const std::vector<Indicator>& indicators) {
  if (indicators.empty()) throw ValidationError("indicator list is empty");
  std::size_t first_valid = 0;
  Indicator longest = indicators.front();
  for (auto ind : indicators) {
    if (indicator_first_valid(ind) >= first_valid) {
      first_valid = indicator_first_valid(ind);
      longest = ind;
    }
  }
  const std::size_t required = first_valid + 1;
  if (panel.num_dates() < required) {
    throw WarmupError(fmt::format("{} needs at least {} rows of history, panel has {}",
                                  indicator_name(longest), required, panel.num_dates()),
                      required);
  }

  FeaturePanel out;
  out.dates = panel.dates;
  out.tickers = panel.tickers;
  out.indicators = indicators;
  out.first_valid_row = first_valid;
  const auto rows = static_cast<Eigen::Index>(panel.num_dates());
  const auto cols = static_cast<Eigen::Index>(panel.num_tickers());
  out.values.assign(indicators.size(), Eigen::MatrixXd(rows, cols));

  for (std::size_t j = 0; j < panel.num_tickers(); ++j) {
    const Series close = column(panel.close, j);
    const Series high = panel.has_ohlc() ? column(panel.high, j) : close;
    const Series low = panel.has_ohlc() ? column(panel.low, j) : close;
    Series tp(close.size());
    for (std::size_t t = 0; t < close.size(); ++t) tp[t] = (high[t] + low[t] + close[t]) / 3.0;

    for (std::size_t k = 0; k < indicators.size(); ++k) {
      Series s;
      switch (indicators[k]) {
        case Indicator::Macd: {
          auto fast = ema(close, 12);
          auto slow = ema(close, 26);
          s.assign(close.size(), kNaN);
          for (std::size_t t = 25; t < close.size(); ++t) s[t] = fast[t] - slow[t];
          break;
        }
        case Indicator::BollUpper: s = bollinger(close, 1.0); break;
        case Indicator::BollLower: s = bollinger(close, -1.0); break;
        case Indicator::Rsi30: s = rsi(close, 30); break;
        case Indicator::Cci30: s = cci(tp, 30); break;
        case Indicator::Adx30: s = adx(high, low, close, 30); break;
        case Indicator::Sma30: s = sma(close, 30); break;
        case Indicator::Sma60: s = sma(close, 60); break;
      }
      for (std::size_t t = 0; t < s.size(); ++t) {
        out.values[k](static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) =
            t < first_valid ? kNaN : s[t];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

bool TurbulenceSeries::available(std::size_t row) const {
  return row < values.size() && !std::isnan(values[row]);
}

bool TurbulenceSeries::gated(std::size_t row) const {
  return available(row) && values[row] > threshold;
}

std::size_t TurbulenceSeries::gated_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < values.size(); ++i) n += gated(i) ? 1 : 0;
  return n;
}

Eigen::MatrixXd daily_returns(const MarketPanel& panel) {
  const auto n = panel.close.rows();
  Eigen::MatrixXd r(n, panel.close.cols());
  if (n == 0) return r;
  r.row(0).setConstant(kNaN);
  for (Eigen::Index i = 1; i < n; ++i) {
    r.row(i) = (panel.close.row(i).array() / panel.close.row(i - 1).array() - 1.0).matrix();
  }
  return r;
}

TurbulenceSeries compute_turbulence(const MarketPanel& panel, std::size_t window, double threshold,
                                    double ridge_scale) {
  const std::size_t n_assets = panel.num_tickers();
  if (window < n_assets + 2) {
    throw ValidationError(fmt::format("turbulence window {} must be at least tickers + 2 = {}",
                                      window, n_assets + 2));
  }
  TurbulenceSeries out;
  out.dates = panel.dates;
  out.threshold = threshold;
  out.window = window;
  out.values.assign(panel.num_dates(), kNaN);
  const Eigen::MatrixXd r = daily_returns(panel);
  const auto w = static_cast<Eigen::Index>(window);
  const auto N = static_cast<Eigen::Index>(n_assets);
  for (std::size_t t = window + 1; t < panel.num_dates(); ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    const auto hist = r.middleRows(ti - w, w);
    const Eigen::RowVectorXd mu = hist.colwise().mean();
    const Eigen::MatrixXd centred = hist.rowwise() - mu;
    Eigen::MatrixXd cov = (centred.transpose() * centred) / static_cast<double>(window - 1);
    const double trace = cov.trace();
    const double ridge = trace > 0.0 ? ridge_scale * trace / static_cast<double>(N) : ridge_scale;
    cov.diagonal().array() += ridge;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("turbulence covariance singular on " + panel.dates[t].iso());
    }
    const Eigen::VectorXd x = (r.row(ti) - mu).transpose();
    const double d = x.dot(llt.solve(x));
    if (!std::isfinite(d)) {
      throw NumericalError("turbulence not finite on " + panel.dates[t].iso());
    }
    out.values[t] = std::max(d, 0.0);
  }
  return out;
}

ForwardReturns forward_returns(const MarketPanel& panel, std::size_t horizon) {
  if (horizon < 1) throw RangeError("forward-return horizon must be at least 1");
  if (horizon >= panel.num_dates()) {
    throw RangeError(fmt::format("horizon {} needs more than {} dates", horizon, panel.num_dates()));
  }
  ForwardReturns out;
  out.dates = panel.dates;
  out.tickers = panel.tickers;
  out.horizon = horizon;
  const auto n = panel.close.rows();
  const auto h = static_cast<Eigen::Index>(horizon);
  out.values.setConstant(n, panel.close.cols(), kNaN);
  out.values.topRows(n - h) =
      (panel.close.bottomRows(n - h).array() / panel.close.topRows(n - h).array() - 1.0).matrix();
  return out;
}

}  // namespace ssai
