#include "ssai/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "ssai/errors.hpp"
#include "ssai/util.hpp"

namespace ssai {

namespace {

double per_ticker(const std::vector<double>& v, std::size_t j) {
  return v.size() == 1 ? v[0] : v[j];
}

void check_size(const std::vector<double>& v, std::size_t n, const char* name) {
  if (v.size() != 1 && v.size() != n) {
    throw ValidationError(fmt::format("{} must have 1 or {} entries, has {}", name, n, v.size()));
  }
}

}  // namespace

std::string synthetic_ticker(std::size_t index) { return fmt::format("T{:02d}", index); }

void SyntheticSpec::validate() const {
  if (num_tickers < 1) throw ValidationError("num_tickers must be positive");
  if (num_days <= horizon + 1) throw ValidationError("num_days must exceed horizon + 1");
  if (horizon < 1) throw ValidationError("horizon must be at least 1");
  check_size(drift, num_tickers, "drift");
  check_size(volatility, num_tickers, "volatility");
  check_size(coverage, num_tickers, "coverage");
  check_size(ticker_signal_scale, num_tickers, "ticker_signal_scale");
  for (double c : coverage) {
    if (!(c >= 0.0 && c <= 1.0)) {
      throw ValidationError(fmt::format("coverage fraction {} outside [0, 1]", c));
    }
  }
  for (double v : volatility) {
    if (!(v >= 0.0)) throw ValidationError("volatility must be non-negative");
  }
  if (!(market_volatility >= 0.0)) throw ValidationError("market_volatility must be non-negative");
  if (!(axis_correlation >= 0.0 && axis_correlation <= 1.0)) {
    throw ValidationError("axis_correlation must lie in [0, 1]");
  }
  if (!(signal_dispersion > 0.0)) throw ValidationError("signal_dispersion must be positive");
  if (!(start_price > 0.0)) throw ValidationError("start_price must be positive");
}

SyntheticData synth_panel(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t n = spec.num_days;
  const std::size_t m = spec.num_tickers;
  const std::size_t h = spec.horizon;

  SyntheticData out;
  out.truth.coefficients = spec.coefficients;
  out.truth.horizon = h;
  for (std::size_t j = 0; j < m; ++j) out.truth.ticker_scale.push_back(per_ticker(spec.ticker_signal_scale, j));

  std::vector<std::string> tickers;
  for (std::size_t j = 0; j < m; ++j) tickers.push_back(synthetic_ticker(j));
  const auto dates = business_days(spec.start_date, n);

  // Signals: one stream per ticker so panels for a subset of tickers stay stable.
  out.signals = SignalPanel(dates, tickers);
  const double common = std::sqrt(spec.axis_correlation);
  const double idio = std::sqrt(1.0 - spec.axis_correlation);
  for (std::size_t j = 0; j < m; ++j) {
    std::mt19937_64 rng(mix_seed(seed, 1000 + j));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double cov = per_ticker(spec.coverage, j);
    for (std::size_t d = 0; d < n; ++d) {
      const bool covered = unif(rng) < cov;
      const double shared = gauss(rng);
      SignalVector v;
      for (std::size_t k = 0; k < kNumAxes; ++k) {
        const double z = common * shared + idio * gauss(rng);
        v.values[k] = std::clamp(kNeutralScore + spec.signal_dispersion * z, kMinScore, kMaxScore);
      }
      if (covered) out.signals.set(d, j, v);
    }
  }

  // Returns: market factor + idiosyncratic noise + planted signal contribution.
  std::vector<double> market(n, 0.0);
  {
    std::mt19937_64 rng(mix_seed(seed, 1));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& x : market) x = spec.market_volatility * gauss(rng);
  }
  auto& panel = out.market;
  panel.dates = dates;
  panel.tickers = tickers;
  const auto N = static_cast<Eigen::Index>(n);
  const auto M = static_cast<Eigen::Index>(m);
  panel.close.resize(N, M);
  panel.open.resize(N, M);
  panel.high.resize(N, M);
  panel.low.resize(N, M);
  panel.volume.resize(N, M);
  for (std::size_t j = 0; j < m; ++j) {
    std::mt19937_64 rng(mix_seed(seed, 2000 + j));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double mu = per_ticker(spec.drift, j);
    const double vol = per_ticker(spec.volatility, j);
    const double scale = out.truth.ticker_scale[j];
    const auto jj = static_cast<Eigen::Index>(j);
    double price = spec.start_price;
    for (std::size_t t = 0; t < n; ++t) {
      const auto tt = static_cast<Eigen::Index>(t);
      const double eps = gauss(rng);
      const double e_open = gauss(rng);
      const double e_high = gauss(rng);
      const double e_low = gauss(rng);
      const double e_vol = gauss(rng);
      double open = price;
      if (t > 0) {
        double planted = 0.0;
        for (std::size_t d = (t > h ? t - h : 0); d < t; ++d) {
          if (!out.signals.non_neutral(d, j)) continue;
          const auto v = out.signals.at(d, j);
          for (std::size_t k = 0; k < kNumAxes; ++k) {
            planted += spec.coefficients[k] * scale * (v.values[k] - kNeutralScore);
          }
        }
        planted /= static_cast<double>(h);
        const double r = std::max(mu + market[t] + vol * eps + planted, -0.9);
        open = price * std::max(1.0 + 0.25 * vol * e_open, 0.5);
        price *= 1.0 + r;
      }
      const double hi = std::max(open, price) * (1.0 + 0.5 * vol * std::abs(e_high));
      const double lo = std::min(open, price) * std::max(1.0 - 0.5 * vol * std::abs(e_low), 0.5);
      panel.close(tt, jj) = price;
      panel.open(tt, jj) = open;
      panel.high(tt, jj) = hi;
      panel.low(tt, jj) = lo;
      panel.volume(tt, jj) = std::round(1e6 * std::exp(0.3 * e_vol));
    }
  }
  return out;
}

SyntheticSpec parse_synthetic_spec(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("synthetic spec: ") + e.what(), 0);
  }
  if (!j.is_object()) throw ValidationError("synthetic spec must be a JSON object");
  static const std::set<std::string> known = {
      "num_tickers", "num_days", "start_date", "drift", "volatility", "market_volatility",
      "coverage", "coefficients", "ticker_signal_scale", "horizon", "axis_correlation",
      "signal_dispersion", "start_price", "seed"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ValidationError("unknown synthetic spec key '" + key + "'");
  }
  auto vec = [&](const char* key, std::vector<double>& dst) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    dst = v.is_array() ? v.get<std::vector<double>>() : std::vector<double>{v.get<double>()};
  };
  SyntheticSpec s;
  try {
    if (j.contains("num_tickers")) s.num_tickers = j.at("num_tickers").get<std::size_t>();
    if (j.contains("num_days")) s.num_days = j.at("num_days").get<std::size_t>();
    if (j.contains("start_date")) s.start_date = Date::parse(j.at("start_date").get<std::string>());
    vec("drift", s.drift);
    vec("volatility", s.volatility);
    vec("coverage", s.coverage);
    vec("ticker_signal_scale", s.ticker_signal_scale);
    if (j.contains("market_volatility")) s.market_volatility = j.at("market_volatility").get<double>();
    if (j.contains("coefficients")) {
      auto c = j.at("coefficients").get<std::vector<double>>();
      if (c.size() != kNumAxes) throw ValidationError("coefficients needs 4 entries");
      std::copy(c.begin(), c.end(), s.coefficients.begin());
    }
    if (j.contains("horizon")) s.horizon = j.at("horizon").get<std::size_t>();
    if (j.contains("axis_correlation")) s.axis_correlation = j.at("axis_correlation").get<double>();
    if (j.contains("signal_dispersion")) s.signal_dispersion = j.at("signal_dispersion").get<double>();
    if (j.contains("start_price")) s.start_price = j.at("start_price").get<double>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string synthetic_spec_json(const SyntheticSpec& s) {
  nlohmann::ordered_json j;
  j["num_tickers"] = s.num_tickers;
  j["num_days"] = s.num_days;
  j["start_date"] = s.start_date.iso();
  j["drift"] = s.drift;
  j["volatility"] = s.volatility;
  j["market_volatility"] = s.market_volatility;
  j["coverage"] = s.coverage;
  j["coefficients"] = s.coefficients;
  j["ticker_signal_scale"] = s.ticker_signal_scale;
  j["horizon"] = s.horizon;
  j["axis_correlation"] = s.axis_correlation;
  j["signal_dispersion"] = s.signal_dispersion;
  j["start_price"] = s.start_price;
  j["seed"] = s.seed;
  return j.dump(2);
}

}  // namespace ssai
