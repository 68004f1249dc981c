#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ssai/market_data.hpp"
#include "ssai/signals.hpp"

namespace ssai {

/// Seeded generator settings. Per-ticker vectors of length 1 broadcast.
///
/// Prices follow a geometric random walk with a common market factor. Each
/// (date, ticker) is covered with probability `coverage`; covered cells draw axis
/// deviations from a correlated Gaussian (clamped to [1, 5]) that are independent
/// across days. A covered deviation x_j on day d adds
/// `coefficients[j] * ticker_signal_scale[s] * x_j / horizon` to each of the next
/// `horizon` daily returns, so the h-day forward return loads on x_j with the
/// planted coefficient.
struct SyntheticSpec {
  std::size_t num_tickers = 30;
  std::size_t num_days = 1500;
  Date start_date{2013, 1, 2};
  std::vector<double> drift{0.0004};
  std::vector<double> volatility{0.015};
  double market_volatility = 0.008;
  std::vector<double> coverage{0.3};
  std::array<double, kNumAxes> coefficients{};
  std::vector<double> ticker_signal_scale{1.0};
  std::size_t horizon = 5;
  double axis_correlation = 0.0;
  double signal_dispersion = 1.0;
  double start_price = 100.0;
  std::uint64_t seed = 0;

  /// Throws ValidationError on inconsistent sizes or out-of-range values.
  void validate() const;
};

struct PlantedTruth {
  std::array<double, kNumAxes> coefficients{};
  std::vector<double> ticker_scale;
  std::size_t horizon = 0;
};

struct SyntheticData {
  MarketPanel market;
  SignalPanel signals;
  PlantedTruth truth;
};

/// Bit-identical output for a fixed (spec, seed).
SyntheticData synth_panel(const SyntheticSpec& spec, std::uint64_t seed);

/// JSON keys mirror the field names; unknown keys are rejected.
SyntheticSpec parse_synthetic_spec(std::string_view json_text);
std::string synthetic_spec_json(const SyntheticSpec& spec);

/// Synthetic tickers are named T00, T01, ...
std::string synthetic_ticker(std::size_t index);

}  // namespace ssai
