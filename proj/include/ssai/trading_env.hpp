#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssai/equity_curve.hpp"
#include "ssai/market_data.hpp"
#include "ssai/signals.hpp"

namespace ssai {

struct EnvConfig {
  int h_max = 100;
  double cost_rate = 0.001;
  double turbulence_threshold = kDefaultTurbulenceThreshold;
  double reward_scale = 1e-4;
  double drawdown_alpha = 0.1;
  double initial_cash = 1e6;

  void validate() const;
};

struct EnvState {
  double cash = 0.0;
  Eigen::VectorXd prices;
  /// Whole shares, never negative.
  Eigen::VectorXd holdings;
  /// N x K_ind indicator values for the current day.
  Eigen::MatrixXd features;
  /// N x 4 signal scores for the current day.
  Eigen::MatrixXd signals;
  double wealth = 0.0;
  double peak_wealth = 0.0;
  std::size_t date_index = 0;
};

/// alpha * max(0, (peak - wealth) / peak)^2. Throws ValidationError unless peak > 0.
double drawdown_penalty(double wealth, double peak, double alpha);

/// (delta_wealth / initial_wealth) * reward_scale - drawdown_penalty(wealth, peak).
double shaped_reward(double delta_wealth, double initial_wealth, double wealth, double peak,
                     double reward_scale, double alpha);

/// 1 + 2N + (K_ind + 4) N.
std::size_t observation_dim(std::size_t num_tickers, std::size_t num_indicators);

/// Flattening order: cash; prices by ticker; holdings by ticker; indicators
/// indicator-major (all tickers for indicator 0, then indicator 1, ...); signals
/// axis-major in the order sentiment, risk, confidence, volatility_forecast.
struct ObservationLayout {
  std::vector<std::string> tickers;
  std::vector<std::string> indicators;

  std::size_t num_tickers() const { return tickers.size(); }
  std::size_t dim() const { return observation_dim(tickers.size(), indicators.size()); }
  std::size_t prices_offset() const { return 1; }
  std::size_t holdings_offset() const { return 1 + num_tickers(); }
  std::size_t features_offset() const { return 1 + 2 * num_tickers(); }
  std::size_t signals_offset() const { return 1 + (2 + indicators.size()) * num_tickers(); }
  std::size_t signal_index(Axis a, std::size_t ticker) const {
    return signals_offset() + static_cast<std::size_t>(a) * num_tickers() + ticker;
  }
  /// One label per slot, e.g. `price[T00]`, `feature[macd][T00]`, `signal[risk][T00]`.
  std::vector<std::string> slot_names() const;
  std::string manifest_json() const;
};

struct StepInfo {
  /// Executed share changes (after clipping, gating, holdings and cash limits).
  Eigen::VectorXd executed;
  double turbulence = 0.0;
  bool turbulence_available = false;
  bool gated = false;
  /// Factor applied to desired buys to keep cash non-negative (1 when unconstrained).
  double buy_scale = 1.0;
  double cost = 0.0;
  double delta_wealth = 0.0;
  double penalty = 0.0;
  bool done = false;
};

struct StepResult {
  EnvState state;
  double reward = 0.0;
  StepInfo info;
};

/// Daily share-trading environment over aligned price, indicator, signal and
/// turbulence series. Inputs are held by reference and must outlive the instance.
class TradingEnv {
 public:
  TradingEnv(const MarketPanel& market, const FeaturePanel& features, const SignalPanel& signals,
             const TurbulenceSeries& turbulence, EnvConfig config = {});

  /// Starts at the first trading date on or after `start`. A start inside the
  /// indicator warm-up or on the last date throws RangeError.
  const EnvState& reset(const Date& start);
  /// Once the final date is reached, returns `info.done` without changing state.
  StepResult step(const Eigen::VectorXd& action);

  const EnvState& state() const { return state_; }
  bool done() const { return state_.date_index + 1 >= market_.num_dates(); }
  const ObservationLayout& layout() const { return layout_; }
  const EnvConfig& config() const { return config_; }
  const MarketPanel& market() const { return market_; }

  /// Flattened observation; axes in `mask` read as neutral.
  Eigen::VectorXd observation(const AxisSet& mask = {}) const;

 private:
  void load_day(std::size_t row);

  const MarketPanel& market_;
  const FeaturePanel& features_;
  const SignalPanel& signals_;
  const TurbulenceSeries& turbulence_;
  EnvConfig config_;
  ObservationLayout layout_;
  EnvState state_;
  bool started_ = false;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  /// Called once per episode before the first action.
  virtual void reset(std::uint64_t /*seed*/) {}
  virtual Eigen::VectorXd act(const Eigen::VectorXd& observation, const ObservationLayout& layout) = 0;
};

class HoldPolicy : public Policy {
 public:
  std::string name() const override { return "hold"; }
  Eigen::VectorXd act(const Eigen::VectorXd&, const ObservationLayout& layout) override;
};

/// i.i.d. uniform actions on [-1, 1]; the stream depends only on (seed, episode seed).
class UniformRandomPolicy : public Policy {
 public:
  explicit UniformRandomPolicy(std::uint64_t seed) : seed_(seed), rng_(seed) {}
  std::string name() const override { return "uniform_random"; }
  void reset(std::uint64_t seed) override;
  Eigen::VectorXd act(const Eigen::VectorXd&, const ObservationLayout& layout) override;

 private:
  std::uint64_t seed_;
  std::mt19937_64 rng_;
};

/// +1 where the axis score is above `level`, -1 where below, 0 otherwise. Reads
/// only the signal slice.
class SignalThresholdPolicy : public Policy {
 public:
  SignalThresholdPolicy(Axis axis, double level) : axis_(axis), level_(level) {}
  std::string name() const override;
  Eigen::VectorXd act(const Eigen::VectorXd& observation, const ObservationLayout& layout) override;

 private:
  Axis axis_;
  double level_;
};

/// Names accepted by make_policy: hold, uniform_random, signal_threshold.
std::vector<std::string> builtin_policies();
std::unique_ptr<Policy> make_policy(const std::string& name, std::uint64_t seed = 0,
                                    Axis axis = Axis::Sentiment, double level = kNeutralScore);

struct EpisodeLogRow {
  std::size_t step = 0;
  Date date;
  double wealth = 0.0;
  double peak = 0.0;
  double reward = 0.0;
  double penalty = 0.0;
  double turbulence = 0.0;
  bool gated = false;
};

struct EpisodeResult {
  /// Wealth normalised by the initial cash.
  EquityCurve curve;
  std::vector<double> rewards;
  std::vector<EpisodeLogRow> log;
  std::size_t gated_steps = 0;
};

/// Rolls a policy from `start` through `end` (or the final date). Non-finite
/// actions throw PolicyFaultError carrying the step index.
EpisodeResult run_policy(Policy& policy, TradingEnv& env, const Date& start, const AxisSet& mask = {},
                         std::uint64_t seed = 0, std::optional<Date> end = std::nullopt);

/// `step,date,wealth,peak,reward,penalty,turbulence,gated`
std::string format_episode_log(const std::vector<EpisodeLogRow>& rows);

}  // namespace ssai
