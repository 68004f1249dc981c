#include "ssai/trading_env.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <json.hpp>

#include "ssai/errors.hpp"
#include "ssai/util.hpp"

namespace ssai {

void EnvConfig::validate() const {
  if (h_max < 1) throw ValidationError("h_max must be at least 1");
  if (!(cost_rate >= 0.0) || !(turbulence_threshold >= 0.0) || !(reward_scale >= 0.0) ||
      !(drawdown_alpha >= 0.0)) {
    throw ValidationError("environment parameters must be non-negative");
  }
  if (!(initial_cash > 0.0)) throw ValidationError("initial cash must be positive");
}

double drawdown_penalty(double wealth, double peak, double alpha) {
  if (!(peak > 0.0)) throw ValidationError("peak wealth must be positive");
  const double d = std::max(0.0, (peak - wealth) / peak);
  return alpha * d * d;
}

double shaped_reward(double delta_wealth, double initial_wealth, double wealth, double peak,
                     double reward_scale, double alpha) {
  return delta_wealth / initial_wealth * reward_scale - drawdown_penalty(wealth, peak, alpha);
}

std::size_t observation_dim(std::size_t n, std::size_t k) { return 1 + 2 * n + (k + kNumAxes) * n; }

std::vector<std::string> ObservationLayout::slot_names() const {
  std::vector<std::string> out{"cash"};
  for (const auto& t : tickers) out.push_back("price[" + t + "]");
  for (const auto& t : tickers) out.push_back("holdings[" + t + "]");
  for (const auto& ind : indicators) {
    for (const auto& t : tickers) out.push_back("feature[" + ind + "][" + t + "]");
  }
  for (Axis a : kAllAxes) {
    for (const auto& t : tickers) out.push_back("signal[" + axis_name(a) + "][" + t + "]");
  }
  return out;
}

std::string ObservationLayout::manifest_json() const {
  nlohmann::json j;
  j["dim"] = dim();
  j["num_tickers"] = num_tickers();
  j["tickers"] = tickers;
  j["indicators"] = indicators;
  std::vector<std::string> axes;
  for (Axis a : kAllAxes) axes.push_back(axis_name(a));
  j["axes"] = axes;
  j["blocks"] = nlohmann::json::array({
      {{"name", "cash"}, {"offset", 0}, {"length", 1}},
      {{"name", "prices"}, {"offset", prices_offset()}, {"length", num_tickers()}},
      {{"name", "holdings"}, {"offset", holdings_offset()}, {"length", num_tickers()}},
      {{"name", "features"}, {"offset", features_offset()}, {"length", indicators.size() * num_tickers()},
       {"order", "indicator-major"}},
      {{"name", "signals"}, {"offset", signals_offset()}, {"length", kNumAxes * num_tickers()},
       {"order", "axis-major"}},
  });
  j["slots"] = slot_names();
  return j.dump(2) + "\n";
}

TradingEnv::TradingEnv(const MarketPanel& market, const FeaturePanel& features, const SignalPanel& signals,
                       const TurbulenceSeries& turbulence, EnvConfig config)
    : market_(market), features_(features), signals_(signals), turbulence_(turbulence), config_(config) {
  config_.validate();
  if (features.dates != market.dates || signals.dates() != market.dates || turbulence.dates != market.dates) {
    throw AlignmentError("environment inputs do not share the market calendar");
  }
  if (features.tickers != market.tickers || signals.tickers() != market.tickers) {
    throw AlignmentError("environment inputs do not share the market tickers");
  }
  layout_.tickers = market.tickers;
  layout_.indicators = features.names();
}

void TradingEnv::load_day(std::size_t row) {
  const auto r = static_cast<Eigen::Index>(row);
  const auto n = static_cast<Eigen::Index>(market_.num_tickers());
  const auto k = static_cast<Eigen::Index>(features_.num_indicators());
  state_.date_index = row;
  state_.prices = market_.close.row(r).transpose();
  state_.features.resize(n, k);
  for (Eigen::Index q = 0; q < k; ++q) {
    state_.features.col(q) = features_.values[static_cast<std::size_t>(q)].row(r).transpose();
  }
  state_.signals.resize(n, static_cast<Eigen::Index>(kNumAxes));
  for (std::size_t a = 0; a < kNumAxes; ++a) {
    state_.signals.col(static_cast<Eigen::Index>(a)) = signals_.axis(kAllAxes[a]).row(r).transpose();
  }
}

const EnvState& TradingEnv::reset(const Date& start) {
  auto it = std::lower_bound(market_.dates.begin(), market_.dates.end(), start);
  if (it == market_.dates.end()) throw RangeError("start " + start.iso() + " is past the final date");
  const auto row = static_cast<std::size_t>(it - market_.dates.begin());
  if (features_.is_warmup(row)) {
    throw RangeError(fmt::format("start {} lies in the indicator warm-up (first valid {})", it->iso(),
                                 market_.dates[features_.first_valid_row].iso()));
  }
  if (row + 1 >= market_.num_dates()) throw RangeError("start " + it->iso() + " leaves no step to take");
  state_ = EnvState{};
  state_.cash = config_.initial_cash;
  state_.holdings = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(market_.num_tickers()));
  state_.wealth = config_.initial_cash;
  state_.peak_wealth = config_.initial_cash;
  load_day(row);
  started_ = true;
  return state_;
}

Eigen::VectorXd TradingEnv::observation(const AxisSet& mask) const {
  if (!started_) throw ValidationError("observation requested before reset");
  const std::size_t n = market_.num_tickers();
  Eigen::VectorXd obs(static_cast<Eigen::Index>(layout_.dim()));
  obs(0) = state_.cash;
  obs.segment(static_cast<Eigen::Index>(layout_.prices_offset()), static_cast<Eigen::Index>(n)) = state_.prices;
  obs.segment(static_cast<Eigen::Index>(layout_.holdings_offset()), static_cast<Eigen::Index>(n)) = state_.holdings;
  auto pos = static_cast<Eigen::Index>(layout_.features_offset());
  for (Eigen::Index q = 0; q < state_.features.cols(); ++q) {
    obs.segment(pos, static_cast<Eigen::Index>(n)) = state_.features.col(q);
    pos += static_cast<Eigen::Index>(n);
  }
  for (std::size_t a = 0; a < kNumAxes; ++a) {
    if (mask.contains(kAllAxes[a])) {
      obs.segment(pos, static_cast<Eigen::Index>(n)).setConstant(kNeutralScore);
    } else {
      obs.segment(pos, static_cast<Eigen::Index>(n)) = state_.signals.col(static_cast<Eigen::Index>(a));
    }
    pos += static_cast<Eigen::Index>(n);
  }
  return obs;
}

StepResult TradingEnv::step(const Eigen::VectorXd& action) {
  if (!started_) throw ValidationError("step called before reset");
  const auto n = static_cast<Eigen::Index>(market_.num_tickers());
  StepResult out;
  out.info.executed = Eigen::VectorXd::Zero(n);
  if (done()) {
    out.info.done = true;
    out.state = state_;
    return out;
  }
  if (action.size() != n) throw ValidationError(fmt::format("action has {} entries, expected {}", action.size(), n));
  if (!action.allFinite()) throw ValidationError("action is not finite");

  const std::size_t row = state_.date_index;
  Eigen::VectorXd delta(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    delta(i) = std::round(std::clamp(action(i), -1.0, 1.0) * config_.h_max);
  }
  out.info.turbulence_available = turbulence_.available(row);
  out.info.turbulence = turbulence_.values[row];
  out.info.gated = out.info.turbulence_available && turbulence_.values[row] > config_.turbulence_threshold;
  if (out.info.gated) delta = delta.cwiseMin(0.0);

  const Eigen::VectorXd& p = state_.prices;
  double cost = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (delta(i) >= 0.0) continue;
    const double q = std::min(-delta(i), state_.holdings(i));
    const double notional = q * p(i);
    state_.holdings(i) -= q;
    state_.cash += notional - config_.cost_rate * notional;
    cost += config_.cost_rate * notional;
    out.info.executed(i) = -q;
  }
  Eigen::VectorXd buys = delta.cwiseMax(0.0);
  const double buy_cost = (buys.array() * p.array()).sum() * (1.0 + config_.cost_rate);
  if (buy_cost > state_.cash && buy_cost > 0.0) {
    out.info.buy_scale = std::max(0.0, state_.cash) / buy_cost;
    buys = (buys * out.info.buy_scale).array().floor().matrix();
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (buys(i) <= 0.0) continue;
    const double notional = buys(i) * p(i);
    state_.holdings(i) += buys(i);
    state_.cash -= notional + config_.cost_rate * notional;
    cost += config_.cost_rate * notional;
    out.info.executed(i) = buys(i);
  }
  out.info.cost = cost;

  const double previous = state_.wealth;
  load_day(row + 1);
  state_.wealth = state_.cash + state_.holdings.dot(state_.prices);
  state_.peak_wealth = std::max(state_.peak_wealth, state_.wealth);
  out.info.delta_wealth = state_.wealth - previous;
  out.info.penalty = drawdown_penalty(state_.wealth, state_.peak_wealth, config_.drawdown_alpha);
  out.reward = shaped_reward(out.info.delta_wealth, config_.initial_cash, state_.wealth, state_.peak_wealth,
                             config_.reward_scale, config_.drawdown_alpha);
  out.info.done = done();
  out.state = state_;
  return out;
}

Eigen::VectorXd HoldPolicy::act(const Eigen::VectorXd&, const ObservationLayout& layout) {
  return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.num_tickers()));
}

void UniformRandomPolicy::reset(std::uint64_t seed) { rng_.seed(mix_seed(seed_, seed)); }

Eigen::VectorXd UniformRandomPolicy::act(const Eigen::VectorXd&, const ObservationLayout& layout) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd a(static_cast<Eigen::Index>(layout.num_tickers()));
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = u(rng_);
  return a;
}

std::string SignalThresholdPolicy::name() const {
  return fmt::format("signal_threshold({}, {})", axis_name(axis_), level_);
}

Eigen::VectorXd SignalThresholdPolicy::act(const Eigen::VectorXd& obs, const ObservationLayout& layout) {
  Eigen::VectorXd a(static_cast<Eigen::Index>(layout.num_tickers()));
  for (std::size_t i = 0; i < layout.num_tickers(); ++i) {
    const double s = obs(static_cast<Eigen::Index>(layout.signal_index(axis_, i)));
    a(static_cast<Eigen::Index>(i)) = s > level_ ? 1.0 : (s < level_ ? -1.0 : 0.0);
  }
  return a;
}

std::vector<std::string> builtin_policies() { return {"hold", "uniform_random", "signal_threshold"}; }

std::unique_ptr<Policy> make_policy(const std::string& name, std::uint64_t seed, Axis axis, double level) {
  if (name == "hold") return std::make_unique<HoldPolicy>();
  if (name == "uniform_random") return std::make_unique<UniformRandomPolicy>(seed);
  if (name == "signal_threshold") return std::make_unique<SignalThresholdPolicy>(axis, level);
  throw ConfigError("unknown policy '" + name + "'");
}

EpisodeResult run_policy(Policy& policy, TradingEnv& env, const Date& start, const AxisSet& mask,
                         std::uint64_t seed, std::optional<Date> end) {
  const auto& market = env.market();
  const double w0 = env.config().initial_cash;
  env.reset(start);
  policy.reset(seed);
  const auto n = static_cast<Eigen::Index>(market.num_tickers());

  EpisodeResult out;
  EquityCurve& c = out.curve;
  c.label = policy.name();
  c.tickers = market.tickers;
  std::vector<Eigen::VectorXd> weights;
  auto record = [&](const EnvState& s, double cost) {
    c.dates.push_back(market.dates[s.date_index]);
    c.wealth.push_back(s.wealth / w0);
    c.daily_returns.push_back(c.wealth.size() > 1 ? c.wealth.back() / c.wealth[c.wealth.size() - 2] - 1.0 : 0.0);
    c.cost_paid.push_back(cost / w0);
    weights.push_back((s.holdings.array() * s.prices.array()).matrix() / s.wealth);
  };
  record(env.state(), 0.0);

  std::size_t step = 0;
  while (!env.done() && (!end || market.dates[env.state().date_index] < *end)) {
    const Eigen::VectorXd action = policy.act(env.observation(mask), env.layout());
    if (action.size() != n || !action.allFinite()) {
      throw PolicyFaultError("policy " + policy.name() + " emitted an invalid action", step);
    }
    auto r = env.step(action);
    ++step;
    record(r.state, r.info.cost);
    out.rewards.push_back(r.reward);
    if (r.info.gated) ++out.gated_steps;
    out.log.push_back({step, market.dates[r.state.date_index], r.state.wealth, r.state.peak_wealth, r.reward,
                       r.info.penalty, r.info.turbulence, r.info.gated});
  }
  c.holdings.resize(static_cast<Eigen::Index>(weights.size()), n);
  for (std::size_t i = 0; i < weights.size(); ++i) c.holdings.row(static_cast<Eigen::Index>(i)) = weights[i].transpose();
  return out;
}

std::string format_episode_log(const std::vector<EpisodeLogRow>& rows) {
  std::string out = "step,date,wealth,peak,reward,penalty,turbulence,gated\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", r.step, r.date.iso(), format_exact(r.wealth),
                       format_exact(r.peak), format_exact(r.reward), format_exact(r.penalty),
                       std::isfinite(r.turbulence) ? format_exact(r.turbulence) : std::string("nan"),
                       r.gated ? 1 : 0);
  }
  return out;
}

}  // namespace ssai
