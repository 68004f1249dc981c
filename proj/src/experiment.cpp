#include "ssai/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <set>

#include <fmt/format.h>

#include "ssai/errors.hpp"
#include "ssai/factor_lab.hpp"
#include "ssai/market_data.hpp"
#include "ssai/metrics.hpp"
#include "ssai/portfolio.hpp"
#include "ssai/signals.hpp"
#include "ssai/stats.hpp"
#include "ssai/trading_env.hpp"
#include "ssai/util.hpp"

namespace fs = std::filesystem;

namespace ssai {

namespace {

using json = nlohmann::json;

constexpr std::array<std::pair<ExperimentKind, std::string_view>, 12> kKindNames{{
    {ExperimentKind::Sfp, "sfp"},
    {ExperimentKind::Srf, "srf"},
    {ExperimentKind::Scw, "scw"},
    {ExperimentKind::Pc1, "pc1"},
    {ExperimentKind::Softmax, "softmax"},
    {ExperimentKind::Forecaster, "forecaster"},
    {ExperimentKind::Baselines, "baselines"},
    {ExperimentKind::CostSweep, "cost_sweep"},
    {ExperimentKind::Stratified, "stratified"},
    {ExperimentKind::Subperiod, "subperiod"},
    {ExperimentKind::EnvEval, "env_eval"},
    {ExperimentKind::ValidationSuite, "validation_suite"},
}};

const std::set<std::string> kParamKeys = {
    "k", "cost_rate", "horizon", "lambda", "rebalance", "bootstrap_resamples", "block_len", "axes",
    "exclude_neutral", "temperature_grid", "temperature", "blocks", "lambda_grid", "tilt_grid",
    "refit_with_validation", "tilt_threshold", "indicators", "baselines", "momentum_lookback",
    "vol_window", "costs", "k_per_stratum", "periods", "policy", "policy_axis", "policy_level", "masks",
    "episode_seeds", "h_max", "reward_scale", "drawdown_alpha", "turbulence_threshold",
    "turbulence_window", "initial_cash", "min_obs"};

const std::set<std::string> kNonNegativeParams = {
    "cost_rate", "lambda", "temperature", "tilt_threshold", "reward_scale", "drawdown_alpha",
    "turbulence_threshold", "initial_cash", "costs", "temperature_grid", "lambda_grid", "tilt_grid"};

void check_sign(const std::string& key, const json& v) {
  if (v.is_array()) {
    for (const auto& e : v) check_sign(key, e);
  } else if (v.is_number() && !(v.get<double>() >= 0.0)) {
    throw ConfigError("parameter '" + key + "' must be non-negative");
  }
}

/// Typed parameter access that records the effective value of every setting read.
class Params {
 public:
  explicit Params(const json& given) : given_(given) {}

  template <typename T>
  T get(const std::string& key, T fallback) {
    T v = fallback;
    if (given_.contains(key)) {
      const auto& node = given_.at(key);
      if constexpr (std::is_unsigned_v<T>) {
        if (node.is_number_integer() && node.get<long long>() < 0) {
          throw ConfigError("parameter '" + key + "' must be non-negative");
        }
      }
      try {
        v = node.get<T>();
      } catch (const json::exception& e) {
        throw ConfigError("parameter '" + key + "': " + e.what());
      }
    }
    effective_[key] = v;
    return v;
  }

  bool has(const std::string& key) const { return given_.contains(key); }
  const json& raw(const std::string& key) const { return given_.at(key); }
  void note(const std::string& key, json value) { effective_[key] = std::move(value); }
  const json& effective() const { return effective_; }

 private:
  const json& given_;
  json effective_ = json::object();
};

DateRange parse_range(const json& node, const std::string& name) {
  if (!node.is_array() || node.size() != 2) throw ConfigError("split '" + name + "' must be [first, last]");
  try {
    DateRange r{Date::parse(node[0].get<std::string>()), Date::parse(node[1].get<std::string>())};
    if (r.last < r.first) throw ConfigError("split '" + name + "' is reversed");
    return r;
  } catch (const ParseError& e) {
    throw ConfigError("split '" + name + "': " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError("split '" + name + "': " + e.what());
  }
}

json range_json(const std::optional<DateRange>& r) {
  if (!r) return nullptr;
  return json::array({r->first.iso(), r->last.iso()});
}

const DateRange& require_split(const std::optional<DateRange>& r, const char* name, ExperimentKind kind) {
  if (!r) throw ConfigError(fmt::format("experiment '{}' needs a {} split", experiment_kind_name(kind), name));
  return *r;
}

struct Inputs {
  MarketPanel market;
  SignalPanel signals;
  json provenance = json::object();
  std::vector<std::string> warnings;
};

Inputs load_inputs(const ExperimentConfig& c) {
  Inputs in;
  if (c.data.synthetic) {
    auto data = synth_panel(*c.data.synthetic, c.seed);
    in.market = std::move(data.market);
    in.signals = std::move(data.signals);
    in.provenance["synthetic_spec_sha256"] = sha256_hex(synthetic_spec_json(*c.data.synthetic));
  } else {
    in.market = load_price_panel(*c.data.prices);
    in.provenance["prices_sha256"] = sha256_file(*c.data.prices);
    if (c.data.signals) {
      in.signals = parse_signal_panel(read_text_file(*c.data.signals));
      in.provenance["signals_sha256"] = sha256_file(*c.data.signals);
    } else {
      auto articles = load_article_cache(*c.data.articles);
      in.provenance["articles_sha256"] = sha256_file(*c.data.articles);
      auto agg = aggregate_signals(articles, in.market.dates, in.market.tickers, c.data.window);
      if (!agg.unmatched.empty()) {
        in.warnings.push_back(fmt::format("{} articles could not be placed on the panel", agg.unmatched.size()));
      }
      in.signals = std::move(agg.panel);
    }
  }
  if (!c.universe.empty()) {
    in.market = in.market.restrict_tickers(c.universe);
    in.signals = in.signals.restrict_tickers(c.universe);
  }
  if (in.signals.dates() != in.market.dates || in.signals.tickers() != in.market.tickers) {
    throw AlignmentError("signal panel does not share the price panel's dates and tickers");
  }
  return in;
}

std::string opt_num(const std::optional<double>& v) { return v ? fmt::format("{:.6f}", *v) : std::string("nan"); }

std::string format_coverage(const CoverageReport& r) {
  std::string out = "ticker,n_days,presence_any";
  for (Axis a : kAllAxes) out += ",presence_" + axis_name(a);
  out += ",differs_any";
  for (Axis a : kAllAxes) out += ",differs_" + axis_name(a);
  out += ",tercile\n";
  for (const auto& t : r.tickers) {
    out += fmt::format("{},{},{:.6f}", t.ticker, t.n_days, t.presence_any);
    for (double v : t.presence_axis) out += fmt::format(",{:.6f}", v);
    out += fmt::format(",{:.6f}", t.differs_any);
    for (double v : t.differs_axis) out += fmt::format(",{:.6f}", v);
    out += "," + tercile_name(t.tercile) + "\n";
  }
  return out;
}

std::string format_pca(const PcaResult& p) {
  std::string out = "component,axis,loading,eigenvalue,explained\n";
  for (std::size_t k = 0; k < kNumAxes; ++k) {
    out += fmt::format("pc{},{},{:.6f},{:.6f},{:.6f}\n", k + 1, axis_name(kAllAxes[k]),
                       p.loadings(static_cast<Eigen::Index>(k)), p.eigenvalues[k], p.explained[k]);
  }
  return out;
}

struct RunContext {
  const ExperimentConfig& config;
  Inputs& in;
  Params params;
  std::map<std::string, std::string> artifacts;
  std::vector<std::string> warnings;

  RunContext(const ExperimentConfig& c, Inputs& i) : config(c), in(i), params(c.params) {}

  BacktestConfig backtest(const DateRange& period) {
    BacktestConfig b;
    b.k = params.get<std::size_t>("k", 10);
    b.cost_rate = params.get<double>("cost_rate", 0.001);
    b.period = period;
    const auto rule = params.get<std::string>("rebalance", "on_change");
    if (rule == "on_change") b.rebalance = RebalanceRule::OnChange;
    else if (rule == "daily") b.rebalance = RebalanceRule::Daily;
    else throw ConfigError("rebalance must be on_change or daily");
    return b;
  }

  BootstrapOptions bootstrap() {
    BootstrapOptions o;
    o.block_len = params.get<std::size_t>("block_len", 20);
    o.resamples = params.get<std::size_t>("bootstrap_resamples", 10000);
    o.seed = config.seed;
    return o;
  }

  ForwardReturns forward() { return forward_returns(in.market, params.get<std::size_t>("horizon", 5)); }

  void add_warnings(const std::vector<std::string>& w) { warnings.insert(warnings.end(), w.begin(), w.end()); }

  /// Curve, holdings, benchmark and paired comparison artifacts for one strategy.
  void emit_strategy(const EquityCurve& curve, const EquityCurve& benchmark) {
    artifacts["equity_curve.csv"] = format_equity_curve(curve);
    artifacts["holdings.csv"] = format_holdings(curve);
    artifacts["benchmark_curve.csv"] = format_equity_curve(benchmark);
    artifacts["comparisons.csv"] =
        format_comparisons({compare_curves(curve.label + " vs " + benchmark.label, curve, benchmark, bootstrap())});
  }

  void emit_ic(const ForwardReturns& fwd, const DateRange& range, const std::string& range_name,
               std::string& out) {
    auto [b, e] = in.market.date_span(range);
    for (Axis a : kAllAxes) {
      try {
        auto r = spearman_ic(in.signals, a, fwd.values, b, e, true);
        out += fmt::format("{},{},{:.6f},{:.6g},{:.6f},{:.6f},{}\n", range_name, axis_name(a), r.statistic,
                           r.p_value, r.ci_low, r.ci_high, r.n);
      } catch (const Error& err) {
        out += fmt::format("{},{},nan,nan,nan,nan,0\n", range_name, axis_name(a));
        warnings.push_back(fmt::format("IC for {} on {} undefined: {}", axis_name(a), range_name, err.what()));
      }
    }
  }

  std::vector<Indicator> indicators() {
    std::vector<std::string> names;
    for (auto i : default_indicators()) names.push_back(indicator_name(i));
    names = params.get<std::vector<std::string>>("indicators", names);
    std::vector<Indicator> out;
    for (const auto& n : names) out.push_back(parse_indicator(n));
    return out;
  }
};

FactorModel fit_sfp_from_params(RunContext& ctx, const ForwardReturns& fwd, const DateRange& train) {
  SfpOptions o;
  o.axes = AxisSet::parse(ctx.params.get<std::vector<std::string>>("axes", {"ALL"}));
  o.lambda = ctx.params.get<double>("lambda", 1e-3);
  o.exclude_neutral = ctx.params.get<bool>("exclude_neutral", false);
  return fit_sfp(ctx.in.signals, fwd, train, o);
}

void run_factor_kind(RunContext& ctx) {
  const auto& c = ctx.config;
  const auto& train = require_split(c.splits.train, "train", c.kind);
  const auto& test = require_split(c.splits.test, "test", c.kind);
  const auto fwd = ctx.forward();
  auto cfg = ctx.backtest(test);
  const auto bh = baseline(ctx.in.market, {BaselineKind::EwBuyAndHold}, cfg).curve;

  FactorModel model;
  Weighting weighting = Weighting::equal();
  std::vector<std::pair<std::string, MetricsReport>> rows;
  std::string extra_name, extra;
  switch (c.kind) {
    case ExperimentKind::Sfp: model = fit_sfp_from_params(ctx, fwd, train); break;
    case ExperimentKind::Srf:
      model = fit_srf(ctx.in.signals, fwd, train, ctx.params.get<double>("lambda", 1e-3),
                      ctx.params.get<bool>("exclude_neutral", false));
      break;
    case ExperimentKind::Pc1: {
      model = fit_pc1_composite(ctx.in.signals, train);
      auto [b, e] = ctx.in.market.date_span(train);
      ctx.artifacts["pca.csv"] = format_pca(pca_effective_dim(ctx.in.signals, b, e));
      break;
    }
    case ExperimentKind::Softmax: {
      model = fit_equal_weight_composite(ctx.in.signals, train);
      double t = ctx.params.get<double>("temperature", 1.0);
      if (c.splits.validation) {
        auto grid = ctx.params.get<std::vector<double>>("temperature_grid", kDefaultTemperatureGrid);
        auto sel = select_temperature(composite(ctx.in.signals, model, *c.splits.validation), ctx.in.market,
                                      ctx.backtest(*c.splits.validation), grid);
        t = sel.temperature;
        ctx.params.note("temperature", t);
      }
      weighting = Weighting::scw(t);
      break;
    }
    default: throw ConfigError("not a factor experiment");
  }
  const auto label = model_kind_name(model.kind);
  auto scores = composite(ctx.in.signals, model, test);
  auto res = backtest_topk(scores, ctx.in.market, cfg, weighting, label);
  ctx.add_warnings(res.warnings);
  rows.emplace_back(label, metrics(res.curve));

  if (c.kind == ExperimentKind::Sfp && model.axes.size() == kNumAxes) {
    SfpOptions o;
    o.axes = {Axis::Sentiment};
    o.lambda = model.ridge_strength;
    o.exclude_neutral = ctx.params.get<bool>("exclude_neutral", false);
    auto sent = fit_sfp(ctx.in.signals, fwd, train, o);
    auto r2 = backtest_topk(composite(ctx.in.signals, sent, test), ctx.in.market, cfg, Weighting::equal(),
                            "SFP (sentiment only)");
    ctx.add_warnings(r2.warnings);
    rows.emplace_back("SFP (sentiment only)", metrics(r2.curve));
    ctx.artifacts["model_sentiment_only.json"] = model_to_json(sent);
  }
  rows.emplace_back(bh.label, metrics(bh));
  ctx.artifacts["metrics.csv"] = format_metrics_table(rows);
  ctx.artifacts["model.json"] = model_to_json(model);
  ctx.emit_strategy(res.curve, bh);
  std::string ic = "range,axis,ic,p_value,ci_low,ci_high,n\n";
  ctx.emit_ic(fwd, test, "test", ic);
  ctx.artifacts["ic.csv"] = ic;
}

void run_scw(RunContext& ctx) {
  const auto& c = ctx.config;
  const auto& train = require_split(c.splits.train, "train", c.kind);
  const auto& validation = require_split(c.splits.validation, "validation", c.kind);
  const auto& test = require_split(c.splits.test, "test", c.kind);
  const auto fwd = ctx.forward();
  const auto model = fit_sfp_from_params(ctx, fwd, train);
  const auto grid = ctx.params.get<std::vector<double>>("temperature_grid", kDefaultTemperatureGrid);
  const auto sel = select_temperature(composite(ctx.in.signals, model, validation), ctx.in.market,
                                      ctx.backtest(validation), grid);
  std::string table = "temperature,validation_sharpe,selected\n";
  for (const auto& [t, s] : sel.sharpe_by_temperature) {
    table += fmt::format("{},{},{}\n", t, opt_num(s), t == sel.temperature ? 1 : 0);
  }
  ctx.artifacts["temperature_selection.csv"] = table;

  auto cfg = ctx.backtest(test);
  auto scores = composite(ctx.in.signals, model, test);
  auto scw = backtest_topk(scores, ctx.in.market, cfg, Weighting::scw(sel.temperature),
                           fmt::format("SCW (T={})", sel.temperature));
  auto sfp = backtest_topk(scores, ctx.in.market, cfg, Weighting::equal(), "SFP");
  ctx.add_warnings(scw.warnings);
  const auto bh = baseline(ctx.in.market, {BaselineKind::EwBuyAndHold}, cfg).curve;
  ctx.artifacts["metrics.csv"] = format_metrics_table(
      {{scw.curve.label, metrics(scw.curve)}, {"SFP", metrics(sfp.curve)}, {bh.label, metrics(bh)}});
  ctx.artifacts["model.json"] = model_to_json(model);
  ctx.emit_strategy(scw.curve, bh);
}

void run_forecaster(RunContext& ctx) {
  const auto& c = ctx.config;
  const auto& train = require_split(c.splits.train, "train", c.kind);
  const auto& validation = require_split(c.splits.validation, "validation", c.kind);
  const auto& test = require_split(c.splits.test, "test", c.kind);
  const auto fwd = ctx.forward();
  const auto features = compute_indicators(ctx.in.market, ctx.indicators());
  std::vector<FeatureBlock> blocks;
  for (const auto& name : ctx.params.get<std::vector<std::string>>("blocks", {"price"})) {
    if (name == "price") blocks.push_back(price_block(features));
    else if (name == "semantic") blocks.push_back(semantic_block(ctx.in.signals));
    else throw ConfigError("unknown feature block '" + name + "'");
  }
  ForecasterOptions o;
  o.lambda_grid = ctx.params.get<std::vector<double>>("lambda_grid", o.lambda_grid);
  o.tilt_grid = ctx.params.get<std::vector<double>>("tilt_grid", o.tilt_grid);
  o.refit_with_validation = ctx.params.get<bool>("refit_with_validation", true);
  o.tilt_threshold = ctx.params.get<double>("tilt_threshold", 1.0);
  auto cfg = ctx.backtest(test);
  o.k = cfg.k;
  o.cost_rate = cfg.cost_rate;
  const auto model = fit_forecaster(blocks, ctx.in.signals, fwd, ctx.in.market, train, validation, o);

  std::string grid = "lambda,tilt,validation_sharpe,selected\n";
  for (const auto& cand : model.candidates) {
    grid += fmt::format("{},{},{},{}\n", cand.lambda, cand.tilt, opt_num(cand.validation_sharpe),
                        cand.lambda == model.lambda && cand.tilt == model.tilt ? 1 : 0);
  }
  ctx.artifacts["forecaster_grid.csv"] = grid;
  auto res = backtest_topk(forecast(blocks, ctx.in.signals, model, test), ctx.in.market, cfg, Weighting::equal(),
                           model.label());
  ctx.add_warnings(res.warnings);
  const auto bh = baseline(ctx.in.market, {BaselineKind::EwBuyAndHold}, cfg).curve;
  ctx.artifacts["metrics.csv"] = format_metrics_table({{model.label(), metrics(res.curve)}, {bh.label, metrics(bh)}});
  ctx.emit_strategy(res.curve, bh);
}

void run_baselines(RunContext& ctx) {
  const auto& c = ctx.config;
  const auto& test = require_split(c.splits.test, "test", c.kind);
  auto cfg = ctx.backtest(test);
  if (cfg.k > ctx.in.market.num_tickers()) {
    ctx.warnings.push_back(fmt::format("k={} exceeds the {} tickers; momentum uses k={}", cfg.k,
                                       ctx.in.market.num_tickers(), ctx.in.market.num_tickers()));
    cfg.k = ctx.in.market.num_tickers();
  }
  const auto lookback = ctx.params.get<std::size_t>("momentum_lookback", 126);
  const auto window = ctx.params.get<std::size_t>("vol_window", 63);
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (const auto& name :
       ctx.params.get<std::vector<std::string>>("baselines", {"ew_buy_and_hold", "momentum", "equal_vol"})) {
    BaselineSpec spec{BaselineKind::EwBuyAndHold, lookback, window};
    if (name == "ew_buy_and_hold") spec.kind = BaselineKind::EwBuyAndHold;
    else if (name == "ew_daily") spec.kind = BaselineKind::EwDailyRebalanced;
    else if (name == "momentum") spec.kind = BaselineKind::Momentum;
    else if (name == "equal_vol") spec.kind = BaselineKind::EqualVol;
    else throw ConfigError("unknown baseline '" + name + "'");
    auto res = baseline(ctx.in.market, spec, cfg);
    ctx.add_warnings(res.warnings);
    rows.emplace_back(res.curve.label, metrics(res.curve));
    ctx.artifacts["curve_" + name + ".csv"] = format_equity_curve(res.curve);
  }
  ctx.artifacts["metrics.csv"] = format_metrics_table(rows);
}

void run_cost_sweep(RunContext& ctx) {
  const auto& c = ctx.config;
  const auto& train = require_split(c.splits.train, "train", c.kind);
  const auto& test = require_split(c.splits.test, "test", c.kind);
  const auto fwd = ctx.forward();
  const auto model = fit_sfp_from_params(ctx, fwd, train);
  const auto costs =
      ctx.params.get<std::vector<double>>("costs", {0.0005, 0.001, 0.002, 0.005, 0.01, 0.02});
  auto table = cost_sweep(composite(ctx.in.signals, model, test), ctx.in.market, ctx.backtest(test),
                          Weighting::equal(), costs);
  ctx.artifacts["cost_sweep.csv"] = format_cost_sweep(table);
  ctx.artifacts["model.json"] = model_to_json(model);
}

void run_stratified(RunContext& ctx) {
  const auto& c = ctx.config;
  const auto& train = require_split(c.splits.train, "train", c.kind);
  const auto& test = require_split(c.splits.test, "test", c.kind);
  const auto fwd = ctx.forward();
  const auto model = fit_sfp_from_params(ctx, fwd, train);
  auto [b, e] = ctx.in.market.date_span(train);
  const auto coverage = coverage_stats(ctx.in.signals.slice_rows(b, e));
  const auto k = ctx.params.get<std::size_t>("k_per_stratum", 5);
  auto rows = stratified_backtest(composite(ctx.in.signals, model, test), ctx.in.market, coverage, k,
                                  ctx.backtest(test));
  for (const auto& r : rows) ctx.add_warnings(r.warnings);
  ctx.artifacts["strata.csv"] = format_strata(rows);
  ctx.artifacts["coverage.csv"] = format_coverage(coverage);
  ctx.artifacts["model.json"] = model_to_json(model);
}

void run_subperiod(RunContext& ctx) {
  const auto& c = ctx.config;
  const auto& train = require_split(c.splits.train, "train", c.kind);
  const auto& test = require_split(c.splits.test, "test", c.kind);
  const auto fwd = ctx.forward();
  const auto model = fit_sfp_from_params(ctx, fwd, train);
  auto cfg = ctx.backtest(test);
  auto res = backtest_topk(composite(ctx.in.signals, model, test), ctx.in.market, cfg, Weighting::equal(), "SFP");
  ctx.add_warnings(res.warnings);
  const auto bh = baseline(ctx.in.market, {BaselineKind::EwBuyAndHold}, cfg).curve;
  std::vector<NamedPeriod> periods;
  if (ctx.params.has("periods")) {
    const auto& node = ctx.params.raw("periods");
    try {
      for (const auto& p : node) {
        periods.push_back({p.at("name").get<std::string>(), parse_range(json::array({p.at("first"), p.at("last")}),
                                                                          p.at("name").get<std::string>())});
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string("periods: ") + e.what());
    }
    ctx.params.note("periods", node);
  } else {
    periods = calendar_years(res.curve.dates);
    ctx.params.note("periods", "calendar_years");
  }
  ctx.artifacts["subperiods.csv"] = format_subperiods(subperiod_report(res.curve, bh, periods));
  ctx.emit_strategy(res.curve, bh);
}

std::string mask_token(const AxisSet& m) {
  if (m.empty()) return "none";
  if (m.is_all()) return "all";
  std::string s;
  for (Axis a : kAllAxes) {
    if (m.contains(a)) s += (s.empty() ? "" : "+") + axis_name(a);
  }
  return s;
}

void run_env_eval(RunContext& ctx) {
  const auto& c = ctx.config;
  const auto& test = require_split(c.splits.test, "test", c.kind);
  const auto features = compute_indicators(ctx.in.market, ctx.indicators());
  EnvConfig ec;
  ec.h_max = ctx.params.get<int>("h_max", 100);
  ec.cost_rate = ctx.params.get<double>("cost_rate", 0.001);
  ec.turbulence_threshold = ctx.params.get<double>("turbulence_threshold", kDefaultTurbulenceThreshold);
  ec.reward_scale = ctx.params.get<double>("reward_scale", 1e-4);
  ec.drawdown_alpha = ctx.params.get<double>("drawdown_alpha", 0.1);
  ec.initial_cash = ctx.params.get<double>("initial_cash", 1e6);
  const auto turbulence = compute_turbulence(
      ctx.in.market, ctx.params.get<std::size_t>("turbulence_window", kDefaultTurbulenceWindow),
      ec.turbulence_threshold);
  TradingEnv env(ctx.in.market, features, ctx.in.signals, turbulence, ec);

  const auto policy_name = ctx.params.get<std::string>("policy", "signal_threshold");
  const auto axis = parse_axis(ctx.params.get<std::string>("policy_axis", "sentiment"));
  const auto level = ctx.params.get<double>("policy_level", kNeutralScore);
  std::vector<AxisSet> masks;
  for (const auto& m : ctx.params.get<std::vector<std::vector<std::string>>>("masks", {{}, {"ALL"}})) {
    masks.push_back(AxisSet::parse(m));
  }
  const auto seeds = ctx.params.get<std::vector<std::uint64_t>>("episode_seeds", {c.seed});

  std::string table = "mask,seed,cr_pct,sharpe,mdd_pct,mean_reward,gated_steps\n";
  for (const auto& mask : masks) {
    for (auto seed : seeds) {
      auto policy = make_policy(policy_name, seed, axis, level);
      auto res = run_policy(*policy, env, test.first, mask, seed, test.last);
      const auto m = metrics(res.curve);
      double mean_reward = 0.0;
      for (double r : res.rewards) mean_reward += r / static_cast<double>(res.rewards.size());
      table += fmt::format("{},{},{:.6f},{},{:.6f},{:.6e},{}\n", mask_token(mask), seed, 100.0 * m.cr,
                           opt_num(m.sharpe_value), 100.0 * m.mdd, mean_reward, res.gated_steps);
      ctx.artifacts[fmt::format("episode_{}_{}.csv", mask_token(mask), seed)] = format_episode_log(res.log);
    }
  }
  ctx.artifacts["env_metrics.csv"] = table;
  ctx.artifacts["observation_layout.json"] = env.layout().manifest_json();
}

void run_validation_suite(RunContext& ctx) {
  const auto& c = ctx.config;
  const auto& train = require_split(c.splits.train, "train", c.kind);
  const auto fwd = ctx.forward();
  std::string ic = "range,axis,ic,p_value,ci_low,ci_high,n\n";
  ctx.emit_ic(fwd, train, "train", ic);
  if (c.splits.test) ctx.emit_ic(fwd, *c.splits.test, "test", ic);
  ctx.artifacts["ic.csv"] = ic;

  const auto min_obs = ctx.params.get<std::size_t>("min_obs", 20);
  std::string ac = "axis,ticker,coefficient,n_pairs,skipped_reason\n";
  for (Axis a : kAllAxes) {
    for (const auto& r : lag1_autocorr(ctx.in.signals, a, min_obs)) {
      ac += fmt::format("{},{},{},{},{}\n", axis_name(a), r.ticker, opt_num(r.coefficient), r.n_pairs,
                        r.skipped_reason);
    }
  }
  ctx.artifacts["autocorr.csv"] = ac;
  auto [b, e] = ctx.in.market.date_span(train);
  ctx.artifacts["coverage.csv"] = format_coverage(coverage_stats(ctx.in.signals.slice_rows(b, e)));
  try {
    ctx.artifacts["pca.csv"] = format_pca(pca_effective_dim(ctx.in.signals, b, e));
  } catch (const NumericalError& err) {
    ctx.warnings.push_back(std::string("PCA skipped: ") + err.what());
  } catch (const DegenerateError& err) {
    ctx.warnings.push_back(std::string("PCA skipped: ") + err.what());
  }
}

void write_outputs(const fs::path& out, const std::map<std::string, std::string>& files) {
  fs::path staging = out;
  staging += ".partial";
  fs::remove_all(staging);
  try {
    fs::create_directories(staging);
    for (const auto& [name, text] : files) write_text_file(staging / name, text);
    if (fs::exists(out)) {
      if (!fs::exists(out / "manifest.json")) {
        throw ConfigError("output directory " + out.string() + " exists and is not a previous run");
      }
      fs::remove_all(out);
    }
    fs::rename(staging, out);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
}

}  // namespace

std::string experiment_kind_name(ExperimentKind k) {
  for (const auto& [kind, name] : kKindNames) {
    if (kind == k) return std::string(name);
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(std::string_view name) {
  for (const auto& [kind, n] : kKindNames) {
    if (n == name) return kind;
  }
  throw ConfigError("unknown experiment kind '" + std::string(name) + "'");
}

std::vector<ExperimentKind> all_experiment_kinds() {
  std::vector<ExperimentKind> out;
  for (const auto& [kind, name] : kKindNames) out.push_back(kind);
  return out;
}

ExperimentConfig parse_experiment_config(std::string_view text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> top = {"kind", "seed", "output_dir", "data", "splits", "universe", "params"};
  for (const auto& [key, v] : j.items()) {
    if (!top.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  ExperimentConfig c;
  c.canonical = j.dump();
  try {
    if (!j.contains("kind")) throw ConfigError("config needs a 'kind'");
    c.kind = parse_experiment_kind(j.at("kind").get<std::string>());
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (!j.contains("output_dir")) throw ConfigError("config needs an 'output_dir'");
    c.output_dir = resolve(j.at("output_dir").get<std::string>());
    if (j.contains("universe")) c.universe = j.at("universe").get<std::vector<std::string>>();

    if (!j.contains("data") || !j.at("data").is_object()) throw ConfigError("config needs a 'data' object");
    const auto& d = j.at("data");
    static const std::set<std::string> data_keys = {"prices", "signals", "articles", "window", "synthetic"};
    for (const auto& [key, v] : d.items()) {
      if (!data_keys.count(key)) throw ConfigError("unknown data key '" + key + "'");
    }
    if (d.contains("prices")) c.data.prices = resolve(d.at("prices").get<std::string>());
    if (d.contains("signals")) c.data.signals = resolve(d.at("signals").get<std::string>());
    if (d.contains("articles")) c.data.articles = resolve(d.at("articles").get<std::string>());
    if (d.contains("window")) c.data.window = d.at("window").get<std::size_t>();
    if (d.contains("synthetic")) {
      try {
        c.data.synthetic = parse_synthetic_spec(d.at("synthetic").dump());
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
    }
    if (c.data.synthetic) {
      if (c.data.prices || c.data.signals || c.data.articles) {
        throw ConfigError("data.synthetic excludes file inputs");
      }
    } else {
      if (!c.data.prices) throw ConfigError("data needs 'prices' or 'synthetic'");
      if (c.data.signals.has_value() == c.data.articles.has_value()) {
        throw ConfigError("data needs exactly one of 'signals' or 'articles'");
      }
    }

    if (j.contains("splits")) {
      const auto& s = j.at("splits");
      for (const auto& [key, v] : s.items()) {
        if (key != "train" && key != "validation" && key != "test") throw ConfigError("unknown split '" + key + "'");
      }
      if (s.contains("train")) c.splits.train = parse_range(s.at("train"), "train");
      if (s.contains("validation")) c.splits.validation = parse_range(s.at("validation"), "validation");
      if (s.contains("test")) c.splits.test = parse_range(s.at("test"), "test");
    }
    std::vector<std::pair<std::string, DateRange>> ordered;
    if (c.splits.train) ordered.emplace_back("train", *c.splits.train);
    if (c.splits.validation) ordered.emplace_back("validation", *c.splits.validation);
    if (c.splits.test) ordered.emplace_back("test", *c.splits.test);
    for (std::size_t i = 1; i < ordered.size(); ++i) {
      if (!(ordered[i - 1].second.last < ordered[i].second.first)) {
        throw ConfigError(fmt::format("splits must be disjoint and ordered: {} {} then {} {}", ordered[i - 1].first,
                                      ordered[i - 1].second.str(), ordered[i].first, ordered[i].second.str()));
      }
    }

    if (j.contains("params")) {
      if (!j.at("params").is_object()) throw ConfigError("'params' must be an object");
      c.params = j.at("params");
      for (const auto& [key, v] : c.params.items()) {
        if (!kParamKeys.count(key)) throw ConfigError("unknown parameter '" + key + "'");
        if (kNonNegativeParams.count(key)) check_sign(key, v);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ParseError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return parse_experiment_config(text, path.parent_path());
}

RunSummary run_experiment(const ExperimentConfig& config) {
  Inputs in = load_inputs(config);
  RunContext ctx(config, in);
  ctx.warnings = in.warnings;
  switch (config.kind) {
    case ExperimentKind::Sfp:
    case ExperimentKind::Srf:
    case ExperimentKind::Pc1:
    case ExperimentKind::Softmax: run_factor_kind(ctx); break;
    case ExperimentKind::Scw: run_scw(ctx); break;
    case ExperimentKind::Forecaster: run_forecaster(ctx); break;
    case ExperimentKind::Baselines: run_baselines(ctx); break;
    case ExperimentKind::CostSweep: run_cost_sweep(ctx); break;
    case ExperimentKind::Stratified: run_stratified(ctx); break;
    case ExperimentKind::Subperiod: run_subperiod(ctx); break;
    case ExperimentKind::EnvEval: run_env_eval(ctx); break;
    case ExperimentKind::ValidationSuite: run_validation_suite(ctx); break;
  }

  RunSummary summary;
  summary.output_dir = config.output_dir;
  summary.warnings = ctx.warnings;
  for (const auto& [name, text] : ctx.artifacts) summary.artifacts[name] = sha256_hex(text);

  json manifest;
  manifest["kind"] = experiment_kind_name(config.kind);
  manifest["library_version"] = std::string(kLibraryVersion);
  manifest["config_sha256"] = sha256_hex(config.canonical);
  manifest["seed"] = config.seed;
  manifest["inputs"] = in.provenance;
  manifest["splits"] = {{"train", range_json(config.splits.train)},
                        {"validation", range_json(config.splits.validation)},
                        {"test", range_json(config.splits.test)}};
  manifest["universe"] = in.market.tickers;
  manifest["parameters"] = ctx.params.effective();
  manifest["artifacts"] = summary.artifacts;
  manifest["warnings"] = summary.warnings;
  auto files = ctx.artifacts;
  files["manifest.json"] = manifest.dump(2) + "\n";
  write_outputs(config.output_dir, files);
  return summary;
}

// ---------------------------------------------------------------------------

bool ValidationReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

std::string ValidationReport::str() const {
  std::string out;
  for (const auto& c : checks) {
    out += fmt::format("[{}] {}\n", c.passed ? "ok" : "FAIL", c.name);
    for (const auto& d : c.details) out += "    " + d + "\n";
  }
  for (const auto& [path, hash] : hashes) out += fmt::format("sha256 {}  {}\n", hash, path);
  return out;
}

ValidationReport validate_inputs(const std::vector<fs::path>& paths) {
  ValidationReport report;
  std::optional<MarketPanel> prices;
  struct SignalDates {
    std::string path;
    std::vector<Date> dates;
    bool panel = false;
  };
  std::vector<SignalDates> signal_dates;

  for (const auto& path : paths) {
    ValidationCheck check;
    check.name = path.string();
    std::string text;
    try {
      text = read_text_file(path);
      report.hashes.emplace_back(path.string(), sha256_hex(text));
    } catch (const Error& e) {
      check.passed = false;
      check.details.push_back(e.what());
      report.checks.push_back(std::move(check));
      continue;
    }
    const auto header = text.substr(0, text.find('\n'));
    const auto head = std::string(header.empty() || header.back() != '\r' ? header : header.substr(0, header.size() - 1));
    try {
      if (head.rfind("date,ticker,open", 0) == 0) {
        check.name = "price panel " + path.string();
        try {
          prices = parse_price_panel(text);
          check.details.push_back(fmt::format("{} dates x {} tickers", prices->num_dates(), prices->num_tickers()));
        } catch (const PanelAlignmentError& e) {
          check.passed = false;
          check.details.push_back(e.what());
          for (const auto& g : e.gaps()) check.details.push_back("missing " + g.ticker + " on " + g.date.iso());
        }
      } else if (head.rfind("source_id,", 0) == 0) {
        check.name = "article cache " + path.string();
        auto contents = parse_article_cache(text);
        for (const auto& issue : contents.issues) {
          check.passed = false;
          check.details.push_back(fmt::format("line {}: {}", issue.line, issue.message));
        }
        std::vector<Date> dates;
        for (const auto& a : contents.articles) dates.push_back(a.published);
        signal_dates.push_back({path.string(), std::move(dates), false});
        check.details.push_back(fmt::format("{} articles", contents.articles.size()));
      } else if (head.rfind("date,ticker,sentiment", 0) == 0) {
        check.name = "signal panel " + path.string();
        auto panel = parse_signal_panel(text);
        panel.validate();
        signal_dates.push_back({path.string(), panel.dates(), true});
        check.details.push_back(fmt::format("{} dates x {} tickers", panel.num_dates(), panel.num_tickers()));
      } else {
        check.passed = false;
        check.details.push_back("unrecognised header: " + head);
      }
    } catch (const Error& e) {
      check.passed = false;
      check.details.push_back(e.what());
    }
    report.checks.push_back(std::move(check));
  }

  if (prices) {
    for (const auto& [path, dates, is_panel] : signal_dates) {
      ValidationCheck check;
      check.name = "date coverage " + path;
      std::size_t outside = 0;
      if (is_panel && dates != prices->dates) {
        check.passed = false;
        std::vector<Date> only_prices, only_signals;
        std::set_difference(prices->dates.begin(), prices->dates.end(), dates.begin(), dates.end(),
                            std::back_inserter(only_prices));
        std::set_difference(dates.begin(), dates.end(), prices->dates.begin(), prices->dates.end(),
                            std::back_inserter(only_signals));
        for (const auto& d : only_prices) check.details.push_back(d.iso() + " missing from the signal panel");
        for (const auto& d : only_signals) check.details.push_back(d.iso() + " missing from the price panel");
      }
      for (const auto& d : dates) {
        if (d < prices->dates.front() || prices->dates.back() < d) {
          if (++outside <= 10) check.details.push_back(d.iso() + " lies outside the price calendar");
        }
      }
      if (outside > 0) {
        check.passed = false;
        check.details.push_back(fmt::format("{} dates outside {}..{}", outside, prices->dates.front().iso(),
                                            prices->dates.back().iso()));
      }
      report.checks.push_back(std::move(check));
    }
  }
  return report;
}

}  // namespace ssai
