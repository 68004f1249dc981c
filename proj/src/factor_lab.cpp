#include "ssai/factor_lab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>
#include <json.hpp>

#include "ssai/errors.hpp"
#include "ssai/metrics.hpp"
#include "ssai/util.hpp"

namespace ssai {

namespace {

using json = nlohmann::json;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::pair<std::size_t, std::size_t> row_span(const std::vector<Date>& dates, const DateRange& range) {
  auto lo = std::lower_bound(dates.begin(), dates.end(), range.first);
  auto hi = std::upper_bound(dates.begin(), dates.end(), range.last);
  if (lo >= hi) throw RangeError("no dates inside " + range.str());
  return {static_cast<std::size_t>(lo - dates.begin()), static_cast<std::size_t>(hi - dates.begin())};
}

/// Rows of `range` whose h-day label is realised inside `range`.
std::pair<std::size_t, std::size_t> labelled_rows(const std::vector<Date>& dates, const DateRange& range,
                                                  std::size_t horizon) {
  auto [b, e] = row_span(dates, range);
  if (e - b <= horizon) {
    throw RangeError(fmt::format("{} has no rows with a {}-day label inside the range", range.str(), horizon));
  }
  return {b, e - horizon};
}

void check_aligned(const SignalPanel& panel, const ForwardReturns& returns) {
  if (panel.dates() != returns.dates || panel.tickers() != returns.tickers) {
    throw AlignmentError("signal panel and forward returns are not aligned");
  }
}

double raw_feature(const FactorModel& m, const SignalPanel& p, std::size_t f, std::size_t d, std::size_t j) {
  const Axis a = m.axes[f];
  const auto v = p.at(d, j);
  switch (m.kind) {
    case ModelKind::Sfp: return v[a] - kNeutralScore;
    case ModelKind::Srf:
      if (a == Axis::Sentiment) return v[a] - kNeutralScore;
      return m.residual->residual(a, v[a], v[Axis::Sentiment]);
    case ModelKind::Pc1:
    case ModelKind::EqualWeight: return v[a];
  }
  return kNaN;
}

double score_cell(const FactorModel& m, const SignalPanel& p, std::size_t d, std::size_t j) {
  double s = m.intercept;
  for (std::size_t f = 0; f < m.axes.size(); ++f) {
    s += m.weights(static_cast<Eigen::Index>(f)) * (raw_feature(m, p, f, d, j) - m.mean[f]) / m.scale[f];
  }
  return s;
}

struct Design {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

/// Pooled stock-day design for a deviation-style model.
Design pooled_design(const FactorModel& m, const SignalPanel& panel, const ForwardReturns& returns,
                     std::size_t b, std::size_t e, bool exclude_neutral, std::size_t& non_neutral) {
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  non_neutral = 0;
  for (std::size_t d = b; d < e; ++d) {
    for (std::size_t j = 0; j < panel.num_tickers(); ++j) {
      const bool nn = panel.non_neutral(d, j);
      if (nn) ++non_neutral;
      if (exclude_neutral && !nn) continue;
      if (!std::isfinite(returns.values(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)))) continue;
      cells.emplace_back(d, j);
    }
  }
  Design out;
  out.X.resize(static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(m.axes.size()));
  out.y.resize(static_cast<Eigen::Index>(cells.size()));
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto [d, j] = cells[i];
    for (std::size_t f = 0; f < m.axes.size(); ++f) {
      out.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = raw_feature(m, panel, f, d, j);
    }
    out.y(static_cast<Eigen::Index>(i)) = returns.values(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j));
  }
  return out;
}

std::vector<Axis> axes_of(const AxisSet& set) {
  std::vector<Axis> out;
  for (Axis a : kAllAxes) {
    if (set.contains(a)) out.push_back(a);
  }
  return out;
}

std::string kind_token(ModelKind k) {
  switch (k) {
    case ModelKind::Sfp: return "sfp";
    case ModelKind::Srf: return "srf";
    case ModelKind::Pc1: return "pc1";
    case ModelKind::EqualWeight: return "equal_weight";
  }
  return "sfp";
}

json model_body(const FactorModel& m) {
  json j;
  j["kind"] = kind_token(m.kind);
  std::vector<std::string> axes;
  for (Axis a : m.axes) axes.push_back(axis_name(a));
  j["axes"] = axes;
  j["feature_names"] = m.feature_names;
  j["weights"] = std::vector<double>(m.weights.data(), m.weights.data() + m.weights.size());
  j["intercept"] = m.intercept;
  j["standardiser"] = {{"mean", m.mean}, {"scale", m.scale}};
  j["ridge_strength"] = m.ridge_strength;
  j["fit_range"] = {{"first", m.fit_range.first.iso()}, {"last", m.fit_range.last.iso()}};
  j["horizon"] = m.horizon;
  j["fit_rows"] = m.fit_rows;
  if (m.residual) {
    j["residual"] = {{"intercept", m.residual->intercept}, {"slope", m.residual->slope}};
  } else {
    j["residual"] = nullptr;
  }
  return j;
}

}  // namespace

RidgeFit fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda, bool fit_intercept,
                   const std::vector<std::string>& names) {
  const auto n = X.rows();
  const auto p = X.cols();
  if (p < 1 || n < p) throw ValidationError(fmt::format("ridge needs n >= p >= 1, got n={} p={}", n, p));
  if (y.size() != n) throw ValidationError("ridge target length does not match the design");
  if (!(lambda >= 0.0)) throw ValidationError("ridge strength must be non-negative");
  if (!X.allFinite() || !y.allFinite()) throw ValidationError("ridge inputs must be finite");

  Eigen::RowVectorXd x_mean = Eigen::RowVectorXd::Zero(p);
  double y_mean = 0.0;
  if (fit_intercept) {
    x_mean = X.colwise().mean();
    y_mean = y.mean();
  }
  const Eigen::MatrixXd Xc = X.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;

  if (lambda == 0.0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xc);
    if (qr.rank() < p) {
      std::string cols;
      for (Eigen::Index k = qr.rank(); k < p; ++k) {
        const auto c = qr.colsPermutation().indices()(k);
        if (!cols.empty()) cols += ", ";
        cols += static_cast<std::size_t>(c) < names.size() ? names[static_cast<std::size_t>(c)]
                                                            : fmt::format("x{}", c);
      }
      throw RankError(fmt::format("design has rank {} < {}; dependent columns: {}", qr.rank(), p, cols));
    }
  }
  Eigen::MatrixXd A = Xc.transpose() * Xc;
  A.diagonal().array() += lambda;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success) throw NumericalError("ridge normal equations are not solvable");
  RidgeFit fit;
  fit.weights = ldlt.solve(Xc.transpose() * yc);
  if (!fit.weights.allFinite()) throw NumericalError("ridge solution is not finite");
  fit.intercept = fit_intercept ? y_mean - (x_mean * fit.weights)(0) : 0.0;
  return fit;
}

std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Sfp: return "SFP";
    case ModelKind::Srf: return "SRF";
    case ModelKind::Pc1: return "PC1-SFP";
    case ModelKind::EqualWeight: return "Softmax-SFP";
  }
  return "SFP";
}

std::string FactorModel::content_hash() const { return sha256_hex(model_body(*this).dump()); }

FactorModel fit_sfp(const SignalPanel& panel, const ForwardReturns& returns, const DateRange& fit_range,
                    const SfpOptions& options) {
  check_aligned(panel, returns);
  if (options.axes.empty()) throw ConfigError("SFP needs at least one axis");
  FactorModel m;
  m.kind = ModelKind::Sfp;
  m.axes = axes_of(options.axes);
  for (Axis a : m.axes) m.feature_names.push_back(axis_name(a) + "_dev");
  m.mean.assign(m.axes.size(), 0.0);
  m.scale.assign(m.axes.size(), 1.0);
  m.ridge_strength = options.lambda;
  m.horizon = returns.horizon;

  auto [b, e] = labelled_rows(panel.dates(), fit_range, returns.horizon);
  std::size_t nn = 0;
  auto design = pooled_design(m, panel, returns, b, e, options.exclude_neutral, nn);
  if (nn == 0) throw DegenerateError("no non-neutral stock-days in " + fit_range.str());
  if (design.X.rows() < 100) {
    throw RangeError(fmt::format("SFP needs at least 100 stock-days, found {}", design.X.rows()));
  }
  auto fit = fit_ridge(design.X, design.y, options.lambda, true, m.feature_names);
  m.weights = fit.weights;
  m.intercept = fit.intercept;
  m.fit_range = {panel.dates()[b], panel.dates()[e + returns.horizon - 1]};
  m.fit_rows = static_cast<std::size_t>(design.X.rows());
  return m;
}

FactorModel fit_srf(const SignalPanel& panel, const ForwardReturns& returns, const DateRange& fit_range,
                    double lambda, bool exclude_neutral) {
  check_aligned(panel, returns);
  auto [b, e] = labelled_rows(panel.dates(), fit_range, returns.horizon);

  // Residual regressions use the same stock-days as the ridge fit.
  std::vector<std::array<double, kNumAxes>> rows;
  std::size_t nn = 0;
  for (std::size_t d = b; d < e; ++d) {
    for (std::size_t j = 0; j < panel.num_tickers(); ++j) {
      const bool covered = panel.non_neutral(d, j);
      if (covered) ++nn;
      if (exclude_neutral && !covered) continue;
      if (!std::isfinite(returns.values(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)))) continue;
      rows.push_back(panel.at(d, j).values);
    }
  }
  if (nn == 0) throw DegenerateError("no non-neutral stock-days in " + fit_range.str());
  if (rows.size() < 100) throw RangeError(fmt::format("SRF needs at least 100 stock-days, found {}", rows.size()));

  const bool constant = std::all_of(rows.begin(), rows.end(), [&](const auto& r) { return r[0] == rows[0][0]; });
  if (constant) throw DegenerateError("sentiment is constant on the training range; slopes are undefined");
  const double n = static_cast<double>(rows.size());
  std::array<double, kNumAxes> mean{};
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < kNumAxes; ++k) mean[k] += r[k];
  }
  for (auto& v : mean) v /= n;
  double sxx = 0.0;
  std::array<double, kNumAxes> sxy{};
  for (const auto& r : rows) {
    const double ds = r[0] - mean[0];
    sxx += ds * ds;
    for (std::size_t k = 1; k < kNumAxes; ++k) sxy[k] += ds * (r[k] - mean[k]);
  }
  if (!(sxx > 0.0)) throw DegenerateError("sentiment is constant on the training range; slopes are undefined");
  ResidualModel rm;
  for (std::size_t k = 1; k < kNumAxes; ++k) {
    rm.slope[k] = sxy[k] / sxx;
    rm.intercept[k] = mean[k] - rm.slope[k] * mean[0];
  }

  FactorModel m;
  m.kind = ModelKind::Srf;
  m.axes.assign(kAllAxes.begin(), kAllAxes.end());
  m.feature_names = {"sentiment_dev", "risk_resid", "confidence_resid", "volatility_forecast_resid"};
  m.mean.assign(kNumAxes, 0.0);
  m.scale.assign(kNumAxes, 1.0);
  m.ridge_strength = lambda;
  m.horizon = returns.horizon;
  m.residual = rm;
  std::size_t unused = 0;
  auto design = pooled_design(m, panel, returns, b, e, exclude_neutral, unused);
  auto fit = fit_ridge(design.X, design.y, lambda, true, m.feature_names);
  m.weights = fit.weights;
  m.intercept = fit.intercept;
  m.fit_range = {panel.dates()[b], panel.dates()[e + returns.horizon - 1]};
  m.fit_rows = static_cast<std::size_t>(design.X.rows());
  return m;
}

namespace {

FactorModel standardised_composite(const SignalPanel& panel, const DateRange& fit_range, ModelKind kind) {
  auto [b, e] = row_span(panel.dates(), fit_range);
  const auto pca = pca_effective_dim(panel, b, e);
  FactorModel m;
  m.kind = kind;
  m.axes.assign(kAllAxes.begin(), kAllAxes.end());
  for (Axis a : m.axes) m.feature_names.push_back(axis_name(a) + "_z");
  m.mean.assign(pca.means.begin(), pca.means.end());
  m.scale.assign(pca.stds.begin(), pca.stds.end());
  m.weights = kind == ModelKind::Pc1 ? Eigen::VectorXd(pca.loadings)
                                     : Eigen::VectorXd::Constant(kNumAxes, 1.0 / kNumAxes);
  m.fit_range = {panel.dates()[b], panel.dates()[e - 1]};
  m.fit_rows = pca.n_rows;
  return m;
}

}  // namespace

FactorModel fit_pc1_composite(const SignalPanel& panel, const DateRange& fit_range) {
  return standardised_composite(panel, fit_range, ModelKind::Pc1);
}

FactorModel fit_equal_weight_composite(const SignalPanel& panel, const DateRange& fit_range) {
  return standardised_composite(panel, fit_range, ModelKind::EqualWeight);
}

CompositeScore composite(const SignalPanel& panel, const FactorModel& model, const DateRange& eval_range) {
  if (eval_range.overlaps(model.fit_range)) {
    throw LeakageError("evaluation range " + eval_range.str() + " overlaps fit range " + model.fit_range.str());
  }
  if (model.kind == ModelKind::Srf && !model.residual) throw ValidationError("SRF model lacks its residual stage");
  auto [b, e] = row_span(panel.dates(), eval_range);
  CompositeScore out;
  out.dates.assign(panel.dates().begin() + static_cast<std::ptrdiff_t>(b),
                   panel.dates().begin() + static_cast<std::ptrdiff_t>(e));
  out.tickers = panel.tickers();
  out.values.resize(static_cast<Eigen::Index>(e - b), static_cast<Eigen::Index>(panel.num_tickers()));
  for (std::size_t d = b; d < e; ++d) {
    for (std::size_t j = 0; j < panel.num_tickers(); ++j) {
      out.values(static_cast<Eigen::Index>(d - b), static_cast<Eigen::Index>(j)) = score_cell(model, panel, d, j);
    }
  }
  out.provenance = fmt::format("{} model {}", kind_token(model.kind), model.content_hash());
  return out;
}

std::string model_to_json(const FactorModel& model) {
  json j = model_body(model);
  j["content_hash"] = model.content_hash();
  return j.dump(2) + "\n";
}

FactorModel model_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("model file: ") + e.what(), 0);
  }
  try {
    FactorModel m;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "sfp") m.kind = ModelKind::Sfp;
    else if (kind == "srf") m.kind = ModelKind::Srf;
    else if (kind == "pc1") m.kind = ModelKind::Pc1;
    else if (kind == "equal_weight") m.kind = ModelKind::EqualWeight;
    else throw ValidationError("unknown model kind " + kind);
    for (const auto& a : j.at("axes")) m.axes.push_back(parse_axis(a.get<std::string>()));
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    auto w = j.at("weights").get<std::vector<double>>();
    m.weights = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    m.intercept = j.at("intercept").get<double>();
    m.mean = j.at("standardiser").at("mean").get<std::vector<double>>();
    m.scale = j.at("standardiser").at("scale").get<std::vector<double>>();
    m.ridge_strength = j.at("ridge_strength").get<double>();
    m.fit_range = {Date::parse(j.at("fit_range").at("first").get<std::string>()),
                   Date::parse(j.at("fit_range").at("last").get<std::string>())};
    m.horizon = j.at("horizon").get<std::size_t>();
    m.fit_rows = j.at("fit_rows").get<std::size_t>();
    if (!j.at("residual").is_null()) {
      ResidualModel r;
      r.intercept = j["residual"].at("intercept").get<std::array<double, kNumAxes>>();
      r.slope = j["residual"].at("slope").get<std::array<double, kNumAxes>>();
      m.residual = r;
    }
    const std::size_t p = m.axes.size();
    if (m.feature_names.size() != p || static_cast<std::size_t>(m.weights.size()) != p || m.mean.size() != p ||
        m.scale.size() != p) {
      throw ValidationError("model field lengths disagree");
    }
    for (double s : m.scale) {
      if (!(s > 0.0)) throw ValidationError("standardiser scales must be positive");
    }
    if (m.content_hash() != j.at("content_hash").get<std::string>()) {
      throw ValidationError("model content hash mismatch");
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model file: ") + e.what(), 0);
  }
}

void save_model(const std::filesystem::path& path, const FactorModel& model) {
  write_text_file(path, model_to_json(model));
}

FactorModel load_model(const std::filesystem::path& path) { return model_from_json(read_text_file(path)); }

// ---------------------------------------------------------------------------

std::vector<double> softmax_weights(std::span<const double> scores, double temperature) {
  if (scores.empty()) throw ValidationError("softmax needs a non-empty basket");
  if (!(temperature > 0.0)) throw ValidationError("softmax temperature must be positive");
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> w(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    w[i] = std::exp((scores[i] - top) / temperature);
    z += w[i];
  }
  for (double& x : w) x /= z;
  return w;
}

std::vector<double> scw_weights(const CompositeScore& scores, const Date& date,
                                const std::vector<std::string>& basket, double temperature) {
  auto row = scores.row_of(date);
  if (!row) throw AlignmentError("no scores for " + date.iso());
  std::vector<double> s;
  for (const auto& t : basket) {
    auto it = std::find(scores.tickers.begin(), scores.tickers.end(), t);
    if (it == scores.tickers.end()) throw ValidationError("ticker not scored: " + t);
    s.push_back(scores.values(static_cast<Eigen::Index>(*row), it - scores.tickers.begin()));
  }
  return softmax_weights(s, temperature);
}

TemperatureSelection select_temperature(const CompositeScore& scores, const MarketPanel& panel,
                                        const BacktestConfig& config, const std::vector<double>& grid) {
  if (grid.empty()) throw ConfigError("temperature grid is empty");
  TemperatureSelection sel;
  double best = -std::numeric_limits<double>::infinity();
  bool have = false;
  for (double t : grid) {
    auto res = backtest_topk(scores, panel, config, Weighting::scw(t), fmt::format("SCW T={}", t));
    std::optional<double> sharpe = metrics(res.curve).sharpe_value;
    sel.sharpe_by_temperature.emplace_back(t, sharpe);
    const double v = sharpe.value_or(-std::numeric_limits<double>::infinity());
    if (!have || v > best || (v == best && t > sel.temperature)) {
      best = v;
      sel.temperature = t;
      have = true;
    }
  }
  return sel;
}

// ---------------------------------------------------------------------------

FeatureBlock price_block(const FeaturePanel& features) {
  FeatureBlock b;
  b.name = "price";
  b.columns = features.names();
  b.values = features.values;
  return b;
}

FeatureBlock semantic_block(const SignalPanel& panel) {
  FeatureBlock b;
  b.name = "semantic";
  for (Axis a : kAllAxes) {
    b.columns.push_back(axis_name(a) + "_dev");
    b.values.push_back(panel.deviation(a));
  }
  return b;
}

std::string ForecasterModel::label() const {
  std::string name;
  for (const auto& b : block_names) name += (name.empty() ? "" : "+") + b;
  if (name == "price") name = "price-only";
  std::string out = fmt::format("Supervised {}, λ={:.0e}", name, lambda);
  if (tilt > 0.0) out += fmt::format(" + semantic tilt α={}", tilt);
  return out;
}

namespace {

struct BlockView {
  std::vector<const Eigen::MatrixXd*> cols;
  std::vector<std::string> names;
  std::vector<std::string> block_names;
};

BlockView view_blocks(const std::vector<FeatureBlock>& blocks, const SignalPanel& signals) {
  if (blocks.empty()) throw ConfigError("forecaster needs at least one feature block");
  BlockView v;
  for (const auto& b : blocks) {
    if (b.columns.empty() || b.columns.size() != b.values.size()) {
      throw ConfigError("feature block '" + b.name + "' is empty or malformed");
    }
    v.block_names.push_back(b.name);
    for (std::size_t c = 0; c < b.columns.size(); ++c) {
      const auto& m = b.values[c];
      if (static_cast<std::size_t>(m.rows()) != signals.num_dates() ||
          static_cast<std::size_t>(m.cols()) != signals.num_tickers()) {
        throw AlignmentError("feature " + b.name + "." + b.columns[c] + " is not aligned with the signal panel");
      }
      v.cols.push_back(&m);
      v.names.push_back(b.name + "." + b.columns[c]);
    }
  }
  return v;
}

bool row_features(const BlockView& v, std::size_t d, std::size_t j, Eigen::VectorXd& x) {
  for (std::size_t c = 0; c < v.cols.size(); ++c) {
    const double val = (*v.cols[c])(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j));
    if (!std::isfinite(val)) return false;
    x(static_cast<Eigen::Index>(c)) = val;
  }
  return true;
}

struct BaseFit {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  std::vector<double> mean, scale;
  double forecast_std = 0.0;
  FactorModel semantic;
  double semantic_mean = 0.0, semantic_std = 0.0;
};

BaseFit fit_base(const BlockView& v, const SignalPanel& signals, const ForwardReturns& returns,
                 const DateRange& range, double lambda) {
  auto [b, e] = labelled_rows(signals.dates(), range, returns.horizon);
  const auto p = static_cast<Eigen::Index>(v.cols.size());
  std::vector<Eigen::VectorXd> xs;
  std::vector<double> ys;
  Eigen::VectorXd x(p);
  for (std::size_t d = b; d < e; ++d) {
    for (std::size_t j = 0; j < signals.num_tickers(); ++j) {
      const double y = returns.values(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j));
      if (!std::isfinite(y) || !row_features(v, d, j, x)) continue;
      xs.push_back(x);
      ys.push_back(y);
    }
  }
  if (xs.size() < 100) throw RangeError(fmt::format("forecaster needs at least 100 stock-days, found {}", xs.size()));
  const auto n = static_cast<Eigen::Index>(xs.size());
  Eigen::MatrixXd X(n, p);
  for (Eigen::Index i = 0; i < n; ++i) X.row(i) = xs[static_cast<std::size_t>(i)].transpose();
  Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);

  BaseFit out;
  for (Eigen::Index c = 0; c < p; ++c) {
    const double mu = X.col(c).mean();
    const double sd = std::sqrt((X.col(c).array() - mu).square().sum() / static_cast<double>(n - 1));
    if (!(sd > 0.0)) throw DegenerateError("feature " + v.names[static_cast<std::size_t>(c)] + " is constant");
    out.mean.push_back(mu);
    out.scale.push_back(sd);
    X.col(c) = (X.col(c).array() - mu) / sd;
  }
  auto fit = fit_ridge(X, y, lambda, true, v.names);
  out.weights = fit.weights;
  out.intercept = fit.intercept;
  const Eigen::VectorXd pred = (X * fit.weights).array() + fit.intercept;
  const double pm = pred.mean();
  out.forecast_std = std::sqrt((pred.array() - pm).square().sum() / static_cast<double>(n - 1));
  if (!(out.forecast_std > 0.0)) {
    out.forecast_std = std::sqrt((y.array() - y.mean()).square().sum() / static_cast<double>(n - 1));
  }

  out.semantic = fit_sfp(signals, returns, range);
  double s1 = 0.0, s2 = 0.0;
  std::size_t cnt = 0;
  for (std::size_t d = b; d < e; ++d) {
    for (std::size_t j = 0; j < signals.num_tickers(); ++j) {
      if (!signals.non_neutral(d, j)) continue;
      const double s = score_cell(out.semantic, signals, d, j);
      s1 += s;
      s2 += s * s;
      ++cnt;
    }
  }
  if (cnt >= 2) {
    out.semantic_mean = s1 / static_cast<double>(cnt);
    const double var = (s2 - static_cast<double>(cnt) * out.semantic_mean * out.semantic_mean) /
                       static_cast<double>(cnt - 1);
    out.semantic_std = var > 0.0 ? std::sqrt(var) : 0.0;
  }
  return out;
}

ForecasterModel assemble(const BlockView& v, const BaseFit& f, double lambda, double tilt, double threshold,
                         const DateRange& range) {
  ForecasterModel m;
  m.block_names = v.block_names;
  m.feature_names = v.names;
  m.weights = f.weights;
  m.intercept = f.intercept;
  m.mean = f.mean;
  m.scale = f.scale;
  m.lambda = lambda;
  m.tilt = tilt;
  m.tilt_threshold = threshold;
  m.tilt_scale = f.forecast_std;
  m.semantic = f.semantic;
  m.semantic_mean = f.semantic_mean;
  m.semantic_std = f.semantic_std;
  m.fit_range = range;
  return m;
}

CompositeScore forecast_rows(const BlockView& v, const SignalPanel& signals, const ForecasterModel& m,
                             const DateRange& eval_range) {
  auto [b, e] = row_span(signals.dates(), eval_range);
  CompositeScore out;
  out.dates.assign(signals.dates().begin() + static_cast<std::ptrdiff_t>(b),
                   signals.dates().begin() + static_cast<std::ptrdiff_t>(e));
  out.tickers = signals.tickers();
  out.values.resize(static_cast<Eigen::Index>(e - b), static_cast<Eigen::Index>(signals.num_tickers()));
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.cols.size()));
  for (std::size_t d = b; d < e; ++d) {
    for (std::size_t j = 0; j < signals.num_tickers(); ++j) {
      double f = kNaN;
      if (row_features(v, d, j, x)) {
        f = m.intercept;
        for (Eigen::Index c = 0; c < x.size(); ++c) {
          const auto k = static_cast<std::size_t>(c);
          f += m.weights(c) * (x(c) - m.mean[k]) / m.scale[k];
        }
        if (m.tilt > 0.0 && m.semantic_std > 0.0 && signals.non_neutral(d, j)) {
          const double z = (score_cell(m.semantic, signals, d, j) - m.semantic_mean) / m.semantic_std;
          if (std::abs(z) > m.tilt_threshold) f += m.tilt * m.tilt_scale * z;
        }
      }
      out.values(static_cast<Eigen::Index>(d - b), static_cast<Eigen::Index>(j)) = f;
    }
  }
  out.provenance = m.label();
  return out;
}

}  // namespace

ForecasterModel fit_forecaster(const std::vector<FeatureBlock>& blocks, const SignalPanel& signals,
                               const ForwardReturns& returns, const MarketPanel& market,
                               const DateRange& fit_range, const DateRange& validation_range,
                               const ForecasterOptions& options) {
  check_aligned(signals, returns);
  if (options.lambda_grid.empty() || options.tilt_grid.empty()) throw ConfigError("forecaster grids must be non-empty");
  if (fit_range.overlaps(validation_range)) {
    throw LeakageError("validation range " + validation_range.str() + " overlaps fit range " + fit_range.str());
  }
  if (!(fit_range.last < validation_range.first)) throw ValidationError("validation range must follow the fit range");
  const auto view = view_blocks(blocks, signals);

  BacktestConfig bt;
  bt.k = options.k;
  bt.cost_rate = options.cost_rate;
  bt.period = validation_range;

  std::vector<ForecasterCandidate> candidates;
  const ForecasterCandidate* best = nullptr;
  for (double lambda : options.lambda_grid) {
    const auto base = fit_base(view, signals, returns, fit_range, lambda);
    for (double tilt : options.tilt_grid) {
      auto m = assemble(view, base, lambda, tilt, options.tilt_threshold, fit_range);
      auto scores = forecast_rows(view, signals, m, validation_range);
      auto res = backtest_topk(scores, market, bt, Weighting::equal(), m.label());
      candidates.push_back({lambda, tilt, metrics(res.curve).sharpe_value});
    }
  }
  constexpr double kLow = -std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) {
    if (!best) {
      best = &c;
      continue;
    }
    const double v = c.validation_sharpe.value_or(kLow);
    const double bv = best->validation_sharpe.value_or(kLow);
    if (v > bv || (v == bv && (c.lambda > best->lambda || (c.lambda == best->lambda && c.tilt < best->tilt)))) {
      best = &c;
    }
  }
  const DateRange refit = options.refit_with_validation ? DateRange{fit_range.first, validation_range.last} : fit_range;
  auto base = fit_base(view, signals, returns, refit, best->lambda);
  auto model = assemble(view, base, best->lambda, best->tilt, options.tilt_threshold, refit);
  model.candidates = std::move(candidates);
  return model;
}

CompositeScore forecast(const std::vector<FeatureBlock>& blocks, const SignalPanel& signals,
                        const ForecasterModel& model, const DateRange& eval_range) {
  if (eval_range.overlaps(model.fit_range)) {
    throw LeakageError("evaluation range " + eval_range.str() + " overlaps fit range " + model.fit_range.str());
  }
  const auto view = view_blocks(blocks, signals);
  if (view.names != model.feature_names) throw ValidationError("feature blocks do not match the fitted model");
  return forecast_rows(view, signals, model, eval_range);
}

}  // namespace ssai
