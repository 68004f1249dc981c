#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssai/composite_score.hpp"
#include "ssai/market_data.hpp"
#include "ssai/portfolio.hpp"
#include "ssai/signals.hpp"

namespace ssai {

struct RidgeFit {
  Eigen::VectorXd weights;
  double intercept = 0.0;
};

/// Minimises |y - Xw - b|^2 + lambda |w|^2 through the normal equations, with an
/// unpenalised intercept (fitted by centring). At lambda = 0 a rank-deficient
/// design throws RankError naming the dependent columns.
RidgeFit fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                   bool fit_intercept = true, const std::vector<std::string>& names = {});

enum class ModelKind { Sfp, Srf, Pc1, EqualWeight };
std::string model_kind_name(ModelKind k);

/// Per-axis regression of each axis on sentiment. The sentiment entry is (0, 0).
struct ResidualModel {
  std::array<double, kNumAxes> intercept{};
  std::array<double, kNumAxes> slope{};

  double residual(Axis a, double value, double sentiment) const {
    const auto j = static_cast<std::size_t>(a);
    return value - intercept[j] - slope[j] * sentiment;
  }
};

/// Frozen linear composite. Feature j is `(raw_j - mean[j]) / scale[j]` where raw_j
/// is the axis deviation (Sfp), the sentiment deviation or axis residual (Srf), or
/// the raw axis value (Pc1, EqualWeight).
struct FactorModel {
  ModelKind kind = ModelKind::Sfp;
  std::vector<Axis> axes;
  std::vector<std::string> feature_names;
  Eigen::VectorXd weights;
  double intercept = 0.0;
  std::vector<double> mean;
  std::vector<double> scale;
  double ridge_strength = 0.0;
  DateRange fit_range;
  std::size_t horizon = 0;
  std::size_t fit_rows = 0;
  std::optional<ResidualModel> residual;

  /// SHA-256 of the canonical serialisation.
  std::string content_hash() const;
};

struct SfpOptions {
  AxisSet axes = AxisSet::all();
  double lambda = 1e-3;
  bool exclude_neutral = false;
};

/// Pools every stock-day in `fit_range` whose forward label is also realised
/// inside `fit_range`. Throws DegenerateError without any non-neutral stock-day
/// and RangeError with fewer than 100 usable stock-days.
FactorModel fit_sfp(const SignalPanel& panel, const ForwardReturns& returns, const DateRange& fit_range,
                    const SfpOptions& options = {});

/// Residualises risk, confidence and volatility on sentiment, then ridge-fits on
/// [sentiment - 3, e_risk, e_conf, e_vol]. Constant sentiment throws DegenerateError.
FactorModel fit_srf(const SignalPanel& panel, const ForwardReturns& returns, const DateRange& fit_range,
                    double lambda = 1e-3, bool exclude_neutral = false);

/// Standardised-axis composites with statistics from non-neutral stock-days of
/// `fit_range`. PC1 weights are the first principal loadings.
FactorModel fit_pc1_composite(const SignalPanel& panel, const DateRange& fit_range);
FactorModel fit_equal_weight_composite(const SignalPanel& panel, const DateRange& fit_range);

/// Scores every panel date in `eval_range`. Throws LeakageError when the range
/// overlaps the model's fit range.
CompositeScore composite(const SignalPanel& panel, const FactorModel& model, const DateRange& eval_range);

std::string model_to_json(const FactorModel& model);
/// Verifies the stored content hash; a mismatch throws ValidationError.
FactorModel model_from_json(std::string_view text);
void save_model(const std::filesystem::path& path, const FactorModel& model);
FactorModel load_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Conviction weighting

/// exp(s / T) normalised, with max-subtraction. Requires T > 0 and non-empty input.
std::vector<double> softmax_weights(std::span<const double> scores, double temperature);

/// Softmax over the basket's scores on one date. Unknown tickers throw ValidationError.
std::vector<double> scw_weights(const CompositeScore& scores, const Date& date,
                                const std::vector<std::string>& basket, double temperature);

inline const std::vector<double> kDefaultTemperatureGrid{0.25, 0.5, 1.0, 2.0, 4.0};

struct TemperatureSelection {
  double temperature = 1.0;
  std::vector<std::pair<double, std::optional<double>>> sharpe_by_temperature;
};

/// Validation Sharpe of the SCW backtest per grid member over `config.period`;
/// the best wins, ties go to the largest temperature. Undefined Sharpe ranks last.
TemperatureSelection select_temperature(const CompositeScore& scores, const MarketPanel& panel,
                                        const BacktestConfig& config,
                                        const std::vector<double>& grid = kDefaultTemperatureGrid);

// ---------------------------------------------------------------------------
// Supervised forecaster

/// Named feature columns, each a (date x ticker) matrix aligned to the panel.
/// NaN marks unavailable cells (e.g. indicator warm-up).
struct FeatureBlock {
  std::string name;
  std::vector<std::string> columns;
  std::vector<Eigen::MatrixXd> values;
};

FeatureBlock price_block(const FeaturePanel& features);
FeatureBlock semantic_block(const SignalPanel& panel);

struct ForecasterOptions {
  std::vector<double> lambda_grid{1e-5, 1e-3, 1e-1, 1.0, 10.0};
  std::vector<double> tilt_grid{0.0, 0.5, 1.0};
  /// Refit on fit_range plus validation_range after selection.
  bool refit_with_validation = true;
  /// |z| above this marks a high-conviction stock-day.
  double tilt_threshold = 1.0;
  std::size_t k = 10;
  double cost_rate = 0.001;
};

struct ForecasterCandidate {
  double lambda = 0.0;
  double tilt = 0.0;
  std::optional<double> validation_sharpe;
};

/// Ridge on standardised block features, plus an optional tilt of
/// `tilt * tilt_scale * z` on covered stock-days with |z| > threshold, where z is
/// the standardised SFP composite of the signal deviations.
struct ForecasterModel {
  std::vector<std::string> block_names;
  std::vector<std::string> feature_names;
  Eigen::VectorXd weights;
  double intercept = 0.0;
  std::vector<double> mean;
  std::vector<double> scale;
  double lambda = 0.0;
  double tilt = 0.0;
  double tilt_threshold = 1.0;
  double tilt_scale = 0.0;
  FactorModel semantic;
  double semantic_mean = 0.0;
  double semantic_std = 1.0;
  DateRange fit_range;
  std::vector<ForecasterCandidate> candidates;

  std::string label() const;
};

/// Grid search over (lambda, tilt) by validation Sharpe of the top-k rule; ties go
/// to the larger lambda, then the smaller tilt.
ForecasterModel fit_forecaster(const std::vector<FeatureBlock>& blocks, const SignalPanel& signals,
                               const ForwardReturns& returns, const MarketPanel& market,
                               const DateRange& fit_range, const DateRange& validation_range,
                               const ForecasterOptions& options = {});

/// Forecasts on `eval_range`; rows with unavailable features are NaN.
CompositeScore forecast(const std::vector<FeatureBlock>& blocks, const SignalPanel& signals,
                        const ForecasterModel& model, const DateRange& eval_range);

}  // namespace ssai
