#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssai/date.hpp"
#include "ssai/synthetic.hpp"

namespace ssai {

enum class ExperimentKind {
  Sfp,
  Srf,
  Scw,
  Pc1,
  Softmax,
  Forecaster,
  Baselines,
  CostSweep,
  Stratified,
  Subperiod,
  EnvEval,
  ValidationSuite,
};

std::string experiment_kind_name(ExperimentKind k);
/// Throws ConfigError for unknown names.
ExperimentKind parse_experiment_kind(std::string_view name);
std::vector<ExperimentKind> all_experiment_kinds();

struct DataSource {
  std::optional<std::filesystem::path> prices;
  /// Aggregated panel (`date,ticker,sentiment,...,non_neutral`).
  std::optional<std::filesystem::path> signals;
  /// Article-level cache, aggregated over `window` trading days.
  std::optional<std::filesystem::path> articles;
  std::optional<SyntheticSpec> synthetic;
  std::size_t window = 3;
};

struct Splits {
  std::optional<DateRange> train;
  std::optional<DateRange> validation;
  std::optional<DateRange> test;
};

/// JSON run description. Relative paths resolve against the config file's
/// directory. `params` holds kind-specific settings; unknown keys are rejected.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Sfp;
  DataSource data;
  Splits splits;
  std::vector<std::string> universe;
  nlohmann::json params = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  /// Canonical form used for the provenance hash.
  std::string canonical;
};

/// Throws ConfigError on malformed or inconsistent configuration.
ExperimentConfig parse_experiment_config(std::string_view json_text,
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct RunSummary {
  std::filesystem::path output_dir;
  /// Artifact name to SHA-256.
  std::map<std::string, std::string> artifacts;
  std::vector<std::string> warnings;
};

/// Computes every artifact in memory, writes them to a sibling staging directory
/// and renames it into place. On error nothing is left behind. An existing output
/// directory is replaced only when it holds a previous run's manifest.
RunSummary run_experiment(const ExperimentConfig& config);

struct ValidationCheck {
  std::string name;
  bool passed = true;
  std::vector<std::string> details;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  std::vector<std::pair<std::string, std::string>> hashes;

  bool ok() const;
  std::string str() const;
};

/// Sniffs each file by header (price panel, article cache, signal panel) and
/// checks alignment, score ranges and date coverage. Never throws for bad data.
ValidationReport validate_inputs(const std::vector<std::filesystem::path>& paths);

}  // namespace ssai
