// Command-line front end: run experiments, validate inputs, generate synthetic panels.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ssai/errors.hpp"
#include "ssai/experiment.hpp"
#include "ssai/market_data.hpp"
#include "ssai/signals.hpp"
#include "ssai/synthetic.hpp"
#include "ssai/util.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kDataError = 2;

int cmd_run(const fs::path& config_path) {
  const auto config = ssai::load_experiment_config(config_path);
  const auto summary = ssai::run_experiment(config);
  for (const auto& w : summary.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << fmt::format("{} -> {}\n", ssai::experiment_kind_name(config.kind), summary.output_dir.string());
  for (const auto& [name, hash] : summary.artifacts) std::cout << fmt::format("  {}  {}\n", hash, name);
  return kOk;
}

int cmd_validate(const std::vector<fs::path>& paths) {
  const auto report = ssai::validate_inputs(paths);
  std::cout << report.str();
  return report.ok() ? kOk : kDataError;
}

int cmd_synth(const fs::path& spec_path, std::uint64_t seed, const fs::path& out_dir) {
  ssai::SyntheticSpec spec;
  try {
    spec = ssai::parse_synthetic_spec(ssai::read_text_file(spec_path));
  } catch (const ssai::Error& e) {
    throw ssai::ConfigError(e.what());
  }
  const auto data = ssai::synth_panel(spec, seed);
  ssai::write_text_file(out_dir / "prices.csv", ssai::format_price_panel(data.market));
  ssai::write_text_file(out_dir / "signals.csv", ssai::format_signal_panel(data.signals));
  std::string truth = "axis,coefficient\n";
  for (std::size_t k = 0; k < ssai::kNumAxes; ++k) {
    truth += fmt::format("{},{}\n", ssai::axis_name(ssai::kAllAxes[k]), ssai::format_exact(data.truth.coefficients[k]));
  }
  ssai::write_text_file(out_dir / "truth.csv", truth);
  std::cout << fmt::format("wrote {} dates x {} tickers to {}\n", data.market.num_dates(),
                           data.market.num_tickers(), out_dir.string());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic signal factor and backtest toolkit"};
  app.set_version_flag("--version", std::string(ssai::kLibraryVersion));
  app.require_subcommand(1);

  fs::path config_path;
  auto* run = app.add_subcommand("run", "Run one experiment from a JSON config");
  run->add_option("config", config_path, "Experiment config file")->required();

  std::vector<fs::path> inputs;
  auto* validate = app.add_subcommand("validate", "Check price, signal and article files");
  validate->add_option("paths", inputs, "Input files")->required();

  fs::path spec_path;
  std::uint64_t seed = 0;
  fs::path out_dir = ".";
  auto* synth = app.add_subcommand("synth", "Write a synthetic price and signal panel");
  synth->add_option("spec", spec_path, "Synthetic spec (JSON)")->required();
  synth->add_option("seed", seed, "Generator seed")->required();
  synth->add_option("-o,--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(config_path);
    if (*validate) return cmd_validate(inputs);
    if (*synth) return cmd_synth(spec_path, seed, out_dir);
  } catch (const ssai::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ssai::Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kOk;
}
