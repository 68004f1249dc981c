#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "ssai/errors.hpp"
#include "ssai/experiment.hpp"
#include "ssai/market_data.hpp"
#include "ssai/synthetic.hpp"
#include "ssai/util.hpp"

using namespace ssai;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("ssai_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

nlohmann::json base_config(const std::string& kind, const fs::path& out, std::size_t tickers = 8) {
  return {
      {"kind", kind},
      {"seed", 3},
      {"output_dir", out.string()},
      {"data", {{"synthetic", {{"num_tickers", tickers}, {"num_days", 700}, {"coefficients", {0.01, 0, 0, 0}}}}}},
      {"splits",
       {{"train", {"2013-01-01", "2014-06-30"}},
        {"validation", {"2014-07-01", "2014-12-31"}},
        {"test", {"2015-01-01", "2015-10-31"}}}},
      {"params", {{"k", 3}}},
  };
}

RunSummary run(const nlohmann::json& j) { return run_experiment(parse_experiment_config(j.dump())); }

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(SSAI_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("experiment kinds round-trip their names") {
  const auto kinds = all_experiment_kinds();
  CHECK(kinds.size() == 12);
  for (auto k : kinds) CHECK(parse_experiment_kind(experiment_kind_name(k)) == k);
  CHECK_THROWS_AS(parse_experiment_kind("ppo"), ConfigError);
}

TEST_CASE("config errors") {
  const auto good = base_config("sfp", "out");
  CHECK_NOTHROW(parse_experiment_config(good.dump()));

  auto bad = good;
  bad["colour"] = "blue";
  CHECK_THROWS_AS(parse_experiment_config(bad.dump()), ConfigError);
  bad = good;
  bad["params"]["kk"] = 3;
  CHECK_THROWS_AS(parse_experiment_config(bad.dump()), ConfigError);
  bad = good;
  bad["splits"]["test"] = {"2014-12-01", "2015-10-31"};
  CHECK_THROWS_AS(parse_experiment_config(bad.dump()), ConfigError);
  bad = good;
  bad["splits"]["train"] = {"2014-06-30", "2013-01-01"};
  CHECK_THROWS_AS(parse_experiment_config(bad.dump()), ConfigError);
  bad = good;
  bad["kind"] = "nonsense";
  CHECK_THROWS_AS(parse_experiment_config(bad.dump()), ConfigError);
  bad = good;
  bad["data"] = nlohmann::json::object();
  CHECK_THROWS_AS(parse_experiment_config(bad.dump()), ConfigError);
  bad = good;
  bad["data"]["prices"] = "p.csv";
  CHECK_THROWS_AS(parse_experiment_config(bad.dump()), ConfigError);
  bad = good;
  bad["params"]["cost_rate"] = -0.1;
  CHECK_THROWS_AS(parse_experiment_config(bad.dump()), ConfigError);
  bad = good;
  bad["params"]["costs"] = {0.0, -0.001};
  CHECK_THROWS_AS(parse_experiment_config(bad.dump()), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("{not json"), ConfigError);
}

TEST_CASE("every kind runs and its manifest hashes the written files") {
  TempDir tmp("kinds");
  for (auto k : all_experiment_kinds()) {
    const auto name = experiment_kind_name(k);
    CAPTURE(name);
    const auto out = tmp.path / name;
    const auto summary = run(base_config(name, out));
    REQUIRE(fs::exists(out / "manifest.json"));
    CHECK_FALSE(fs::exists(out.string() + ".partial"));
    const auto manifest = nlohmann::json::parse(read_text_file(out / "manifest.json"));
    CHECK(manifest["kind"] == name);
    CHECK(manifest["artifacts"].size() == summary.artifacts.size());
    for (const auto& [file, hash] : summary.artifacts) {
      CHECK(sha256_file(out / file) == hash);
      CHECK(manifest["artifacts"][file] == hash);
    }
  }
}

TEST_CASE("baselines on three tickers") {
  TempDir tmp("baselines");
  auto cfg = base_config("baselines", tmp.path / "out", 3);
  cfg["params"] = nlohmann::json::object();
  const auto summary = run(cfg);
  const auto rows = lines(read_text_file(tmp.path / "out" / "metrics.csv"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[1].rfind("Buy & Hold (EW),", 0) == 0);
  CHECK_FALSE(summary.warnings.empty());
}

TEST_CASE("cost sweep rows fall with cost") {
  TempDir tmp("sweep");
  auto cfg = base_config("cost_sweep", tmp.path / "out");
  cfg["params"]["costs"] = {0.0, 0.001};
  run(cfg);
  const auto rows = lines(read_text_file(tmp.path / "out" / "cost_sweep.csv"));
  REQUIRE(rows.size() == 3);
  auto cr = [](const std::string& row) { return std::stod(row.substr(row.find(',') + 1)); };
  CHECK(cr(rows[1]) >= cr(rows[2]));
  CHECK(rows[1].rfind("0.0000,", 0) == 0);
}

TEST_CASE("failed runs leave nothing behind and foreign directories are protected") {
  TempDir tmp("fail");
  write_text_file(tmp.path / "prices.csv", "date,ticker,close\n2020-01-02,AAA,10\n2020-01-03,AAA,oops\n");
  write_text_file(tmp.path / "signals.csv",
                  "date,ticker,sentiment,risk,confidence,volatility_forecast,non_neutral\n");
  nlohmann::json cfg = base_config("sfp", tmp.path / "out");
  cfg["data"] = {{"prices", "prices.csv"}, {"signals", "signals.csv"}};
  const auto config = parse_experiment_config(cfg.dump(), tmp.path);
  CHECK_THROWS_AS(run_experiment(config), ParseError);
  CHECK_FALSE(fs::exists(tmp.path / "out"));
  CHECK_FALSE(fs::exists(tmp.path / "out.partial"));

  fs::create_directories(tmp.path / "mine");
  write_text_file(tmp.path / "mine" / "notes.txt", "keep");
  CHECK_THROWS_AS(run(base_config("baselines", tmp.path / "mine")), ConfigError);
  CHECK(read_text_file(tmp.path / "mine" / "notes.txt") == "keep");

  // A previous run's directory is replaced.
  auto again = base_config("baselines", tmp.path / "rerun");
  run(again);
  write_text_file(tmp.path / "rerun" / "stale.txt", "x");
  run(again);
  CHECK_FALSE(fs::exists(tmp.path / "rerun" / "stale.txt"));
}

TEST_CASE("runs are deterministic and file inputs match the in-memory panel") {
  TempDir tmp("det");
  const auto a = run(base_config("sfp", tmp.path / "a"));
  const auto b = run(base_config("sfp", tmp.path / "b"));
  CHECK(a.artifacts == b.artifacts);

  SyntheticSpec spec;
  spec.num_tickers = 8;
  spec.num_days = 700;
  spec.coefficients = {0.01, 0, 0, 0};
  const auto data = synth_panel(spec, 3);
  write_text_file(tmp.path / "prices.csv", format_price_panel(data.market));
  write_text_file(tmp.path / "signals.csv", format_signal_panel(data.signals));
  auto cfg = base_config("sfp", "from_files");
  cfg["data"] = {{"prices", "prices.csv"}, {"signals", "signals.csv"}};
  const auto c = run_experiment(parse_experiment_config(cfg.dump(), tmp.path));
  CHECK(c.output_dir == tmp.path / "from_files");
  CHECK(read_text_file(tmp.path / "a" / "metrics.csv") == read_text_file(tmp.path / "from_files" / "metrics.csv"));
  CHECK(read_text_file(tmp.path / "a" / "equity_curve.csv") ==
        read_text_file(tmp.path / "from_files" / "equity_curve.csv"));
}

TEST_CASE("input validation") {
  TempDir tmp("validate");
  SyntheticSpec spec;
  spec.num_tickers = 3;
  spec.num_days = 40;
  const auto data = synth_panel(spec, 1);
  const auto prices = tmp.path / "prices.csv";
  const auto signals = tmp.path / "signals.csv";
  write_text_file(prices, format_price_panel(data.market));
  write_text_file(signals, format_signal_panel(data.signals));
  const auto ok = validate_inputs({prices, signals});
  CHECK(ok.ok());
  CHECK(ok.hashes.size() == 2);

  auto text = format_signal_panel(data.signals);
  const auto header_end = text.find('\n');
  const auto row_end = text.find('\n', header_end + 1);
  auto row = text.substr(header_end + 1, row_end - header_end - 1);
  const auto c1 = row.find(',', row.find(',') + 1);
  const auto c2 = row.find(',', c1 + 1);
  row = row.substr(0, c1 + 1) + "6" + row.substr(c2);
  const auto bad_scores = tmp.path / "bad_scores.csv";
  write_text_file(bad_scores, text.substr(0, header_end + 1) + row + text.substr(row_end));
  const auto r1 = validate_inputs({prices, bad_scores});
  CHECK_FALSE(r1.ok());

  const auto shifted = tmp.path / "shifted.csv";
  write_text_file(shifted, format_signal_panel(data.signals.slice_rows(5, 40)));
  write_text_file(tmp.path / "short_prices.csv", format_price_panel(data.market.slice_rows(0, 30)));
  const auto r2 = validate_inputs({tmp.path / "short_prices.csv", shifted});
  CHECK_FALSE(r2.ok());
  CHECK(r2.str().find("FAIL") != std::string::npos);

  CHECK_FALSE(validate_inputs({tmp.path / "missing.csv"}).ok());
}

TEST_CASE("command-line exit codes") {
  TempDir tmp("cli");
  const auto good = tmp.path / "good.json";
  write_text_file(good, base_config("baselines", tmp.path / "out").dump());
  CHECK(cli("run " + good.string()) == 0);
  CHECK(fs::exists(tmp.path / "out" / "manifest.json"));

  auto bad = base_config("baselines", tmp.path / "out2");
  bad["params"]["unknown_knob"] = 1;
  write_text_file(tmp.path / "bad.json", bad.dump());
  CHECK(cli("run " + (tmp.path / "bad.json").string()) == 1);

  write_text_file(tmp.path / "prices.csv", "date,ticker,close\n2020-01-02,AAA,0\n");
  write_text_file(tmp.path / "signals.csv", "date,ticker,sentiment,risk,confidence,volatility_forecast,non_neutral\n");
  nlohmann::json data_bad = base_config("baselines", tmp.path / "out3");
  data_bad["data"] = {{"prices", "prices.csv"}, {"signals", "signals.csv"}};
  write_text_file(tmp.path / "data_bad.json", data_bad.dump());
  CHECK(cli("run " + (tmp.path / "data_bad.json").string()) == 2);

  CHECK(cli("validate " + (tmp.path / "prices.csv").string()) == 2);
  CHECK(cli("") == 1);
  CHECK(cli("frobnicate") == 1);

  write_text_file(tmp.path / "spec.json", R"({"num_tickers": 2, "num_days": 30})");
  CHECK(cli("synth " + (tmp.path / "spec.json").string() + " 7 -o " + (tmp.path / "synth").string()) == 0);
  CHECK(fs::exists(tmp.path / "synth" / "prices.csv"));
  CHECK(cli("validate " + (tmp.path / "synth" / "prices.csv").string() + " " +
            (tmp.path / "synth" / "signals.csv").string()) == 0);
}
