// mtsecom command line: run, sweep and train.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtsecom/classifier.h"
#include "mtsecom/harness.h"
#include "mtsecom/telemetry.h"

namespace fs = std::filesystem;
using namespace mtsecom;

namespace {

constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct Overrides {
  std::string config_path;
  std::uint64_t seed = 0;
  double attack_rate = 0.0;
  int vn_count = 0;
  int pm_count = 0;
  int timesteps = 0;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* rate_opt = nullptr;
  CLI::Option* vn_opt = nullptr;
  CLI::Option* pm_opt = nullptr;
  CLI::Option* steps_opt = nullptr;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON run configuration");
  o.seed_opt = cmd->add_option("--seed", o.seed, "RNG seed");
  o.rate_opt = cmd->add_option("--attack-rate", o.attack_rate, "attack probability");
  o.vn_opt = cmd->add_option("--vn-count", o.vn_count, "number of virtual nodes");
  o.pm_opt = cmd->add_option("--pm-count", o.pm_count, "number of physical nodes");
  o.steps_opt = cmd->add_option("--timesteps", o.timesteps, "simulated timesteps");
}

harness::RunConfig resolve(const Overrides& o) {
  harness::RunConfig c = o.config_path.empty() ? harness::RunConfig{}
                                               : harness::load_config(o.config_path);
  if (*o.seed_opt) {
    c.seed = o.seed;
    c.classifier.seed = o.seed;
  }
  if (*o.rate_opt) c.attack_rate = o.attack_rate;
  if (*o.vn_opt) c.vn_count = o.vn_count;
  if (*o.pm_opt) c.pm_count = o.pm_count;
  if (*o.steps_opt) c.timesteps = o.timesteps;
  c.validate();
  return c;
}

std::vector<double> parse_rates(const std::string& text) {
  std::vector<double> rates;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double r = 0.0;
    try {
      r = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw harness::ConfigError("bad rate '" + item + "'");
    rates.push_back(r);
  }
  return rates;
}

std::vector<telemetry::TraceSeries> collect_traces(const fs::path& path, int seq_len) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  std::vector<telemetry::TraceSeries> all;
  for (const auto& f : files) {
    auto loaded = telemetry::load_traces(f, {}, seq_len);
    for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
    for (auto& s : loaded.series) all.push_back(std::move(s));
  }
  if (all.empty()) throw telemetry::TraceError("no usable traces under " + path.string());
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trust-aware security simulation for multi-tenant digital twins"};
  app.require_subcommand(1);

  Overrides run_o;
  std::string run_out;
  std::string run_format = "csv";
  std::string trust_log;
  std::string topology_log;
  auto* run = app.add_subcommand("run", "run one simulation and write its report");
  add_overrides(run, run_o);
  run->add_option("--out", run_out, "report path")->required();
  run->add_option("--format", run_format, "csv or json");
  run->add_option("--trust-log", trust_log, "per-timestep trust CSV");
  run->add_option("--topology-log", topology_log, "per-timestep topology JSON lines");

  Overrides sweep_o;
  std::string sweep_rates = "0.05,0.25,0.5,0.75,0.9";
  std::string sweep_out;
  std::string sweep_format = "csv";
  auto* sw = app.add_subcommand("sweep", "one run per attack rate");
  add_overrides(sw, sweep_o);
  sw->add_option("--rates", sweep_rates, "comma-separated attack rates");
  sw->add_option("--out", sweep_out, "report path")->required();
  sw->add_option("--format", sweep_format, "csv or json");

  Overrides train_o;
  std::string traces_path;
  std::string ckpt_out;
  auto* tr = app.add_subcommand("train", "train the classifier on trace files");
  add_overrides(tr, train_o);
  tr->add_option("--traces", traces_path, "trace CSV file or directory")->required();
  tr->add_option("--out", ckpt_out, "checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  harness::RunConfig config;
  try {
    if (*run) {
      config = resolve(run_o);
      harness::format_from_string(run_format);
    } else if (*sw) {
      config = resolve(sweep_o);
      harness::format_from_string(sweep_format);
    } else {
      config = resolve(train_o);
    }
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    if (*run) {
      const auto report = harness::run_simulation(config);
      harness::emit_report(report, run_out, harness::format_from_string(run_format));
      if (!trust_log.empty()) harness::write_trust_log(report, trust_log);
      if (!topology_log.empty()) harness::write_topology_log(report, topology_log);
    } else if (*sw) {
      std::vector<double> rates;
      try {
        rates = parse_rates(sweep_rates);
      } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
      }
      const auto reports = harness::sweep(config, rates);
      harness::emit_reports(reports, sweep_out, harness::format_from_string(sweep_format));
    } else {
      auto traces = collect_traces(traces_path, config.seq_len);
      const auto result = harness::train_on_traces(config, std::move(traces));
      classifier::save_checkpoint(result.model, ckpt_out);
      std::cerr << "trained " << result.report.epochs_run << " epochs, best val loss "
                << result.report.val_loss.at(result.report.best_epoch) << "\n";
    }
  } catch (const harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return 0;
}
