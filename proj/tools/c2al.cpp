// c2al: run collaborative active-learning experiments.
//
//   c2al generate --config <path> [--out <dir>]
//   c2al run      --config <path> [--out <dir>] [--seeds a,b,c] [--debug-matrices]
//   c2al report   --config <path> [--out <dir>]
//
// Exit codes: 0 success, 2 config error, 3 runtime or protocol error.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "c2al/scenario.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

void configure_logging() {
  const char* level = std::getenv("C2AL_LOG");
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw c2al::ConfigError("--seeds: '" + item + "' is not a seed");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();

  CLI::App app{"Collaborative active learning simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string seeds;
  bool debug_matrices = false;

  auto* generate = app.add_subcommand("generate", "write the scenario's dataset as CSV");
  auto* run = app.add_subcommand("run", "run every seed of a scenario");
  auto* report = app.add_subcommand("report", "aggregate a finished run into plot data");
  for (auto* sub : {generate, run, report}) {
    sub->add_option("--config", config_path, "scenario JSON")->required();
    sub->add_option("--out", out_dir, "output directory (default: output_dir from the config)");
  }
  run->add_option("--seeds", seeds, "comma-separated session seeds overriding the config");
  run->add_flag("--debug-matrices", debug_matrices, "dump ensemble training matrices per round");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  c2al::ScenarioConfig config;
  try {
    config = c2al::load_scenario(config_path);
    if (!seeds.empty()) {
      config.seeds = parse_seeds(seeds);
      config.validate();
    }
  } catch (const c2al::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  const std::filesystem::path out = out_dir.empty() ? config.output_dir : out_dir;

  try {
    if (generate->parsed()) {
      c2al::generate_to(config, out);
      std::cout << "wrote " << (out / "dataset.csv").string() << '\n';
    } else if (run->parsed()) {
      c2al::RunOptions options;
      options.out_dir = out;
      options.debug_matrices = debug_matrices;
      const auto result = c2al::run_scenario(config, options);
      for (const auto& row : result.summary["final_auc"]) {
        std::cout << "collaborator " << row["collaborator"] << ": final AUC median " << row["median"] << " (min "
                  << row["min"] << ", max " << row["max"] << ")\n";
      }
      std::cout << "wrote " << (out / "summary.json").string() << '\n';
    } else if (report->parsed()) {
      c2al::write_report(out);
      std::cout << "wrote " << (out / "report").string() << '\n';
    }
  } catch (const c2al::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}
