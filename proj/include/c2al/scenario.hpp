#pragma once

// Scenario configs and the experiment runner behind the `c2al` command line.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "c2al/metrics.hpp"
#include "c2al/protocol.hpp"
#include "c2al/synthdata.hpp"

namespace c2al {

struct PartitionConfig {
  std::size_t common_count = 0;
  std::uint64_t seed = 7;
  /// Explicit assignment; when set, `common` plus these replace the seeded deal.
  std::optional<std::vector<std::vector<FeatureIndex>>> private_sets;
  std::vector<FeatureIndex> common;
};

struct SplitConfig {
  std::size_t warm_size = 100;
  double test_fraction = 0.3;
};

struct ScenarioConfig {
  DatasetSpec dataset;
  PartitionConfig partition;
  SplitConfig split;
  RoundConfig protocol;
  std::size_t importance_repeats = 10;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string output_dir = "runs";

  void validate() const;
};

/// Strict parse: unknown keys and wrong types raise ConfigError naming the field.
ScenarioConfig parse_scenario(const nlohmann::json& j);
ScenarioConfig load_scenario(const std::filesystem::path& path);

/// Fully resolved config (defaults filled in); parse_scenario(to_json(c)) == c.
nlohmann::json to_json(const ScenarioConfig& config);

FeaturePartition resolve_partition(const ScenarioConfig& config);

struct MetricRow {
  Round round = 0;
  CollaboratorId collaborator = 0;  // 0-based; CSV shows it 1-based
  std::string model_source;
  double auc = 0.0;
};

struct RoundCheck {
  Round round = 0;
  bool labels_consistent = false;
  std::size_t pool_size = 0;
  std::size_t label_store_size = 0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<BaseModelInfo> base_models;
  std::vector<MetricRow> metrics;
  std::vector<ImportanceReport> importance;  // one per collaborator, final models
  std::vector<RoundCheck> checks;
  MessageLog log;
  std::size_t initial_pool = 0;
  std::size_t label_cost = 0;
  std::string digest;
};

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;  // nothing written when unset
  bool debug_matrices = false;
};

struct ScenarioResult {
  ScenarioConfig config;
  std::vector<SeedResult> seeds;
  nlohmann::json summary;
};

/// One full session for one seed against an already generated dataset.
SeedResult run_seed(const ScenarioConfig& config, std::shared_ptr<const Dataset> dataset, std::uint64_t seed,
                    const RunOptions& options = {});

/// All seeds; writes per-seed outputs and summary.json when options.out_dir is set.
ScenarioResult run_scenario(const ScenarioConfig& config, const RunOptions& options = {});

/// Writes dataset.csv and dataset.json (resolved spec) into `out_dir`.
void generate_to(const ScenarioConfig& config, const std::filesystem::path& out_dir);

/// Aggregates a run directory into report/{aggregate,auc_series,importance_bars}.csv.
void write_report(const std::filesystem::path& run_dir);

double median(std::vector<double> values);

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics_csv(std::istream& in);
void write_importance_csv(std::ostream& out, const std::vector<ImportanceReport>& reports);

}  // namespace c2al
