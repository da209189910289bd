#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"

#include "c2al/scenario.hpp"

using namespace c2al;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json small_config() {
  return json::parse(R"({
    "dataset": {"n_instances": 800, "seed": 3},
    "split": {"warm_size": 60, "test_fraction": 0.3},
    "protocol": {"q": 3, "n": 10},
    "bootstrap": {"n_feat": 2, "n_inst": 50, "max_attempts": 50},
    "collaborators": [
      {"learner": {"kind": "linear_logistic", "epochs": 50}, "band": [0.0, 1.0]},
      {"learner": {"kind": "gbm", "n_trees": 10}, "band": [0.0, 1.0], "ensemble_start_round": 2}
    ],
    "importance": {"repeats": 2},
    "seeds": [1, 2, 3]
  })");
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("c2al_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

}  // namespace

TEST_CASE("config parsing is strict and names the field") {
  CHECK_NOTHROW(parse_scenario(small_config()));

  auto j = small_config();
  j["protocol"]["qq"] = 3;
  CHECK_THROWS_WITH_AS(parse_scenario(j), doctest::Contains("protocol.qq"), ConfigError);

  j = small_config();
  j["dataset"]["n_instances"] = 801;
  CHECK_THROWS_WITH_AS(parse_scenario(j), doctest::Contains("n_instances"), ConfigError);

  j = small_config();
  j["protocol"]["n"] = "ten";
  CHECK_THROWS_WITH_AS(parse_scenario(j), doctest::Contains("protocol.n"), ConfigError);

  j = small_config();
  j["collaborators"][1]["band"] = {0.9, 0.1};
  CHECK_THROWS_AS(parse_scenario(j), ConfigError);

  j = small_config();
  j["collaborators"][0]["learner"]["kind"] = "svm";
  CHECK_THROWS_WITH_AS(parse_scenario(j), doctest::Contains("collaborators[0].learner"), ConfigError);

  j = small_config();
  j["partition"] = {{"private_sets", {{0, 1}, {1, 2}}}};
  CHECK_THROWS_AS(parse_scenario(j), ConfigError);

  j = small_config();
  j["protocol"]["q"] = 100;
  CHECK_THROWS_WITH_AS(parse_scenario(j), doctest::Contains("n_instances"), ConfigError);

  j = small_config();
  j.erase("collaborators");
  CHECK_THROWS_AS(parse_scenario(j), ConfigError);
}

TEST_CASE("resolved config round-trips") {
  const auto c = parse_scenario(small_config());
  const auto j = to_json(c);
  CHECK(to_json(parse_scenario(j)) == j);
  CHECK(j["collaborators"][0]["min_labels"] == 20);
  CHECK(j["collaborators"][1]["ensemble_learner"]["kind"] == "gbm");

  auto with_sets = small_config();
  with_sets["partition"] = {{"private_sets", {{5, 1}, {2, 3, 4}}}, {"common", {0}}};
  const auto cs = parse_scenario(with_sets);
  const auto p = resolve_partition(cs);
  CHECK(p.common == std::vector<FeatureIndex>{0});
  CHECK(p.private_sets[0] == std::vector<FeatureIndex>{1, 5});
  CHECK(to_json(parse_scenario(to_json(cs))) == to_json(cs));
}

TEST_CASE("run writes every output and the report aggregates it") {
  const auto dir = scratch("run");
  const auto config = parse_scenario(small_config());
  RunOptions opts;
  opts.out_dir = dir;
  opts.debug_matrices = true;
  const auto result = run_scenario(config, opts);

  REQUIRE(result.seeds.size() == 3);
  for (const auto& s : result.seeds) {
    const auto sd = dir / ("seed_" + std::to_string(s.seed));
    CHECK(first_line(sd / "metrics.csv") == "round,collaborator,model_source,auc");
    CHECK(first_line(sd / "importance.csv") == "collaborator,column,importance");
    CHECK(line_count(sd / "metrics.csv") == 1 + 3 * 2);
    CHECK(line_count(sd / "messages.jsonl") == s.log.size());
    CHECK(fs::exists(sd / "matrices" / "round_03_collab_2.csv"));
    CHECK_FALSE(fs::exists(sd / "matrices" / "round_01_collab_2.csv"));  // starts at round 2
    std::ifstream log_in(sd / "messages.jsonl");
    CHECK(MessageLog::read_jsonl(log_in).digest() == s.digest);
    for (const auto& c : s.checks) CHECK(c.labels_consistent);
    CHECK(s.label_cost == 30);
  }

  std::ifstream sj(dir / "summary.json");
  const auto summary = json::parse(sj);
  CHECK(parse_scenario(summary["config"]).seeds == config.seeds);
  CHECK(summary["final_auc"].size() == 2);
  for (const auto& s : result.seeds) CHECK(summary["digests"][std::to_string(s.seed)] == s.digest);

  write_report(dir);
  CHECK(line_count(dir / "report" / "aggregate.csv") == 1 + 3 * 3 * 2);

  // hand-join the per-seed metrics and recompute the series
  std::map<std::pair<Round, CollaboratorId>, std::vector<double>> by_key;
  for (const auto& s : result.seeds) {
    for (const auto& m : s.metrics) by_key[{m.round, m.collaborator}].push_back(m.auc);
  }
  std::ifstream series(dir / "report" / "auc_series.csv");
  std::string line;
  std::getline(series, line);
  CHECK(line == "round,collaborator,median,min,max,n_seeds");
  std::size_t rows = 0;
  while (std::getline(series, line)) {
    std::stringstream ss(line);
    std::string f[6];
    for (auto& x : f) std::getline(ss, x, ',');
    const auto key = std::make_pair(static_cast<Round>(std::stoul(f[0])), static_cast<CollaboratorId>(std::stoul(f[1]) - 1));
    auto v = by_key.at(key);
    std::sort(v.begin(), v.end());
    CHECK(std::stod(f[2]) == v[1]);
    CHECK(std::stod(f[3]) == v.front());
    CHECK(std::stod(f[4]) == v.back());
    CHECK(f[5] == "3");
    ++rows;
  }
  CHECK(rows == by_key.size());
  CHECK(line_count(dir / "report" / "importance_bars.csv") > 1);
  fs::remove_all(dir);
}

TEST_CASE("single seed collapses the band onto the median") {
  const auto dir = scratch("one_seed");
  auto j = small_config();
  j["seeds"] = {4};
  RunOptions opts;
  opts.out_dir = dir;
  run_scenario(parse_scenario(j), opts);
  write_report(dir);
  std::ifstream series(dir / "report" / "auc_series.csv");
  std::string line;
  std::getline(series, line);
  while (std::getline(series, line)) {
    std::stringstream ss(line);
    std::string f[6];
    for (auto& x : f) std::getline(ss, x, ',');
    CHECK(f[2] == f[3]);
    CHECK(f[2] == f[4]);
  }
  fs::remove_all(dir);
}

TEST_CASE("q = 0 still writes headers") {
  const auto dir = scratch("q0");
  auto j = small_config();
  j["protocol"]["q"] = 0;
  j["seeds"] = {1};
  RunOptions opts;
  opts.out_dir = dir;
  const auto r = run_scenario(parse_scenario(j), opts);
  CHECK(line_count(dir / "seed_1" / "metrics.csv") == 1);
  CHECK(line_count(dir / "seed_1" / "messages.jsonl") == 1);
  CHECK(r.summary["final_auc"].empty());
  CHECK_NOTHROW(write_report(dir));
  fs::remove_all(dir);
}

TEST_CASE("median") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0}) == 2.5);
  CHECK_THROWS_AS(median({}), InvalidArgument);
}

TEST_CASE("metrics csv round trip") {
  std::vector<MetricRow> rows{{1, 0, "base", 0.5}, {2, 3, "ensemble", 0.8123456789}};
  std::stringstream ss;
  write_metrics_csv(ss, rows);
  const auto back = read_metrics_csv(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[1].collaborator == 3);
  CHECK(back[1].auc == 0.8123456789);
  CHECK(ss.str().find("2,4,ensemble,") != std::string::npos);
}
