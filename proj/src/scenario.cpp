#include "c2al/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "c2al/rng.hpp"

namespace c2al {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Strict reader over one JSON object: every key must be consumed.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(field(key) + ": wrong type");
    }
  }

  const json* sub(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(field(key) + ": unknown key");
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

LearnerKind parse_learner(const json& j, const std::string& path) {
  try {
    return learner_kind_from_json(j);
  } catch (const InvalidArgument& e) {
    throw ConfigError(path + "." + e.what());
  }
}

void put_double(std::ostream& out, double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, end - buf);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write " + p.string());
  return f;
}

json stats_json(std::vector<double> v) {
  if (v.empty()) return json::object();
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  json out{{"min", *mn}, {"max", *mx}};
  out["median"] = median(std::move(v));
  return out;
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

void ScenarioConfig::validate() const {
  try {
    dataset.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("dataset.") + e.what());
  }
  try {
    protocol.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (seeds.empty()) throw ConfigError("seeds: must not be empty");
  if (importance_repeats == 0) throw ConfigError("importance.repeats: must be at least 1");
  if (!(split.test_fraction >= 0.0 && split.test_fraction < 1.0)) throw ConfigError("split.test_fraction: must be in [0,1)");
  try {
    resolve_partition(*this).validate(dataset.n_features);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  const auto n_test = static_cast<std::size_t>(
      std::ceil(split.test_fraction * static_cast<double>(dataset.n_instances) - 1e-9));
  if (protocol.k() * split.warm_size + n_test + protocol.q * protocol.n > dataset.n_instances) {
    throw ConfigError("split: warm-start, test and q*n query budget exceed n_instances");
  }
}

ScenarioConfig parse_scenario(const json& j) {
  ScenarioConfig c;
  ObjectReader top(j, "");

  if (const auto* d = top.sub("dataset")) {
    ObjectReader r(*d, "dataset");
    r.read("n_instances", c.dataset.n_instances);
    r.read("n_features", c.dataset.n_features);
    r.read("n_informative", c.dataset.n_informative);
    r.read("n_redundant", c.dataset.n_redundant);
    r.read("class_sep", c.dataset.class_sep);
    r.read("seed", c.dataset.seed);
    r.finish();
  }
  if (const auto* p = top.sub("partition")) {
    ObjectReader r(*p, "partition");
    r.read("common_count", c.partition.common_count);
    r.read("seed", c.partition.seed);
    r.read("common", c.partition.common);
    std::vector<std::vector<FeatureIndex>> sets;
    if (p->contains("private_sets")) {
      r.read("private_sets", sets);
      c.partition.private_sets = std::move(sets);
    }
    r.finish();
    if (!c.partition.private_sets && !c.partition.common.empty()) {
      throw ConfigError("partition.common: only valid together with partition.private_sets");
    }
  }
  if (const auto* s = top.sub("split")) {
    ObjectReader r(*s, "split");
    r.read("warm_size", c.split.warm_size);
    r.read("test_fraction", c.split.test_fraction);
    r.finish();
  }
  if (const auto* p = top.sub("protocol")) {
    ObjectReader r(*p, "protocol");
    r.read("q", c.protocol.q);
    r.read("n", c.protocol.n);
    r.read("coordinator", c.protocol.coordinator);
    r.read("dedicated_coordinator", c.protocol.dedicated_coordinator);
    r.read("sampling", c.protocol.sampling_fn);
    r.finish();
  }
  if (const auto* b = top.sub("bootstrap")) {
    ObjectReader r(*b, "bootstrap");
    r.read("n_feat", c.protocol.bootstrap.n_feat);
    r.read("n_inst", c.protocol.bootstrap.n_inst);
    r.read("max_attempts", c.protocol.bootstrap.max_attempts);
    r.finish();
  }
  const auto* collabs = top.sub("collaborators");
  if (!collabs || !collabs->is_array() || collabs->empty()) {
    throw ConfigError("collaborators: need a non-empty array");
  }
  for (std::size_t i = 0; i < collabs->size(); ++i) {
    const auto path = "collaborators[" + std::to_string(i) + "]";
    ObjectReader r((*collabs)[i], path);
    CollaboratorConfig cc;
    const auto* learner = r.sub("learner");
    if (!learner) throw ConfigError(path + ".learner: missing");
    cc.base_learner = parse_learner(*learner, path + ".learner");
    if (const auto* el = r.sub("ensemble_learner")) cc.ensemble_learner = parse_learner(*el, path + ".ensemble_learner");
    std::vector<double> band{0.0, 1.0};
    r.read("band", band);
    if (band.size() != 2) throw ConfigError(path + ".band: expected [low, high]");
    cc.band = {band[0], band[1]};
    r.read("ensemble_start_round", cc.ensemble_start_round);
    std::size_t min_labels = 0;
    if ((*collabs)[i].contains("min_labels")) {
      r.read("min_labels", min_labels);
      cc.min_labels = min_labels;
    }
    r.finish();
    c.protocol.collaborators.push_back(std::move(cc));
  }
  if (const auto* imp = top.sub("importance")) {
    ObjectReader r(*imp, "importance");
    r.read("repeats", c.importance_repeats);
    r.finish();
  }
  top.read("seeds", c.seeds);
  top.read("output_dir", c.output_dir);
  top.finish();

  c.validate();
  return c;
}

ScenarioConfig load_scenario(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_scenario(j);
}

json to_json(const ScenarioConfig& c) {
  json j;
  j["dataset"] = {{"n_instances", c.dataset.n_instances}, {"n_features", c.dataset.n_features},
                  {"n_informative", c.dataset.n_informative}, {"n_redundant", c.dataset.n_redundant},
                  {"class_sep", c.dataset.class_sep}, {"seed", c.dataset.seed}};
  j["partition"] = {{"common_count", c.partition.common_count}, {"seed", c.partition.seed}};
  if (c.partition.private_sets) {
    j["partition"]["private_sets"] = *c.partition.private_sets;
    j["partition"]["common"] = c.partition.common;
  }
  j["split"] = {{"warm_size", c.split.warm_size}, {"test_fraction", c.split.test_fraction}};
  j["protocol"] = {{"q", c.protocol.q},
                   {"n", c.protocol.n},
                   {"coordinator", c.protocol.coordinator},
                   {"dedicated_coordinator", c.protocol.dedicated_coordinator},
                   {"sampling", c.protocol.sampling_fn}};
  j["bootstrap"] = {{"n_feat", c.protocol.bootstrap.n_feat},
                    {"n_inst", c.protocol.bootstrap.n_inst},
                    {"max_attempts", c.protocol.bootstrap.max_attempts}};
  j["collaborators"] = json::array();
  for (std::size_t i = 0; i < c.protocol.k(); ++i) {
    const auto& cc = c.protocol.collaborators[i];
    j["collaborators"].push_back({{"learner", to_json(cc.base_learner)},
                                  {"ensemble_learner", to_json(c.protocol.ensemble_learner(static_cast<CollaboratorId>(i)))},
                                  {"band", {cc.band.low, cc.band.high}},
                                  {"ensemble_start_round", cc.ensemble_start_round},
                                  {"min_labels", c.protocol.min_labels(static_cast<CollaboratorId>(i))}});
  }
  j["importance"] = {{"repeats", c.importance_repeats}};
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  return j;
}

FeaturePartition resolve_partition(const ScenarioConfig& config) {
  if (config.partition.private_sets) {
    FeaturePartition p{config.partition.common, *config.partition.private_sets};
    std::sort(p.common.begin(), p.common.end());
    for (auto& s : p.private_sets) std::sort(s.begin(), s.end());
    if (p.k() != config.protocol.k()) {
      throw InvalidArgument("partition.private_sets: need one set per collaborator");
    }
    return p;
  }
  return partition_features(config.dataset.n_features, config.protocol.k(), config.partition.common_count,
                            config.partition.seed);
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "round,collaborator,model_source,auc\n";
  for (const auto& r : rows) {
    out << r.round << ',' << (r.collaborator + 1) << ',' << r.model_source << ',';
    put_double(out, r.auc);
    out << '\n';
  }
}

std::vector<MetricRow> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "round,collaborator,model_source,auc") {
    throw Error("metrics.csv: unexpected header");
  }
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_line(line);
    if (f.size() != 4) throw Error("metrics.csv: malformed row '" + line + "'");
    try {
      MetricRow r;
      r.round = static_cast<Round>(std::stoul(f[0]));
      const auto collab = std::stoul(f[1]);
      if (collab == 0) throw Error("metrics.csv: collaborator numbers start at 1");
      r.collaborator = static_cast<CollaboratorId>(collab - 1);
      r.model_source = f[2];
      r.auc = std::stod(f[3]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw Error("metrics.csv: malformed row '" + line + "'");
    }
  }
  return rows;
}

void write_importance_csv(std::ostream& out, const std::vector<ImportanceReport>& reports) {
  out << "collaborator,column,importance\n";
  for (std::size_t c = 0; c < reports.size(); ++c) {
    for (std::size_t i = 0; i < reports[c].columns.size(); ++i) {
      out << (c + 1) << ',' << reports[c].columns[i] << ',';
      put_double(out, reports[c].importance[i]);
      out << '\n';
    }
  }
}

SeedResult run_seed(const ScenarioConfig& config, std::shared_ptr<const Dataset> dataset, std::uint64_t seed,
                    const RunOptions& options) {
  const auto k = config.protocol.k();
  const auto partition = resolve_partition(config);
  const auto splits = split_dataset(*dataset, k, config.split.warm_size, config.split.test_fraction,
                                    derive_seed(seed, "split"));
  auto session = init_session(config.protocol, dataset, partition, splits, seed);

  SeedResult result;
  result.seed = seed;
  result.base_models = session.base_info();
  result.initial_pool = session.initial_pool_size();
  for (std::size_t c = 0; c < k; ++c) {
    spdlog::debug("seed {} collaborator {}: base AUC {:.3f} after {} attempts", seed, c + 1,
                  result.base_models[c].test_auc, result.base_models[c].attempts);
  }

  std::optional<fs::path> seed_dir;
  if (options.out_dir) {
    seed_dir = *options.out_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(*seed_dir);
  }
  if (options.debug_matrices && seed_dir) {
    fs::create_directories(*seed_dir / "matrices");
    session.set_matrix_hook([dir = *seed_dir / "matrices"](CollaboratorId cid, Round r, const TrainingMatrix& m,
                                                           const EnsembleInputSchema& schema) {
      char name[64];
      std::snprintf(name, sizeof name, "round_%02u_collab_%u.csv", r, cid + 1);
      auto f = open_out(dir / name);
      write_training_matrix_csv(f, m, schema);
    });
  }

  const auto& test = session.splits().test;
  auto observer = [&](const Session& s, const RoundLog& round) {
    RoundCheck check{round.round, true, s.pool().size(), s.agents()[0].labels().size()};
    for (const auto& a : s.agents()) check.labels_consistent &= (a.labels() == s.agents()[0].labels());
    result.checks.push_back(check);
    for (std::size_t c = 0; c < k; ++c) {
      const auto ev = evaluate_collaborator(s, static_cast<CollaboratorId>(c), test);
      result.metrics.push_back({round.round, static_cast<CollaboratorId>(c), ev.model_source, ev.score.value});
    }
    spdlog::debug("seed {} round {} done, pool {}", seed, round.round, s.pool().size());
  };
  auto log = run_session(session, observer);

  for (std::size_t c = 0; c < k; ++c) {
    result.importance.push_back(collaborator_importance(session, static_cast<CollaboratorId>(c), test,
                                                        config.importance_repeats,
                                                        derive_seed(seed, "importance", c)));
  }
  result.log = session.log();
  result.label_cost = session.label_cost();
  result.digest = log.digest;

  if (seed_dir) {
    {
      auto f = open_out(*seed_dir / "messages.jsonl");
      result.log.write_jsonl(f);
    }
    {
      auto f = open_out(*seed_dir / "metrics.csv");
      write_metrics_csv(f, result.metrics);
    }
    {
      auto f = open_out(*seed_dir / "importance.csv");
      write_importance_csv(f, result.importance);
    }
  }
  return result;
}

ScenarioResult run_scenario(const ScenarioConfig& config, const RunOptions& options) {
  config.validate();
  auto dataset = std::make_shared<const Dataset>(generate_dataset(config.dataset));
  ScenarioResult out;
  out.config = config;
  for (auto seed : config.seeds) {
    spdlog::info("running seed {}", seed);
    try {
      out.seeds.push_back(run_seed(config, dataset, seed, options));
    } catch (const Error& e) {
      throw ProtocolError("seed " + std::to_string(seed) + ": " + e.what());
    }
  }

  const auto k = config.protocol.k();
  json summary;
  summary["config"] = to_json(config);
  summary["seeds"] = config.seeds;
  summary["digests"] = json::object();
  for (const auto& s : out.seeds) summary["digests"][std::to_string(s.seed)] = s.digest;
  summary["final_auc"] = json::array();
  summary["base_auc"] = json::array();
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> finals;
    std::vector<double> bases;
    for (const auto& s : out.seeds) {
      bases.push_back(s.base_models[c].test_auc);
      for (const auto& m : s.metrics) {
        if (m.collaborator == c && m.round == config.protocol.q) finals.push_back(m.auc);
      }
    }
    auto fs_ = stats_json(finals);
    auto bs = stats_json(bases);
    fs_["collaborator"] = c + 1;
    bs["collaborator"] = c + 1;
    if (!finals.empty()) summary["final_auc"].push_back(fs_);
    summary["base_auc"].push_back(bs);
  }
  out.summary = summary;

  if (options.out_dir) {
    fs::create_directories(*options.out_dir);
    auto f = open_out(*options.out_dir / "summary.json");
    f << summary.dump(2) << '\n';
  }
  return out;
}

void generate_to(const ScenarioConfig& config, const fs::path& out_dir) {
  const auto ds = generate_dataset(config.dataset);
  fs::create_directories(out_dir);
  {
    auto f = open_out(out_dir / "dataset.csv");
    write_dataset_csv(f, ds);
  }
  auto f = open_out(out_dir / "dataset.json");
  f << json{{"dataset", to_json(config)["dataset"]}}.dump(2) << '\n';
}

void write_report(const fs::path& run_dir) {
  std::ifstream sf(run_dir / "summary.json");
  if (!sf) throw Error("report: " + (run_dir / "summary.json").string() + " not found");
  json summary;
  try {
    summary = json::parse(sf);
  } catch (const json::parse_error& e) {
    throw Error(std::string("report: summary.json is corrupt: ") + e.what());
  }
  if (!summary.contains("seeds") || !summary["seeds"].is_array()) throw Error("report: summary.json lacks seeds");
  const auto seeds = summary["seeds"].get<std::vector<std::uint64_t>>();

  // (round, collaborator) -> per-seed AUCs
  std::map<std::pair<Round, CollaboratorId>, std::vector<double>> series;
  std::map<std::pair<std::string, std::string>, std::vector<double>> bars;
  std::vector<std::string> bar_order;

  const fs::path report_dir = run_dir / "report";
  fs::create_directories(report_dir);
  auto agg = open_out(report_dir / "aggregate.csv");
  agg << "seed,round,collaborator,model_source,auc\n";
  for (auto seed : seeds) {
    const auto dir = run_dir / ("seed_" + std::to_string(seed));
    std::ifstream mf(dir / "metrics.csv");
    if (!mf) throw Error("report: missing " + (dir / "metrics.csv").string());
    for (const auto& m : read_metrics_csv(mf)) {
      series[{m.round, m.collaborator}].push_back(m.auc);
      agg << seed << ',' << m.round << ',' << (m.collaborator + 1) << ',' << m.model_source << ',';
      put_double(agg, m.auc);
      agg << '\n';
    }
    std::ifstream imf(dir / "importance.csv");
    if (!imf) throw Error("report: missing " + (dir / "importance.csv").string());
    std::string line;
    if (!std::getline(imf, line) || line != "collaborator,column,importance") {
      throw Error("report: importance.csv has an unexpected header");
    }
    while (std::getline(imf, line)) {
      if (line.empty()) continue;
      const auto f = split_line(line);
      if (f.size() != 3) throw Error("report: malformed importance row '" + line + "'");
      const auto key = std::make_pair(f[0], f[1]);
      if (!bars.count(key)) bar_order.push_back(f[0] + "," + f[1]);
      try {
        bars[key].push_back(std::stod(f[2]));
      } catch (const std::logic_error&) {
        throw Error("report: malformed importance row '" + line + "'");
      }
    }
  }

  auto sf_out = open_out(report_dir / "auc_series.csv");
  sf_out << "round,collaborator,median,min,max,n_seeds\n";
  for (const auto& [key, values] : series) {
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    sf_out << key.first << ',' << (key.second + 1) << ',';
    put_double(sf_out, median(values));
    sf_out << ',';
    put_double(sf_out, *mn);
    sf_out << ',';
    put_double(sf_out, *mx);
    sf_out << ',' << values.size() << '\n';
  }

  auto bf = open_out(report_dir / "importance_bars.csv");
  bf << "collaborator,column,median,min,max,n_seeds\n";
  for (const auto& name : bar_order) {
    const auto comma = name.find(',');
    const auto& values = bars.at({name.substr(0, comma), name.substr(comma + 1)});
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    bf << name << ',';
    put_double(bf, median(values));
    bf << ',';
    put_double(bf, *mn);
    bf << ',';
    put_double(bf, *mx);
    bf << ',' << values.size() << '\n';
  }
}

}  // namespace c2al
