#include "c2al/protocol.hpp"

#include <algorithm>
#include <exception>
#include <istream>
#include <ostream>
#include <set>

#include "c2al/rng.hpp"

namespace c2al {

namespace {

using ojson = nlohmann::ordered_json;

// Runs fn(i) for i in [0, n); agents only touch their own state here.
template <typename Fn>
void for_each_agent(std::size_t n, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void check_coverage(const ProbabilityMap& probs, std::span<const InstanceId> pool, const char* what,
                    CollaboratorId sender, Round round) {
  bool same = probs.size() == pool.size();
  if (same) {
    auto it = probs.begin();
    for (auto id : pool) {
      if (it->first != id) {
        same = false;
        break;
      }
      ++it;
    }
  }
  const auto where = std::string(what) + " from collaborator " + std::to_string(sender) + " in round " +
                     std::to_string(round);
  if (!same) throw ProtocolError(where + " does not cover exactly the current pool");
  for (const auto& [id, p] : probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw ProtocolError(where + " has a probability outside [0,1]");
  }
}

ojson probs_payload(const ProbabilityMap& probs) {
  ojson ids = ojson::array();
  ojson ps = ojson::array();
  for (const auto& [id, p] : probs) {
    ids.push_back(id);
    ps.push_back(p);
  }
  ojson out;
  out["ids"] = std::move(ids);
  out["probs"] = std::move(ps);
  return out;
}

bool is_id_array(const ojson& v) {
  return v.is_array() && std::all_of(v.begin(), v.end(), [](const ojson& e) { return e.is_number_unsigned(); });
}

}  // namespace

// ---- config ----

std::size_t RoundConfig::min_labels(CollaboratorId cid) const {
  const auto& c = collaborators.at(cid);
  return c.min_labels ? *c.min_labels : 2 * n;
}

const LearnerKind& RoundConfig::ensemble_learner(CollaboratorId cid) const {
  const auto& c = collaborators.at(cid);
  return c.ensemble_learner ? *c.ensemble_learner : c.base_learner;
}

void RoundConfig::validate() const {
  if (n == 0) throw InvalidArgument("protocol.n: must be at least 1");
  if (collaborators.empty()) throw InvalidArgument("collaborators: need at least one");
  if (!dedicated_coordinator && coordinator >= k()) throw InvalidArgument("protocol.coordinator: must be < k");
  make_sampling_function(sampling_fn);
  if (bootstrap.n_feat == 0 || bootstrap.n_inst == 0 || bootstrap.max_attempts == 0) {
    throw InvalidArgument("bootstrap: n_feat, n_inst and max_attempts must be positive");
  }
  for (std::size_t i = 0; i < collaborators.size(); ++i) {
    const auto& c = collaborators[i];
    c.base_learner.validate();
    if (c.ensemble_learner) c.ensemble_learner->validate();
    c.band.validate();
  }
}

std::string to_string(Level2Source s) { return s == Level2Source::ensemble ? "ensemble" : "base_fallback"; }

// ---- log ----

std::string LogRecord::line() const {
  ojson j;
  j["round"] = round;
  j["type"] = type;
  j["sender"] = sender;
  j["payload"] = payload;
  j["digest"] = digest;
  return j.dump();
}

const LogRecord& MessageLog::append(Round round, std::string type, std::uint32_t sender, ojson payload) {
  ojson body;
  body["round"] = round;
  body["type"] = type;
  body["sender"] = sender;
  body["payload"] = payload;
  state_ = fnv1a64(body.dump(), state_);
  records_.push_back({round, std::move(type), sender, std::move(payload), hex64(state_)});
  return records_.back();
}

std::size_t MessageLog::count(const std::string& type) const {
  return static_cast<std::size_t>(
      std::count_if(records_.begin(), records_.end(), [&](const LogRecord& r) { return r.type == type; }));
}

std::string MessageLog::digest() const { return hex64(state_); }

void MessageLog::write_jsonl(std::ostream& out) const {
  for (const auto& r : records_) out << r.line() << '\n';
}

MessageLog MessageLog::read_jsonl(std::istream& in) {
  MessageLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ojson j;
    try {
      j = ojson::parse(line);
      const auto& rec = log.append(j.at("round").get<Round>(), j.at("type").get<std::string>(),
                                   j.at("sender").get<std::uint32_t>(), j.at("payload"));
      if (rec.digest != j.at("digest").get<std::string>()) {
        throw ProtocolError("message log: digest mismatch on line " + std::to_string(line_no));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError("message log: malformed line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return log;
}

ojson to_payload(const Level1Report& r) { return probs_payload(r.probs); }

ojson to_payload(const Level2Report& r) {
  auto out = probs_payload(r.probs);
  out["source"] = to_string(r.source);
  return out;
}

ojson to_payload(const SelectionResult& s) {
  ojson out;
  out["chosen"] = s.chosen;
  ojson suppliers = ojson::array();
  ojson turns = ojson::array();
  for (const auto& p : s.provenance) {
    suppliers.push_back(p.supplier);
    turns.push_back(p.turn);
  }
  out["suppliers"] = std::move(suppliers);
  out["turns"] = std::move(turns);
  return out;
}

ojson to_payload(const LabelBroadcast& b) {
  ojson ids = ojson::array();
  ojson labels = ojson::array();
  ojson suppliers = ojson::array();
  for (const auto& e : b.entries) {
    ids.push_back(e.id);
    labels.push_back(e.label);
    suppliers.push_back(e.supplier);
  }
  ojson out;
  out["ids"] = std::move(ids);
  out["labels"] = std::move(labels);
  out["suppliers"] = std::move(suppliers);
  return out;
}

ProbabilityMap probs_from_payload(const ojson& payload) {
  const auto& ids = payload.at("ids");
  const auto& ps = payload.at("probs");
  if (ids.size() != ps.size()) throw ProtocolError("payload: ids and probs differ in length");
  ProbabilityMap out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i].get<InstanceId>(), ps[i].get<double>());
  return out;
}

SelectionResult selection_from_payload(const ojson& payload) {
  SelectionResult s;
  s.chosen = payload.at("chosen").get<std::vector<InstanceId>>();
  const auto suppliers = payload.at("suppliers").get<std::vector<CollaboratorId>>();
  const auto turns = payload.at("turns").get<std::vector<std::size_t>>();
  if (suppliers.size() != s.chosen.size() || turns.size() != s.chosen.size()) {
    throw ProtocolError("payload: selection arrays differ in length");
  }
  for (std::size_t i = 0; i < suppliers.size(); ++i) s.provenance.push_back({suppliers[i], turns[i]});
  return s;
}

std::vector<LabelEntry> labels_from_payload(const ojson& payload) {
  const auto ids = payload.at("ids").get<std::vector<InstanceId>>();
  const auto labels = payload.at("labels").get<std::vector<int>>();
  const auto suppliers = payload.at("suppliers").get<std::vector<CollaboratorId>>();
  if (labels.size() != ids.size() || suppliers.size() != ids.size()) {
    throw ProtocolError("payload: label arrays differ in length");
  }
  std::vector<LabelEntry> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.push_back({ids[i], static_cast<Label>(labels[i]), suppliers[i]});
  return out;
}

std::vector<std::string> audit_record(const LogRecord& record) {
  std::vector<std::string> issues;
  const auto& p = record.payload;
  const auto where = record.type + " record (round " + std::to_string(record.round) + ", sender " +
                     std::to_string(record.sender) + "): ";
  if (!p.is_object()) return {where + "payload is not an object"};

  auto allow_only = [&](std::initializer_list<const char*> keys) {
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [key, value] : p.items()) {
      if (!allowed.count(key)) issues.push_back(where + "unexpected field '" + key + "'");
    }
    for (const auto& key : allowed) {
      if (!p.contains(key)) issues.push_back(where + "missing field '" + key + "'");
    }
  };
  auto expect_ids = [&](const char* key) {
    if (p.contains(key) && !is_id_array(p[key])) issues.push_back(where + "'" + key + "' must be an id array");
  };
  auto expect_same_length = [&](const char* a, const char* b) {
    if (p.contains(a) && p.contains(b) && p[a].size() != p[b].size()) {
      issues.push_back(where + "'" + a + "' and '" + b + "' differ in length");
    }
  };

  if (record.type == "init") {
    allow_only({"q", "n", "k", "coordinator", "dedicated_coordinator", "sampling", "pool_size"});
    for (const auto& [key, value] : p.items()) {
      if (!(value.is_number_unsigned() || value.is_boolean() || value.is_string())) {
        issues.push_back(where + "'" + key + "' must be a scalar");
      }
    }
  } else if (record.type == "level1" || record.type == "level2") {
    if (record.type == "level1") {
      allow_only({"ids", "probs"});
    } else {
      allow_only({"ids", "probs", "source"});
      if (p.contains("source") &&
          !(p["source"].is_string() && (p["source"] == "ensemble" || p["source"] == "base_fallback"))) {
        issues.push_back(where + "bad 'source'");
      }
    }
    expect_ids("ids");
    expect_same_length("ids", "probs");
    if (p.contains("probs")) {
      if (!p["probs"].is_array()) {
        issues.push_back(where + "'probs' must be an array");
      } else {
        for (const auto& v : p["probs"]) {
          if (!v.is_number() || !(v.get<double>() >= 0.0 && v.get<double>() <= 1.0)) {
            issues.push_back(where + "'probs' holds a value that is not a probability");
            break;
          }
        }
      }
    }
  } else if (record.type == "selection") {
    allow_only({"chosen", "suppliers", "turns"});
    expect_ids("chosen");
    expect_ids("suppliers");
    expect_ids("turns");
    expect_same_length("chosen", "suppliers");
    expect_same_length("chosen", "turns");
  } else if (record.type == "labels") {
    allow_only({"ids", "labels", "suppliers"});
    expect_ids("ids");
    expect_ids("suppliers");
    expect_same_length("ids", "labels");
    expect_same_length("ids", "suppliers");
    if (p.contains("labels")) {
      for (const auto& v : p["labels"]) {
        if (!v.is_number_unsigned() || v.get<unsigned>() > 1) {
          issues.push_back(where + "'labels' holds a value other than 0 or 1");
          break;
        }
      }
    }
  } else {
    issues.push_back(where + "unknown message type");
  }
  return issues;
}

SelectionResult replay_selection(const MessageLog& log, Round round, const SamplingFunction& sampling,
                                 std::size_t n) {
  std::vector<Ranking> rankings;
  for (const auto& r : log.records()) {
    if (r.round == round && r.type == "level2") rankings.push_back(sampling.rank(probs_from_payload(r.payload), r.sender));
  }
  std::sort(rankings.begin(), rankings.end(),
            [](const Ranking& a, const Ranking& b) { return a.collaborator < b.collaborator; });
  return round_robin_select(rankings, n);
}

// ---- roles ----

Label LabelOracle::label(InstanceId id) const {
  if (id >= truth_.size()) throw InvalidArgument("label oracle: unknown id " + std::to_string(id));
  return truth_[id];
}

std::vector<LabelEntry> acquire_labels(LabelOracle& oracle, std::span<const InstanceId> ids,
                                       std::span<const CollaboratorId> suppliers) {
  if (ids.size() != suppliers.size()) throw InvalidArgument("acquire_labels: ids and suppliers differ in length");
  std::vector<LabelEntry> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out.push_back({ids[i], oracle.label(ids[i]), suppliers[i]});
  oracle.charge(ids.size());
  return out;
}

CollaboratorAgent::CollaboratorAgent(CollaboratorId id, FeatureView view, TrainedModel base, std::size_t k,
                                     LearnerKind ensemble_kind, Round ensemble_start_round, std::size_t min_labels)
    : id_(id),
      view_(std::move(view)),
      base_(std::move(base)),
      ensemble_kind_(std::move(ensemble_kind)),
      start_round_(ensemble_start_round),
      min_labels_(min_labels),
      schema_{view_.columns(), k},
      archive_(k) {}

std::vector<double> CollaboratorAgent::base_probabilities(std::span<const InstanceId> ids) const {
  std::vector<FeatureIndex> cols;
  cols.reserve(base_.feature_indices.size());
  for (auto pos : base_.feature_indices) cols.push_back(view_.columns().at(pos));
  return predict_proba(base_, view_.rows(ids, cols));
}

Level1Report CollaboratorAgent::level1(Round round, std::span<const InstanceId> pool) const {
  Level1Report rep{id_, round, {}};
  const auto probs = base_probabilities(pool);
  for (std::size_t i = 0; i < pool.size(); ++i) rep.probs.emplace_hint(rep.probs.end(), pool[i], probs[i]);
  return rep;
}

void CollaboratorAgent::receive_level1(Round round, const std::vector<Level1Report>& reports) {
  std::vector<ProbabilityMap> maps;
  maps.reserve(reports.size());
  for (std::size_t c = 0; c < reports.size(); ++c) {
    if (reports[c].sender != c) throw ProtocolError("level-1 reports must arrive in ascending sender order");
    maps.push_back(reports[c].probs);
  }
  archive_.archive(round, std::move(maps));
}

Level2Report CollaboratorAgent::level2(Round round, std::span<const InstanceId> pool) const {
  Level2Report rep{id_, round, {}, Level2Source::base_fallback};
  if (!ensemble_) {
    const auto& own = archive_.rounds().at(round).at(id_);
    rep.probs = own;
    return rep;
  }
  Matrix level1(pool.size(), archive_.k());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto row = archive_.level1_row(pool[i], round);
    std::copy(row.begin(), row.end(), level1.row(i).begin());
  }
  const auto probs = ensemble_predict(*ensemble_, view_.rows(pool), level1);
  for (std::size_t i = 0; i < pool.size(); ++i) rep.probs.emplace_hint(rep.probs.end(), pool[i], probs[i]);
  rep.source = Level2Source::ensemble;
  return rep;
}

void CollaboratorAgent::receive_labels(const LabelBroadcast& broadcast) {
  labels_.add(broadcast.entries, broadcast.round);
}

std::optional<TrainingMatrix> CollaboratorAgent::retrain(Round round, std::uint64_t seed) {
  if (round < start_round_) return std::nullopt;
  auto data = build_training_matrix(view_, archive_, labels_);
  auto fitted = retrain_ensemble(ensemble_kind_, data, schema_, min_labels_, labels_, seed);
  if (fitted) {
    fitted->inner.owner = id_;
    ensemble_ = std::move(fitted);
  }
  return data;
}

// ---- session ----

std::uint32_t Session::coordinator_sender() const {
  return config_.dedicated_coordinator ? static_cast<std::uint32_t>(config_.k()) : config_.coordinator;
}

Session init_session(const RoundConfig& config, std::shared_ptr<const Dataset> dataset,
                     const FeaturePartition& partition, const Splits& splits, std::uint64_t seed) {
  config.validate();
  if (!dataset) throw InvalidArgument("init_session: no dataset");
  partition.validate(dataset->n_features());
  const std::size_t k = config.k();
  if (partition.k() != k) throw InvalidArgument("init_session: partition has " + std::to_string(partition.k()) +
                                                " private sets but config has " + std::to_string(k) + " collaborators");
  if (splits.warm_start.size() != k) throw InvalidArgument("init_session: splits do not match k");

  Session s;
  s.config_ = config;
  s.dataset_ = std::move(dataset);
  s.partition_ = partition;
  s.splits_ = splits;
  s.seed_ = seed;
  s.pool_ = splits.pool;
  std::sort(s.pool_.begin(), s.pool_.end());
  s.initial_pool_ = s.pool_.size();
  s.sampling_ = make_sampling_function(config.sampling_fn);
  s.oracle_ = LabelOracle(s.dataset_->labels);

  std::vector<Label> test_y;
  for (auto id : splits.test) test_y.push_back(s.dataset_->labels.at(id));

  std::vector<std::optional<BandFit>> fits(k);
  for_each_agent(k, [&](std::size_t c) {
    const auto cid = static_cast<CollaboratorId>(c);
    FeatureView v(*s.dataset_, s.partition_, cid);
    const auto& warm = splits.warm_start[c];
    std::vector<Label> warm_y;
    for (auto id : warm) warm_y.push_back(s.dataset_->labels.at(id));
    const auto& cc = config.collaborators[c];
    try {
      fits[c] = train_to_band(cc.base_learner, cc.band, v.rows(warm), warm_y, v.rows(splits.test), test_y,
                              config.bootstrap.n_feat, config.bootstrap.n_inst, config.bootstrap.max_attempts,
                              derive_seed(seed, "base-model", c));
    } catch (const BandUnreachable& e) {
      throw BandUnreachable("collaborator " + std::to_string(c) + ": " + e.what(), e.best_auc(), e.attempts());
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("collaborator " + std::to_string(c) + ": " + e.what());
    }
  });

  for (std::size_t c = 0; c < k; ++c) {
    const auto cid = static_cast<CollaboratorId>(c);
    auto base = std::move(fits[c]->model);
    base.owner = cid;
    s.base_info_.push_back({fits[c]->attempts, fits[c]->eval_auc});
    s.agents_.emplace_back(cid, FeatureView(*s.dataset_, s.partition_, cid), std::move(base), k,
                           config.ensemble_learner(cid), config.collaborators[c].ensemble_start_round,
                           config.min_labels(cid));
  }

  ojson init;
  init["q"] = config.q;
  init["n"] = config.n;
  init["k"] = k;
  init["coordinator"] = s.coordinator_sender();
  init["dedicated_coordinator"] = config.dedicated_coordinator;
  init["sampling"] = config.sampling_fn;
  init["pool_size"] = s.pool_.size();
  s.log_.append(0, "init", s.coordinator_sender(), std::move(init));
  return s;
}

RoundLog Session::run_round() {
  const Round r = round_ + 1;
  const std::size_t k = config_.k();
  const std::size_t n = config_.n;
  if (pool_.size() < n) {
    throw ProtocolError("round " + std::to_string(r) + ": pool exhausted (" + std::to_string(pool_.size()) +
                        " left, need " + std::to_string(n) + ")");
  }

  RoundLog out;
  out.round = r;
  out.pool_before = pool_.size();

  // (a) Level-1 exchange
  out.level1.resize(k);
  for_each_agent(k, [&](std::size_t c) { out.level1[c] = agents_[c].level1(r, pool_); });
  for (std::size_t c = 0; c < k; ++c) {
    check_coverage(out.level1[c].probs, pool_, "level-1 report", static_cast<CollaboratorId>(c), r);
    log_.append(r, "level1", static_cast<std::uint32_t>(c), to_payload(out.level1[c]));
  }

  // (b) archive and Level-2 exchange
  out.level2.resize(k);
  for_each_agent(k, [&](std::size_t c) {
    agents_[c].receive_level1(r, out.level1);
    out.level2[c] = agents_[c].level2(r, pool_);
  });
  for (std::size_t c = 0; c < k; ++c) {
    check_coverage(out.level2[c].probs, pool_, "level-2 report", static_cast<CollaboratorId>(c), r);
    log_.append(r, "level2", static_cast<std::uint32_t>(c), to_payload(out.level2[c]));
  }

  // (c) coordinator: rank, select, acquire, broadcast
  std::vector<Ranking> rankings;
  rankings.reserve(k);
  for (const auto& rep : out.level2) rankings.push_back(sampling_->rank(rep.probs, rep.sender));
  out.selection = round_robin_select(rankings, n);
  for (auto id : out.selection.chosen) {
    if (!std::binary_search(pool_.begin(), pool_.end(), id)) {
      throw ProtocolError("round " + std::to_string(r) + ": selected id " + std::to_string(id) + " is not in the pool");
    }
  }
  log_.append(r, "selection", coordinator_sender(), to_payload(out.selection));

  std::vector<CollaboratorId> suppliers;
  for (const auto& p : out.selection.provenance) suppliers.push_back(p.supplier);
  out.broadcast = {r, acquire_labels(oracle_, out.selection.chosen, suppliers)};
  log_.append(r, "labels", coordinator_sender(), to_payload(out.broadcast));

  // (d) ingest labels, retrain ensembles
  std::vector<std::optional<TrainingMatrix>> matrices(k);
  for_each_agent(k, [&](std::size_t c) {
    agents_[c].receive_labels(out.broadcast);
    matrices[c] = agents_[c].retrain(r, derive_seed(seed_, "ensemble", (std::uint64_t{c} << 32) | r));
  });
  if (matrix_hook_) {
    for (std::size_t c = 0; c < k; ++c) {
      if (matrices[c]) matrix_hook_(static_cast<CollaboratorId>(c), r, *matrices[c], agents_[c].schema());
    }
  }
  for (std::size_t c = 1; c < k; ++c) {
    if (!(agents_[c].labels() == agents_[0].labels())) {
      throw ProtocolError("round " + std::to_string(r) + ": label stores diverged");
    }
  }

  // (e) shrink the pool
  std::vector<InstanceId> chosen = out.selection.chosen;
  std::sort(chosen.begin(), chosen.end());
  std::vector<InstanceId> rest;
  rest.reserve(pool_.size() - chosen.size());
  std::set_difference(pool_.begin(), pool_.end(), chosen.begin(), chosen.end(), std::back_inserter(rest));
  pool_ = std::move(rest);
  out.pool_after = pool_.size();
  round_ = r;
  if (initial_pool_ != pool_.size() + static_cast<std::size_t>(r) * n) {
    throw ProtocolError("round " + std::to_string(r) + ": pool size not conserved");
  }
  return out;
}

SessionLog run_session(Session& session, const RoundObserver& observer) {
  const auto& cfg = session.config();
  if (session.pool().size() < cfg.q * cfg.n) {
    throw InvalidArgument("run_session: pool of " + std::to_string(session.pool().size()) + " cannot supply q*n = " +
                          std::to_string(cfg.q * cfg.n) + " labels");
  }
  SessionLog out;
  for (std::size_t i = 0; i < cfg.q; ++i) {
    out.rounds.push_back(session.run_round());
    if (observer) observer(session, out.rounds.back());
  }
  out.digest = session.log().digest();
  return out;
}

}  // namespace c2al
