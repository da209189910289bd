#pragma once

// The collaborative round engine. Collaborators exchange only per-instance
// probabilities (Level-1 and Level-2 reports) and the labels the coordinator
// acquires; every message passes through the session's append-only log.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "c2al/common.hpp"
#include "c2al/ensemble.hpp"
#include "c2al/learners.hpp"
#include "c2al/sampling.hpp"
#include "c2al/synthdata.hpp"

namespace c2al {

struct CollaboratorConfig {
  LearnerKind base_learner;
  std::optional<LearnerKind> ensemble_learner;  // defaults to base_learner
  AucBand band;
  Round ensemble_start_round = 1;
  std::optional<std::size_t> min_labels;  // defaults to 2·n
};

struct BootstrapConfig {
  std::size_t n_feat = 2;
  std::size_t n_inst = 100;
  std::size_t max_attempts = 200;
};

struct RoundConfig {
  std::size_t q = 15;
  std::size_t n = 20;
  CollaboratorId coordinator = 0;
  bool dedicated_coordinator = false;  // coordinator acts outside the k learners
  std::string sampling_fn = "uncertainty";
  std::vector<CollaboratorConfig> collaborators;
  BootstrapConfig bootstrap;

  std::size_t k() const { return collaborators.size(); }
  std::size_t min_labels(CollaboratorId cid) const;
  const LearnerKind& ensemble_learner(CollaboratorId cid) const;
  void validate() const;
};

// ---- messages ----

struct Level1Report {
  CollaboratorId sender = 0;
  Round round = 0;
  ProbabilityMap probs;
};

enum class Level2Source { base_fallback, ensemble };
std::string to_string(Level2Source s);

struct Level2Report {
  CollaboratorId sender = 0;
  Round round = 0;
  ProbabilityMap probs;
  Level2Source source = Level2Source::base_fallback;
};

struct LabelBroadcast {
  Round round = 0;
  std::vector<LabelEntry> entries;
};

/// One JSONL line: {round, type, sender, payload, digest}. The digest chains
/// FNV-1a over every earlier line, so the last digest identifies the log.
struct LogRecord {
  Round round = 0;
  std::string type;
  std::uint32_t sender = 0;
  nlohmann::ordered_json payload;
  std::string digest;

  std::string line() const;
};

class MessageLog {
 public:
  const LogRecord& append(Round round, std::string type, std::uint32_t sender, nlohmann::ordered_json payload);

  const std::vector<LogRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  std::size_t count(const std::string& type) const;
  /// Digest of the latest record; digest of the empty log otherwise.
  std::string digest() const;

  void write_jsonl(std::ostream& out) const;
  /// Parses and re-verifies the digest chain; throws ProtocolError on mismatch.
  static MessageLog read_jsonl(std::istream& in);

 private:
  std::vector<LogRecord> records_;
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

nlohmann::ordered_json to_payload(const Level1Report& r);
nlohmann::ordered_json to_payload(const Level2Report& r);
nlohmann::ordered_json to_payload(const SelectionResult& s);
nlohmann::ordered_json to_payload(const LabelBroadcast& b);

ProbabilityMap probs_from_payload(const nlohmann::ordered_json& payload);
SelectionResult selection_from_payload(const nlohmann::ordered_json& payload);
std::vector<LabelEntry> labels_from_payload(const nlohmann::ordered_json& payload);

/// Structural trust-boundary check of one log record: only whitelisted keys
/// per message type, ids as integers, probabilities in [0,1], labels in {0,1}.
/// Returns human-readable violations (empty when clean).
std::vector<std::string> audit_record(const LogRecord& record);

/// Re-runs the coordinator's selection for `round` from the logged Level-2 reports alone.
SelectionResult replay_selection(const MessageLog& log, Round round, const SamplingFunction& sampling, std::size_t n);

// ---- roles ----

/// Ground-truth annotator standing in for real labeling; counts label cost.
class LabelOracle {
 public:
  explicit LabelOracle(std::vector<Label> truth) : truth_(std::move(truth)) {}
  Label label(InstanceId id) const;
  std::size_t cost() const { return cost_; }
  void charge(std::size_t n) { cost_ += n; }

 private:
  std::vector<Label> truth_;
  std::size_t cost_ = 0;
};

/// Reads labels for `ids` from the oracle and charges |ids|. Throws on unknown ids.
std::vector<LabelEntry> acquire_labels(LabelOracle& oracle, std::span<const InstanceId> ids,
                                       std::span<const CollaboratorId> suppliers);

class CollaboratorAgent {
 public:
  CollaboratorAgent(CollaboratorId id, FeatureView view, TrainedModel base, std::size_t k, LearnerKind ensemble_kind,
                    Round ensemble_start_round, std::size_t min_labels);

  CollaboratorId id() const { return id_; }
  const FeatureView& view() const { return view_; }
  const TrainedModel& base_model() const { return base_; }
  const std::optional<EnsembleModel>& ensemble() const { return ensemble_; }
  const Level1Archive& archive() const { return archive_; }
  const LabelStore& labels() const { return labels_; }
  const EnsembleInputSchema& schema() const { return schema_; }
  Round ensemble_start_round() const { return start_round_; }
  std::size_t min_labels() const { return min_labels_; }

  /// Base-model probabilities over `ids` (own view only).
  std::vector<double> base_probabilities(std::span<const InstanceId> ids) const;

  Level1Report level1(Round round, std::span<const InstanceId> pool) const;
  void receive_level1(Round round, const std::vector<Level1Report>& reports);
  Level2Report level2(Round round, std::span<const InstanceId> pool) const;
  void receive_labels(const LabelBroadcast& broadcast);
  /// Rebuilds the ensemble from scratch when eligible; returns the matrix it used, if any.
  std::optional<TrainingMatrix> retrain(Round round, std::uint64_t seed);

 private:
  CollaboratorId id_;
  FeatureView view_;
  TrainedModel base_;
  LearnerKind ensemble_kind_;
  Round start_round_;
  std::size_t min_labels_;
  EnsembleInputSchema schema_;
  Level1Archive archive_;
  LabelStore labels_;
  std::optional<EnsembleModel> ensemble_;
};

struct RoundLog {
  Round round = 0;
  std::vector<Level1Report> level1;
  std::vector<Level2Report> level2;
  SelectionResult selection;
  LabelBroadcast broadcast;
  std::size_t pool_before = 0;
  std::size_t pool_after = 0;
};

struct SessionLog {
  std::vector<RoundLog> rounds;
  std::string digest;
};

struct BaseModelInfo {
  std::size_t attempts = 0;
  double test_auc = 0.0;
};

class Session {
 public:
  using MatrixHook = std::function<void(CollaboratorId, Round, const TrainingMatrix&, const EnsembleInputSchema&)>;

  const RoundConfig& config() const { return config_; }
  const Dataset& dataset() const { return *dataset_; }
  const FeaturePartition& partition() const { return partition_; }
  const Splits& splits() const { return splits_; }
  std::uint64_t seed() const { return seed_; }

  const std::vector<InstanceId>& pool() const { return pool_; }
  std::size_t initial_pool_size() const { return initial_pool_; }
  Round rounds_completed() const { return round_; }
  const std::vector<CollaboratorAgent>& agents() const { return agents_; }
  const std::vector<BaseModelInfo>& base_info() const { return base_info_; }
  const MessageLog& log() const { return log_; }
  std::size_t label_cost() const { return oracle_.cost(); }
  std::uint32_t coordinator_sender() const;

  /// Called with every ensemble training matrix (debug dumps).
  void set_matrix_hook(MatrixHook hook) { matrix_hook_ = std::move(hook); }

  RoundLog run_round();

 private:
  friend Session init_session(const RoundConfig&, std::shared_ptr<const Dataset>, const FeaturePartition&,
                              const Splits&, std::uint64_t);
  Session() = default;

  RoundConfig config_;
  std::shared_ptr<const Dataset> dataset_;
  FeaturePartition partition_;
  Splits splits_;
  std::uint64_t seed_ = 0;
  std::vector<InstanceId> pool_;
  std::size_t initial_pool_ = 0;
  Round round_ = 0;
  std::vector<CollaboratorAgent> agents_;
  std::vector<BaseModelInfo> base_info_;
  std::unique_ptr<SamplingFunction> sampling_;
  LabelOracle oracle_{{}};
  MessageLog log_;
  MatrixHook matrix_hook_;
};

/// Bootstraps each collaborator's base model into its AUC band (warm-start
/// rows, own view, observer test split) and opens the log with an init record.
Session init_session(const RoundConfig& config, std::shared_ptr<const Dataset> dataset,
                     const FeaturePartition& partition, const Splits& splits, std::uint64_t seed);

using RoundObserver = std::function<void(const Session&, const RoundLog&)>;

/// Runs config.q rounds, calling `observer` after each.
SessionLog run_session(Session& session, const RoundObserver& observer = {});

}  // namespace c2al
