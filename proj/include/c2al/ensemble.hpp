#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "c2al/common.hpp"
#include "c2al/learners.hpp"
#include "c2al/synthdata.hpp"

namespace c2al {

using ProbabilityMap = std::map<InstanceId, double>;
using Round = std::uint32_t;

/// Every Level-1 report a collaborator has received, keyed by round.
class Level1Archive {
 public:
  explicit Level1Archive(std::size_t k = 0) : k_(k) {}

  std::size_t k() const { return k_; }

  /// Stores one round's reports, indexed by sender id; needs exactly k of them.
  void archive(Round round, std::vector<ProbabilityMap> reports);

  /// Latest round <= `up_to` in which every collaborator scored `id`.
  std::optional<Round> latest_full_coverage(InstanceId id, Round up_to) const;

  /// Probabilities of `id` from all k collaborators in `round`.
  std::vector<double> level1_row(InstanceId id, Round round) const;

  const std::map<Round, std::vector<ProbabilityMap>>& rounds() const { return rounds_; }

 private:
  std::size_t k_;
  std::map<Round, std::vector<ProbabilityMap>> rounds_;
};

struct LabelEntry {
  InstanceId id = 0;
  Label label = 0;
  CollaboratorId supplier = 0;

  friend bool operator==(const LabelEntry&, const LabelEntry&) = default;
};

/// Collaboratively acquired labels; grows monotonically.
class LabelStore {
 public:
  struct Record {
    Label label;
    Round round;
    friend bool operator==(const Record&, const Record&) = default;
  };

  /// Throws ProtocolError when an id is already labeled.
  void add(std::span<const LabelEntry> entries, Round round);

  std::size_t size() const { return records_.size(); }
  bool contains(InstanceId id) const { return records_.count(id) != 0; }
  const std::map<InstanceId, Record>& records() const { return records_; }

  friend bool operator==(const LabelStore&, const LabelStore&) = default;

 private:
  std::map<InstanceId, Record> records_;
};

/// Ensemble columns: owner's view columns (ascending feature index), then
/// one Level-1 probability column per collaborator (ascending id).
struct EnsembleInputSchema {
  std::vector<FeatureIndex> view_columns;
  std::size_t k = 0;

  std::size_t width() const { return view_columns.size() + k; }

  /// `x_03` style names for features, `col2_proba` (1-based collaborator) for probabilities.
  std::vector<std::string> column_names() const;

  friend bool operator==(const EnsembleInputSchema&, const EnsembleInputSchema&) = default;
};

std::string feature_column_name(FeatureIndex f);
std::string proba_column_name(CollaboratorId cid);

struct TrainingMatrix {
  Matrix x;
  std::vector<Label> y;
  std::vector<InstanceId> ids;  // ascending
};

/// One row per labeled instance. Level-1 values come from the latest round at
/// or before the instance's acquisition round in which all k collaborators
/// scored it. Throws ProtocolError if some labeled id lacks that coverage.
TrainingMatrix build_training_matrix(const FeatureView& view, const Level1Archive& archive,
                                     const LabelStore& labels);

struct EnsembleModel {
  TrainedModel inner;
  EnsembleInputSchema schema;
  Round first_round = 0;  // label rounds the model was fit on
  Round last_round = 0;
};

/// std::nullopt ("not ready") when rows < min_labels or y has one class.
std::optional<EnsembleModel> retrain_ensemble(const LearnerKind& kind, const TrainingMatrix& data,
                                              const EnsembleInputSchema& schema, std::size_t min_labels,
                                              const LabelStore& labels, std::uint64_t seed);

/// Predicts from the owner's view rows and the matching k Level-1 columns.
std::vector<double> ensemble_predict(const EnsembleModel& model, const Matrix& view_rows, const Matrix& level1_rows);

/// Writes the training matrix with a schema header: id,label,<schema columns>.
void write_training_matrix_csv(std::ostream& out, const TrainingMatrix& data, const EnsembleInputSchema& schema);

}  // namespace c2al
