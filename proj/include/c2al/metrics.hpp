#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "c2al/common.hpp"

namespace c2al {

struct AucScore {
  double value = 0.5;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

/// Mann-Whitney AUC via rank sums with midranks for ties, O(N log N).
/// Throws InvalidArgument unless both classes are present.
AucScore auc(std::span<const double> scores, std::span<const Label> labels);

/// Maps a feature matrix to class-1 probabilities.
using Predictor = std::function<std::vector<double>(const Matrix&)>;

struct ImportanceReport {
  std::vector<std::string> columns;
  std::vector<double> importance;  // baseline AUC minus mean permuted AUC, per column
  double baseline_auc = 0.0;
  std::size_t repeats = 0;
  std::uint64_t seed = 0;
};

/// Permutation importance: for each column, shuffle it `repeats` times
/// (seeds derived from `seed`, column and repeat) and average the AUC drop.
/// Columns run in parallel; results do not depend on the thread count.
ImportanceReport permutation_importance(const Predictor& predictor, const Matrix& x, std::span<const Label> y,
                                        std::span<const std::string> column_names, std::size_t repeats,
                                        std::uint64_t seed);

class Session;

struct CollaboratorEvaluation {
  AucScore score;
  std::string model_source;  // "base" or "ensemble"
};

/// Observer-side test AUC for one collaborator: its ensemble when it has
/// one, else its base model. Ensemble inputs on test rows use every
/// collaborator's base-model probabilities, which agents never see.
CollaboratorEvaluation evaluate_collaborator(const Session& session, CollaboratorId cid,
                                             std::span<const InstanceId> test_ids);

/// Importance report for the model evaluate_collaborator would use.
ImportanceReport collaborator_importance(const Session& session, CollaboratorId cid,
                                         std::span<const InstanceId> test_ids, std::size_t repeats,
                                         std::uint64_t seed);

}  // namespace c2al
