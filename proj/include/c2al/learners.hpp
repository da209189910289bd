#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "c2al/common.hpp"
#include "c2al/kernels.hpp"

namespace c2al {

enum class LearnerTag { linear_logistic, cart, random_forest, gbm, gbm_l2 };

std::string to_string(LearnerTag tag);
LearnerTag learner_tag_from_string(const std::string& name);

/// Learner family plus its hyperparameters. Fields that do not apply to a
/// family are ignored by it.
struct LearnerKind {
  LearnerTag tag = LearnerTag::linear_logistic;
  double learning_rate = 0.1;  // logistic gradient-descent step
  std::size_t epochs = 500;
  std::size_t max_depth = 3;
  std::size_t min_samples_leaf = 1;
  std::size_t n_trees = 100;
  double shrinkage = 0.1;
  double subsample = 1.0;
  double l2_penalty = 1.0;

  /// Family defaults: cart depth 4; forest 100 trees of depth 8; boosting 100 trees of depth 3.
  static LearnerKind defaults(LearnerTag tag);

  void validate() const;

  friend bool operator==(const LearnerKind&, const LearnerKind&) = default;
};

struct LogisticParams {
  std::vector<double> mean;   // per-column standardization
  std::vector<double> scale;
  std::vector<double> weights;
  double bias = 0.0;
};

struct ForestParams {
  std::vector<kernels::Tree> trees;  // leaves hold class-1 fractions; output is their mean
};

struct BoostParams {
  double base_score = 0.0;  // initial log-odds
  double shrinkage = 0.1;
  std::vector<kernels::Tree> trees;  // leaves hold log-odds increments
};

struct TrainedModel {
  LearnerKind kind;
  std::variant<LogisticParams, ForestParams, BoostParams> params;
  /// Input columns, as positions within the owner's feature view (or ensemble schema).
  std::vector<std::size_t> feature_indices;
  CollaboratorId owner = 0;

  std::size_t n_inputs() const { return feature_indices.size(); }
};

/// Fits a model on all columns of `x`; feature_indices defaults to 0..cols-1.
TrainedModel train(const LearnerKind& kind, const Matrix& x, std::span<const Label> y, std::uint64_t seed);

/// Class-1 probability per row, each finite and in [0,1].
std::vector<double> predict_proba(const TrainedModel& model, const Matrix& x);

/// Mean binary cross-entropy with probabilities clamped to [1e-6, 1-1e-6].
double log_loss(std::span<const double> probs, std::span<const Label> y);

// Logistic internals, exposed for gradient and convergence checks.

struct LossGradient {
  double loss = 0.0;
  std::vector<double> grad_weights;
  double grad_bias = 0.0;
};

/// Mean log-loss of sigmoid(x·w + b) and its exact gradient (no clamping).
LossGradient logistic_loss_gradient(const Matrix& x, std::span<const Label> y, std::span<const double> weights,
                                    double bias);

struct LogisticFit {
  LogisticParams params;
  std::vector<double> loss_history;  // loss before each epoch, then the final loss
};

LogisticFit fit_logistic(const Matrix& x, std::span<const Label> y, double step, std::size_t epochs,
                         bool standardize = true);

/// Boosting fit that also records the training log-loss after each tree.
struct BoostFit {
  TrainedModel model;
  std::vector<double> loss_history;
};
BoostFit fit_boosting(const LearnerKind& kind, const Matrix& x, std::span<const Label> y, std::uint64_t seed);

struct AucBand {
  double low = 0.0;
  double high = 1.0;

  bool contains(double v) const { return v >= low && v <= high; }
  void validate() const;
};

class BandUnreachable : public Error {
 public:
  BandUnreachable(const std::string& what, double best_auc, std::size_t attempts)
      : Error(what), best_auc_(best_auc), attempts_(attempts) {}
  double best_auc() const { return best_auc_; }
  std::size_t attempts() const { return attempts_; }

 private:
  double best_auc_;
  std::size_t attempts_;
};

struct BandFit {
  TrainedModel model;  // feature_indices are positions within warm_x columns
  std::size_t attempts = 0;
  double eval_auc = 0.0;
};

/// Retrains on fresh draws of `n_feat` columns and `n_inst` bootstrap rows
/// until the eval AUC lands inside `band`.
BandFit train_to_band(const LearnerKind& kind, const AucBand& band, const Matrix& warm_x,
                      std::span<const Label> warm_y, const Matrix& eval_x, std::span<const Label> eval_y,
                      std::size_t n_feat, std::size_t n_inst, std::size_t max_attempts, std::uint64_t seed);

nlohmann::json to_json(const LearnerKind& kind);
LearnerKind learner_kind_from_json(const nlohmann::json& j);

/// Kind, hyperparameters, feature indices and a digest of the fitted parameters.
nlohmann::json model_summary(const TrainedModel& model);

}  // namespace c2al
