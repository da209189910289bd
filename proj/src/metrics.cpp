#include "c2al/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "c2al/protocol.hpp"
#include "c2al/rng.hpp"

namespace c2al {

AucScore auc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("auc: scores and labels differ in length");
  AucScore out;
  for (auto l : labels) (l ? out.n_pos : out.n_neg) += 1;
  if (out.n_pos == 0 || out.n_neg == 0) throw InvalidArgument("auc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of positive ranks, with tied groups sharing their mean rank. Ranks are
  // doubled to stay integral: tied block [i, j) has doubled mean rank i + j + 1.
  std::uint64_t doubled_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    std::uint64_t pos_in_block = 0;
    for (std::size_t t = i; t < j; ++t) pos_in_block += labels[order[t]];
    doubled_rank_sum += pos_in_block * (i + j + 1);
    i = j;
  }
  // U = R_pos - n_pos(n_pos+1)/2; doubled: 2U = 2R - n_pos(n_pos+1)
  const std::uint64_t doubled_u = doubled_rank_sum - out.n_pos * (out.n_pos + 1);
  out.value = static_cast<double>(doubled_u) / (2.0 * static_cast<double>(out.n_pos) * static_cast<double>(out.n_neg));
  return out;
}

ImportanceReport permutation_importance(const Predictor& predictor, const Matrix& x, std::span<const Label> y,
                                        std::span<const std::string> column_names, std::size_t repeats,
                                        std::uint64_t seed) {
  if (repeats == 0) throw InvalidArgument("permutation_importance: repeats must be at least 1");
  if (column_names.size() != x.cols()) throw InvalidArgument("permutation_importance: one name per column required");
  ImportanceReport report;
  report.columns.assign(column_names.begin(), column_names.end());
  report.repeats = repeats;
  report.seed = seed;
  report.baseline_auc = auc(predictor(x), y).value;
  report.importance.assign(x.cols(), 0.0);

  const auto n_cols = static_cast<std::ptrdiff_t>(x.cols());
  std::vector<std::exception_ptr> errors(x.cols());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t ci = 0; ci < n_cols; ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    try {
      Matrix shuffled = x;
      const auto original = x.column(c);
      double drop = 0.0;
      for (std::size_t rep = 0; rep < repeats; ++rep) {
        Rng rng(derive_seed(seed, "permutation", (std::uint64_t{c} << 32) | rep));
        auto perm = original;
        rng.shuffle(perm);
        for (std::size_t r = 0; r < x.rows(); ++r) shuffled(r, c) = perm[r];
        drop += report.baseline_auc - auc(predictor(shuffled), y).value;
      }
      report.importance[c] = drop / static_cast<double>(repeats);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return report;
}

namespace {

struct ObserverInputs {
  Matrix x;
  std::vector<std::string> names;
  Predictor predictor;
  std::string source;
};

// Builds what the observer feeds the collaborator's current model on test rows.
ObserverInputs observer_inputs(const Session& session, CollaboratorId cid, std::span<const InstanceId> test_ids) {
  const auto& agents = session.agents();
  if (cid >= agents.size()) throw InvalidArgument("unknown collaborator id " + std::to_string(cid));
  const auto& agent = agents[cid];
  ObserverInputs in;

  if (!agent.ensemble()) {
    const auto& base = agent.base_model();
    std::vector<FeatureIndex> cols;
    for (auto pos : base.feature_indices) cols.push_back(agent.view().columns().at(pos));
    in.x = agent.view().rows(test_ids, cols);
    for (auto f : cols) in.names.push_back(feature_column_name(f));
    in.predictor = [&base](const Matrix& m) { return predict_proba(base, m); };
    in.source = "base";
    return in;
  }

  const auto& model = *agent.ensemble();
  Matrix level1(test_ids.size(), agents.size());
  for (std::size_t c = 0; c < agents.size(); ++c) {
    const auto p = agents[c].base_probabilities(test_ids);
    for (std::size_t r = 0; r < p.size(); ++r) level1(r, c) = p[r];
  }
  in.x = hconcat(agent.view().rows(test_ids), level1);
  in.names = model.schema.column_names();
  in.predictor = [&model](const Matrix& m) { return predict_proba(model.inner, m); };
  in.source = "ensemble";
  return in;
}

std::vector<Label> labels_of(const Session& session, std::span<const InstanceId> ids) {
  std::vector<Label> y;
  y.reserve(ids.size());
  for (auto id : ids) y.push_back(session.dataset().labels.at(id));
  return y;
}

}  // namespace

CollaboratorEvaluation evaluate_collaborator(const Session& session, CollaboratorId cid,
                                             std::span<const InstanceId> test_ids) {
  auto in = observer_inputs(session, cid, test_ids);
  return {auc(in.predictor(in.x), labels_of(session, test_ids)), in.source};
}

ImportanceReport collaborator_importance(const Session& session, CollaboratorId cid,
                                         std::span<const InstanceId> test_ids, std::size_t repeats,
                                         std::uint64_t seed) {
  auto in = observer_inputs(session, cid, test_ids);
  return permutation_importance(in.predictor, in.x, labels_of(session, test_ids), in.names, repeats, seed);
}

}  // namespace c2al
