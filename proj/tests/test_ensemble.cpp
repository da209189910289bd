#include <cmath>
#include <sstream>

#include "doctest.h"

#include "c2al/ensemble.hpp"
#include "c2al/rng.hpp"

using namespace c2al;

namespace {

struct Toy {
  Dataset ds;
  FeaturePartition partition;
  Level1Archive archive{4};
  LabelStore labels;
};

// 4 collaborators with 5 private columns each; probabilities are a function
// of (round, sender, id) so the expected join can be recomputed by hand.
double toy_prob(Round r, std::size_t sender, InstanceId id) {
  return std::fmod(0.013 * id + 0.17 * static_cast<double>(sender) + 0.031 * r, 1.0);
}

Toy make_toy(std::size_t n_instances, std::size_t rounds, std::size_t per_round) {
  Toy t;
  DatasetSpec spec;
  spec.n_instances = n_instances;
  t.ds = generate_dataset(spec);
  t.partition = partition_features(20, 4, 0, 1);
  std::vector<InstanceId> unlabeled;
  for (InstanceId i = 0; i < n_instances; ++i) unlabeled.push_back(i);
  Rng rng(4);
  for (Round r = 1; r <= rounds; ++r) {
    std::vector<ProbabilityMap> reports(4);
    for (std::size_t s = 0; s < 4; ++s) {
      for (auto id : unlabeled) reports[s][id] = toy_prob(r, s, id);
    }
    t.archive.archive(r, std::move(reports));
    rng.shuffle(unlabeled);
    std::vector<LabelEntry> batch;
    for (std::size_t i = 0; i < per_round; ++i) {
      batch.push_back({unlabeled.back(), t.ds.labels[unlabeled.back()], static_cast<CollaboratorId>(i % 4)});
      unlabeled.pop_back();
    }
    t.labels.add(batch, r);
  }
  return t;
}

}  // namespace

TEST_CASE("training matrix shape") {
  auto empty = make_toy(100, 0, 0);
  FeatureView v(empty.ds, empty.partition, 0);
  const auto m0 = build_training_matrix(v, empty.archive, empty.labels);
  CHECK(m0.x.rows() == 0);
  CHECK(m0.x.cols() == 9);
  CHECK(m0.ids.empty());

  auto t = make_toy(200, 2, 20);
  FeatureView v2(t.ds, t.partition, 2);
  const auto m = build_training_matrix(v2, t.archive, t.labels);
  CHECK(m.x.rows() == 40);
  CHECK(m.x.cols() == 9);
  CHECK(std::is_sorted(m.ids.begin(), m.ids.end()));
}

TEST_CASE("training matrix equals a brute-force join") {
  auto t = make_toy(10, 3, 3);
  for (CollaboratorId c = 0; c < 4; ++c) {
    FeatureView v(t.ds, t.partition, c);
    const auto m = build_training_matrix(v, t.archive, t.labels);
    REQUIRE(m.x.rows() == 9);
    std::size_t row = 0;
    for (InstanceId id = 0; id < 10; ++id) {
      const auto it = t.labels.records().find(id);
      if (it == t.labels.records().end()) continue;
      // features straight from the dataset, Level-1 values from the acquisition round
      const auto cols = t.partition.visible(c);
      CHECK(m.ids[row] == id);
      CHECK(m.y[row] == t.ds.labels[id]);
      for (std::size_t j = 0; j < cols.size(); ++j) CHECK(m.x(row, j) == t.ds.features(id, cols[j]));
      for (std::size_t s = 0; s < 4; ++s) CHECK(m.x(row, cols.size() + s) == toy_prob(it->second.round, s, id));
      ++row;
    }
  }
}

TEST_CASE("training matrix needs Level-1 coverage") {
  auto t = make_toy(50, 1, 5);
  LabelEntry extra{49, 0, 0};
  // label an id in a round that has no archive entry before it
  LabelStore bad;
  bad.add(std::span<const LabelEntry>(&extra, 1), 0);
  FeatureView v(t.ds, t.partition, 0);
  CHECK_THROWS_AS(build_training_matrix(v, t.archive, bad), ProtocolError);
}

TEST_CASE("label store rejects duplicates") {
  LabelStore s;
  std::vector<LabelEntry> a{{1, 0, 0}, {2, 1, 1}};
  s.add(a, 1);
  CHECK(s.size() == 2);
  std::vector<LabelEntry> again{{2, 1, 0}};
  CHECK_THROWS_AS(s.add(again, 2), ProtocolError);
  std::vector<LabelEntry> twice{{5, 1, 0}, {5, 1, 1}};
  CHECK_THROWS_AS(s.add(twice, 2), ProtocolError);
}

TEST_CASE("archive guards") {
  Level1Archive a(2);
  CHECK_THROWS_AS(a.archive(1, {ProbabilityMap{}}), ProtocolError);
  a.archive(1, {ProbabilityMap{{1, 0.2}}, ProbabilityMap{{1, 0.4}}});
  CHECK_THROWS_AS(a.archive(1, {ProbabilityMap{}, ProbabilityMap{}}), ProtocolError);
  CHECK_THROWS_AS(a.archive(2, {ProbabilityMap{{1, 1.5}}, ProbabilityMap{}}), ProtocolError);
  a.archive(3, {ProbabilityMap{{1, 0.3}}, ProbabilityMap{}});
  CHECK(a.latest_full_coverage(1, 3) == Round{1});
  CHECK_FALSE(a.latest_full_coverage(1, 0).has_value());
  CHECK(a.level1_row(1, 1) == std::vector<double>{0.2, 0.4});
}

TEST_CASE("retrain_ensemble readiness guards") {
  auto t = make_toy(200, 2, 20);
  FeatureView v(t.ds, t.partition, 0);
  const auto m = build_training_matrix(v, t.archive, t.labels);
  EnsembleInputSchema schema{v.columns(), 4};
  const auto kind = LearnerKind::defaults(LearnerTag::linear_logistic);
  CHECK_FALSE(retrain_ensemble(kind, m, schema, 41, t.labels, 1).has_value());
  const auto model = retrain_ensemble(kind, m, schema, 40, t.labels, 1);
  REQUIRE(model.has_value());
  CHECK(model->first_round == 1);
  CHECK(model->last_round == 2);

  auto one_class = m;
  std::fill(one_class.y.begin(), one_class.y.end(), Label{1});
  CHECK_FALSE(retrain_ensemble(kind, one_class, schema, 1, t.labels, 1).has_value());

  EnsembleInputSchema narrow{v.columns(), 3};
  CHECK_THROWS_AS(retrain_ensemble(kind, m, narrow, 1, t.labels, 1), InvalidArgument);
}

TEST_CASE("ensemble fit and prediction") {
  auto t = make_toy(400, 4, 40);
  FeatureView v(t.ds, t.partition, 1);
  const auto m = build_training_matrix(v, t.archive, t.labels);
  EnsembleInputSchema schema{v.columns(), 4};
  const auto model = retrain_ensemble(LearnerKind::defaults(LearnerTag::linear_logistic), m, schema, 40, t.labels, 1);
  REQUIRE(model.has_value());

  const auto own = select_cols(m.x, std::vector<std::size_t>{0, 1, 2, 3, 4});
  const auto l1 = select_cols(m.x, std::vector<std::size_t>{5, 6, 7, 8});
  const auto p = ensemble_predict(*model, own, l1);
  CHECK(p == predict_proba(model->inner, m.x));
  CHECK(log_loss(p, m.y) < std::log(2.0));
  CHECK_THROWS_AS(ensemble_predict(*model, l1, l1), InvalidArgument);

  EnsembleModel zero = *model;
  auto& lp = std::get<LogisticParams>(zero.inner.params);
  std::fill(lp.weights.begin(), lp.weights.end(), 0.0);
  lp.bias = 0.0;
  for (double q : ensemble_predict(zero, own, l1)) CHECK(q == 0.5);
}

TEST_CASE("schema names and csv header") {
  EnsembleInputSchema s{{3, 12}, 2};
  CHECK(s.column_names() == std::vector<std::string>{"x_03", "x_12", "col1_proba", "col2_proba"});
  TrainingMatrix m;
  m.x = Matrix(1, 4);
  m.x(0, 0) = 0.25;
  m.y = {1};
  m.ids = {7};
  std::ostringstream out;
  write_training_matrix_csv(out, m, s);
  CHECK(out.str() == "id,label,x_03,x_12,col1_proba,col2_proba\n7,1,0.25,0,0,0\n");
}
