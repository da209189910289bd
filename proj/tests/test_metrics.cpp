#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

#include "c2al/metrics.hpp"
#include "c2al/rng.hpp"

using namespace c2al;

TEST_CASE("auc examples") {
  const std::vector<Label> y{0, 0, 1, 1};
  CHECK(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, y).value == 0.75);
  CHECK(auc(std::vector<double>{0.1, 0.2, 0.3, 0.4}, y).value == 1.0);
  CHECK(auc(std::vector<double>{0.4, 0.3, 0.2, 0.1}, y).value == 0.0);
  CHECK(auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, y).value == 0.5);
  const auto s = auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, y);
  CHECK(s.n_pos == 2);
  CHECK(s.n_neg == 2);
}

TEST_CASE("auc rejects bad input") {
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<Label>{1, 1}), InvalidArgument);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1}, std::vector<Label>{1, 0}), InvalidArgument);
  CHECK_THROWS_AS(auc(std::vector<double>{}, std::vector<Label>{}), InvalidArgument);
}

TEST_CASE("auc matches the pairwise oracle") {
  Rng rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.below(150);
    std::vector<double> s(n);
    std::vector<Label> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = trial % 2 ? static_cast<double>(rng.below(6)) / 5.0 : rng.uniform();
      y[i] = static_cast<Label>(rng.below(2));
    }
    y[0] = 0;
    y[1] = 1;
    CHECK(auc(s, y).value == oracle::pairwise_auc(s, y));
  }
}

TEST_CASE("auc complement and monotone invariance") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(100);
    std::vector<double> s(n), flipped(n), warped(n);
    std::vector<Label> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(20)) / 19.0;
      y[i] = static_cast<Label>(rng.below(2));
      flipped[i] = 1.0 - s[i];
      warped[i] = std::exp(3.0 * s[i]) + 2.0;
    }
    y[0] = 1;
    y[1] = 0;
    const double a = auc(s, y).value;
    CHECK(auc(flipped, y).value == doctest::Approx(1.0 - a).epsilon(1e-12));
    CHECK(auc(warped, y).value == a);
  }
}

TEST_CASE("permutation importance") {
  Rng rng(14);
  const std::size_t n = 400;
  Matrix x(n, 3);
  std::vector<Label> y(n);
  for (std::size_t r = 0; r < n; ++r) {
    y[r] = static_cast<Label>(r % 2);
    x(r, 0) = rng.normal() + (y[r] ? 1.0 : -1.0);
    x(r, 1) = 7.0;  // constant
    x(r, 2) = rng.normal();  // ignored by the predictor
  }
  const Predictor predict = [](const Matrix& m) {
    std::vector<double> p(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) p[r] = 1.0 / (1.0 + std::exp(-(m(r, 0) + 0.1 * m(r, 1))));
    return p;
  };
  const std::vector<std::string> names{"a", "b", "c"};
  const auto rep = permutation_importance(predict, x, y, names, 20, 5);
  CHECK(rep.columns == names);
  CHECK(rep.baseline_auc == auc(predict(x), y).value);
  CHECK(rep.importance[1] == 0.0);
  CHECK(rep.importance[2] == 0.0);
  CHECK(rep.importance[0] > 0.3);

  // independent shuffler: std::mt19937 + std::shuffle, same repeat count
  std::mt19937 gen(2024);
  double drop = 0.0;
  for (int rep_i = 0; rep_i < 20; ++rep_i) {
    std::vector<double> col(n);
    for (std::size_t r = 0; r < n; ++r) col[r] = x(r, 0);
    std::shuffle(col.begin(), col.end(), gen);
    Matrix shuffled = x;
    for (std::size_t r = 0; r < n; ++r) shuffled(r, 0) = col[r];
    drop += rep.baseline_auc - oracle::pairwise_auc(predict(shuffled), y);
  }
  CHECK(std::abs(drop / 20.0 - rep.importance[0]) <= 0.02);

  const auto again = permutation_importance(predict, x, y, names, 20, 5);
  CHECK(again.importance == rep.importance);
  CHECK_THROWS_AS(permutation_importance(predict, x, y, names, 0, 5), InvalidArgument);
}

TEST_CASE("evaluate_collaborator uses base model until an ensemble exists") {
  auto fx = fixture::small(2, 3, 10);
  fx.config.collaborators[1].ensemble_start_round = 3;
  auto session = fixture::start(fx);
  const auto& test = fx.splits.test;

  for (CollaboratorId c = 0; c < 2; ++c) {
    const auto e = evaluate_collaborator(session, c, test);
    CHECK(e.model_source == "base");
    CHECK(e.score.value == session.base_info()[c].test_auc);
  }
  session.run_round();
  // min_labels defaults to 2n, so one round of 10 labels is not enough yet
  CHECK(evaluate_collaborator(session, 0, test).model_source == "base");
  session.run_round();
  CHECK(evaluate_collaborator(session, 0, test).model_source == "ensemble");
  CHECK(evaluate_collaborator(session, 1, test).model_source == "base");

  // evaluation is read-only: repeated calls agree and the log is untouched
  const auto digest = session.log().digest();
  const auto a = evaluate_collaborator(session, 0, test);
  const auto b = evaluate_collaborator(session, 0, test);
  CHECK(a.score.value == b.score.value);
  CHECK(session.log().digest() == digest);
  CHECK_THROWS_AS(evaluate_collaborator(session, 2, test), InvalidArgument);

  const auto imp = collaborator_importance(session, 0, test, 3, 1);
  CHECK(imp.columns == session.agents()[0].schema().column_names());
  CHECK(imp.baseline_auc == a.score.value);
}
