#include <cstring>
#include <numeric>

#include "doctest.h"

#include "c2al/kernels.hpp"
#include "c2al/rng.hpp"

using namespace c2al;
using namespace c2al::kernels;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, bool quantize) {
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      // quantized values force many threshold ties
      m(r, c) = quantize ? static_cast<double>(rng.below(5)) : rng.normal();
    }
  }
  return m;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool same_split(const SplitCandidate& a, const SplitCandidate& b) {
  return a.feature == b.feature && same_bits(a.threshold, b.threshold) && same_bits(a.gain, b.gain);
}

// Exhaustive Gini oracle: every (feature, observed value) threshold, no sorting tricks.
SplitCandidate brute_gini(const Matrix& x, const std::vector<Label>& y, const std::vector<std::size_t>& rows,
                          const std::vector<std::size_t>& features, std::size_t min_leaf) {
  auto gini = [](double pos, double n) {
    if (n == 0) return 0.0;
    const double p = pos / n;
    return 1.0 - p * p - (1 - p) * (1 - p);
  };
  double pos = 0;
  for (auto r : rows) pos += y[r];
  const double n = static_cast<double>(rows.size());
  const double parent = gini(pos, n);
  SplitCandidate best;
  for (auto f : features) {
    std::vector<double> values;
    for (auto r : rows) values.push_back(x(r, f));
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t v = 0; v + 1 < values.size(); ++v) {
      double nl = 0, pl = 0;
      for (auto r : rows) {
        if (x(r, f) <= values[v]) {
          nl += 1;
          pl += y[r];
        }
      }
      if (nl < static_cast<double>(min_leaf) || n - nl < static_cast<double>(min_leaf)) continue;
      const double gain = parent - (nl / n) * gini(pl, nl) - ((n - nl) / n) * gini(pos - pl, n - nl);
      if (!best.valid() || gain > best.gain + 1e-12) {
        best.feature = static_cast<std::int32_t>(f);
        best.threshold = values[v];
        best.gain = gain;
      }
    }
  }
  return best;
}

}  // namespace

TEST_CASE("gini split matches an exhaustive oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + rng.below(40);
    auto x = random_matrix(n, 4, rng, trial % 2 == 0);
    std::vector<Label> y(n);
    for (auto& v : y) v = static_cast<Label>(rng.below(2));
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    std::vector<std::size_t> features{0, 1, 2, 3};
    const auto got = best_gini_split(x, y, rows, features, 1, Exec::serial);
    const auto want = brute_gini(x, y, rows, features, 1);
    CHECK(got.valid() == want.valid());
    if (got.valid()) {
      CHECK(got.gain == doctest::Approx(want.gain).epsilon(1e-9));
      // thresholds may be placed between observed values; both must induce the same partition
      if (got.feature == want.feature) {
        for (auto r : rows) {
          const auto f = static_cast<std::size_t>(got.feature);
          CHECK((x(r, f) <= got.threshold) == (x(r, f) <= want.threshold));
        }
      }
    }
  }
}

TEST_CASE("gini split prefers lowest feature on ties") {
  // two identical columns: the split must be reported on column 0
  Matrix x(4, 2);
  const double vals[] = {0, 1, 2, 3};
  for (std::size_t r = 0; r < 4; ++r) x(r, 0) = x(r, 1) = vals[r];
  std::vector<Label> y{0, 0, 1, 1};
  std::vector<std::size_t> rows{0, 1, 2, 3};
  std::vector<std::size_t> features{0, 1};
  auto s = best_gini_split(x, y, rows, features, 1, Exec::serial);
  CHECK(s.feature == 0);
  CHECK(s.gain == doctest::Approx(0.5));
}

TEST_CASE("serial and parallel kernels agree bitwise") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 200 + rng.below(800);
    const std::size_t m = 3 + rng.below(10);
    auto x = random_matrix(n, m, rng, trial % 3 == 0);
    std::vector<Label> y(n);
    std::vector<double> g(n), h(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<Label>(rng.below(2));
      g[i] = rng.normal();
      h[i] = rng.uniform(0.01, 0.25);
    }
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n; ++i) {
      if (rng.uniform() < 0.7) rows.push_back(i);
    }
    std::vector<std::size_t> features(m);
    std::iota(features.begin(), features.end(), std::size_t{0});
    const std::size_t min_leaf = 1 + rng.below(5);

    CHECK(same_split(best_gini_split(x, y, rows, features, min_leaf, Exec::serial),
                     best_gini_split(x, y, rows, features, min_leaf, Exec::parallel)));
    for (double lambda : {0.0, 1.0}) {
      CHECK(same_split(best_gradient_split(x, g, h, rows, features, lambda, min_leaf, Exec::serial),
                       best_gradient_split(x, g, h, rows, features, lambda, min_leaf, Exec::parallel)));
    }

    std::vector<Tree> trees(7);
    for (auto& t : trees) {
      t.nodes = {{static_cast<std::int32_t>(rng.below(m)), rng.normal(), 1, 2, 0.0},
                 {-1, 0.0, -1, -1, rng.normal()},
                 {-1, 0.0, -1, -1, rng.normal()}};
    }
    std::vector<double> a(n), b(n);
    sum_tree_predictions(trees, x, a, Exec::serial);
    sum_tree_predictions(trees, x, b, Exec::parallel);
    bool all_same = true;
    for (std::size_t i = 0; i < n; ++i) all_same = all_same && same_bits(a[i], b[i]);
    CHECK(all_same);
  }
}

TEST_CASE("gradient split with unit hessians is the squared-error reduction") {
  Rng rng(3);
  const std::size_t n = 60;
  auto x = random_matrix(n, 3, rng, false);
  std::vector<double> g(n), h(n, 1.0);
  for (auto& v : g) v = rng.normal();
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::vector<std::size_t> features{0, 1, 2};
  const auto s = best_gradient_split(x, g, h, rows, features, 0.0, 1, Exec::serial);
  REQUIRE(s.valid());

  auto sse = [&](auto pred) {
    double mean = 0, cnt = 0, out = 0;
    for (auto r : rows) {
      if (pred(r)) {
        mean += g[r];
        cnt += 1;
      }
    }
    mean /= cnt;
    for (auto r : rows) {
      if (pred(r)) out += (g[r] - mean) * (g[r] - mean);
    }
    return out;
  };
  const auto f = static_cast<std::size_t>(s.feature);
  const double parent = sse([](std::size_t) { return true; });
  const double children = sse([&](std::size_t r) { return x(r, f) <= s.threshold; }) +
                          sse([&](std::size_t r) { return !(x(r, f) <= s.threshold); });
  CHECK(s.gain == doctest::Approx(parent - children).epsilon(1e-9));
}

TEST_CASE("min_leaf can make every split invalid") {
  Matrix x(3, 1);
  x(0, 0) = 0;
  x(1, 0) = 1;
  x(2, 0) = 2;
  std::vector<Label> y{0, 1, 1};
  std::vector<std::size_t> rows{0, 1, 2};
  std::vector<std::size_t> features{0};
  CHECK_FALSE(best_gini_split(x, y, rows, features, 2, Exec::serial).valid());
  CHECK(best_gini_split(x, y, rows, features, 1, Exec::serial).valid());
}

TEST_CASE("tree depth and leaf counts") {
  Tree t;
  t.nodes = {{0, 0.5, 1, 2, 0}, {-1, 0, -1, -1, 1.0}, {1, 0.0, 3, 4, 0}, {-1, 0, -1, -1, 2.0}, {-1, 0, -1, -1, 3.0}};
  CHECK(t.depth() == 2);
  CHECK(t.leaves() == 3);
  const double row_a[] = {0.5, 9.0};
  const double row_b[] = {0.6, -1.0};
  const double row_c[] = {0.6, 1.0};
  CHECK(t.predict(row_a) == 1.0);
  CHECK(t.predict(row_b) == 2.0);
  CHECK(t.predict(row_c) == 3.0);
}
