#include "c2al/kernels.hpp"

#include <algorithm>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace c2al::kernels {

namespace {

constexpr std::size_t kParallelWork = 1 << 15;

bool use_parallel(Exec exec, std::size_t work) {
  if (exec == Exec::serial) return false;
  if (exec == Exec::parallel) return true;
  return work >= kParallelWork && max_threads() > 1;
}

double gini(double n, double pos) {
  if (n <= 0.0) return 0.0;
  const double p = pos / n;
  return 2.0 * p * (1.0 - p);
}

double midpoint(double a, double b) {
  const double m = a + (b - a) * 0.5;
  return m < b ? m : a;
}

// Strictly better gain wins; equal gains keep the earlier candidate.
void keep_better(SplitCandidate& best, const SplitCandidate& c) {
  if (c.valid() && (!best.valid() || c.gain > best.gain)) best = c;
}

SplitCandidate gini_for_feature(const Matrix& x, std::span<const Label> y, std::span<const std::size_t> rows,
                                std::size_t feature, std::size_t min_leaf,
                                std::vector<std::pair<double, Label>>& scratch) {
  const std::size_t n = rows.size();
  scratch.resize(n);
  double pos = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    scratch[i] = {x(rows[i], feature), y[rows[i]]};
    pos += y[rows[i]];
  }
  std::sort(scratch.begin(), scratch.end());

  const double total = static_cast<double>(n);
  const double parent = gini(total, pos);
  SplitCandidate best;
  double left_pos = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    left_pos += scratch[i].second;
    const std::size_t n_left = i + 1;
    if (scratch[i].first == scratch[i + 1].first) continue;
    if (n_left < min_leaf || n - n_left < min_leaf) continue;
    const double nl = static_cast<double>(n_left);
    const double nr = total - nl;
    const double gain = parent - (nl / total) * gini(nl, left_pos) - (nr / total) * gini(nr, pos - left_pos);
    if (!best.valid() || gain > best.gain) {
      best.feature = static_cast<std::int32_t>(feature);
      best.threshold = midpoint(scratch[i].first, scratch[i + 1].first);
      best.gain = gain;
    }
  }
  return best;
}

struct GradEntry {
  double value;
  double grad;
  double hess;
  bool operator<(const GradEntry& o) const { return value < o.value; }
};

SplitCandidate gradient_for_feature(const Matrix& x, std::span<const double> grad, std::span<const double> hess,
                                    std::span<const std::size_t> rows, std::size_t feature, double lambda,
                                    std::size_t min_leaf, std::vector<GradEntry>& scratch) {
  const std::size_t n = rows.size();
  scratch.resize(n);
  double g_total = 0.0;
  double h_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = rows[i];
    scratch[i] = {x(r, feature), grad[r], hess[r]};
  }
  // stable so equal feature values keep row order and the sums stay reproducible
  std::stable_sort(scratch.begin(), scratch.end());
  for (const auto& e : scratch) {
    g_total += e.grad;
    h_total += e.hess;
  }

  const double parent = g_total * g_total / (h_total + lambda);
  SplitCandidate best;
  double gl = 0.0;
  double hl = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    gl += scratch[i].grad;
    hl += scratch[i].hess;
    const std::size_t n_left = i + 1;
    if (scratch[i].value == scratch[i + 1].value) continue;
    if (n_left < min_leaf || n - n_left < min_leaf) continue;
    const double gr = g_total - gl;
    const double hr = h_total - hl;
    if (hl + lambda <= 0.0 || hr + lambda <= 0.0) continue;
    const double gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
    if (!best.valid() || gain > best.gain) {
      best.feature = static_cast<std::int32_t>(feature);
      best.threshold = midpoint(scratch[i].value, scratch[i + 1].value);
      best.gain = gain;
    }
  }
  return best;
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

std::size_t Tree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
  std::size_t deepest = 0;
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    if (nodes[i].feature >= 0) {
      stack.emplace_back(static_cast<std::size_t>(nodes[i].left), d + 1);
      stack.emplace_back(static_cast<std::size_t>(nodes[i].right), d + 1);
    }
  }
  return deepest;
}

std::size_t Tree::leaves() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

SplitCandidate best_gini_split(const Matrix& x, std::span<const Label> y, std::span<const std::size_t> rows,
                               std::span<const std::size_t> features, std::size_t min_leaf, Exec exec) {
  SplitCandidate best;
  if (!use_parallel(exec, rows.size() * features.size())) {
    std::vector<std::pair<double, Label>> scratch;
    for (auto f : features) keep_better(best, gini_for_feature(x, y, rows, f, min_leaf, scratch));
    return best;
  }

  std::vector<SplitCandidate> per_feature(features.size());
  const auto nf = static_cast<std::ptrdiff_t>(features.size());
#pragma omp parallel
  {
    std::vector<std::pair<double, Label>> scratch;
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < nf; ++i) {
      per_feature[static_cast<std::size_t>(i)] =
          gini_for_feature(x, y, rows, features[static_cast<std::size_t>(i)], min_leaf, scratch);
    }
  }
  for (const auto& c : per_feature) keep_better(best, c);
  return best;
}

SplitCandidate best_gradient_split(const Matrix& x, std::span<const double> grad, std::span<const double> hess,
                                   std::span<const std::size_t> rows, std::span<const std::size_t> features,
                                   double lambda, std::size_t min_leaf, Exec exec) {
  SplitCandidate best;
  if (!use_parallel(exec, rows.size() * features.size())) {
    std::vector<GradEntry> scratch;
    for (auto f : features) {
      keep_better(best, gradient_for_feature(x, grad, hess, rows, f, lambda, min_leaf, scratch));
    }
    return best;
  }

  std::vector<SplitCandidate> per_feature(features.size());
  const auto nf = static_cast<std::ptrdiff_t>(features.size());
#pragma omp parallel
  {
    std::vector<GradEntry> scratch;
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < nf; ++i) {
      per_feature[static_cast<std::size_t>(i)] = gradient_for_feature(
          x, grad, hess, rows, features[static_cast<std::size_t>(i)], lambda, min_leaf, scratch);
    }
  }
  for (const auto& c : per_feature) keep_better(best, c);
  return best;
}

void sum_tree_predictions(std::span<const Tree> trees, const Matrix& x, std::span<double> out, Exec exec) {
  if (out.size() != x.rows()) throw InvalidArgument("sum_tree_predictions: output size mismatch");
  const auto n = static_cast<std::ptrdiff_t>(x.rows());
  if (!use_parallel(exec, x.rows() * trees.size() * 4)) {
    for (std::ptrdiff_t r = 0; r < n; ++r) {
      double s = 0.0;
      for (const auto& t : trees) s += t.predict(x.row(static_cast<std::size_t>(r)));
      out[static_cast<std::size_t>(r)] = s;
    }
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(x.row(static_cast<std::size_t>(r)));
    out[static_cast<std::size_t>(r)] = s;
  }
}

}  // namespace c2al::kernels
