#pragma once

// Hot loops shared by the tree learners. Each kernel has a plain serial
// reference and an OpenMP version; both must return bit-identical results,
// which the kernel tests and the benchmark target check.

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "c2al/common.hpp"

namespace c2al::kernels {

enum class Exec { serial, parallel, automatic };

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // go left when x <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> row) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
      const auto& n = nodes[i];
      i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[i].value;
  }

  std::size_t depth() const;
  std::size_t leaves() const;
};

struct SplitCandidate {
  std::int32_t feature = -1;
  double threshold = 0.0;
  double gain = -std::numeric_limits<double>::infinity();

  bool valid() const { return feature >= 0; }
};

/// Best Gini split over `features` for the node holding `rows`.
/// Gain is the weighted impurity decrease. Ties go to the lowest feature index,
/// then to the lowest threshold. Splits leaving fewer than `min_leaf` rows on
/// a side are skipped.
SplitCandidate best_gini_split(const Matrix& x, std::span<const Label> y, std::span<const std::size_t> rows,
                               std::span<const std::size_t> features, std::size_t min_leaf,
                               Exec exec = Exec::automatic);

/// Best second-order split: gain = GL²/(HL+λ) + GR²/(HR+λ) − G²/(H+λ).
/// With unit hessians and λ = 0 this is the squared-error reduction.
SplitCandidate best_gradient_split(const Matrix& x, std::span<const double> grad, std::span<const double> hess,
                                   std::span<const std::size_t> rows, std::span<const std::size_t> features,
                                   double lambda, std::size_t min_leaf, Exec exec = Exec::automatic);

/// out[r] = Σ_t trees[t].predict(x.row(r)), summed in tree order.
void sum_tree_predictions(std::span<const Tree> trees, const Matrix& x, std::span<double> out,
                          Exec exec = Exec::automatic);

/// Number of OpenMP threads available (1 when built without OpenMP).
int max_threads();

}  // namespace c2al::kernels
