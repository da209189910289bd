#pragma once

// Independent reference computations used as test oracles. Nothing here
// calls into the code paths it checks.

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "c2al/common.hpp"

namespace oracle {

/// O(N²) AUC by enumerating every positive/negative pair; ties count half.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<c2al::Label>& labels) {
  double credit = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) credit += 1.0;
      else if (scores[i] == scores[j]) credit += 0.5;
    }
  }
  return credit / pairs;
}

/// Alternating selection simulated literally: a list of "already selected",
/// a turn pointer, and for each turn a scan from the top of that ranking.
struct StepResult {
  std::vector<c2al::InstanceId> chosen;
  std::vector<std::size_t> supplier_positions;  // index into the ranking list
};

inline StepResult step_through_select(const std::vector<std::vector<c2al::InstanceId>>& rankings, std::size_t n) {
  StepResult out;
  std::size_t turn = 0;
  std::size_t idle_turns = 0;
  while (out.chosen.size() < n && idle_turns < rankings.size()) {
    const auto& r = rankings[turn % rankings.size()];
    bool took = false;
    for (auto id : r) {
      if (std::find(out.chosen.begin(), out.chosen.end(), id) == out.chosen.end()) {
        out.chosen.push_back(id);
        out.supplier_positions.push_back(turn % rankings.size());
        took = true;
        break;
      }
    }
    idle_turns = took ? 0 : idle_turns + 1;
    ++turn;
  }
  return out;
}

/// Ranking by |p-0.5| then id, using insertion sort (stable, no std::sort).
inline std::vector<c2al::InstanceId> insertion_rank(const std::vector<std::pair<c2al::InstanceId, double>>& items) {
  std::vector<std::pair<double, c2al::InstanceId>> v;
  for (auto [id, p] : items) v.push_back({p > 0.5 ? p - 0.5 : 0.5 - p, id});
  for (std::size_t i = 1; i < v.size(); ++i) {
    auto key = v[i];
    std::size_t j = i;
    while (j > 0 && (v[j - 1].first > key.first || (v[j - 1].first == key.first && v[j - 1].second > key.second))) {
      v[j] = v[j - 1];
      --j;
    }
    v[j] = key;
  }
  std::vector<c2al::InstanceId> out;
  for (auto& [s, id] : v) out.push_back(id);
  return out;
}

/// True when no element occurs in two of the given sets.
inline bool pairwise_disjoint(const std::vector<std::vector<c2al::InstanceId>>& sets) {
  for (std::size_t a = 0; a < sets.size(); ++a) {
    for (std::size_t b = a + 1; b < sets.size(); ++b) {
      for (auto x : sets[a]) {
        for (auto y : sets[b]) {
          if (x == y) return false;
        }
      }
    }
  }
  return true;
}

}  // namespace oracle
