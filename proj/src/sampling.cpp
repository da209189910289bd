#include "c2al/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace c2al {

std::vector<double> uncertainty_scores(std::span<const double> probs) {
  std::vector<double> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0 && probs[i] <= 1.0)) throw InvalidArgument("uncertainty_scores: probability outside [0,1]");
    out[i] = std::abs(probs[i] - 0.5);
  }
  return out;
}

Ranking rank_for_query(const ProbabilityMap& probs, CollaboratorId collaborator) {
  if (probs.empty()) throw InvalidArgument("rank_for_query: no instances to rank");
  std::vector<std::pair<double, InstanceId>> keyed;
  keyed.reserve(probs.size());
  std::vector<double> p;
  p.reserve(probs.size());
  for (const auto& [id, prob] : probs) p.push_back(prob);
  const auto scores = uncertainty_scores(p);
  std::size_t i = 0;
  for (const auto& [id, prob] : probs) keyed.emplace_back(scores[i++], id);
  std::sort(keyed.begin(), keyed.end());

  Ranking r;
  r.collaborator = collaborator;
  r.ids.reserve(keyed.size());
  for (const auto& [score, id] : keyed) r.ids.push_back(id);
  return r;
}

SelectionResult round_robin_select(std::span<const Ranking> rankings, std::size_t n) {
  if (rankings.empty()) throw InvalidArgument("round_robin_select: no rankings");
  std::unordered_set<InstanceId> universe;
  for (const auto& r : rankings) universe.insert(r.ids.begin(), r.ids.end());
  if (universe.size() < n) {
    throw InvalidArgument("round_robin_select: only " + std::to_string(universe.size()) +
                          " unique ids available, need " + std::to_string(n));
  }

  SelectionResult out;
  std::unordered_set<InstanceId> taken;
  std::vector<std::size_t> cursor(rankings.size(), 0);
  for (std::size_t turn = 0; out.chosen.size() < n; ++turn) {
    const std::size_t who = turn % rankings.size();
    const auto& ids = rankings[who].ids;
    auto& pos = cursor[who];
    while (pos < ids.size() && taken.count(ids[pos])) ++pos;
    if (pos == ids.size()) continue;
    taken.insert(ids[pos]);
    out.chosen.push_back(ids[pos]);
    out.provenance.push_back({rankings[who].collaborator, turn});
    ++pos;
  }
  return out;
}

std::unique_ptr<SamplingFunction> make_sampling_function(const std::string& name) {
  if (name == "uncertainty") return std::make_unique<UncertaintySampling>();
  throw InvalidArgument("unknown sampling function '" + name + "'");
}

}  // namespace c2al
