#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "c2al/common.hpp"
#include "c2al/ensemble.hpp"

namespace c2al {

/// |p - 0.5| per instance; lower is more informative.
std::vector<double> uncertainty_scores(std::span<const double> probs);

struct Ranking {
  CollaboratorId collaborator = 0;
  std::vector<InstanceId> ids;  // most informative first
};

/// Ascending uncertainty score, ties by ascending instance id.
Ranking rank_for_query(const ProbabilityMap& probs, CollaboratorId collaborator = 0);

struct Provenance {
  CollaboratorId supplier = 0;
  std::size_t turn = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct SelectionResult {
  std::vector<InstanceId> chosen;
  std::vector<Provenance> provenance;  // parallel to `chosen`
};

/// Alternating selection: turns cycle through the rankings in the given
/// order; each turn takes that ranking's best id not yet chosen. A ranking
/// with nothing left forfeits its turn. Stops at n unique ids.
SelectionResult round_robin_select(std::span<const Ranking> rankings, std::size_t n);

/// Pre-agreed sampling function: turns a Level-2 report into a ranking.
class SamplingFunction {
 public:
  virtual ~SamplingFunction() = default;
  virtual std::string name() const = 0;
  virtual Ranking rank(const ProbabilityMap& probs, CollaboratorId sender) const = 0;
};

class UncertaintySampling final : public SamplingFunction {
 public:
  std::string name() const override { return "uncertainty"; }
  Ranking rank(const ProbabilityMap& probs, CollaboratorId sender) const override {
    return rank_for_query(probs, sender);
  }
};

/// Throws InvalidArgument for unknown names. Only "uncertainty" is built in.
std::unique_ptr<SamplingFunction> make_sampling_function(const std::string& name);

}  // namespace c2al
