#pragma once

#include <memory>

#include "c2al/protocol.hpp"
#include "c2al/synthdata.hpp"

namespace fixture {

struct SmallSession {
  std::shared_ptr<const c2al::Dataset> dataset;
  c2al::FeaturePartition partition;
  c2al::Splits splits;
  c2al::RoundConfig config;
};

/// k linear-logistic collaborators on a 1000-instance dataset with wide bands,
/// so setup is quick and never retries.
inline SmallSession small(std::size_t k = 4, std::size_t q = 5, std::size_t n = 10) {
  SmallSession s;
  c2al::DatasetSpec spec;
  spec.n_instances = 1000;
  s.dataset = std::make_shared<const c2al::Dataset>(c2al::generate_dataset(spec));
  s.partition = c2al::partition_features(20, k, 0, 3);
  s.splits = c2al::split_dataset(*s.dataset, k, 60, 0.3, 5);
  s.config.q = q;
  s.config.n = n;
  auto kind = c2al::LearnerKind::defaults(c2al::LearnerTag::linear_logistic);
  kind.epochs = 100;
  for (std::size_t c = 0; c < k; ++c) {
    c2al::CollaboratorConfig cc;
    cc.base_learner = kind;
    cc.band = {0.0, 1.0};
    s.config.collaborators.push_back(cc);
  }
  s.config.bootstrap = {2, 50, 50};
  return s;
}

inline c2al::Session start(const SmallSession& s, std::uint64_t seed = 1) {
  return c2al::init_session(s.config, s.dataset, s.partition, s.splits, seed);
}

}  // namespace fixture
