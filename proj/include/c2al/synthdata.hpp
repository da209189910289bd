#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "c2al/common.hpp"

namespace c2al {

struct DatasetSpec {
  std::size_t n_instances = 3000;
  std::size_t n_features = 20;
  std::size_t n_informative = 5;
  std::size_t n_redundant = 5;
  double class_sep = 0.7;
  std::uint64_t seed = 42;

  /// Throws InvalidArgument naming the first offending field.
  void validate() const;
};

/// Column layout: [informative | redundant | noise]. Instance id == row index.
struct Dataset {
  Matrix features;
  std::vector<Label> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t n_features() const { return features.cols(); }
};

Dataset generate_dataset(const DatasetSpec& spec);

void write_dataset_csv(std::ostream& out, const Dataset& dataset);
Dataset read_dataset_csv(std::istream& in);

struct FeaturePartition {
  std::vector<FeatureIndex> common;
  std::vector<std::vector<FeatureIndex>> private_sets;

  std::size_t k() const { return private_sets.size(); }

  /// Sorted union of common and private[cid].
  std::vector<FeatureIndex> visible(CollaboratorId cid) const;

  /// Throws InvalidArgument when any disjointness or range invariant fails.
  void validate(std::size_t n_features) const;
};

/// Common features are drawn first, the rest is dealt round-robin after a seeded shuffle.
FeaturePartition partition_features(std::size_t n_features, std::size_t k, std::size_t common_count,
                                    std::uint64_t seed);

struct Splits {
  std::vector<std::vector<InstanceId>> warm_start;
  std::vector<InstanceId> pool;
  std::vector<InstanceId> test;
};

/// Seeded shuffle, then test carved first, then k warm-start sets; the rest is the pool.
/// Every returned id list is sorted ascending.
Splits split_dataset(const Dataset& dataset, std::size_t k, std::size_t warm_size, double test_fraction,
                     std::uint64_t seed);

/// Access-guarded window onto one collaborator's permitted columns.
///
/// All feature reads made on behalf of a collaborator go through this type;
/// asking for a column outside common ∪ private[cid] throws AccessViolation.
class FeatureView {
 public:
  FeatureView(const Dataset& dataset, const FeaturePartition& partition, CollaboratorId cid);

  CollaboratorId owner() const { return owner_; }

  /// Global feature indices visible to the owner, ascending.
  const std::vector<FeatureIndex>& columns() const { return columns_; }
  std::size_t width() const { return columns_.size(); }

  /// Permitted columns of the given instances, in ascending feature-index order.
  Matrix rows(std::span<const InstanceId> ids) const;

  /// Values of a single global feature column; rejects foreign columns.
  std::vector<double> column(FeatureIndex feature, std::span<const InstanceId> ids) const;

  /// Rows restricted to a subset of global feature indices; each must be visible.
  Matrix rows(std::span<const InstanceId> ids, std::span<const FeatureIndex> features) const;

 private:
  void check_id(InstanceId id) const;
  void check_feature(FeatureIndex f) const;

  const Dataset* dataset_;
  CollaboratorId owner_;
  std::vector<FeatureIndex> columns_;
};

/// Convenience: FeatureView(dataset, partition, cid).rows(ids).
Matrix view(const Dataset& dataset, const FeaturePartition& partition, CollaboratorId cid,
            std::span<const InstanceId> ids);

}  // namespace c2al
