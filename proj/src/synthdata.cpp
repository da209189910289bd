#include "c2al/synthdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>

#include "c2al/rng.hpp"

namespace c2al {

void DatasetSpec::validate() const {
  if (n_instances == 0) throw InvalidArgument("n_instances: must be positive");
  if (n_instances % 2 != 0) throw InvalidArgument("n_instances: must be even for exact class balance");
  if (n_features == 0) throw InvalidArgument("n_features: must be positive");
  if (n_informative + n_redundant > n_features) {
    throw InvalidArgument("n_informative: n_informative + n_redundant exceeds n_features");
  }
  if (n_redundant > 0 && n_informative == 0) {
    throw InvalidArgument("n_redundant: redundant features need at least one informative feature");
  }
  if (!(class_sep >= 0.0) || !std::isfinite(class_sep)) {
    throw InvalidArgument("class_sep: must be a finite non-negative number");
  }
}

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  const std::size_t n = spec.n_instances;
  const std::size_t n_inf = spec.n_informative;
  const std::size_t n_red = spec.n_redundant;

  Dataset ds;
  ds.labels.assign(n, 0);
  std::fill(ds.labels.begin() + static_cast<std::ptrdiff_t>(n / 2), ds.labels.end(), Label{1});
  rng.shuffle(ds.labels);

  std::vector<double> sign(n_inf);
  for (auto& s : sign) s = rng.uniform() < 0.5 ? -1.0 : 1.0;

  // mix[i * n_red + j]: weight of informative column i in redundant column j
  std::vector<double> mix(n_inf * n_red);
  for (auto& w : mix) w = rng.uniform(-1.0, 1.0);

  ds.features = Matrix(n, spec.n_features);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = ds.features.row(r);
    const double direction = ds.labels[r] ? 1.0 : -1.0;
    for (std::size_t i = 0; i < n_inf; ++i) {
      row[i] = rng.normal() + direction * sign[i] * spec.class_sep;
    }
    for (std::size_t j = 0; j < n_red; ++j) {
      double v = 0.0;
      for (std::size_t i = 0; i < n_inf; ++i) v += row[i] * mix[i * n_red + j];
      row[n_inf + j] = v;
    }
    for (std::size_t c = n_inf + n_red; c < spec.n_features; ++c) row[c] = rng.normal();
  }
  return ds;
}

namespace {

void put_double(std::ostream& out, double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, end - buf);
}

template <typename T>
T parse_number(std::string_view field, std::size_t line) {
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw InvalidArgument("dataset csv: bad number '" + std::string(field) + "' on line " + std::to_string(line));
  }
  return value;
}

std::vector<std::string_view> split_commas(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(',', start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

void write_dataset_csv(std::ostream& out, const Dataset& dataset) {
  out << "id,label";
  for (std::size_t c = 0; c < dataset.n_features(); ++c) out << ",f" << c;
  out << '\n';
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    out << r << ',' << static_cast<int>(dataset.labels[r]);
    for (double v : dataset.features.row(r)) {
      out << ',';
      put_double(out, v);
    }
    out << '\n';
  }
}

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("dataset csv: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_commas(line);
  if (header.size() < 2 || header[0] != "id" || header[1] != "label") {
    throw InvalidArgument("dataset csv: header must start with id,label");
  }
  const std::size_t m = header.size() - 2;
  for (std::size_t c = 0; c < m; ++c) {
    if (header[c + 2] != "f" + std::to_string(c)) throw InvalidArgument("dataset csv: unexpected column name");
  }

  Dataset ds;
  ds.features = Matrix(0, m);
  std::vector<double> row(m);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_commas(line);
    if (fields.size() != m + 2) throw InvalidArgument("dataset csv: wrong field count on line " + std::to_string(line_no));
    if (parse_number<std::size_t>(fields[0], line_no) != ds.size()) {
      throw InvalidArgument("dataset csv: ids must be 0..n-1 in order");
    }
    const int label = parse_number<int>(fields[1], line_no);
    if (label != 0 && label != 1) throw InvalidArgument("dataset csv: label must be 0 or 1");
    for (std::size_t c = 0; c < m; ++c) row[c] = parse_number<double>(fields[c + 2], line_no);
    ds.features.append_row(row);
    ds.labels.push_back(static_cast<Label>(label));
  }
  return ds;
}

std::vector<FeatureIndex> FeaturePartition::visible(CollaboratorId cid) const {
  if (cid >= private_sets.size()) throw InvalidArgument("unknown collaborator id " + std::to_string(cid));
  std::vector<FeatureIndex> out = common;
  out.insert(out.end(), private_sets[cid].begin(), private_sets[cid].end());
  std::sort(out.begin(), out.end());
  return out;
}

void FeaturePartition::validate(std::size_t n_features) const {
  if (private_sets.empty()) throw InvalidArgument("partition: no collaborators");
  std::set<FeatureIndex> seen;
  auto claim = [&](FeatureIndex f) {
    if (f >= n_features) throw InvalidArgument("partition: feature index " + std::to_string(f) + " out of range");
    if (!seen.insert(f).second) throw InvalidArgument("partition: feature " + std::to_string(f) + " assigned twice");
  };
  for (auto f : common) claim(f);
  for (const auto& set : private_sets) {
    if (set.empty()) throw InvalidArgument("partition: every collaborator needs a private feature");
    for (auto f : set) claim(f);
  }
}

FeaturePartition partition_features(std::size_t n_features, std::size_t k, std::size_t common_count,
                                    std::uint64_t seed) {
  if (k == 0) throw InvalidArgument("partition: k must be at least 1");
  if (common_count + k > n_features) throw InvalidArgument("partition: not enough features for k private sets");

  std::vector<FeatureIndex> order(n_features);
  for (std::size_t i = 0; i < n_features; ++i) order[i] = static_cast<FeatureIndex>(i);
  Rng rng(seed);
  rng.shuffle(order);

  FeaturePartition p;
  p.common.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(common_count));
  p.private_sets.resize(k);
  for (std::size_t i = common_count; i < n_features; ++i) {
    p.private_sets[(i - common_count) % k].push_back(order[i]);
  }
  std::sort(p.common.begin(), p.common.end());
  for (auto& s : p.private_sets) std::sort(s.begin(), s.end());
  return p;
}

Splits split_dataset(const Dataset& dataset, std::size_t k, std::size_t warm_size, double test_fraction,
                     std::uint64_t seed) {
  const std::size_t n = dataset.size();
  if (k == 0) throw InvalidArgument("split: k must be at least 1");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw InvalidArgument("split: test_fraction must be in [0,1)");
  const auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(n) - 1e-9));
  if (k * warm_size + n_test >= n) throw InvalidArgument("split: warm-start and test sizes leave no pool");

  Rng rng(seed);
  std::vector<InstanceId> by_class[2];
  for (std::size_t i = 0; i < n; ++i) by_class[dataset.labels[i]].push_back(static_cast<InstanceId>(i));
  rng.shuffle(by_class[0]);
  rng.shuffle(by_class[1]);

  // Test set is stratified so its class balance stays at 50% up to rounding.
  const std::size_t test_neg = std::min(n_test - n_test / 2, by_class[0].size());
  const std::size_t test_pos = n_test - test_neg;
  if (test_pos > by_class[1].size()) throw InvalidArgument("split: not enough positives for the test set");

  Splits s;
  s.test.assign(by_class[0].begin(), by_class[0].begin() + static_cast<std::ptrdiff_t>(test_neg));
  s.test.insert(s.test.end(), by_class[1].begin(), by_class[1].begin() + static_cast<std::ptrdiff_t>(test_pos));

  std::vector<InstanceId> rest(by_class[0].begin() + static_cast<std::ptrdiff_t>(test_neg), by_class[0].end());
  rest.insert(rest.end(), by_class[1].begin() + static_cast<std::ptrdiff_t>(test_pos), by_class[1].end());
  std::sort(rest.begin(), rest.end());
  rng.shuffle(rest);

  auto it = rest.begin();
  s.warm_start.resize(k);
  for (auto& w : s.warm_start) {
    w.assign(it, it + static_cast<std::ptrdiff_t>(warm_size));
    it += static_cast<std::ptrdiff_t>(warm_size);
  }
  s.pool.assign(it, rest.end());

  std::sort(s.test.begin(), s.test.end());
  std::sort(s.pool.begin(), s.pool.end());
  for (auto& w : s.warm_start) std::sort(w.begin(), w.end());
  return s;
}

FeatureView::FeatureView(const Dataset& dataset, const FeaturePartition& partition, CollaboratorId cid)
    : dataset_(&dataset), owner_(cid), columns_(partition.visible(cid)) {
  for (auto f : columns_) {
    if (f >= dataset.n_features()) throw InvalidArgument("partition refers to a feature the dataset lacks");
  }
}

void FeatureView::check_id(InstanceId id) const {
  if (id >= dataset_->size()) throw InvalidArgument("unknown instance id " + std::to_string(id));
}

void FeatureView::check_feature(FeatureIndex f) const {
  if (!std::binary_search(columns_.begin(), columns_.end(), f)) {
    throw AccessViolation("collaborator " + std::to_string(owner_) + " may not read feature " + std::to_string(f));
  }
}

Matrix FeatureView::rows(std::span<const InstanceId> ids) const { return rows(ids, columns_); }

Matrix FeatureView::rows(std::span<const InstanceId> ids, std::span<const FeatureIndex> features) const {
  for (auto f : features) check_feature(f);
  Matrix out(ids.size(), features.size());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    check_id(ids[r]);
    auto src = dataset_->features.row(ids[r]);
    for (std::size_t c = 0; c < features.size(); ++c) out(r, c) = src[features[c]];
  }
  return out;
}

std::vector<double> FeatureView::column(FeatureIndex feature, std::span<const InstanceId> ids) const {
  check_feature(feature);
  std::vector<double> out(ids.size());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    check_id(ids[r]);
    out[r] = dataset_->features(ids[r], feature);
  }
  return out;
}

Matrix view(const Dataset& dataset, const FeaturePartition& partition, CollaboratorId cid,
            std::span<const InstanceId> ids) {
  return FeatureView(dataset, partition, cid).rows(ids);
}

}  // namespace c2al
