#include "c2al/ensemble.hpp"

#include <charconv>
#include <cstdio>
#include <ostream>

namespace c2al {

void Level1Archive::archive(Round round, std::vector<ProbabilityMap> reports) {
  if (reports.size() != k_) {
    throw ProtocolError("level-1 archive: round " + std::to_string(round) + " has " + std::to_string(reports.size()) +
                        " reports, expected " + std::to_string(k_));
  }
  for (const auto& rep : reports) {
    for (const auto& [id, p] : rep) {
      if (!(p >= 0.0 && p <= 1.0)) throw ProtocolError("level-1 archive: probability outside [0,1]");
    }
  }
  if (!rounds_.emplace(round, std::move(reports)).second) {
    throw ProtocolError("level-1 archive: round " + std::to_string(round) + " archived twice");
  }
}

std::optional<Round> Level1Archive::latest_full_coverage(InstanceId id, Round up_to) const {
  auto it = rounds_.upper_bound(up_to);
  while (it != rounds_.begin()) {
    --it;
    bool covered = true;
    for (const auto& rep : it->second) {
      if (!rep.count(id)) {
        covered = false;
        break;
      }
    }
    if (covered) return it->first;
  }
  return std::nullopt;
}

std::vector<double> Level1Archive::level1_row(InstanceId id, Round round) const {
  auto it = rounds_.find(round);
  if (it == rounds_.end()) throw ProtocolError("level-1 archive: no round " + std::to_string(round));
  std::vector<double> row;
  row.reserve(k_);
  for (const auto& rep : it->second) {
    auto p = rep.find(id);
    if (p == rep.end()) throw ProtocolError("level-1 archive: id " + std::to_string(id) + " not scored");
    row.push_back(p->second);
  }
  return row;
}

void LabelStore::add(std::span<const LabelEntry> entries, Round round) {
  for (const auto& e : entries) {
    if (records_.count(e.id)) throw ProtocolError("label store: id " + std::to_string(e.id) + " already labeled");
    if (e.label > 1) throw ProtocolError("label store: label must be 0 or 1");
  }
  for (const auto& e : entries) {
    if (!records_.emplace(e.id, Record{e.label, round}).second) {
      throw ProtocolError("label store: id " + std::to_string(e.id) + " repeated in one broadcast");
    }
  }
}

std::string feature_column_name(FeatureIndex f) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "x_%02u", static_cast<unsigned>(f));
  return buf;
}

std::string proba_column_name(CollaboratorId cid) { return "col" + std::to_string(cid + 1) + "_proba"; }

std::vector<std::string> EnsembleInputSchema::column_names() const {
  std::vector<std::string> names;
  names.reserve(width());
  for (auto f : view_columns) names.push_back(feature_column_name(f));
  for (std::size_t c = 0; c < k; ++c) names.push_back(proba_column_name(static_cast<CollaboratorId>(c)));
  return names;
}

TrainingMatrix build_training_matrix(const FeatureView& view, const Level1Archive& archive,
                                     const LabelStore& labels) {
  TrainingMatrix out;
  const std::size_t width = view.width() + archive.k();
  out.x = Matrix(0, width);
  if (labels.size() == 0) return out;

  out.ids.reserve(labels.size());
  for (const auto& [id, rec] : labels.records()) out.ids.push_back(id);
  const Matrix own = view.rows(out.ids);

  std::vector<double> row(width);
  for (std::size_t i = 0; i < out.ids.size(); ++i) {
    const auto id = out.ids[i];
    const auto& rec = labels.records().at(id);
    const auto scored = archive.latest_full_coverage(id, rec.round);
    if (!scored) {
      throw ProtocolError("training matrix: labeled id " + std::to_string(id) + " has no Level-1 coverage");
    }
    auto own_row = own.row(i);
    std::copy(own_row.begin(), own_row.end(), row.begin());
    const auto l1 = archive.level1_row(id, *scored);
    std::copy(l1.begin(), l1.end(), row.begin() + static_cast<std::ptrdiff_t>(view.width()));
    out.x.append_row(row);
    out.y.push_back(rec.label);
  }
  return out;
}

std::optional<EnsembleModel> retrain_ensemble(const LearnerKind& kind, const TrainingMatrix& data,
                                              const EnsembleInputSchema& schema, std::size_t min_labels,
                                              const LabelStore& labels, std::uint64_t seed) {
  if (data.x.rows() < min_labels || data.x.rows() == 0) return std::nullopt;
  std::size_t pos = 0;
  for (auto v : data.y) pos += v;
  if (pos == 0 || pos == data.y.size()) return std::nullopt;
  if (data.x.cols() != schema.width()) throw InvalidArgument("retrain_ensemble: matrix width does not match schema");

  EnsembleModel m;
  m.inner = train(kind, data.x, data.y, seed);
  m.schema = schema;
  Round lo = ~Round{0};
  Round hi = 0;
  for (auto id : data.ids) {
    const auto r = labels.records().at(id).round;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  m.first_round = lo;
  m.last_round = hi;
  return m;
}

std::vector<double> ensemble_predict(const EnsembleModel& model, const Matrix& view_rows, const Matrix& level1_rows) {
  if (view_rows.cols() != model.schema.view_columns.size() || level1_rows.cols() != model.schema.k) {
    throw InvalidArgument("ensemble_predict: input columns do not match the ensemble schema");
  }
  return predict_proba(model.inner, hconcat(view_rows, level1_rows));
}

void write_training_matrix_csv(std::ostream& out, const TrainingMatrix& data, const EnsembleInputSchema& schema) {
  out << "id,label";
  for (const auto& name : schema.column_names()) out << ',' << name;
  out << '\n';
  char buf[64];
  for (std::size_t r = 0; r < data.x.rows(); ++r) {
    out << data.ids[r] << ',' << static_cast<int>(data.y[r]);
    for (double v : data.x.row(r)) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out << ',';
      out.write(buf, end - buf);
    }
    out << '\n';
  }
}

}  // namespace c2al
