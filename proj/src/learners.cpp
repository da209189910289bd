#include "c2al/learners.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "c2al/metrics.hpp"
#include "c2al/rng.hpp"

namespace c2al {

namespace {

constexpr double kProbEps = 1e-6;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void check_training_input(const Matrix& x, std::span<const Label> y) {
  if (x.rows() == 0 || x.cols() == 0) throw InvalidArgument("train: empty input");
  if (x.rows() != y.size()) throw InvalidArgument("train: label count does not match row count");
  std::size_t pos = 0;
  for (auto v : y) {
    if (v > 1) throw InvalidArgument("train: labels must be 0 or 1");
    pos += v;
  }
  if (pos == 0 || pos == y.size()) throw InvalidArgument("train: both classes must be present");
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw InvalidArgument("train: non-finite feature value");
  }
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

// ---- classification trees (cart, random forest) ----

struct ClassTreeGrower {
  const Matrix& x;
  std::span<const Label> y;
  std::size_t max_depth;
  std::size_t min_leaf;
  std::size_t mtry;  // 0: all features
  Rng* rng;
  kernels::Tree tree;

  std::int32_t grow(std::vector<std::size_t> rows, std::size_t depth) {
    const auto index = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    double pos = 0.0;
    for (auto r : rows) pos += y[r];
    const double n = static_cast<double>(rows.size());
    tree.nodes.back().value = pos / n;
    if (depth >= max_depth || pos == 0.0 || pos == n || rows.size() < 2 * min_leaf) return index;

    const auto split = kernels::best_gini_split(x, y, rows, candidate_features(), min_leaf);
    if (!split.valid()) return index;

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    const auto f = static_cast<std::size_t>(split.feature);
    for (auto r : rows) (x(r, f) <= split.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    const auto l = grow(std::move(left), depth + 1);
    const auto r = grow(std::move(right), depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(index)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = l;
    node.right = r;
    return index;
  }

  std::vector<std::size_t> candidate_features() {
    auto all = iota_indices(x.cols());
    if (mtry == 0 || mtry >= all.size()) return all;
    // partial Fisher-Yates, then ascending so ties resolve to the lowest index
    for (std::size_t i = 0; i < mtry; ++i) {
      std::swap(all[i], all[i + rng->below(all.size() - i)]);
    }
    all.resize(mtry);
    std::sort(all.begin(), all.end());
    return all;
  }
};

// ---- gradient trees (boosting) ----

struct GradientTreeGrower {
  const Matrix& x;
  std::span<const double> grad;
  std::span<const double> hess;
  double lambda;
  std::size_t max_depth;
  std::size_t min_leaf;
  std::vector<std::size_t> features;
  kernels::Tree tree;

  std::int32_t grow(std::vector<std::size_t> rows, std::size_t depth) {
    const auto index = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    double g = 0.0;
    double h = 0.0;
    for (auto r : rows) {
      g += grad[r];
      h += hess[r];
    }
    tree.nodes.back().value = h + lambda > 0.0 ? g / (h + lambda) : 0.0;
    if (depth >= max_depth || rows.size() < 2 * min_leaf) return index;

    const auto split = kernels::best_gradient_split(x, grad, hess, rows, features, lambda, min_leaf);
    if (!split.valid() || !(split.gain > 0.0)) return index;

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    const auto f = static_cast<std::size_t>(split.feature);
    for (auto r : rows) (x(r, f) <= split.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    const auto l = grow(std::move(left), depth + 1);
    const auto r = grow(std::move(right), depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(index)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = l;
    node.right = r;
    return index;
  }
};

ForestParams fit_forest(const LearnerKind& kind, const Matrix& x, std::span<const Label> y, std::uint64_t seed,
                        bool single_tree) {
  ForestParams out;
  if (single_tree) {
    ClassTreeGrower g{x, y, kind.max_depth, kind.min_samples_leaf, 0, nullptr, {}};
    g.grow(iota_indices(x.rows()), 0);
    out.trees.push_back(std::move(g.tree));
    return out;
  }

  const std::size_t n = x.rows();
  const std::size_t mtry = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(x.cols()))));
  out.trees.resize(kind.n_trees);
  const auto n_trees = static_cast<std::ptrdiff_t>(kind.n_trees);
  // Each tree owns a derived seed, so the thread schedule cannot change the forest.
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t t = 0; t < n_trees; ++t) {
    Rng rng(derive_seed(seed, "forest-tree", static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = rng.below(n);
    std::sort(rows.begin(), rows.end());
    ClassTreeGrower g{x, y, kind.max_depth, kind.min_samples_leaf, mtry, &rng, {}};
    g.grow(std::move(rows), 0);
    out.trees[static_cast<std::size_t>(t)] = std::move(g.tree);
  }
  return out;
}

std::vector<double> boost_raw_scores(const BoostParams& p, const Matrix& x) {
  std::vector<double> sums(x.rows());
  kernels::sum_tree_predictions(p.trees, x, sums);
  for (auto& s : sums) s = p.base_score + p.shrinkage * s;
  return sums;
}

std::uint64_t digest_doubles(std::span<const double> v, std::uint64_t h) {
  for (double d : v) {
    char bytes[sizeof(double)];
    std::memcpy(bytes, &d, sizeof d);
    h = fnv1a64({bytes, sizeof bytes}, h);
  }
  return h;
}

std::uint64_t digest_trees(std::span<const kernels::Tree> trees, std::uint64_t h) {
  for (const auto& t : trees) {
    for (const auto& n : t.nodes) {
      const double vals[] = {static_cast<double>(n.feature), n.threshold, static_cast<double>(n.left),
                             static_cast<double>(n.right), n.value};
      h = digest_doubles(vals, h);
    }
  }
  return h;
}

}  // namespace

std::string to_string(LearnerTag tag) {
  switch (tag) {
    case LearnerTag::linear_logistic: return "linear_logistic";
    case LearnerTag::cart: return "cart";
    case LearnerTag::random_forest: return "random_forest";
    case LearnerTag::gbm: return "gbm";
    case LearnerTag::gbm_l2: return "gbm_l2";
  }
  return "unknown";
}

LearnerTag learner_tag_from_string(const std::string& name) {
  for (auto tag : {LearnerTag::linear_logistic, LearnerTag::cart, LearnerTag::random_forest, LearnerTag::gbm,
                   LearnerTag::gbm_l2}) {
    if (to_string(tag) == name) return tag;
  }
  throw InvalidArgument("unknown learner kind '" + name + "'");
}

LearnerKind LearnerKind::defaults(LearnerTag tag) {
  LearnerKind k;
  k.tag = tag;
  switch (tag) {
    case LearnerTag::linear_logistic: break;
    case LearnerTag::cart: k.max_depth = 4; break;
    case LearnerTag::random_forest: k.max_depth = 8; k.n_trees = 100; break;
    case LearnerTag::gbm:
    case LearnerTag::gbm_l2: k.max_depth = 3; k.n_trees = 100; k.shrinkage = 0.1; break;
  }
  return k;
}

void LearnerKind::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning_rate: must be positive");
  if (epochs == 0) throw InvalidArgument("epochs: must be positive");
  if (max_depth == 0) throw InvalidArgument("max_depth: must be positive");
  if (min_samples_leaf == 0) throw InvalidArgument("min_samples_leaf: must be positive");
  if (n_trees == 0) throw InvalidArgument("n_trees: must be positive");
  if (!(shrinkage > 0.0 && shrinkage <= 1.0)) throw InvalidArgument("shrinkage: must be in (0,1]");
  if (!(subsample > 0.0 && subsample <= 1.0)) throw InvalidArgument("subsample: must be in (0,1]");
  if (!(l2_penalty >= 0.0) || !std::isfinite(l2_penalty)) throw InvalidArgument("l2_penalty: must be non-negative");
}

void AucBand::validate() const {
  if (!(low >= 0.0 && high <= 1.0 && low < high)) throw InvalidArgument("band: need 0 <= low < high <= 1");
}

LossGradient logistic_loss_gradient(const Matrix& x, std::span<const Label> y, std::span<const double> weights,
                                    double bias) {
  if (weights.size() != x.cols() || y.size() != x.rows()) throw InvalidArgument("logistic: shape mismatch");
  LossGradient out;
  out.grad_weights.assign(x.cols(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    double z = bias;
    for (std::size_t c = 0; c < row.size(); ++c) z += row[c] * weights[c];
    out.loss += softplus(z) - (y[r] ? z : 0.0);
    const double residual = sigmoid(z) - y[r];
    for (std::size_t c = 0; c < row.size(); ++c) out.grad_weights[c] += residual * row[c];
    out.grad_bias += residual;
  }
  out.loss *= inv_n;
  for (auto& g : out.grad_weights) g *= inv_n;
  out.grad_bias *= inv_n;
  return out;
}

LogisticFit fit_logistic(const Matrix& x, std::span<const Label> y, double step, std::size_t epochs,
                         bool standardize) {
  const std::size_t m = x.cols();
  LogisticFit fit;
  auto& p = fit.params;
  p.mean.assign(m, 0.0);
  p.scale.assign(m, 1.0);
  if (standardize) {
    const double n = static_cast<double>(x.rows());
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < x.rows(); ++r) s += x(r, c);
      const double mu = s / n;
      double v = 0.0;
      for (std::size_t r = 0; r < x.rows(); ++r) v += (x(r, c) - mu) * (x(r, c) - mu);
      const double sd = std::sqrt(v / n);
      p.mean[c] = mu;
      p.scale[c] = sd > 1e-12 ? sd : 1.0;
    }
  }
  Matrix z(x.rows(), m);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < m; ++c) z(r, c) = (x(r, c) - p.mean[c]) / p.scale[c];
  }

  p.weights.assign(m, 0.0);
  p.bias = 0.0;
  fit.loss_history.reserve(epochs + 1);
  for (std::size_t e = 0; e < epochs; ++e) {
    auto lg = logistic_loss_gradient(z, y, p.weights, p.bias);
    fit.loss_history.push_back(lg.loss);
    for (std::size_t c = 0; c < m; ++c) p.weights[c] -= step * lg.grad_weights[c];
    p.bias -= step * lg.grad_bias;
  }
  fit.loss_history.push_back(logistic_loss_gradient(z, y, p.weights, p.bias).loss);
  return fit;
}

BoostFit fit_boosting(const LearnerKind& kind, const Matrix& x, std::span<const Label> y, std::uint64_t seed) {
  kind.validate();
  check_training_input(x, y);
  if (kind.tag != LearnerTag::gbm && kind.tag != LearnerTag::gbm_l2) {
    throw InvalidArgument("fit_boosting: learner is not a boosting kind");
  }
  const bool second_order = kind.tag == LearnerTag::gbm_l2;
  const std::size_t n = x.rows();

  BoostParams p;
  p.shrinkage = kind.shrinkage;
  const double prior = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  p.base_score = std::log(prior / (1.0 - prior));

  std::vector<double> raw(n, p.base_score);
  std::vector<double> grad(n);
  std::vector<double> hess(n, 1.0);
  std::vector<double> probs(n);
  Rng rng(derive_seed(seed, "boost-subsample"));
  BoostFit fit;
  fit.loss_history.reserve(kind.n_trees);

  for (std::size_t t = 0; t < kind.n_trees; ++t) {
    for (std::size_t r = 0; r < n; ++r) {
      const double pr = sigmoid(raw[r]);
      grad[r] = y[r] - pr;
      if (second_order) hess[r] = pr * (1.0 - pr);
    }
    std::vector<std::size_t> rows;
    if (kind.subsample < 1.0) {
      for (std::size_t r = 0; r < n; ++r) {
        if (rng.uniform() < kind.subsample) rows.push_back(r);
      }
      if (rows.empty()) rows.push_back(rng.below(n));
    } else {
      rows = iota_indices(n);
    }
    GradientTreeGrower g{x,
                         grad,
                         hess,
                         second_order ? kind.l2_penalty : 0.0,
                         kind.max_depth,
                         kind.min_samples_leaf,
                         iota_indices(x.cols()),
                         {}};
    g.grow(std::move(rows), 0);
    for (std::size_t r = 0; r < n; ++r) raw[r] += p.shrinkage * g.tree.predict(x.row(r));
    p.trees.push_back(std::move(g.tree));

    for (std::size_t r = 0; r < n; ++r) probs[r] = sigmoid(raw[r]);
    fit.loss_history.push_back(log_loss(probs, y));
  }

  fit.model.kind = kind;
  fit.model.params = std::move(p);
  fit.model.feature_indices = iota_indices(x.cols());
  return fit;
}

TrainedModel train(const LearnerKind& kind, const Matrix& x, std::span<const Label> y, std::uint64_t seed) {
  kind.validate();
  check_training_input(x, y);
  TrainedModel model;
  model.kind = kind;
  model.feature_indices = iota_indices(x.cols());
  switch (kind.tag) {
    case LearnerTag::linear_logistic:
      model.params = fit_logistic(x, y, kind.learning_rate, kind.epochs).params;
      break;
    case LearnerTag::cart:
      model.params = fit_forest(kind, x, y, seed, true);
      break;
    case LearnerTag::random_forest:
      model.params = fit_forest(kind, x, y, seed, false);
      break;
    case LearnerTag::gbm:
    case LearnerTag::gbm_l2:
      return fit_boosting(kind, x, y, seed).model;
  }
  return model;
}

std::vector<double> predict_proba(const TrainedModel& model, const Matrix& x) {
  if (x.cols() != model.n_inputs()) {
    throw InvalidArgument("predict_proba: expected " + std::to_string(model.n_inputs()) + " columns, got " +
                          std::to_string(x.cols()));
  }
  std::vector<double> out(x.rows());
  if (x.rows() == 0) return out;

  if (const auto* lp = std::get_if<LogisticParams>(&model.params)) {
    for (std::size_t r = 0; r < x.rows(); ++r) {
      double z = lp->bias;
      for (std::size_t c = 0; c < x.cols(); ++c) z += lp->weights[c] * (x(r, c) - lp->mean[c]) / lp->scale[c];
      out[r] = sigmoid(z);
    }
  } else if (const auto* fp = std::get_if<ForestParams>(&model.params)) {
    kernels::sum_tree_predictions(fp->trees, x, out);
    const double inv = 1.0 / static_cast<double>(fp->trees.size());
    for (auto& v : out) v *= inv;
  } else {
    out = boost_raw_scores(std::get<BoostParams>(model.params), x);
    for (auto& v : out) v = sigmoid(v);
  }

  for (auto& v : out) {
    if (!std::isfinite(v)) throw Error("predict_proba: non-finite probability");
    v = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

double log_loss(std::span<const double> probs, std::span<const Label> y) {
  if (probs.size() != y.size() || probs.empty()) throw InvalidArgument("log_loss: size mismatch or empty");
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kProbEps, 1.0 - kProbEps);
    s -= y[i] ? std::log(p) : std::log(1.0 - p);
  }
  return s / static_cast<double>(probs.size());
}

BandFit train_to_band(const LearnerKind& kind, const AucBand& band, const Matrix& warm_x,
                      std::span<const Label> warm_y, const Matrix& eval_x, std::span<const Label> eval_y,
                      std::size_t n_feat, std::size_t n_inst, std::size_t max_attempts, std::uint64_t seed) {
  band.validate();
  if (warm_x.rows() != warm_y.size() || eval_x.rows() != eval_y.size()) {
    throw InvalidArgument("train_to_band: label count mismatch");
  }
  if (warm_x.cols() != eval_x.cols()) throw InvalidArgument("train_to_band: warm and eval widths differ");
  if (n_feat == 0 || warm_x.cols() < n_feat) throw InvalidArgument("train_to_band: not enough feature columns");
  if (n_inst == 0 || warm_x.rows() < n_inst) throw InvalidArgument("train_to_band: not enough warm-start rows");
  if (max_attempts == 0) throw InvalidArgument("train_to_band: max_attempts must be positive");
  {
    const auto pos = std::accumulate(warm_y.begin(), warm_y.end(), std::size_t{0});
    if (pos == 0 || pos == warm_y.size()) throw InvalidArgument("train_to_band: warm set needs both classes");
  }

  double best_auc = -1.0;
  for (std::size_t attempt = 1; attempt <= max_attempts; ++attempt) {
    const auto attempt_seed = derive_seed(seed, "band-attempt", attempt);
    Rng rng(attempt_seed);

    auto cols = iota_indices(warm_x.cols());
    for (std::size_t i = 0; i < n_feat; ++i) std::swap(cols[i], cols[i + rng.below(cols.size() - i)]);
    cols.resize(n_feat);
    std::sort(cols.begin(), cols.end());

    std::vector<std::size_t> rows(n_inst);
    for (auto& r : rows) r = rng.below(warm_x.rows());
    std::vector<Label> y(n_inst);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n_inst; ++i) pos += (y[i] = warm_y[rows[i]]);
    if (pos == 0 || pos == n_inst) continue;

    auto model = train(kind, select_cols(select_rows(warm_x, rows), cols), y, attempt_seed);
    model.feature_indices = cols;
    const double score = auc(predict_proba(model, select_cols(eval_x, cols)), eval_y).value;
    if (band.contains(score)) return {std::move(model), attempt, score};
    if (best_auc < 0.0 || std::abs(score - (band.low + band.high) / 2) < std::abs(best_auc - (band.low + band.high) / 2)) {
      best_auc = score;
    }
  }
  throw BandUnreachable("no model reached AUC band [" + std::to_string(band.low) + ", " + std::to_string(band.high) +
                            "] in " + std::to_string(max_attempts) + " attempts; closest AUC " +
                            std::to_string(best_auc),
                        best_auc, max_attempts);
}

nlohmann::json to_json(const LearnerKind& k) {
  return {{"kind", to_string(k.tag)},       {"learning_rate", k.learning_rate},
          {"epochs", k.epochs},             {"max_depth", k.max_depth},
          {"min_samples_leaf", k.min_samples_leaf}, {"n_trees", k.n_trees},
          {"shrinkage", k.shrinkage},       {"subsample", k.subsample},
          {"l2_penalty", k.l2_penalty}};
}

LearnerKind learner_kind_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("learner: expected an object");
  if (!j.contains("kind")) throw InvalidArgument("learner.kind: missing");
  auto k = LearnerKind::defaults(learner_tag_from_string(j.at("kind").get<std::string>()));
  for (const auto& [key, value] : j.items()) {
    if (key == "kind") continue;
    try {
      if (key == "learning_rate") k.learning_rate = value.get<double>();
      else if (key == "epochs") k.epochs = value.get<std::size_t>();
      else if (key == "max_depth") k.max_depth = value.get<std::size_t>();
      else if (key == "min_samples_leaf") k.min_samples_leaf = value.get<std::size_t>();
      else if (key == "n_trees") k.n_trees = value.get<std::size_t>();
      else if (key == "shrinkage") k.shrinkage = value.get<double>();
      else if (key == "subsample") k.subsample = value.get<double>();
      else if (key == "l2_penalty") k.l2_penalty = value.get<double>();
      else throw InvalidArgument("learner." + key + ": unknown key");
    } catch (const nlohmann::json::exception&) {
      throw InvalidArgument("learner." + key + ": wrong type");
    }
  }
  k.validate();
  return k;
}

nlohmann::json model_summary(const TrainedModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::size_t n_params = 0;
  if (const auto* lp = std::get_if<LogisticParams>(&model.params)) {
    h = digest_doubles(lp->mean, h);
    h = digest_doubles(lp->scale, h);
    h = digest_doubles(lp->weights, h);
    h = digest_doubles(std::span<const double>(&lp->bias, 1), h);
    n_params = lp->weights.size() + 1;
  } else if (const auto* fp = std::get_if<ForestParams>(&model.params)) {
    h = digest_trees(fp->trees, h);
    for (const auto& t : fp->trees) n_params += t.nodes.size();
  } else {
    const auto& bp = std::get<BoostParams>(model.params);
    h = digest_doubles(std::span<const double>(&bp.base_score, 1), h);
    h = digest_trees(bp.trees, h);
    for (const auto& t : bp.trees) n_params += t.nodes.size();
  }
  return {{"learner", to_json(model.kind)},
          {"owner", model.owner},
          {"feature_indices", model.feature_indices},
          {"n_parameters", n_params},
          {"parameter_digest", hex64(h)}};
}

}  // namespace c2al
