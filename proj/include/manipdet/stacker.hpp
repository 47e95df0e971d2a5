#pragma once

// Second-level multi-label classifier: one gradient-boosted tree ensemble per
// technique, trained on logistic loss with exact greedy splits.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "manipdet/core.hpp"
#include "manipdet/features.hpp"

namespace manipdet {

struct TrainConfig {
  std::size_t rounds = 200;
  double learning_rate = 0.1;
  std::size_t max_depth = 3;
  std::size_t min_leaf = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (rounds < 1) throw Error(ErrorCode::config, "rounds must be >= 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw Error(ErrorCode::config, "learning_rate must be in (0, 1]");
    if (max_depth < 1) throw Error(ErrorCode::config, "max_depth must be >= 1");
    if (min_leaf < 1) throw Error(ErrorCode::config, "min_leaf must be >= 1");
  }
};

// Dense row-major design matrix.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  std::span<const double> row(std::size_t i) const { return std::span<const double>(data).subspan(i * cols, cols); }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  static FeatureMatrix from(std::span<const FeatureVector> features) {
    FeatureMatrix m{features.size(), kFeatureDim, {}};
    m.data.reserve(features.size() * kFeatureDim);
    for (const auto& f : features) m.data.insert(m.data.end(), f.begin(), f.end());
    return m;
  }
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
};

// Samples with x[feature] <= threshold go left.
struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
      const TreeNode& n = nodes[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[i].value;
  }

  std::size_t depth(std::size_t i = 0) const {
    if (nodes[i].is_leaf()) return 0;
    return 1 + std::max(depth(static_cast<std::size_t>(nodes[i].left)), depth(static_cast<std::size_t>(nodes[i].right)));
  }
};

struct BinaryEnsemble {
  double initial_score = 0.0;  // log-odds of the clamped class prior
  std::vector<RegressionTree> trees;
  std::vector<double> loss_curve;  // loss_curve[k]: mean logistic loss with k trees
  std::vector<double> training_scores;

  double raw_score(std::span<const double> x, double learning_rate) const {
    // same accumulation order as training, so training scores reproduce bit-for-bit
    double s = initial_score;
    for (const auto& t : trees) s += learning_rate * t.predict(x);
    return s;
  }
};

struct GbdtModel {
  TrainConfig config;
  std::size_t num_features = kFeatureDim;
  std::array<BinaryEnsemble, kNumTechniques> ensembles;
};

inline constexpr double kPriorClamp = 1e-7;
inline constexpr double kProbClamp = 1e-12;
inline constexpr double kLeafClip = 4.0;

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Probability strictly inside (0, 1).
inline double score_to_prob(double score) { return std::clamp(sigmoid(score), kProbClamp, 1.0 - kProbClamp); }

// Mean logistic loss of raw scores, computed stably.
inline double logistic_loss(std::span<const double> scores, std::span<const double> y) {
  // -[y log s(f) + (1-y) log(1-s(f))] = y softplus(-f) + (1-y) softplus(f); the
  // split form avoids cancellation for confident scores.
  const auto softplus = [](double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); };
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double f = scores[i];
    sum += y[i] * softplus(-f) + (1.0 - y[i]) * softplus(f);
  }
  return scores.empty() ? 0.0 : sum / static_cast<double>(scores.size());
}

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& x, const std::vector<std::vector<std::uint32_t>>& sorted, const TrainConfig& cfg)
      : x_(x), sorted_(sorted), cfg_(cfg), in_node_(x.rows, 0) {}

  RegressionTree build(std::span<const double> residual, std::span<const double> hessian) {
    residual_ = residual;
    hessian_ = hessian;
    RegressionTree tree;
    std::vector<std::uint32_t> all(x_.rows);
    std::iota(all.begin(), all.end(), 0u);
    grow(tree, all, 0);
    return tree;
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
  };

  int grow(RegressionTree& tree, const std::vector<std::uint32_t>& members, std::size_t depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    Split split;
    if (depth < cfg_.max_depth && members.size() >= 2 * cfg_.min_leaf) split = best_split(members);
    if (split.feature < 0) {
      tree.nodes[static_cast<std::size_t>(id)].value = leaf_value(members);
      return id;
    }
    std::vector<std::uint32_t> left;
    std::vector<std::uint32_t> right;
    for (std::uint32_t i : members) {
      (x_.at(i, static_cast<std::size_t>(split.feature)) <= split.threshold ? left : right).push_back(i);
    }
    const int l = grow(tree, left, depth + 1);
    const int r = grow(tree, right, depth + 1);
    TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  double leaf_value(const std::vector<std::uint32_t>& members) const {
    double g = 0.0;
    double h = 0.0;
    for (std::uint32_t i : members) {
      g += residual_[i];
      h += hessian_[i];
    }
    if (!(h > 0.0)) return g > 0.0 ? kLeafClip : (g < 0.0 ? -kLeafClip : 0.0);
    return std::clamp(g / h, -kLeafClip, kLeafClip);
  }

  // Exact greedy search for the split that most reduces squared error of the
  // residuals. Strict improvement keeps the lowest feature, then the lowest
  // threshold, among equal gains.
  Split best_split(const std::vector<std::uint32_t>& members) {
    for (std::uint32_t i : members) in_node_[i] = 1;
    const auto m = static_cast<double>(members.size());
    double total = 0.0;
    for (std::uint32_t i : members) total += residual_[i];
    const double parent = total * total / m;

    Split best;
    best.gain = kMinGain;
    std::vector<std::uint32_t> order;
    order.reserve(members.size());
    for (std::size_t f = 0; f < x_.cols; ++f) {
      order.clear();
      for (std::uint32_t i : sorted_[f]) {
        if (in_node_[i]) order.push_back(i);
      }
      double left_sum = 0.0;
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        left_sum += residual_[order[k]];
        const std::size_t nl = k + 1;
        const std::size_t nr = order.size() - nl;
        const double v0 = x_.at(order[k], f);
        const double v1 = x_.at(order[k + 1], f);
        if (!(v0 < v1) || nl < cfg_.min_leaf || nr < cfg_.min_leaf) continue;
        const double right_sum = total - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(nl) +
                            right_sum * right_sum / static_cast<double>(nr) - parent;
        if (gain > best.gain) {
          double mid = v0 + (v1 - v0) / 2.0;
          if (!(mid < v1)) mid = v0;
          best = {static_cast<int>(f), mid, gain};
        }
      }
    }
    for (std::uint32_t i : members) in_node_[i] = 0;
    return best;
  }

  static constexpr double kMinGain = 1e-12;

  const FeatureMatrix& x_;
  const std::vector<std::vector<std::uint32_t>>& sorted_;
  const TrainConfig& cfg_;
  std::vector<std::uint8_t> in_node_;
  std::span<const double> residual_;
  std::span<const double> hessian_;
};

inline std::vector<std::vector<std::uint32_t>> presort(const FeatureMatrix& x) {
  std::vector<std::vector<std::uint32_t>> sorted(x.cols);
  for (std::size_t f = 0; f < x.cols; ++f) {
    auto& idx = sorted[f];
    idx.resize(x.rows);
    std::iota(idx.begin(), idx.end(), 0u);
    std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) { return x.at(a, f) < x.at(b, f); });
  }
  return sorted;
}

}  // namespace detail

// Boosts one binary target. Classes without both positives and negatives
// keep the constant prior and grow no trees.
inline BinaryEnsemble fit_binary(const FeatureMatrix& x, std::span<const double> y, const TrainConfig& config,
                                 const std::vector<std::vector<std::uint32_t>>& sorted) {
  const std::size_t n = x.rows;
  double positives = 0.0;
  for (double v : y) positives += v;
  const double prior = std::clamp(positives / static_cast<double>(n), kPriorClamp, 1.0 - kPriorClamp);

  BinaryEnsemble ens;
  ens.initial_score = std::log(prior / (1.0 - prior));
  std::vector<double> scores(n, ens.initial_score);
  const bool degenerate = positives == 0.0 || positives == static_cast<double>(n);

  detail::TreeBuilder builder(x, sorted, config);
  std::vector<double> residual(n);
  std::vector<double> hessian(n);
  for (std::size_t round = 0; round < config.rounds; ++round) {
    ens.loss_curve.push_back(logistic_loss(scores, y));
    if (degenerate) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(scores[i]);
      residual[i] = y[i] - p;
      hessian[i] = p * (1.0 - p);
    }
    RegressionTree tree = builder.build(residual, hessian);
    for (std::size_t i = 0; i < n; ++i) scores[i] += config.learning_rate * tree.predict(x.row(i));
    ens.trees.push_back(std::move(tree));
  }
  ens.training_scores = std::move(scores);
  return ens;
}

inline GbdtModel fit(const FeatureMatrix& x, std::span<const LabelVector> labels, const TrainConfig& config) {
  config.validate();
  if (x.rows == 0) throw Error(ErrorCode::invalid_argument, "stacker fit: empty input");
  if (labels.size() != x.rows) throw Error(ErrorCode::dimension_mismatch, "stacker fit: labels not aligned with features");
  if (x.data.size() != x.rows * x.cols) throw Error(ErrorCode::dimension_mismatch, "stacker fit: malformed matrix");
  for (double v : x.data) {
    if (!std::isfinite(v)) throw Error(ErrorCode::non_finite, "stacker fit: non-finite feature value");
  }
  GbdtModel model;
  model.config = config;
  model.num_features = x.cols;
  const auto sorted = detail::presort(x);
  std::vector<double> y(x.rows);
  for (std::size_t t = 0; t < kNumTechniques; ++t) {
    for (std::size_t i = 0; i < x.rows; ++i) y[i] = labels[i][t] ? 1.0 : 0.0;
    model.ensembles[t] = fit_binary(x, y, config, sorted);
  }
  return model;
}

inline GbdtModel fit(std::span<const FeatureVector> features, std::span<const LabelVector> labels,
                     const TrainConfig& config) {
  return fit(FeatureMatrix::from(features), labels, config);
}

inline ProbVector predict_one(const GbdtModel& model, std::span<const double> x) {
  if (x.size() != model.num_features) {
    throw Error(ErrorCode::dimension_mismatch, "predict_proba: feature dim " + std::to_string(x.size()) +
                                                   " != model dim " + std::to_string(model.num_features));
  }
  std::array<double, kNumTechniques> p{};
  for (std::size_t t = 0; t < kNumTechniques; ++t) {
    p[t] = score_to_prob(model.ensembles[t].raw_score(x, model.config.learning_rate));
  }
  return ProbVector(p);
}

inline std::vector<ProbVector> predict_proba(const GbdtModel& model, const FeatureMatrix& x) {
  std::vector<ProbVector> out;
  out.reserve(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out.push_back(predict_one(model, x.row(i)));
  return out;
}

inline std::vector<ProbVector> predict_proba(const GbdtModel& model, std::span<const FeatureVector> features) {
  return predict_proba(model, FeatureMatrix::from(features));
}

inline std::array<std::vector<double>, kNumTechniques> training_curve(const GbdtModel& model) {
  std::array<std::vector<double>, kNumTechniques> out;
  for (std::size_t t = 0; t < kNumTechniques; ++t) out[t] = model.ensembles[t].loss_curve;
  return out;
}

// ---------------------------------------------------------------------------
// JSON ("gbdt-v1"). Trees are nested objects.

namespace detail {

inline nlohmann::json tree_node_json(const RegressionTree& tree, std::size_t i) {
  const TreeNode& n = tree.nodes[i];
  if (n.is_leaf()) return {{"leaf", n.value}};
  return {{"feature", n.feature},
          {"threshold", n.threshold},
          {"left", tree_node_json(tree, static_cast<std::size_t>(n.left))},
          {"right", tree_node_json(tree, static_cast<std::size_t>(n.right))}};
}

inline int tree_node_from_json(RegressionTree& tree, const nlohmann::json& j, std::size_t num_features,
                               std::size_t depth, std::size_t max_depth) {
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (j.contains("leaf")) {
    const double v = j.at("leaf").get<double>();
    if (!std::isfinite(v)) throw Error(ErrorCode::non_finite, "gbdt-v1: non-finite leaf value");
    tree.nodes[static_cast<std::size_t>(id)].value = v;
    return id;
  }
  if (depth >= max_depth) throw Error(ErrorCode::parse_error, "gbdt-v1: tree deeper than max_depth");
  const int feature = j.at("feature").get<int>();
  if (feature < 0 || static_cast<std::size_t>(feature) >= num_features) {
    throw Error(ErrorCode::parse_error, "gbdt-v1: split feature index out of range");
  }
  const double threshold = j.at("threshold").get<double>();
  const int l = tree_node_from_json(tree, j.at("left"), num_features, depth + 1, max_depth);
  const int r = tree_node_from_json(tree, j.at("right"), num_features, depth + 1, max_depth);
  TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
  node.feature = feature;
  node.threshold = threshold;
  node.left = l;
  node.right = r;
  return id;
}

}  // namespace detail

inline nlohmann::json to_json(const GbdtModel& model) {
  nlohmann::json j;
  j["format"] = "gbdt-v1";
  j["config"] = {{"rounds", model.config.rounds},
                 {"learning_rate", model.config.learning_rate},
                 {"max_depth", model.config.max_depth},
                 {"min_leaf", model.config.min_leaf},
                 {"seed", model.config.seed}};
  j["num_features"] = model.num_features;
  j["techniques"] = nlohmann::json::array();
  for (std::size_t t = 0; t < kNumTechniques; ++t) {
    const auto& e = model.ensembles[t];
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& tree : e.trees) trees.push_back(detail::tree_node_json(tree, 0));
    j["techniques"].push_back({{"label", std::string(kTechniqueNames[t])},
                               {"initial_score", e.initial_score},
                               {"trees", std::move(trees)},
                               {"loss_curve", e.loss_curve}});
  }
  return j;
}

inline GbdtModel gbdt_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "gbdt-v1") throw Error(ErrorCode::parse_error, "expected format tag \"gbdt-v1\"");
    GbdtModel m;
    const auto& c = j.at("config");
    m.config.rounds = c.at("rounds").get<std::size_t>();
    m.config.learning_rate = c.at("learning_rate").get<double>();
    m.config.max_depth = c.at("max_depth").get<std::size_t>();
    m.config.min_leaf = c.at("min_leaf").get<std::size_t>();
    m.config.seed = c.at("seed").get<std::uint64_t>();
    m.config.validate();
    m.num_features = j.at("num_features").get<std::size_t>();
    const auto& techs = j.at("techniques");
    if (!techs.is_array() || techs.size() != kNumTechniques) {
      throw Error(ErrorCode::parse_error, "gbdt-v1: expected 10 technique ensembles");
    }
    for (std::size_t t = 0; t < kNumTechniques; ++t) {
      const auto& e = techs[t];
      if (e.at("label") != kTechniqueNames[t]) throw Error(ErrorCode::column_order, "gbdt-v1: ensembles out of canonical order");
      auto& ens = m.ensembles[t];
      ens.initial_score = e.at("initial_score").get<double>();
      for (const auto& tj : e.at("trees")) {
        RegressionTree tree;
        detail::tree_node_from_json(tree, tj, m.num_features, 0, m.config.max_depth);
        ens.trees.push_back(std::move(tree));
      }
      ens.loss_curve = e.at("loss_curve").get<std::vector<double>>();
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("gbdt-v1: ") + e.what());
  }
}

}  // namespace manipdet
