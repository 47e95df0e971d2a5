#pragma once

// Wiring between modules: feature matrices from datasets and embedding
// files, and out-of-fold stacker probabilities for threshold calibration.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "manipdet/calibrate.hpp"
#include "manipdet/core.hpp"
#include "manipdet/features.hpp"
#include "manipdet/ingest.hpp"
#include "manipdet/stacker.hpp"

namespace manipdet {

struct FeatureBuildOptions {
  std::size_t clusters = kNumTechniques;
  std::size_t neighbors = 10;
  std::uint64_t seed = 0;
  bool exclude_self = true;  // leave-one-out neighbours for training-set features
};

struct FeatureBuildResult {
  EmbeddingMatrix features;  // kFeatureDim columns, ids in target order
  KMeansModel kmeans;
};

namespace detail {

inline EmbeddingMatrix select_rows(const EmbeddingMatrix& m, std::span<const std::string> ids, bool skip_missing) {
  const auto index = m.id_index();
  EmbeddingMatrix out;
  out.dim = m.dim;
  for (const auto& id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) {
      if (skip_missing) continue;
      throw Error(ErrorCode::invalid_argument, "no embedding row for id \"" + id + "\"");
    }
    out.ids.push_back(id);
    const auto row = m.row(it->second);
    out.data.insert(out.data.end(), row.begin(), row.end());
  }
  return out;
}

}  // namespace detail

// Features for `targets`; neighbours, clusters and labels come from `reference`.
inline FeatureBuildResult build_feature_matrix(std::span<const Sample> targets, std::span<const Sample> reference,
                                               const EmbeddingMatrix& text_embeddings,
                                               const EmbeddingMatrix& trigger_embeddings, const ProbTable& base_probs,
                                               const FeatureBuildOptions& opt = {}) {
  if (opt.clusters != kNumTechniques) {
    throw Error(ErrorCode::invalid_argument, "the feature layout holds exactly 10 centroid distances");
  }
  std::vector<std::string> ref_ids;
  std::unordered_map<std::string, LabelVector> ref_labels;
  for (const Sample& s : reference) {
    ref_ids.push_back(s.id);
    ref_labels[s.id] = s.labels();
  }
  const EmbeddingMatrix ref_text = detail::select_rows(text_embeddings, ref_ids, false);
  const EmbeddingMatrix ref_trigger = detail::select_rows(trigger_embeddings, ref_ids, true);
  std::vector<LabelVector> ref_text_labels;
  for (const auto& id : ref_text.ids) ref_text_labels.push_back(ref_labels.at(id));
  std::vector<LabelVector> ref_trigger_labels;
  for (const auto& id : ref_trigger.ids) ref_trigger_labels.push_back(ref_labels.at(id));

  FeatureBuildResult result;
  result.kmeans = fit_kmeans(ref_trigger, opt.clusters, opt.seed);

  std::unordered_map<std::string, std::size_t> prob_index;
  for (std::size_t i = 0; i < base_probs.ids.size(); ++i) prob_index.emplace(base_probs.ids[i], i);
  const auto text_index = text_embeddings.id_index();

  result.features.dim = kFeatureDim;
  for (const Sample& s : targets) {
    const auto p = prob_index.find(s.id);
    if (p == prob_index.end()) throw Error(ErrorCode::invalid_argument, "no base probabilities for id \"" + s.id + "\"");
    const auto t = text_index.find(s.id);
    if (t == text_index.end()) throw Error(ErrorCode::invalid_argument, "no text embedding for id \"" + s.id + "\"");
    const auto emb = text_embeddings.row(t->second);
    std::optional<std::string_view> exclude;
    if (opt.exclude_self) exclude = s.id;
    const auto dist = centroid_distances(result.kmeans, emb);
    const auto text_freq = neighbor_frequencies(emb, ref_text, ref_text_labels, opt.neighbors, exclude);
    const auto trig_freq = neighbor_frequencies(emb, ref_trigger, ref_trigger_labels, opt.neighbors, exclude);
    const auto meta = meta_features(s.content);
    const FeatureVector f = assemble_features(base_probs.probs[p->second], dist, text_freq, trig_freq, meta);
    result.features.ids.push_back(s.id);
    result.features.data.insert(result.features.data.end(), f.begin(), f.end());
  }
  return result;
}

inline FeatureMatrix to_feature_matrix(const EmbeddingMatrix& m) {
  return FeatureMatrix{m.rows(), m.dim, m.data};
}

inline FeatureMatrix take_rows(const FeatureMatrix& x, std::span<const std::size_t> rows) {
  FeatureMatrix out{rows.size(), x.cols, {}};
  out.data.reserve(rows.size() * x.cols);
  for (std::size_t r : rows) {
    const auto row = x.row(r);
    out.data.insert(out.data.end(), row.begin(), row.end());
  }
  return out;
}

// Each sample's probabilities come from a model trained on the other folds.
// Uses the same fold split as optimize_thresholds for the same seed.
inline std::vector<ProbVector> out_of_fold_probs(const FeatureMatrix& x, std::span<const LabelVector> labels,
                                                 std::size_t folds, std::uint64_t seed, const TrainConfig& config) {
  if (labels.size() != x.rows) throw Error(ErrorCode::dimension_mismatch, "out_of_fold_probs: labels not aligned");
  const auto split = make_folds(x.rows, folds, seed);
  std::vector<ProbVector> out(x.rows);
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> train_rows;
    for (std::size_t g = 0; g < folds; ++g) {
      if (g != f) train_rows.insert(train_rows.end(), split[g].begin(), split[g].end());
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::vector<LabelVector> train_labels;
    for (std::size_t r : train_rows) train_labels.push_back(labels[r]);
    const GbdtModel model = fit(take_rows(x, train_rows), train_labels, config);
    for (std::size_t r : split[f]) out[r] = predict_one(model, x.row(r));
  }
  return out;
}

// Labels for the rows of `ids`, looked up in a dataset.
inline std::vector<LabelVector> labels_for(std::span<const std::string> ids, std::span<const Sample> dataset) {
  std::unordered_map<std::string, const Sample*> by_id;
  for (const Sample& s : dataset) by_id[s.id] = &s;
  std::vector<LabelVector> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(ErrorCode::invalid_argument, "id \"" + id + "\" not found in dataset");
    out.push_back(it->second->labels());
  }
  return out;
}

}  // namespace manipdet
