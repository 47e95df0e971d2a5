#pragma once

// Stacked feature construction: cosine distances to k-means centroids of
// trigger-phrase embeddings, technique frequencies among nearest neighbours,
// and cheap meta-linguistic counts, concatenated with base probabilities.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "manipdet/core.hpp"
#include "manipdet/ingest.hpp"
#include "manipdet/rng.hpp"
#include "manipdet/vecmath.hpp"

namespace manipdet {

inline constexpr std::size_t kNumMetaFeatures = 8;
inline constexpr std::size_t kFeatureDim = 4 * kNumTechniques + kNumMetaFeatures;  // 48

// Feature layout offsets.
inline constexpr std::size_t kBaseOffset = 0;
inline constexpr std::size_t kDistanceOffset = 10;
inline constexpr std::size_t kTextNeighborOffset = 20;
inline constexpr std::size_t kTriggerNeighborOffset = 30;
inline constexpr std::size_t kMetaOffset = 40;

using FeatureVector = std::array<double, kFeatureDim>;
using MetaFeatures = std::array<double, kNumMetaFeatures>;

inline constexpr std::array<std::string_view, kNumMetaFeatures> kMetaFeatureNames = {
    "char_count", "word_count", "question_count", "exclam_count",
    "url_flag",   "uppercase_ratio", "digit_ratio", "newline_count",
};

// ---------------------------------------------------------------------------
// Spherical k-means

struct KMeansModel {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<double> centroids;  // k * dim, unit rows
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  double inertia = 0.0;                 // sum of (1 - cos) to assigned centroid
  std::vector<double> inertia_history;  // one entry per assignment step
  std::vector<std::size_t> assignments;

  std::span<const double> centroid(std::size_t c) const {
    return std::span<const double>(centroids).subspan(c * dim, dim);
  }
};

namespace detail {

// Index of the centroid with maximal cosine similarity (lowest index on ties).
inline std::pair<std::size_t, double> nearest_centroid(std::span<const double> x, std::span<const double> centroids,
                                                       std::size_t k, std::size_t dim) {
  std::size_t best = 0;
  double best_sim = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const double s = vec::dot(x, centroids.subspan(c * dim, dim));
    if (s > best_sim) {
      best_sim = s;
      best = c;
    }
  }
  return {best, best_sim};
}

}  // namespace detail

inline KMeansModel fit_kmeans(const EmbeddingMatrix& points, std::size_t k = kNumTechniques, std::uint64_t seed = 0,
                              std::size_t max_iterations = 100) {
  const std::size_t n = points.rows();
  const std::size_t dim = points.dim;
  if (k == 0) throw Error(ErrorCode::invalid_argument, "k-means: K must be positive");
  if (n < k) {
    throw Error(ErrorCode::invalid_argument,
                "k-means: " + std::to_string(n) + " rows is fewer than K = " + std::to_string(k));
  }
  std::vector<double> unit(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    const double nrm = vec::norm(points.row(i));
    if (!(nrm > 0.0)) throw Error(ErrorCode::invalid_argument, "k-means: zero-norm row \"" + points.ids[i] + "\"");
    for (std::size_t d = 0; d < dim; ++d) unit[i * dim + d] = points.row(i)[d] / nrm;
  }
  const auto row = [&](std::size_t i) { return std::span<const double>(unit).subspan(i * dim, dim); };

  KMeansModel model;
  model.k = k;
  model.dim = dim;
  model.seed = seed;
  model.centroids.resize(k * dim);

  // k-means++ seeding with D^2 = |x - c|^2 = 2 (1 - cos) on the unit sphere.
  Rng rng(seed);
  std::vector<bool> chosen(n, false);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = rng.below(n);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t pick = first;
    if (c > 0) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) total += chosen[i] ? 0.0 : d2[i];
      if (total > 0.0) {
        double target = rng.uniform() * total;
        pick = n;
        for (std::size_t i = 0; i < n; ++i) {
          if (chosen[i] || d2[i] <= 0.0) continue;
          pick = i;
          target -= d2[i];
          if (target < 0.0) break;
        }
      } else {
        // every remaining point duplicates a centroid
        pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), false) - chosen.begin());
      }
    }
    chosen[pick] = true;
    std::copy_n(row(pick).begin(), dim, model.centroids.begin() + static_cast<std::ptrdiff_t>(c * dim));
    for (std::size_t i = 0; i < n; ++i) {
      const double dist = std::max(0.0, 2.0 * (1.0 - vec::dot(row(i), row(pick))));
      d2[i] = std::min(d2[i], dist);
    }
  }

  std::vector<std::size_t> assign(n, k);
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      auto [c, sim] = detail::nearest_centroid(row(i), model.centroids, k, dim);
      inertia += 1.0 - sim;
      if (assign[i] != c) {
        assign[i] = c;
        changed = true;
      }
    }
    model.inertia_history.push_back(inertia);
    model.iterations = iter + 1;
    if (!changed) break;

    std::vector<double> sums(k * dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < dim; ++d) sums[assign[i] * dim + d] += row(i)[d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      std::span<double> s(sums.data() + c * dim, dim);
      const double nrm = vec::norm(s);
      if (!(nrm > 0.0)) continue;  // empty or cancelling cluster keeps its centroid
      for (std::size_t d = 0; d < dim; ++d) model.centroids[c * dim + d] = s[d] / nrm;
    }
  }

  model.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto [c, sim] = detail::nearest_centroid(row(i), model.centroids, k, dim);
    assign[i] = c;
    model.inertia += std::max(0.0, 1.0 - sim);
  }
  model.assignments = std::move(assign);
  return model;
}

// 1 - cos(embedding, centroid_k) for every cluster, in cluster order.
inline std::vector<double> centroid_distances(const KMeansModel& model, std::span<const double> embedding) {
  if (embedding.size() != model.dim) {
    throw Error(ErrorCode::dimension_mismatch, "centroid_distances: embedding dim " + std::to_string(embedding.size()) +
                                                   " != model dim " + std::to_string(model.dim));
  }
  std::vector<double> out(model.k);
  for (std::size_t c = 0; c < model.k; ++c) {
    out[c] = std::clamp(1.0 - vec::cosine(embedding, model.centroid(c)), 0.0, 2.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nearest-neighbour technique frequencies

inline std::array<double, kNumTechniques> neighbor_frequencies(std::span<const double> query,
                                                               const EmbeddingMatrix& reference,
                                                               std::span<const LabelVector> reference_labels,
                                                               std::size_t n,
                                                               std::optional<std::string_view> exclude_id = {}) {
  if (reference.rows() == 0) throw Error(ErrorCode::invalid_argument, "neighbor_frequencies: empty reference");
  if (n == 0) throw Error(ErrorCode::invalid_argument, "neighbor_frequencies: n must be >= 1");
  if (reference_labels.size() != reference.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "neighbor_frequencies: labels not aligned with reference rows");
  }
  if (query.size() != reference.dim) throw Error(ErrorCode::dimension_mismatch, "neighbor_frequencies: dim mismatch");
  const double qn = vec::norm(query);
  if (!(qn > 0.0)) throw Error(ErrorCode::invalid_argument, "neighbor_frequencies: zero-norm query");

  struct Candidate {
    double sim;
    std::size_t index;
  };
  std::vector<Candidate> cands;
  cands.reserve(reference.rows());
  for (std::size_t i = 0; i < reference.rows(); ++i) {
    if (exclude_id && reference.ids[i] == *exclude_id) continue;
    const double rn = vec::norm(reference.row(i));
    const double sim = rn > 0.0 ? vec::dot(query, reference.row(i)) / (qn * rn) : 0.0;
    cands.push_back({sim, i});
  }
  if (cands.size() < n) {
    throw Error(ErrorCode::invalid_argument, "neighbor_frequencies: n = " + std::to_string(n) + " exceeds " +
                                                 std::to_string(cands.size()) + " available references");
  }
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(n), cands.end(),
                    [](const Candidate& a, const Candidate& b) {
                      return a.sim > b.sim || (a.sim == b.sim && a.index < b.index);
                    });
  std::array<double, kNumTechniques> freq{};
  for (std::size_t j = 0; j < n; ++j) {
    const LabelVector& lv = reference_labels[cands[j].index];
    for (std::size_t t = 0; t < kNumTechniques; ++t) freq[t] += lv[t] ? 1.0 : 0.0;
  }
  for (double& f : freq) f /= static_cast<double>(n);
  return freq;
}

// ---------------------------------------------------------------------------
// Meta features

namespace detail {

// Unicode whitespace (White_Space property).
constexpr bool is_space(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

// Letter case for the Latin, Greek and Cyrillic blocks; other code points
// are not counted as letters.
enum class LetterCase { none, upper, lower };

constexpr LetterCase letter_case(char32_t c) {
  if (c >= U'A' && c <= U'Z') return LetterCase::upper;
  if (c >= U'a' && c <= U'z') return LetterCase::lower;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return LetterCase::upper;
  if (c >= 0xDF && c <= 0xFF && c != 0xF7) return LetterCase::lower;
  if (c >= 0x100 && c <= 0x17F) {
    // Latin Extended-A alternates upper/lower with a few exceptions
    if (c == 0x138 || c == 0x149 || c == 0x17F) return LetterCase::lower;
    const bool odd_block = (c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E);
    return ((c % 2 == 1) == odd_block) ? LetterCase::upper : LetterCase::lower;
  }
  if (c == 0x386 || (c >= 0x388 && c <= 0x38F) || (c >= 0x391 && c <= 0x3AB && c != 0x3A2)) return LetterCase::upper;
  if (c >= 0x3AC && c <= 0x3CE) return LetterCase::lower;
  if (c >= 0x400 && c <= 0x42F) return LetterCase::upper;
  if (c >= 0x430 && c <= 0x45F) return LetterCase::lower;
  if ((c >= 0x460 && c <= 0x481) || (c >= 0x48A && c <= 0x4BF) || (c >= 0x4D0 && c <= 0x52F)) {
    return c % 2 == 0 ? LetterCase::upper : LetterCase::lower;
  }
  if (c == 0x4C0) return LetterCase::upper;
  if (c >= 0x4C1 && c <= 0x4CE) return c % 2 == 1 ? LetterCase::upper : LetterCase::lower;
  if (c == 0x4CF) return LetterCase::lower;
  return LetterCase::none;
}

}  // namespace detail

inline MetaFeatures meta_features(std::string_view content) {
  const std::u32string text = decode_utf8(content);
  MetaFeatures m{};
  std::size_t words = 0;
  std::size_t questions = 0;
  std::size_t exclaims = 0;
  std::size_t upper = 0;
  std::size_t letters = 0;
  std::size_t digits = 0;
  std::size_t newlines = 0;
  bool in_word = false;
  for (char32_t c : text) {
    const bool space = detail::is_space(c);
    if (!space && !in_word) ++words;
    in_word = !space;
    questions += c == U'?';
    exclaims += c == U'!';
    newlines += c == U'\n';
    digits += c >= U'0' && c <= U'9';
    const auto lc = detail::letter_case(c);
    letters += lc != detail::LetterCase::none;
    upper += lc == detail::LetterCase::upper;
  }
  const bool url = content.find("http://") != std::string_view::npos ||
                   content.find("https://") != std::string_view::npos ||
                   content.find("t.me/") != std::string_view::npos;
  m[0] = static_cast<double>(text.size());
  m[1] = static_cast<double>(words);
  m[2] = static_cast<double>(questions);
  m[3] = static_cast<double>(exclaims);
  m[4] = url ? 1.0 : 0.0;
  m[5] = letters == 0 ? 0.0 : static_cast<double>(upper) / static_cast<double>(letters);
  m[6] = text.empty() ? 0.0 : static_cast<double>(digits) / static_cast<double>(text.size());
  m[7] = static_cast<double>(newlines);
  return m;
}

inline FeatureVector assemble_features(const ProbVector& base, std::span<const double> distances,
                                       std::span<const double> text_freqs, std::span<const double> trigger_freqs,
                                       std::span<const double> meta) {
  if (distances.size() != kNumTechniques || text_freqs.size() != kNumTechniques ||
      trigger_freqs.size() != kNumTechniques || meta.size() != kNumMetaFeatures) {
    throw Error(ErrorCode::dimension_mismatch, "assemble_features: component sizes must be 10/10/10/10/8");
  }
  FeatureVector f{};
  std::copy(base.values().begin(), base.values().end(), f.begin() + kBaseOffset);
  std::copy(distances.begin(), distances.end(), f.begin() + kDistanceOffset);
  std::copy(text_freqs.begin(), text_freqs.end(), f.begin() + kTextNeighborOffset);
  std::copy(trigger_freqs.begin(), trigger_freqs.end(), f.begin() + kTriggerNeighborOffset);
  std::copy(meta.begin(), meta.end(), f.begin() + kMetaOffset);
  return f;
}

inline std::vector<std::string> feature_names() {
  std::vector<std::string> names;
  for (auto n : kTechniqueNames) names.push_back("prob_" + std::string(n));
  for (std::size_t c = 0; c < kNumTechniques; ++c) names.push_back("centroid_dist_" + std::to_string(c));
  for (auto n : kTechniqueNames) names.push_back("text_nn_" + std::string(n));
  for (auto n : kTechniqueNames) names.push_back("trigger_nn_" + std::string(n));
  for (auto n : kMetaFeatureNames) names.emplace_back(n);
  return names;
}

}  // namespace manipdet
