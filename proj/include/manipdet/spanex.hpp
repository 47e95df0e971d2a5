#pragma once

// Token probabilities -> character spans, token training labels from gold
// spans, and k-fold calibration of the single span threshold.

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "manipdet/calibrate.hpp"
#include "manipdet/core.hpp"
#include "manipdet/ingest.hpp"
#include "manipdet/metrics.hpp"

namespace manipdet {

struct TokenProbSequence {
  std::string id;
  std::vector<double> probs;
  std::vector<TokenOffset> offsets;
};

namespace detail {

inline void check_offsets(std::span<const TokenOffset> offsets, const std::string& id) {
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    const TokenOffset o = offsets[i];
    if (!o.is_special() && o.start >= o.end) {
      throw Error(ErrorCode::invalid_offsets, "sample \"" + id + "\": token " + std::to_string(i) +
                                                  " has start >= end");
    }
  }
}

}  // namespace detail

// Tokens with prob >= threshold become intervals; intervals that overlap or
// sit at most max_gap characters apart are merged.
inline std::vector<CharSpan> extract_spans(const TokenProbSequence& seq, double threshold, std::size_t max_gap = 1) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorCode::invalid_argument, "span threshold must be in (0, 1)");
  if (seq.probs.size() != seq.offsets.size()) {
    throw Error(ErrorCode::invalid_offsets, "sample \"" + seq.id + "\": probs and offsets differ in length");
  }
  detail::check_offsets(seq.offsets, seq.id);
  std::vector<CharSpan> picked;
  for (std::size_t i = 0; i < seq.probs.size(); ++i) {
    if (seq.offsets[i].is_special() || seq.probs[i] < threshold) continue;
    picked.push_back({seq.offsets[i].start, seq.offsets[i].end});
  }
  std::sort(picked.begin(), picked.end());
  std::vector<CharSpan> out;
  for (const CharSpan& s : picked) {
    if (!out.empty() && s.start <= out.back().end + max_gap) {
      out.back().end = std::max(out.back().end, s.end);
    } else {
      out.push_back(s);
    }
  }
  return out;
}

// 1 iff the token shares at least one character with a gold span.
inline std::vector<std::uint8_t> token_labels_from_spans(std::span<const CharSpan> spans,
                                                         std::span<const TokenOffset> offsets) {
  std::vector<std::uint8_t> labels(offsets.size(), 0);
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    if (offsets[i].is_special()) continue;
    const CharSpan tok{offsets[i].start, offsets[i].end};
    labels[i] = std::any_of(spans.begin(), spans.end(), [&](const CharSpan& s) { return s.overlaps(tok); });
  }
  return labels;
}

struct SpanThreshold {
  double threshold = 0.5;
  std::size_t folds = 0;
  std::uint64_t seed = 0;
  std::size_t max_gap = 1;
  ThresholdGrid grid;
  std::vector<double> fold_optima;
};

inline SpanThreshold optimize_span_threshold(std::span<const TokenProbSequence> seqs,
                                             std::span<const std::vector<CharSpan>> gold, std::size_t folds = 5,
                                             std::uint64_t seed = 0, const ThresholdGrid& grid = {},
                                             std::size_t max_gap = 1) {
  if (seqs.size() != gold.size()) throw Error(ErrorCode::dimension_mismatch, "optimize_span_threshold: inputs not aligned");
  const auto values = grid.values();
  const auto split = make_folds(seqs.size(), folds, seed);
  SpanThreshold out;
  out.folds = folds;
  out.seed = seed;
  out.max_gap = max_gap;
  out.grid = grid;
  for (const auto& fold : split) {
    out.fold_optima.push_back(best_grid_value(values, [&](double thr) {
      SpanOverlapCounts counts;
      for (std::size_t i : fold) accumulate_span_counts(counts, gold[i], extract_spans(seqs[i], thr, max_gap));
      return span_f1_from_counts(counts).f1;
    }));
  }
  out.threshold = median(out.fold_optima);
  return out;
}

inline nlohmann::json to_json(const SpanThreshold& s) {
  return {{"threshold", s.threshold}, {"folds", s.folds},          {"seed", s.seed},
          {"max_gap", s.max_gap},     {"grid", grid_json(s.grid)}, {"fold_optima", s.fold_optima}};
}

inline SpanThreshold span_threshold_from_json(const nlohmann::json& j) {
  try {
    SpanThreshold s;
    s.threshold = j.at("threshold").get<double>();
    s.folds = j.at("folds").get<std::size_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.max_gap = j.at("max_gap").get<std::size_t>();
    s.grid = grid_from_json(j.at("grid"));
    s.fold_optima = j.at("fold_optima").get<std::vector<double>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("span threshold file: ") + e.what());
  }
}

}  // namespace manipdet
