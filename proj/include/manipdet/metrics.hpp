#pragma once

// Shared-task evaluation: macro-F1 over the ten techniques and span-level F1
// over character index sets, plus the per-class report and co-occurrence.

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "manipdet/core.hpp"

namespace manipdet {

// x / y, with 0 whenever the denominator is 0.
inline double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

inline double f1_score(double precision, double recall) {
  return safe_div(2.0 * precision * recall, precision + recall);
}

struct ConfusionCounts {
  std::array<std::size_t, kNumTechniques> tp{};
  std::array<std::size_t, kNumTechniques> fp{};
  std::array<std::size_t, kNumTechniques> fn{};
};

struct MacroF1Result {
  double macro_f1 = 0.0;
  std::array<double, kNumTechniques> f1{};
  std::array<double, kNumTechniques> precision{};
  std::array<double, kNumTechniques> recall{};
  std::array<std::size_t, kNumTechniques> support{};
  ConfusionCounts counts;
};

inline MacroF1Result macro_f1(std::span<const LabelVector> gold, std::span<const LabelVector> pred) {
  if (gold.size() != pred.size()) {
    throw Error(ErrorCode::dimension_mismatch, "macro_f1: gold has " + std::to_string(gold.size()) +
                                                   " samples, pred has " + std::to_string(pred.size()));
  }
  MacroF1Result r;
  for (std::size_t n = 0; n < gold.size(); ++n) {
    for (std::size_t t = 0; t < kNumTechniques; ++t) {
      const bool g = gold[n][t];
      const bool p = pred[n][t];
      r.counts.tp[t] += g && p;
      r.counts.fp[t] += !g && p;
      r.counts.fn[t] += g && !p;
    }
  }
  double sum = 0.0;
  for (std::size_t t = 0; t < kNumTechniques; ++t) {
    const auto tp = static_cast<double>(r.counts.tp[t]);
    r.precision[t] = safe_div(tp, tp + static_cast<double>(r.counts.fp[t]));
    r.recall[t] = safe_div(tp, tp + static_cast<double>(r.counts.fn[t]));
    r.f1[t] = f1_score(r.precision[t], r.recall[t]);
    r.support[t] = r.counts.tp[t] + r.counts.fn[t];
    sum += r.f1[t];
  }
  // Every class counts, including ones absent from gold and pred.
  r.macro_f1 = sum / static_cast<double>(kNumTechniques);
  return r;
}

// ---------------------------------------------------------------------------
// Span-level F1

struct SpanOverlapCounts {
  std::size_t sum_intersection = 0;
  std::size_t sum_predicted = 0;
  std::size_t sum_gold = 0;
};

struct SpanF1Result {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  SpanOverlapCounts counts;
};

// Sorted, disjoint, non-touching union of the given spans.
inline std::vector<CharSpan> span_union(std::span<const CharSpan> spans) {
  for (const CharSpan& s : spans) {
    if (!s.valid()) {
      throw Error(ErrorCode::invalid_argument,
                  "span [" + std::to_string(s.start) + ", " + std::to_string(s.end) + ") has start >= end");
    }
  }
  std::vector<CharSpan> sorted(spans.begin(), spans.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<CharSpan> out;
  for (const CharSpan& s : sorted) {
    if (!out.empty() && s.start <= out.back().end) {
      out.back().end = std::max(out.back().end, s.end);
    } else {
      out.push_back(s);
    }
  }
  return out;
}

inline std::size_t covered_length(std::span<const CharSpan> disjoint) {
  std::size_t n = 0;
  for (const CharSpan& s : disjoint) n += s.length();
  return n;
}

// Size of the intersection of two sorted disjoint span lists.
inline std::size_t intersection_length(std::span<const CharSpan> a, std::span<const CharSpan> b) {
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t n = 0;
  while (i < a.size() && j < b.size()) {
    const std::size_t lo = std::max(a[i].start, b[j].start);
    const std::size_t hi = std::min(a[i].end, b[j].end);
    if (lo < hi) n += hi - lo;
    if (a[i].end < b[j].end) {
      ++i;
    } else {
      ++j;
    }
  }
  return n;
}

inline void accumulate_span_counts(SpanOverlapCounts& counts, std::span<const CharSpan> gold,
                                   std::span<const CharSpan> pred) {
  const auto g = span_union(gold);
  const auto p = span_union(pred);
  counts.sum_gold += covered_length(g);
  counts.sum_predicted += covered_length(p);
  counts.sum_intersection += intersection_length(g, p);
}

inline SpanF1Result span_f1_from_counts(const SpanOverlapCounts& counts) {
  SpanF1Result r;
  r.counts = counts;
  r.precision = safe_div(static_cast<double>(counts.sum_intersection), static_cast<double>(counts.sum_predicted));
  r.recall = safe_div(static_cast<double>(counts.sum_intersection), static_cast<double>(counts.sum_gold));
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

// Aligned form: gold[i] and pred[i] belong to the same sample.
inline SpanF1Result span_f1(std::span<const std::vector<CharSpan>> gold, std::span<const std::vector<CharSpan>> pred) {
  if (gold.size() != pred.size()) throw Error(ErrorCode::dimension_mismatch, "span_f1: sample count mismatch");
  SpanOverlapCounts counts;
  for (std::size_t i = 0; i < gold.size(); ++i) accumulate_span_counts(counts, gold[i], pred[i]);
  return span_f1_from_counts(counts);
}

// Keyed form: ids missing on one side are scored against an empty span list.
inline SpanF1Result span_f1(const std::map<std::string, std::vector<CharSpan>>& gold,
                            const std::map<std::string, std::vector<CharSpan>>& pred) {
  SpanOverlapCounts counts;
  static const std::vector<CharSpan> kEmpty;
  for (const auto& [id, spans] : gold) {
    auto it = pred.find(id);
    accumulate_span_counts(counts, spans, it == pred.end() ? kEmpty : it->second);
  }
  for (const auto& [id, spans] : pred) {
    if (!gold.contains(id)) accumulate_span_counts(counts, kEmpty, spans);
  }
  return span_f1_from_counts(counts);
}

// ---------------------------------------------------------------------------
// Reporting

inline std::string classification_report(const MacroF1Result& r) {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof line, "%-25s %9s %9s %9s %8s\n", "technique", "precision", "recall", "f1", "support");
  out += line;
  for (std::size_t t = 0; t < kNumTechniques; ++t) {
    std::snprintf(line, sizeof line, "%-25s %9.3f %9.3f %9.3f %8zu\n", std::string(kTechniqueNames[t]).c_str(),
                  r.precision[t], r.recall[t], r.f1[t], r.support[t]);
    out += line;
  }
  std::snprintf(line, sizeof line, "%-25s %9s %9s %9.5f\n", "macro_f1", "", "", r.macro_f1);
  out += line;
  return out;
}

inline nlohmann::json report_json(const MacroF1Result& r) {
  nlohmann::json j;
  for (std::size_t t = 0; t < kNumTechniques; ++t) {
    j[std::string(kTechniqueNames[t])] = {{"f1", r.f1[t]}, {"support", r.support[t]}};
  }
  j["macro_f1"] = r.macro_f1;
  return j;
}

using CooccurrenceMatrix = std::array<std::array<std::size_t, kNumTechniques>, kNumTechniques>;

inline CooccurrenceMatrix cooccurrence(std::span<const Sample> samples) {
  CooccurrenceMatrix m{};
  for (const Sample& s : samples) {
    for (Technique a : s.techniques) {
      for (Technique b : s.techniques) ++m[index_of(a)][index_of(b)];
    }
  }
  return m;
}

inline std::string format_cooccurrence(const CooccurrenceMatrix& m) {
  std::string out;
  char cell[64];
  std::snprintf(cell, sizeof cell, "%-25s", "");
  out += cell;
  for (std::size_t j = 0; j < kNumTechniques; ++j) {
    std::snprintf(cell, sizeof cell, " %6.6s", std::string(kTechniqueNames[j]).c_str());
    out += cell;
  }
  out += '\n';
  for (std::size_t i = 0; i < kNumTechniques; ++i) {
    std::snprintf(cell, sizeof cell, "%-25s", std::string(kTechniqueNames[i]).c_str());
    out += cell;
    for (std::size_t j = 0; j < kNumTechniques; ++j) {
      std::snprintf(cell, sizeof cell, " %6zu", m[i][j]);
      out += cell;
    }
    out += '\n';
  }
  return out;
}

}  // namespace manipdet
