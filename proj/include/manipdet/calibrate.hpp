#pragma once

// Per-class decision thresholds chosen by k-fold grid search: each fold picks
// the smallest grid value with maximal F1, and the final threshold is the
// median of the fold optima.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "manipdet/core.hpp"
#include "manipdet/metrics.hpp"
#include "manipdet/rng.hpp"

namespace manipdet {

struct ThresholdGrid {
  double start = 0.01;
  double stop = 0.99;
  double step = 0.01;

  void validate() const {
    if (!(step > 0.0) || !(start > 0.0) || !(stop < 1.0) || !(start <= stop)) {
      throw Error(ErrorCode::invalid_argument, "degenerate threshold grid: need 0 < start <= stop < 1 and step > 0");
    }
  }

  // Grid points rounded to 1e-9 so 0.01 + 19 * 0.01 is exactly the double 0.2.
  std::vector<double> values() const {
    validate();
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
      out[i] = std::round((start + static_cast<double>(i) * step) * 1e9) / 1e9;
    }
    return out;
  }

  friend bool operator==(const ThresholdGrid&, const ThresholdGrid&) = default;
};

struct ThresholdSet {
  std::array<double, kNumTechniques> thresholds{};
  std::size_t folds = 0;
  std::uint64_t seed = 0;
  ThresholdGrid grid;
  std::vector<std::array<double, kNumTechniques>> fold_optima;  // one row per fold
};

// Deterministic shuffle of [0, n), cut into `folds` contiguous chunks; the
// first n % folds chunks are one element longer.
inline std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorCode::invalid_argument, "folds must be >= 2");
  if (n < folds) {
    throw Error(ErrorCode::invalid_argument,
                std::to_string(n) + " samples cannot fill " + std::to_string(folds) + " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out(folds);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t size = n / folds + (f < n % folds ? 1 : 0);
    out[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                  order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return out;
}

// Smallest grid value attaining the maximum of objective(value).
template <typename Objective>
double best_grid_value(std::span<const double> grid, Objective&& objective) {
  double best_value = grid.front();
  double best_score = objective(grid.front());
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double score = objective(grid[i]);
    if (score > best_score) {
      best_score = score;
      best_value = grid[i];
    }
  }
  return best_value;
}

inline double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::invalid_argument, "median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 == 1 ? values[m] : (values[m - 1] + values[m]) / 2.0;
}

// F1 of one class at one threshold over a subset of samples.
inline double class_f1_at(std::span<const ProbVector> probs, std::span<const LabelVector> labels,
                          std::span<const std::size_t> subset, std::size_t technique, double threshold) {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  for (std::size_t i : subset) {
    const bool pred = probs[i][technique] >= threshold;
    const bool gold = labels[i][technique];
    tp += pred && gold;
    fp += pred && !gold;
    fn += !pred && gold;
  }
  const auto dtp = static_cast<double>(tp);
  return f1_score(safe_div(dtp, dtp + static_cast<double>(fp)), safe_div(dtp, dtp + static_cast<double>(fn)));
}

inline ThresholdSet optimize_thresholds(std::span<const ProbVector> probs, std::span<const LabelVector> labels,
                                        std::size_t folds = 5, std::uint64_t seed = 0, const ThresholdGrid& grid = {}) {
  if (probs.size() != labels.size()) throw Error(ErrorCode::dimension_mismatch, "optimize_thresholds: probs/labels mismatch");
  const auto values = grid.values();
  const auto split = make_folds(probs.size(), folds, seed);
  ThresholdSet out;
  out.folds = folds;
  out.seed = seed;
  out.grid = grid;
  out.fold_optima.resize(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    for (std::size_t t = 0; t < kNumTechniques; ++t) {
      out.fold_optima[f][t] = best_grid_value(
          values, [&](double thr) { return class_f1_at(probs, labels, split[f], t, thr); });
    }
  }
  for (std::size_t t = 0; t < kNumTechniques; ++t) {
    std::vector<double> optima;
    for (const auto& row : out.fold_optima) optima.push_back(row[t]);
    out.thresholds[t] = median(std::move(optima));
  }
  return out;
}

inline LabelVector apply_thresholds(const ProbVector& probs, const std::array<double, kNumTechniques>& thresholds) {
  LabelVector v;
  for (std::size_t t = 0; t < kNumTechniques; ++t) v.set(t, probs[t] >= thresholds[t]);
  return v;
}

inline std::vector<LabelVector> apply_thresholds(std::span<const ProbVector> probs,
                                                 const std::array<double, kNumTechniques>& thresholds) {
  std::vector<LabelVector> out;
  out.reserve(probs.size());
  for (const auto& p : probs) out.push_back(apply_thresholds(p, thresholds));
  return out;
}

inline std::vector<LabelVector> apply_thresholds(std::span<const ProbVector> probs, const ThresholdSet& set) {
  return apply_thresholds(probs, set.thresholds);
}

inline std::array<double, kNumTechniques> uniform_thresholds(double value) {
  std::array<double, kNumTechniques> out{};
  out.fill(value);
  return out;
}

struct GlobalComparison {
  double calibrated_macro_f1 = 0.0;
  double global_macro_f1 = 0.0;
  double global_threshold = 0.5;
};

inline GlobalComparison compare_to_global(std::span<const ProbVector> probs, std::span<const LabelVector> labels,
                                          const ThresholdSet& thresholds, double global = 0.5) {
  GlobalComparison c;
  c.global_threshold = global;
  c.calibrated_macro_f1 = macro_f1(labels, apply_thresholds(probs, thresholds)).macro_f1;
  c.global_macro_f1 = macro_f1(labels, apply_thresholds(probs, uniform_thresholds(global))).macro_f1;
  return c;
}

// ---------------------------------------------------------------------------
// thresholds.json

inline nlohmann::json grid_json(const ThresholdGrid& g) {
  return {{"start", g.start}, {"stop", g.stop}, {"step", g.step}};
}

inline ThresholdGrid grid_from_json(const nlohmann::json& j) {
  ThresholdGrid g{j.at("start").get<double>(), j.at("stop").get<double>(), j.at("step").get<double>()};
  g.validate();
  return g;
}

inline nlohmann::json to_json(const ThresholdSet& s) {
  nlohmann::json j;
  j["labels"] = nlohmann::json::array();
  for (auto n : kTechniqueNames) j["labels"].push_back(std::string(n));
  j["thresholds"] = s.thresholds;
  j["folds"] = s.folds;
  j["seed"] = s.seed;
  j["grid"] = grid_json(s.grid);
  j["fold_optima"] = s.fold_optima;
  return j;
}

inline ThresholdSet threshold_set_from_json(const nlohmann::json& j) {
  try {
    const auto labels = j.at("labels").get<std::vector<std::string>>();
    if (labels.size() != kNumTechniques) throw Error(ErrorCode::parse_error, "thresholds.json: expected 10 labels");
    for (std::size_t t = 0; t < kNumTechniques; ++t) {
      if (labels[t] != kTechniqueNames[t]) throw Error(ErrorCode::column_order, "thresholds.json: labels out of canonical order");
    }
    ThresholdSet s;
    s.thresholds = j.at("thresholds").get<std::array<double, kNumTechniques>>();
    s.folds = j.at("folds").get<std::size_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.grid = grid_from_json(j.at("grid"));
    s.fold_optima = j.at("fold_optima").get<std::vector<std::array<double, kNumTechniques>>>();
    if (s.fold_optima.size() != s.folds) throw Error(ErrorCode::parse_error, "thresholds.json: fold_optima length != folds");
    for (double t : s.thresholds) {
      if (!(t > 0.0 && t < 1.0)) throw Error(ErrorCode::out_of_range, "thresholds.json: threshold outside (0, 1)");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("thresholds.json: ") + e.what());
  }
}

}  // namespace manipdet
