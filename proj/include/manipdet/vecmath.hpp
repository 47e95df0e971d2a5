#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "manipdet/core.hpp"

namespace manipdet::vec {

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::dimension_mismatch, "dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline std::vector<double> normalized(std::span<const double> a) {
  const double n = norm(a);
  if (!(n > 0.0)) throw Error(ErrorCode::invalid_argument, "cannot normalize a zero-norm vector");
  std::vector<double> out(a.begin(), a.end());
  for (double& x : out) x /= n;
  return out;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "cosine similarity of a zero-norm vector");
  }
  return dot(a, b) / (na * nb);
}

}  // namespace manipdet::vec
