#pragma once

// Central finite differences over every parameter of the dual-head loss,
// compared against the analytic backward pass. The numeric side only calls
// forward() and heads_loss().

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "manipdet/heads.hpp"
#include "manipdet/rng.hpp"

namespace manipdet {

struct GradcheckCase {
  std::size_t dim = 8;
  std::size_t tokens = 5;  // regular tokens; a sequence-start row is prepended
  std::size_t hidden = 256;
  double lambda = 0.3;
  double dropout = 0.1;
  std::uint64_t seed = 0;
};

struct GradcheckResult {
  GradcheckCase config;
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::size_t parameters = 0;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
// gradient is ~0 from being judged on round-off alone.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradcheckFixture {
  TokenEmbeddingSequence sequence;
  std::vector<std::uint8_t> token_gold;
  LabelVector class_gold;
  HeadsParams params;
};

// Random embeddings, labels and parameters. Layernorm gain/bias are
// perturbed away from 1/0 so their gradients are exercised.
inline GradcheckFixture make_gradcheck_fixture(const GradcheckCase& c) {
  Rng rng(c.seed);
  GradcheckFixture f;
  f.sequence.id = "gradcheck";
  f.sequence.dim = c.dim;
  const std::size_t rows = c.tokens + 1;
  f.sequence.tokens.resize(rows * c.dim);
  for (double& v : f.sequence.tokens) v = rng.normal();
  f.sequence.offsets.push_back({0, 0});
  std::uint32_t pos = 0;
  for (std::size_t i = 0; i < c.tokens; ++i) {
    f.sequence.offsets.push_back({pos, pos + 3});
    pos += 4;
  }
  f.token_gold.assign(rows, 0);
  for (std::size_t i = 1; i < rows; ++i) f.token_gold[i] = rng.bernoulli(0.5);
  for (std::size_t t = 0; t < kNumTechniques; ++t) f.class_gold.set(t, rng.bernoulli(0.4));
  f.params = HeadsParams::initialize(c.dim, c.hidden, rng);
  for (double& g : f.params.ln_gain) g = 1.0 + 0.2 * rng.normal();
  for (double& b : f.params.ln_bias) b = 0.2 * rng.normal();
  return f;
}

inline GradcheckResult run_gradcheck(const GradcheckCase& c, double step = 1e-5) {
  GradcheckFixture f = make_gradcheck_fixture(c);
  const std::uint64_t dropout_seed = c.seed ^ 0x9E3779B97F4A7C15ull;
  // Same rng seed on every evaluation reproduces the same dropout mask.
  const auto loss_at = [&](const HeadsParams& p) {
    Rng rng(dropout_seed);
    const ForwardTrace tr = forward(p, f.sequence, Mode::train, rng, c.dropout, 1e-5);
    return heads_loss(tr, f.token_gold, f.class_gold, c.lambda);
  };

  Rng rng(dropout_seed);
  const ForwardTrace tr = forward(f.params, f.sequence, Mode::train, rng, c.dropout, 1e-5);
  const HeadsParams analytic = backward(f.params, tr, f.token_gold, f.class_gold, c.lambda);

  GradcheckResult r;
  r.config = c;
  HeadsParams probe = f.params;
  auto probe_tensors = probe.tensors();
  const auto analytic_tensors = analytic.tensors();
  for (std::size_t k = 0; k < probe_tensors.size(); ++k) {
    auto& values = *probe_tensors[k].data;
    const auto& grads = *analytic_tensors[k].data;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss_at(probe);
      values[i] = saved - step;
      const double down = loss_at(probe);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(grads[i], numeric);
      ++r.parameters;
      if (err > r.max_relative_error) {
        r.max_relative_error = err;
        r.worst_tensor = probe_tensors[k].name;
        r.worst_index = i;
      }
    }
  }
  return r;
}

// D in {4, 8, 16} crossed with T in {1, 5, 17}.
inline std::vector<GradcheckCase> default_gradcheck_cases(std::uint64_t seed = 0) {
  std::vector<GradcheckCase> cases;
  std::uint64_t s = seed;
  for (std::size_t d : {4, 8, 16}) {
    for (std::size_t t : {1, 5, 17}) cases.push_back({d, t, 256, 0.3, 0.1, s++});
  }
  return cases;
}

}  // namespace manipdet
