#pragma once

// Dual-head network over frozen token embeddings.
//
//   token head:  p_i = sigmoid(w . e_i + b)
//   class head:  pooled = [e_0 ; mean(e_regular) ; max(e_regular)]       (3D)
//                u = W1^T pooled + b1                                    (H)
//                a = GELU(u) = u * Phi(u)
//                z = gain * (a - mu) / sqrt(var + eps) + bias
//                zd = z * dropout_mask                                   (train only)
//                q = sigmoid(W2^T zd + b2)                               (C = 10)
//   loss = BCE(token, regular tokens) + lambda * BCE(class, 10 labels)
//
// Special tokens (offset (0, 0)) are excluded from pooling and the token loss.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "manipdet/core.hpp"
#include "manipdet/ingest.hpp"
#include "manipdet/rng.hpp"
#include "manipdet/spanex.hpp"
#include "manipdet/stacker.hpp"

namespace manipdet {

struct HeadsConfig {
  std::size_t dim = 0;
  std::size_t hidden = 256;
  double class_loss_weight = 0.3;  // lambda
  double dropout = 0.1;
  double ln_eps = 1e-5;
  std::uint64_t seed = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 20;
  std::size_t batch_size = 8;

  void validate() const {
    if (dim == 0) throw Error(ErrorCode::config, "heads: dim must be positive");
    if (hidden == 0) throw Error(ErrorCode::config, "heads: hidden must be positive");
    if (!(class_loss_weight >= 0.0 && class_loss_weight < 1.0)) {
      throw Error(ErrorCode::config, "heads: class_loss_weight must be in [0, 1)");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::config, "heads: dropout must be in [0, 1)");
    if (!(ln_eps > 0.0)) throw Error(ErrorCode::config, "heads: ln_eps must be positive");
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::config, "heads: learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw Error(ErrorCode::config, "heads: moment decays must be in [0, 1)");
    }
    if (epochs == 0 || batch_size == 0) throw Error(ErrorCode::config, "heads: epochs and batch_size must be >= 1");
  }
};

struct HeadsParams {
  std::size_t dim = 0;
  std::size_t hidden = 0;
  std::vector<double> token_w;  // D
  std::vector<double> token_b;  // 1
  std::vector<double> w1;       // 3D x H, row-major
  std::vector<double> b1;       // H
  std::vector<double> ln_gain;  // H
  std::vector<double> ln_bias;  // H
  std::vector<double> w2;       // H x C, row-major
  std::vector<double> b2;       // C

  struct TensorRef {
    const char* name;
    std::size_t rows;
    std::size_t cols;
    std::vector<double>* data;
  };

  // Fixed tensor order used by serialization, the optimizer and gradcheck.
  std::array<TensorRef, 8> tensors() {
    return {{{"token_w", dim, 1, &token_w},
             {"token_b", 1, 1, &token_b},
             {"w1", 3 * dim, hidden, &w1},
             {"b1", 1, hidden, &b1},
             {"ln_gain", 1, hidden, &ln_gain},
             {"ln_bias", 1, hidden, &ln_bias},
             {"w2", hidden, kNumTechniques, &w2},
             {"b2", 1, kNumTechniques, &b2}}};
  }
  std::array<TensorRef, 8> tensors() const { return const_cast<HeadsParams*>(this)->tensors(); }

  static HeadsParams zeros(std::size_t dim, std::size_t hidden) {
    HeadsParams p;
    p.dim = dim;
    p.hidden = hidden;
    for (auto& t : p.tensors()) t.data->assign(t.rows * t.cols, 0.0);
    return p;
  }

  // Uniform(+-1/sqrt(fan_in)) weights and biases, unit layernorm gain.
  static HeadsParams initialize(std::size_t dim, std::size_t hidden, Rng& rng) {
    HeadsParams p = zeros(dim, hidden);
    const auto fill = [&](std::vector<double>& v, std::size_t fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (double& x : v) x = rng.uniform(-bound, bound);
    };
    fill(p.token_w, dim);
    fill(p.token_b, dim);
    fill(p.w1, 3 * dim);
    fill(p.b1, 3 * dim);
    std::fill(p.ln_gain.begin(), p.ln_gain.end(), 1.0);
    fill(p.w2, hidden);
    fill(p.b2, hidden);
    return p;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors()) n += t.data->size();
    return n;
  }

  void check_finite() const {
    for (const auto& t : tensors()) {
      for (double v : *t.data) {
        if (!std::isfinite(v)) throw Error(ErrorCode::non_finite, std::string("heads: non-finite value in ") + t.name);
      }
    }
  }
};

enum class Mode { train, eval };

struct ForwardTrace {
  std::span<const double> tokens;  // views the input sequence; must outlive the trace
  std::size_t length = 0;
  std::size_t dim = 0;
  std::vector<std::uint8_t> mask;  // 1 for regular tokens
  std::vector<double> token_logits;
  std::vector<double> token_probs;
  std::vector<double> pooled;        // 3D
  std::vector<double> pre;           // H, before GELU
  std::vector<double> act;           // H, after GELU
  std::vector<double> normalized;    // H, (a - mu) / sigma
  double inv_std = 0.0;
  std::vector<double> ln_out;        // H, after gain/bias
  std::vector<double> dropout_mask;  // H, entries 0 or 1/(1-p)
  std::vector<double> dropped;       // H
  std::array<double, kNumTechniques> class_logits{};
  std::array<double, kNumTechniques> class_probs{};
};

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

inline std::vector<std::uint8_t> regular_token_mask(std::span<const TokenOffset> offsets) {
  std::vector<std::uint8_t> mask(offsets.size());
  for (std::size_t i = 0; i < offsets.size(); ++i) mask[i] = offsets[i].is_special() ? 0 : 1;
  return mask;
}

inline ForwardTrace forward(const HeadsParams& params, const TokenEmbeddingSequence& seq, Mode mode, Rng& rng,
                            double dropout, double ln_eps) {
  const std::size_t d = params.dim;
  const std::size_t h = params.hidden;
  const std::size_t t_len = seq.length();
  if (seq.dim != d) {
    throw Error(ErrorCode::dimension_mismatch, "heads forward: sequence dim " + std::to_string(seq.dim) +
                                                   " != model dim " + std::to_string(d));
  }
  if (t_len == 0) throw Error(ErrorCode::invalid_argument, "heads forward: empty sequence");
  if (seq.tokens.size() != t_len * d) throw Error(ErrorCode::dimension_mismatch, "heads forward: malformed sequence");

  ForwardTrace tr;
  tr.tokens = seq.tokens;
  tr.length = t_len;
  tr.dim = d;
  tr.mask = regular_token_mask(seq.offsets);

  tr.token_logits.resize(t_len);
  tr.token_probs.resize(t_len);
  for (std::size_t i = 0; i < t_len; ++i) {
    double s = params.token_b[0];
    for (std::size_t k = 0; k < d; ++k) s += params.token_w[k] * seq.tokens[i * d + k];
    tr.token_logits[i] = s;
    tr.token_probs[i] = sigmoid(s);
  }

  // [CLS ; mean ; max] over regular tokens; zeros when there are none
  tr.pooled.assign(3 * d, 0.0);
  std::copy_n(seq.tokens.begin(), d, tr.pooled.begin());
  std::size_t regular = 0;
  for (std::size_t i = 0; i < t_len; ++i) {
    if (!tr.mask[i]) continue;
    for (std::size_t k = 0; k < d; ++k) {
      const double v = seq.tokens[i * d + k];
      tr.pooled[d + k] += v;
      tr.pooled[2 * d + k] = regular == 0 ? v : std::max(tr.pooled[2 * d + k], v);
    }
    ++regular;
  }
  if (regular > 0) {
    for (std::size_t k = 0; k < d; ++k) tr.pooled[d + k] /= static_cast<double>(regular);
  }

  tr.pre.assign(params.b1.begin(), params.b1.end());
  for (std::size_t i = 0; i < 3 * d; ++i) {
    const double x = tr.pooled[i];
    if (x == 0.0) continue;
    const double* row = params.w1.data() + i * h;
    for (std::size_t j = 0; j < h; ++j) tr.pre[j] += x * row[j];
  }
  tr.act.resize(h);
  for (std::size_t j = 0; j < h; ++j) tr.act[j] = gelu(tr.pre[j]);

  double mu = 0.0;
  for (double a : tr.act) mu += a;
  mu /= static_cast<double>(h);
  double var = 0.0;
  for (double a : tr.act) var += (a - mu) * (a - mu);
  var /= static_cast<double>(h);
  tr.inv_std = 1.0 / std::sqrt(var + ln_eps);
  tr.normalized.resize(h);
  tr.ln_out.resize(h);
  for (std::size_t j = 0; j < h; ++j) {
    tr.normalized[j] = (tr.act[j] - mu) * tr.inv_std;
    tr.ln_out[j] = params.ln_gain[j] * tr.normalized[j] + params.ln_bias[j];
  }

  tr.dropout_mask.assign(h, 1.0);
  if (mode == Mode::train && dropout > 0.0) {
    const double keep_scale = 1.0 / (1.0 - dropout);
    for (double& m : tr.dropout_mask) m = rng.uniform() < dropout ? 0.0 : keep_scale;
  }
  tr.dropped.resize(h);
  for (std::size_t j = 0; j < h; ++j) tr.dropped[j] = tr.ln_out[j] * tr.dropout_mask[j];

  for (std::size_t c = 0; c < kNumTechniques; ++c) {
    double s = params.b2[c];
    for (std::size_t j = 0; j < h; ++j) s += tr.dropped[j] * params.w2[j * kNumTechniques + c];
    tr.class_logits[c] = s;
    tr.class_probs[c] = sigmoid(s);
  }
  return tr;
}

inline ForwardTrace forward(const HeadsParams& params, const TokenEmbeddingSequence& seq, Mode mode, Rng& rng,
                            const HeadsConfig& cfg) {
  return forward(params, seq, mode, rng, cfg.dropout, cfg.ln_eps);
}

inline constexpr double kBceClamp = 1e-7;

inline double clamped_bce(double p, double y) {
  const double pc = std::clamp(p, kBceClamp, 1.0 - kBceClamp);
  return -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
}

inline double heads_loss(std::span<const double> token_probs, std::span<const std::uint8_t> token_gold,
                         std::span<const std::uint8_t> mask, std::span<const double> class_probs,
                         const LabelVector& class_gold, double lambda) {
  if (token_probs.size() != token_gold.size() || token_probs.size() != mask.size()) {
    throw Error(ErrorCode::dimension_mismatch, "heads loss: token arrays not aligned");
  }
  if (class_probs.size() != kNumTechniques) throw Error(ErrorCode::dimension_mismatch, "heads loss: expected 10 class probs");
  double token_sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < token_probs.size(); ++i) {
    if (!mask[i]) continue;
    token_sum += clamped_bce(token_probs[i], token_gold[i] ? 1.0 : 0.0);
    ++counted;
  }
  if (counted == 0) throw Error(ErrorCode::invalid_argument, "heads loss: all tokens are masked");
  double class_sum = 0.0;
  for (std::size_t c = 0; c < kNumTechniques; ++c) class_sum += clamped_bce(class_probs[c], class_gold[c] ? 1.0 : 0.0);
  return token_sum / static_cast<double>(counted) + lambda * class_sum / static_cast<double>(kNumTechniques);
}

inline double heads_loss(const ForwardTrace& tr, std::span<const std::uint8_t> token_gold, const LabelVector& class_gold,
                         double lambda) {
  return heads_loss(tr.token_probs, token_gold, tr.mask, tr.class_probs, class_gold, lambda);
}

namespace detail {

// d clamped_bce / d logit; zero where the clamp is active.
inline double bce_logit_grad(double p, double y) {
  if (p < kBceClamp || p > 1.0 - kBceClamp) return 0.0;
  return p - y;
}

}  // namespace detail

// Gradient of heads_loss with respect to every parameter.
inline HeadsParams backward(const HeadsParams& params, const ForwardTrace& tr, std::span<const std::uint8_t> token_gold,
                            const LabelVector& class_gold, double lambda) {
  const std::size_t d = params.dim;
  const std::size_t h = params.hidden;
  if (tr.dim != d || tr.pre.size() != h || tr.pooled.size() != 3 * d) {
    throw Error(ErrorCode::dimension_mismatch, "heads backward: trace does not match params");
  }
  if (token_gold.size() != tr.length) throw Error(ErrorCode::dimension_mismatch, "heads backward: token gold length");
  HeadsParams g = HeadsParams::zeros(d, h);

  std::size_t counted = 0;
  for (auto m : tr.mask) counted += m;
  if (counted == 0) throw Error(ErrorCode::invalid_argument, "heads backward: all tokens are masked");
  const double token_scale = 1.0 / static_cast<double>(counted);
  for (std::size_t i = 0; i < tr.length; ++i) {
    if (!tr.mask[i]) continue;
    const double dl = token_scale * detail::bce_logit_grad(tr.token_probs[i], token_gold[i] ? 1.0 : 0.0);
    if (dl == 0.0) continue;
    g.token_b[0] += dl;
    for (std::size_t k = 0; k < d; ++k) g.token_w[k] += dl * tr.tokens[i * d + k];
  }

  if (lambda == 0.0) return g;
  const double class_scale = lambda / static_cast<double>(kNumTechniques);
  std::array<double, kNumTechniques> dlogit{};
  for (std::size_t c = 0; c < kNumTechniques; ++c) {
    dlogit[c] = class_scale * detail::bce_logit_grad(tr.class_probs[c], class_gold[c] ? 1.0 : 0.0);
    g.b2[c] = dlogit[c];
  }
  std::vector<double> d_ln(h);
  for (std::size_t j = 0; j < h; ++j) {
    double s = 0.0;
    for (std::size_t c = 0; c < kNumTechniques; ++c) {
      g.w2[j * kNumTechniques + c] = tr.dropped[j] * dlogit[c];
      s += params.w2[j * kNumTechniques + c] * dlogit[c];
    }
    d_ln[j] = s * tr.dropout_mask[j];
  }

  // layernorm: dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
  std::vector<double> d_hat(h);
  double mean_dhat = 0.0;
  double mean_dhat_xhat = 0.0;
  for (std::size_t j = 0; j < h; ++j) {
    g.ln_gain[j] = d_ln[j] * tr.normalized[j];
    g.ln_bias[j] = d_ln[j];
    d_hat[j] = d_ln[j] * params.ln_gain[j];
    mean_dhat += d_hat[j];
    mean_dhat_xhat += d_hat[j] * tr.normalized[j];
  }
  mean_dhat /= static_cast<double>(h);
  mean_dhat_xhat /= static_cast<double>(h);
  std::vector<double> d_pre(h);
  for (std::size_t j = 0; j < h; ++j) {
    const double d_act = tr.inv_std * (d_hat[j] - mean_dhat - tr.normalized[j] * mean_dhat_xhat);
    d_pre[j] = d_act * gelu_grad(tr.pre[j]);
    g.b1[j] = d_pre[j];
  }
  for (std::size_t i = 0; i < 3 * d; ++i) {
    const double x = tr.pooled[i];
    if (x == 0.0) continue;
    double* row = g.w1.data() + i * h;
    for (std::size_t j = 0; j < h; ++j) row[j] = x * d_pre[j];
  }
  return g;
}

// ---------------------------------------------------------------------------
// Training

struct HeadsExample {
  const TokenEmbeddingSequence* sequence = nullptr;
  std::vector<std::uint8_t> token_gold;
  LabelVector class_gold;
};

// Pairs each sequence with its token targets (from gold spans) and labels.
inline std::vector<HeadsExample> make_examples(std::span<const TokenEmbeddingSequence> seqs,
                                               std::span<const std::vector<CharSpan>> gold_spans,
                                               std::span<const LabelVector> gold_labels) {
  if (seqs.size() != gold_spans.size() || seqs.size() != gold_labels.size()) {
    throw Error(ErrorCode::dimension_mismatch, "heads: sequences, spans and labels are not aligned");
  }
  std::vector<HeadsExample> out;
  out.reserve(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    out.push_back({&seqs[i], token_labels_from_spans(gold_spans[i], seqs[i].offsets), gold_labels[i]});
  }
  return out;
}

struct HeadsTrainResult {
  HeadsParams params;
  std::vector<double> loss_history;  // mean training loss per epoch
};

class AdamState {
 public:
  AdamState(const HeadsParams& like, const HeadsConfig& cfg)
      : cfg_(cfg), m_(HeadsParams::zeros(like.dim, like.hidden)), v_(HeadsParams::zeros(like.dim, like.hidden)) {}

  void step(HeadsParams& params, const HeadsParams& grad) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto p = params.tensors();
    auto g = grad.tensors();
    auto m = m_.tensors();
    auto v = v_.tensors();
    for (std::size_t k = 0; k < p.size(); ++k) {
      auto& pv = *p[k].data;
      const auto& gv = *g[k].data;
      auto& mv = *m[k].data;
      auto& vv = *v[k].data;
      for (std::size_t i = 0; i < pv.size(); ++i) {
        mv[i] = cfg_.beta1 * mv[i] + (1.0 - cfg_.beta1) * gv[i];
        vv[i] = cfg_.beta2 * vv[i] + (1.0 - cfg_.beta2) * gv[i] * gv[i];
        pv[i] -= cfg_.learning_rate * (mv[i] / bc1) / (std::sqrt(vv[i] / bc2) + cfg_.adam_eps);
      }
    }
  }

 private:
  HeadsConfig cfg_;
  HeadsParams m_;
  HeadsParams v_;
  std::uint64_t t_ = 0;
};

inline void accumulate(HeadsParams& into, const HeadsParams& grad, double scale) {
  auto a = into.tensors();
  auto b = grad.tensors();
  for (std::size_t k = 0; k < a.size(); ++k) {
    auto& av = *a[k].data;
    const auto& bv = *b[k].data;
    for (std::size_t i = 0; i < av.size(); ++i) av[i] += scale * bv[i];
  }
}

inline HeadsTrainResult train_heads(std::span<const HeadsExample> examples, const HeadsConfig& cfg,
                                    const std::function<void(std::size_t, double)>& on_epoch = {}) {
  cfg.validate();
  if (examples.empty()) throw Error(ErrorCode::invalid_argument, "heads train: empty dataset");
  for (const auto& ex : examples) {
    if (ex.sequence->dim != cfg.dim) throw Error(ErrorCode::dimension_mismatch, "heads train: sequence dim != config dim");
  }
  Rng rng(cfg.seed);
  HeadsTrainResult result{HeadsParams::initialize(cfg.dim, cfg.hidden, rng), {}};
  AdamState adam(result.params, cfg);
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      HeadsParams grad = HeadsParams::zeros(cfg.dim, cfg.hidden);
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t b = start; b < stop; ++b) {
        const HeadsExample& ex = examples[order[b]];
        const ForwardTrace tr = forward(result.params, *ex.sequence, Mode::train, rng, cfg);
        epoch_loss += heads_loss(tr, ex.token_gold, ex.class_gold, cfg.class_loss_weight);
        accumulate(grad, backward(result.params, tr, ex.token_gold, ex.class_gold, cfg.class_loss_weight), scale);
      }
      adam.step(result.params, grad);
    }
    epoch_loss /= static_cast<double>(examples.size());
    if (!std::isfinite(epoch_loss)) throw Error(ErrorCode::non_finite, "heads train: loss diverged");
    result.loss_history.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Inference

struct HeadsPrediction {
  std::vector<TokenProbSequence> token_probs;
  ProbTable class_probs;
};

inline HeadsPrediction predict_heads(const HeadsParams& params, std::span<const TokenEmbeddingSequence> seqs,
                                     double ln_eps = 1e-5) {
  HeadsPrediction out;
  Rng unused(0);
  for (const auto& seq : seqs) {
    const ForwardTrace tr = forward(params, seq, Mode::eval, unused, 0.0, ln_eps);
    out.token_probs.push_back({seq.id, tr.token_probs, seq.offsets});
    out.class_probs.ids.push_back(seq.id);
    out.class_probs.probs.emplace_back(tr.class_probs);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization ("heads-v1"): JSON manifest plus a binary file of EMB1 blocks,
// one block per tensor in HeadsParams::tensors() order.

inline nlohmann::json config_json(const HeadsConfig& c) {
  return {{"dim", c.dim},
          {"hidden", c.hidden},
          {"class_loss_weight", c.class_loss_weight},
          {"dropout", c.dropout},
          {"ln_eps", c.ln_eps},
          {"seed", c.seed},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size}};
}

inline HeadsConfig heads_config_from_json(const nlohmann::json& j) {
  HeadsConfig c;
  c.dim = j.at("dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.class_loss_weight = j.at("class_loss_weight").get<double>();
  c.dropout = j.at("dropout").get<double>();
  c.ln_eps = j.at("ln_eps").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.validate();
  return c;
}

inline std::string heads_blob_path(const std::string& manifest_path) { return manifest_path + ".bin"; }

inline void save_heads(const HeadsParams& params, const HeadsConfig& cfg, const std::string& manifest_path) {
  params.check_finite();
  const std::string blob = heads_blob_path(manifest_path);
  nlohmann::json manifest;
  manifest["format"] = "heads-v1";
  manifest["config"] = config_json(cfg);
  manifest["seed"] = cfg.seed;
  manifest["data"] = blob.substr(blob.find_last_of('/') + 1);
  manifest["blocks"] = nlohmann::json::array();
  {
    auto out = detail::open_out(blob, true);
    for (const auto& t : params.tensors()) {
      write_emb1_block(out, t.rows, t.cols, *t.data);
      manifest["blocks"].push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
    }
  }
  auto out = detail::open_out(manifest_path);
  out << manifest.dump(2) << '\n';
}

struct LoadedHeads {
  HeadsParams params;
  HeadsConfig config;
};

inline LoadedHeads load_heads(const std::string& manifest_path) {
  nlohmann::json manifest;
  {
    auto in = detail::open_in(manifest_path);
    try {
      manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse_error, std::string("heads manifest: ") + e.what());
    }
  }
  try {
    if (manifest.at("format") != "heads-v1") throw Error(ErrorCode::parse_error, "expected format tag \"heads-v1\"");
    LoadedHeads loaded;
    loaded.config = heads_config_from_json(manifest.at("config"));
    loaded.params = HeadsParams::zeros(loaded.config.dim, loaded.config.hidden);
    const auto& blocks = manifest.at("blocks");
    auto in = detail::open_in(heads_blob_path(manifest_path), true);
    auto tensors = loaded.params.tensors();
    if (blocks.size() != tensors.size()) throw Error(ErrorCode::parse_error, "heads manifest: wrong block count");
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      if (blocks[k].at("name") != tensors[k].name) throw Error(ErrorCode::parse_error, "heads manifest: blocks out of order");
      Emb1Block b = read_emb1_block(in);
      if (b.rows != tensors[k].rows || b.dim != tensors[k].cols) {
        throw Error(ErrorCode::dimension_mismatch, std::string("heads blob: wrong shape for ") + tensors[k].name);
      }
      *tensors[k].data = std::move(b.data);
    }
    detail::expect_eof(in, "heads blob");
    return loaded;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("heads manifest: ") + e.what());
  }
}

}  // namespace manipdet
