#pragma once

// Seeded synthetic corpora standing in for encoder outputs: posts with
// labels and trigger spans, sentence embeddings, trigger embeddings, noisy
// base probabilities and token embeddings with code-point offsets.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "manipdet/core.hpp"
#include "manipdet/ingest.hpp"
#include "manipdet/rng.hpp"
#include "manipdet/stacker.hpp"

namespace manipdet {

struct SyntheticOptions {
  std::size_t text_dim = 16;
  std::size_t token_dim = 8;
  // per-technique prevalence, canonical order
  std::array<double, kNumTechniques> prevalence = {0.15, 0.06, 0.18, 0.16, 0.15, 0.14, 0.17, 0.45, 0.05, 0.06};
  double base_signal = 0.8;  // logit shift of base probabilities for true labels
  double base_noise = 1.2;
};

struct SyntheticCorpus {
  std::vector<Sample> samples;
  EmbeddingMatrix text_embeddings;
  EmbeddingMatrix trigger_embeddings;  // only samples with trigger spans
  ProbTable base_probs;
  std::vector<TokenEmbeddingSequence> tokens;
};

namespace detail {

inline const std::vector<std::u32string>& neutral_words() {
  static const std::vector<std::u32string> words = {
      U"новини", U"місто", U"сьогодні", U"влада",  U"люди",    U"країна", U"уряд",    U"заява",
      U"фронт",  U"вчора", U"області",  U"роботи", U"район",   U"новость", U"город",  U"сегодня",
      U"власти", U"люди",  U"people",   U"report", U"official", U"region", U"місцеві", U"дороги",
  };
  return words;
}

// Marker phrases shift the meta features of techniques that carry one.
inline std::u32string marker_for(Technique t, Rng& rng) {
  switch (t) {
    case Technique::loaded_language: return rng.bernoulli(0.5) ? U"ЖАХЛИВИЙ ЗЛОЧИН" : U"ГАНЕБНА ЗРАДА";
    case Technique::euphoria: return U"перемога!!";
    case Technique::whataboutism: return U"а як щодо них?";
    case Technique::cherry_picking: return U"95% і 2024";
    case Technique::fud: return U"t.me/panika";
    case Technique::straw_man: return U"вони кажуть що ми хочемо?";
    case Technique::bandwagon: return U"всі вже приєдналися!";
    default: return rng.bernoulli(0.5) ? U"так завжди було" : U"нам обіцяли свободу";
  }
}

inline std::vector<double> random_unit(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  double n = 0.0;
  for (double& x : v) {
    x = rng.normal();
    n += x * x;
  }
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

}  // namespace detail

inline SyntheticCorpus make_synthetic_corpus(std::size_t n, std::uint64_t seed, const SyntheticOptions& opt = {}) {
  Rng rng(seed);
  SyntheticCorpus c;
  c.text_embeddings.dim = opt.text_dim;
  c.trigger_embeddings.dim = opt.text_dim;

  std::array<std::vector<double>, kNumTechniques> protos;
  for (auto& p : protos) p = detail::random_unit(opt.text_dim, rng);
  std::array<std::vector<double>, kNumTechniques> token_protos;
  for (auto& p : token_protos) p = detail::random_unit(opt.token_dim - 1, rng);

  const auto& words = detail::neutral_words();
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.id = "s" + std::to_string(i);
    s.lang = rng.bernoulli(0.56) ? Language::uk : Language::ru;
    for (std::size_t t = 0; t < kNumTechniques; ++t) {
      if (rng.bernoulli(opt.prevalence[t])) s.techniques.insert(technique_at(t));
    }

    // Build the text word by word, tracking code-point offsets.
    std::u32string text;
    std::vector<TokenOffset> word_offsets;
    std::vector<bool> word_in_span;
    const auto append_words = [&](const std::u32string& phrase, bool in_span) {
      std::size_t pos = 0;
      while (pos < phrase.size()) {
        std::size_t end = phrase.find(U' ', pos);
        if (end == std::u32string::npos) end = phrase.size();
        if (!text.empty()) text.push_back(rng.bernoulli(0.05) ? U'\n' : U' ');
        const auto start = static_cast<std::uint32_t>(text.size());
        text.append(phrase, pos, end - pos);
        word_offsets.push_back({start, static_cast<std::uint32_t>(text.size())});
        word_in_span.push_back(in_span);
        pos = end + 1;
      }
    };
    const std::size_t filler = 6 + rng.below(18);
    std::vector<Technique> present(s.techniques.begin(), s.techniques.end());
    std::size_t next_marker = 0;
    for (std::size_t w = 0; w < filler; ++w) {
      if (next_marker < present.size() && rng.bernoulli(0.3)) {
        const auto start = static_cast<std::size_t>(text.empty() ? 0 : text.size() + 1);
        append_words(detail::marker_for(present[next_marker++], rng), true);
        s.trigger_spans.push_back({start, text.size()});
      }
      append_words(words[rng.below(words.size())], false);
    }
    while (next_marker < present.size()) {
      const auto start = static_cast<std::size_t>(text.empty() ? 0 : text.size() + 1);
      append_words(detail::marker_for(present[next_marker++], rng), true);
      s.trigger_spans.push_back({start, text.size()});
    }
    if (rng.bernoulli(0.1)) append_words(U"https://example.org", false);
    s.content = encode_utf8(text);

    // Sentence embedding: label prototypes plus noise.
    std::vector<double> emb(opt.text_dim);
    for (double& x : emb) x = 0.5 * rng.normal();
    for (Technique t : s.techniques) {
      for (std::size_t d = 0; d < opt.text_dim; ++d) emb[d] += protos[index_of(t)][d];
    }
    c.text_embeddings.ids.push_back(s.id);
    c.text_embeddings.data.insert(c.text_embeddings.data.end(), emb.begin(), emb.end());
    if (!s.trigger_spans.empty()) {
      std::vector<double> trig(opt.text_dim);
      for (double& x : trig) x = 0.3 * rng.normal();
      for (Technique t : s.techniques) {
        for (std::size_t d = 0; d < opt.text_dim; ++d) trig[d] += protos[index_of(t)][d];
      }
      c.trigger_embeddings.ids.push_back(s.id);
      c.trigger_embeddings.data.insert(c.trigger_embeddings.data.end(), trig.begin(), trig.end());
    }

    // Weakly informative base probabilities.
    std::array<double, kNumTechniques> p{};
    for (std::size_t t = 0; t < kNumTechniques; ++t) {
      const double prior = std::log(opt.prevalence[t] / (1.0 - opt.prevalence[t]));
      const double y = s.techniques.contains(technique_at(t)) ? 1.0 : 0.0;
      p[t] = sigmoid(prior + opt.base_signal * (2.0 * y - 1.0) + opt.base_noise * rng.normal());
    }
    c.base_probs.ids.push_back(s.id);
    c.base_probs.probs.emplace_back(p);

    // Token embeddings: a sequence-start row, then one token per word.
    // Coordinate 0 carries the span signal; the rest carry label prototypes.
    TokenEmbeddingSequence seq;
    seq.id = s.id;
    seq.dim = opt.token_dim;
    seq.offsets.push_back({0, 0});
    seq.tokens.resize(opt.token_dim);
    for (std::size_t d = 0; d < opt.token_dim; ++d) seq.tokens[d] = 0.5 * rng.normal();
    for (std::size_t w = 0; w < word_offsets.size(); ++w) {
      seq.offsets.push_back(word_offsets[w]);
      seq.tokens.push_back((word_in_span[w] ? 1.0 : -1.0) + 0.4 * rng.normal());
      for (std::size_t d = 1; d < opt.token_dim; ++d) {
        double v = 0.5 * rng.normal();
        for (Technique t : s.techniques) v += 0.7 * token_protos[index_of(t)][d - 1];
        seq.tokens.push_back(v);
      }
    }
    c.tokens.push_back(std::move(seq));
    c.samples.push_back(std::move(s));
  }
  return c;
}

}  // namespace manipdet
