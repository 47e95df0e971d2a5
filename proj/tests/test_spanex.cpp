#include <gtest/gtest.h>

#include "manipdet/spanex.hpp"
#include "oracles.hpp"

using namespace manipdet;

namespace {

TokenProbSequence words(std::vector<double> probs) {
  TokenProbSequence s;
  s.id = "w";
  s.probs = std::move(probs);
  s.offsets = {{0, 4}, {5, 9}, {10, 14}};
  return s;
}

TokenProbSequence from_fixture(const oracle::TilingFixture& f, const std::vector<std::uint8_t>& labels) {
  TokenProbSequence s;
  s.id = "fixture";
  s.offsets = f.offsets;
  for (auto l : labels) s.probs.push_back(l);
  return s;
}

TokenProbSequence random_sequence(Rng& rng, std::size_t length) {
  TokenProbSequence s;
  s.id = "r";
  s.offsets.push_back({0, 0});
  s.probs.push_back(rng.uniform());
  std::size_t pos = 0;
  while (pos < length) {
    pos += rng.below(3);  // whitespace gap
    const std::size_t len = 1 + rng.below(6);
    if (pos + len > length) break;
    s.offsets.push_back({static_cast<std::uint32_t>(pos), static_cast<std::uint32_t>(pos + len)});
    s.probs.push_back(rng.uniform());
    pos += len;
  }
  s.offsets.push_back({0, 0});
  s.probs.push_back(rng.uniform());
  return s;
}

std::size_t covered(const std::vector<CharSpan>& spans) { return oracle::materialize(spans).size(); }

}  // namespace

TEST(ExtractSpans, Examples) {
  EXPECT_EQ(extract_spans(words({0.9, 0.8, 0.1}), 0.5, 1), (std::vector<CharSpan>{{0, 9}}));
  EXPECT_EQ(extract_spans(words({0.9, 0.2, 0.8}), 0.5, 1), (std::vector<CharSpan>{{0, 4}, {10, 14}}));
  EXPECT_TRUE(extract_spans(words({0.1, 0.2, 0.3}), 0.5, 1).empty());
  // Without gap bridging the first two words stay apart.
  EXPECT_EQ(extract_spans(words({0.9, 0.8, 0.1}), 0.5, 0), (std::vector<CharSpan>{{0, 4}, {5, 9}}));
  // A prob equal to the threshold is selected.
  EXPECT_EQ(extract_spans(words({0.5, 0.0, 0.0}), 0.5, 0), (std::vector<CharSpan>{{0, 4}}));
}

TEST(ExtractSpans, SpecialTokensNeverEmitted) {
  TokenProbSequence s;
  s.id = "s";
  s.offsets = {{0, 0}, {0, 3}, {0, 0}};
  s.probs = {1.0, 0.0, 1.0};
  EXPECT_TRUE(extract_spans(s, 0.5).empty());
}

TEST(ExtractSpans, Errors) {
  auto s = words({0.9, 0.8, 0.1});
  EXPECT_THROW(extract_spans(s, 0.0), Error);
  EXPECT_THROW(extract_spans(s, 1.0), Error);
  s.offsets[1] = {7, 3};
  try {
    extract_spans(s, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_offsets);
    EXPECT_NE(std::string(e.what()).find("\"w\""), std::string::npos);
  }
  s = words({0.9, 0.8});
  EXPECT_THROW(extract_spans(s, 0.5), Error);
}

TEST(ExtractSpans, OutputInvariants) {
  Rng rng(12);
  for (int c = 0; c < 300; ++c) {
    const std::size_t length = 5 + rng.below(120);
    const auto seq = random_sequence(rng, length);
    const std::size_t gap = rng.below(3);
    std::size_t prev_cover = std::numeric_limits<std::size_t>::max();
    for (int k = 1; k <= 19; ++k) {
      const double thr = k / 20.0;
      const auto spans = extract_spans(seq, thr, gap);
      for (std::size_t i = 0; i < spans.size(); ++i) {
        ASSERT_TRUE(spans[i].valid());
        ASSERT_LE(spans[i].end, length);
        if (i > 0) {
          ASSERT_GT(spans[i].start, spans[i - 1].end + gap);  // sorted, disjoint, gaps kept
        }
      }
      // Raising the threshold never grows coverage.
      const std::size_t cover = covered(spans);
      ASSERT_LE(cover, prev_cover);
      prev_cover = cover;
    }
  }
}

TEST(ExtractSpans, GapBridgingKeepsRecall) {
  Rng rng(13);
  for (int c = 0; c < 200; ++c) {
    const auto seq = random_sequence(rng, 10 + rng.below(80));
    // Gold made of whole tokens, so gap characters are never gold.
    std::vector<CharSpan> gold;
    for (std::size_t i = 0; i < seq.offsets.size(); ++i) {
      if (!seq.offsets[i].is_special() && rng.bernoulli(0.4)) gold.push_back({seq.offsets[i].start, seq.offsets[i].end});
    }
    const auto tight = extract_spans(seq, 0.5, 0);
    const auto loose = extract_spans(seq, 0.5, 1 + rng.below(3));
    const auto t = oracle::materialize(tight);
    const auto l = oracle::materialize(loose);
    ASSERT_TRUE(std::includes(l.begin(), l.end(), t.begin(), t.end()));
    std::set<std::size_t> token_chars;
    for (std::size_t i = 0; i < seq.probs.size(); ++i) {
      if (!seq.offsets[i].is_special() && seq.probs[i] >= 0.5) {
        for (std::size_t ch = seq.offsets[i].start; ch < seq.offsets[i].end; ++ch) token_chars.insert(ch);
      }
    }
    ASSERT_EQ(t, token_chars);
    const auto rt = oracle::span_f1({gold}, {tight});
    const auto rl = oracle::span_f1({gold}, {loose});
    // Bridged characters outside every token are never gold; a short token
    // inside a bridged gap may be.
    bool bridged_token = false;
    for (std::size_t ch : l) {
      if (t.count(ch)) continue;
      for (const auto& o : seq.offsets) bridged_token = bridged_token || (o.start <= ch && ch < o.end);
    }
    ASSERT_GE(rl.recall, rt.recall);
    if (!bridged_token) {
      ASSERT_EQ(rt.recall, rl.recall);
      ASSERT_LE(rl.precision, rt.precision);
    }
  }
}

TEST(TokenLabels, Examples) {
  const std::vector<CharSpan> span = {{0, 4}};
  const std::vector<TokenOffset> a = {{2, 6}};
  const std::vector<TokenOffset> b = {{4, 8}};
  EXPECT_EQ(token_labels_from_spans(span, a), (std::vector<std::uint8_t>{1}));
  EXPECT_EQ(token_labels_from_spans(span, b), (std::vector<std::uint8_t>{0}));
  const std::vector<TokenOffset> several = {{0, 0}, {0, 2}, {3, 5}, {0, 0}};
  EXPECT_EQ(token_labels_from_spans({}, several), (std::vector<std::uint8_t>{0, 0, 0, 0}));
  EXPECT_EQ(token_labels_from_spans(span, several), (std::vector<std::uint8_t>{0, 1, 1, 0}));
}

TEST(RoundTrip, TilingFixtures) {
  Rng rng(14);
  for (int c = 0; c < 200; ++c) {
    const auto f = oracle::random_tiling_fixture(rng);
    const auto labels = token_labels_from_spans(f.gold, f.offsets);
    const auto spans = extract_spans(from_fixture(f, labels), 0.5, 0);
    ASSERT_EQ(oracle::materialize(spans), oracle::materialize(f.gold)) << "case " << c;
    ASSERT_EQ(spans, span_union(f.gold));
  }
}

TEST(SpanThreshold, ExactLabelsSelectSmallestGridValue) {
  Rng rng(15);
  std::vector<TokenProbSequence> seqs;
  std::vector<std::vector<CharSpan>> gold;
  for (int c = 0; c < 40; ++c) {
    auto f = oracle::random_tiling_fixture(rng);
    if (f.gold.empty()) f = oracle::random_tiling_fixture(rng);
    seqs.push_back(from_fixture(f, token_labels_from_spans(f.gold, f.offsets)));
    gold.push_back(f.gold);
  }
  const auto st = optimize_span_threshold(seqs, gold, 5, 2, {}, 0);
  for (double v : st.fold_optima) EXPECT_EQ(v, 0.01);
  EXPECT_EQ(st.threshold, 0.01);
  EXPECT_EQ(st.fold_optima.size(), 5u);
}

TEST(SpanThreshold, EmptyGoldSelectsSmallestGridValue) {
  std::vector<TokenProbSequence> seqs(6, words({0.0, 0.0, 0.0}));
  std::vector<std::vector<CharSpan>> gold(6);
  const auto st = optimize_span_threshold(seqs, gold, 3, 0);
  EXPECT_EQ(st.threshold, 0.01);
}

TEST(SpanThreshold, FoldOptimaMatchBruteForce) {
  Rng rng(16);
  std::vector<TokenProbSequence> seqs;
  std::vector<std::vector<CharSpan>> gold;
  for (int c = 0; c < 60; ++c) {
    const auto f = oracle::random_tiling_fixture(rng);
    const auto labels = token_labels_from_spans(f.gold, f.offsets);
    TokenProbSequence s = from_fixture(f, labels);
    for (std::size_t i = 0; i < s.probs.size(); ++i) {
      s.probs[i] = std::clamp((labels[i] ? 0.6 : 0.3) + 0.2 * rng.normal(), 0.0, 1.0);
    }
    seqs.push_back(std::move(s));
    gold.push_back(f.gold);
  }
  const auto st = optimize_span_threshold(seqs, gold, 4, 9, {}, 1);
  const auto split = make_folds(seqs.size(), 4, 9);
  for (std::size_t fi = 0; fi < split.size(); ++fi) {
    double best = -1.0;
    int best_k = 0;
    for (int k = 1; k <= 99; ++k) {
      std::vector<std::vector<CharSpan>> g;
      std::vector<std::vector<CharSpan>> p;
      for (std::size_t i : split[fi]) {
        g.push_back(gold[i]);
        p.push_back(extract_spans(seqs[i], k / 100.0, 1));
      }
      const double f1 = oracle::span_f1(g, p).f1;
      if (f1 > best + 1e-12) {
        best = f1;
        best_k = k;
      }
    }
    EXPECT_EQ(st.fold_optima[fi], best_k / 100.0) << "fold " << fi;
  }
  EXPECT_EQ(st.threshold, median(st.fold_optima));
  EXPECT_EQ(to_json(optimize_span_threshold(seqs, gold, 4, 9, {}, 1)).dump(), to_json(st).dump());

  const auto back = span_threshold_from_json(to_json(st));
  EXPECT_EQ(back.threshold, st.threshold);
  EXPECT_EQ(back.fold_optima, st.fold_optima);
  EXPECT_EQ(back.max_gap, 1u);
  EXPECT_THROW(span_threshold_from_json(nlohmann::json::object()), Error);
}

TEST(SpanThreshold, Errors) {
  std::vector<TokenProbSequence> seqs(3, words({0.0, 0.0, 0.0}));
  std::vector<std::vector<CharSpan>> gold(2);
  EXPECT_THROW(optimize_span_threshold(seqs, gold, 2, 0), Error);
  gold.resize(3);
  EXPECT_THROW(optimize_span_threshold(seqs, gold, 1, 0), Error);
}
