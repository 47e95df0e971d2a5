#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "manipdet/metrics.hpp"
#include "oracles.hpp"

using namespace manipdet;

namespace {

LabelVector lv(std::initializer_list<Technique> ts) { return label_vector_from_set(std::set<Technique>(ts)); }

}  // namespace

TEST(MacroF1, PerfectPrediction) {
  const std::vector<LabelVector> gold = {lv({Technique::fud}), lv({Technique::cliche, Technique::euphoria})};
  // Classes with no gold and no predictions score 0, so "perfect" macro is
  // the share of classes that occur.
  const auto r = macro_f1(gold, gold);
  EXPECT_DOUBLE_EQ(r.f1[index_of(Technique::fud)], 1.0);
  EXPECT_DOUBLE_EQ(r.f1[index_of(Technique::cliche)], 1.0);
  EXPECT_DOUBLE_EQ(r.macro_f1, 0.3);

  std::vector<LabelVector> all(4);
  for (auto& v : all) {
    for (std::size_t t = 0; t < kNumTechniques; ++t) v.set(t, true);
  }
  EXPECT_DOUBLE_EQ(macro_f1(all, all).macro_f1, 1.0);
}

TEST(MacroF1, WorkedTwoClassCase) {
  const Technique t1 = Technique::appeal_to_fear;
  const Technique t2 = Technique::bandwagon;
  const std::vector<LabelVector> gold = {lv({t1}), lv({t2}), lv({t1, t2})};
  const std::vector<LabelVector> pred = {lv({t1}), lv({t1}), lv({t2})};
  const auto r = macro_f1(gold, pred);
  EXPECT_DOUBLE_EQ(r.f1[0], 0.5);
  EXPECT_NEAR(r.f1[1], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR((r.f1[0] + r.f1[1]) / 2.0, 0.583333, 5e-7);
  EXPECT_NEAR(r.macro_f1, 0.116667, 5e-7);
  EXPECT_EQ(r.support[0], 2u);
  EXPECT_EQ(r.support[1], 2u);
  for (std::size_t t = 2; t < kNumTechniques; ++t) EXPECT_EQ(r.f1[t], 0.0);
}

TEST(MacroF1, AllNegativeClassContributesZero) {
  const std::vector<LabelVector> none(5);
  const auto r = macro_f1(none, none);
  EXPECT_EQ(r.macro_f1, 0.0);
  for (double f : r.f1) EXPECT_EQ(f, 0.0);
}

TEST(MacroF1, LengthMismatchThrows) {
  const std::vector<LabelVector> a(2);
  const std::vector<LabelVector> b(3);
  EXPECT_THROW(macro_f1(a, b), Error);
}

TEST(MacroF1, MatchesOracleAndIsOrderInvariant) {
  Rng rng(2024);
  for (int c = 0; c < 300; ++c) {
    const std::size_t n = rng.below(51);
    const double density = rng.uniform(0.05, 0.6);
    std::vector<LabelVector> gold(n);
    std::vector<LabelVector> pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      gold[i] = oracle::random_labels(rng, density);
      pred[i] = oracle::random_labels(rng, density);
    }
    const auto r = macro_f1(gold, pred);
    const auto o = oracle::macro_f1(gold, pred);
    ASSERT_NEAR(r.macro_f1, o.macro_all, 1e-12);
    for (std::size_t t = 0; t < kNumTechniques; ++t) {
      ASSERT_NEAR(r.f1[t], o.f1[t], 1e-12);
      ASSERT_EQ(static_cast<long>(r.support[t]), o.support[t]);
      ASSERT_GE(r.f1[t], 0.0);
      ASSERT_LE(r.f1[t], 1.0);
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<LabelVector> g2;
    std::vector<LabelVector> p2;
    for (std::size_t i : perm) {
      g2.push_back(gold[i]);
      p2.push_back(pred[i]);
    }
    ASSERT_EQ(macro_f1(g2, p2).macro_f1, r.macro_f1);
  }
}

TEST(SpanF1, IdenticalSpans) {
  const std::vector<std::vector<CharSpan>> g = {{{0, 5}}};
  EXPECT_DOUBLE_EQ(span_f1(g, g).f1, 1.0);
}

TEST(SpanF1, HalfOverlap) {
  const std::vector<std::vector<CharSpan>> g = {{{0, 10}}};
  const std::vector<std::vector<CharSpan>> p = {{{5, 15}}};
  const auto r = span_f1(g, p);
  EXPECT_EQ(r.counts.sum_gold, 10u);
  EXPECT_EQ(r.counts.sum_predicted, 10u);
  EXPECT_EQ(r.counts.sum_intersection, 5u);
  EXPECT_DOUBLE_EQ(r.precision, 0.5);
  EXPECT_DOUBLE_EQ(r.recall, 0.5);
  EXPECT_DOUBLE_EQ(r.f1, 0.5);
}

TEST(SpanF1, OverlappingGoldIsUnioned) {
  const std::vector<std::vector<CharSpan>> g = {{{0, 5}, {3, 8}}};
  const std::vector<std::vector<CharSpan>> p = {{{0, 8}}};
  const auto r = span_f1(g, p);
  EXPECT_EQ(r.counts.sum_gold, 8u);
  EXPECT_DOUBLE_EQ(r.f1, 1.0);
}

TEST(SpanF1, ZeroDivisionAndMissingIds) {
  const std::vector<std::vector<CharSpan>> empty = {{}, {}};
  EXPECT_EQ(span_f1(empty, empty).f1, 0.0);

  std::map<std::string, std::vector<CharSpan>> gold = {{"a", {{0, 4}}}, {"b", {{2, 6}}}};
  std::map<std::string, std::vector<CharSpan>> pred = {{"a", {{0, 4}}}, {"c", {{0, 4}}}};
  const auto r = span_f1(gold, pred);
  EXPECT_EQ(r.counts.sum_gold, 8u);
  EXPECT_EQ(r.counts.sum_predicted, 8u);
  EXPECT_EQ(r.counts.sum_intersection, 4u);
}

TEST(SpanF1, InvalidSpanThrows) {
  const std::vector<std::vector<CharSpan>> g = {{{5, 5}}};
  const std::vector<std::vector<CharSpan>> p = {{}};
  EXPECT_THROW(span_f1(g, p), Error);
}

TEST(SpanF1, MatchesOracleAndInvariances) {
  Rng rng(77);
  for (int c = 0; c < 300; ++c) {
    const std::size_t n = 1 + rng.below(10);
    std::vector<std::vector<CharSpan>> gold(n);
    std::vector<std::vector<CharSpan>> pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      gold[i] = oracle::random_spans(rng, 100, 5);
      pred[i] = oracle::random_spans(rng, 100, 5);
    }
    const auto r = span_f1(gold, pred);
    const auto o = oracle::span_f1(gold, pred);
    ASSERT_NEAR(r.f1, o.f1, 1e-12);
    ASSERT_NEAR(r.precision, o.precision, 1e-12);
    ASSERT_NEAR(r.recall, o.recall, 1e-12);
    ASSERT_LE(r.counts.sum_intersection, std::min(r.counts.sum_gold, r.counts.sum_predicted));
    ASSERT_GE(r.f1, 0.0);
    ASSERT_LE(r.f1, 1.0);

    // Re-slicing: replace each gold list by unit-length spans over the same characters.
    std::vector<std::vector<CharSpan>> sliced(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t ch : oracle::materialize(gold[i])) sliced[i].push_back({ch, ch + 1});
      rng.shuffle(sliced[i]);
    }
    ASSERT_EQ(span_f1(sliced, pred).f1, r.f1);

    // Sample order.
    std::reverse(gold.begin(), gold.end());
    std::reverse(pred.begin(), pred.end());
    ASSERT_EQ(span_f1(gold, pred).f1, r.f1);
  }
}

TEST(SpanUnion, MergesTouchingAndOverlapping) {
  const std::vector<CharSpan> in = {{8, 10}, {0, 3}, {3, 5}, {2, 4}};
  const auto u = span_union(in);
  ASSERT_EQ(u.size(), 2u);
  EXPECT_EQ(u[0], (CharSpan{0, 5}));
  EXPECT_EQ(u[1], (CharSpan{8, 10}));
}

TEST(Report, ShapeAndValues) {
  std::vector<LabelVector> gold(3);
  gold[0] = lv({Technique::loaded_language});
  gold[1] = lv({Technique::loaded_language, Technique::fud});
  gold[2] = lv({Technique::fud});
  const auto r = macro_f1(gold, gold);
  const std::string text = classification_report(r);
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 12u);  // header, 10 techniques, macro
  for (std::size_t t = 0; t < kNumTechniques; ++t) {
    EXPECT_EQ(lines[t + 1].rfind(std::string(kTechniqueNames[t]), 0), 0u);
  }
  EXPECT_NE(lines[1 + index_of(Technique::loaded_language)].find("1.000"), std::string::npos);
  EXPECT_NE(lines[1 + index_of(Technique::bandwagon)].find("0.000"), std::string::npos);
  EXPECT_EQ(lines[1 + index_of(Technique::loaded_language)].back(), '2');
  EXPECT_EQ(lines[1 + index_of(Technique::bandwagon)].back(), '0');

  const auto j = report_json(r);
  EXPECT_EQ(j["loaded_language"]["support"], 2);
  EXPECT_EQ(j["loaded_language"]["f1"], 1.0);
  EXPECT_EQ(j["bandwagon"]["f1"], 0.0);
  EXPECT_DOUBLE_EQ(j["macro_f1"].get<double>(), 0.2);
}

TEST(Cooccurrence, Examples) {
  Sample s;
  s.id = "1";
  s.techniques = {Technique::fud, Technique::cliche};
  const auto m = cooccurrence(std::vector{s});
  const auto f = index_of(Technique::fud);
  const auto c = index_of(Technique::cliche);
  EXPECT_EQ(m[f][c], 1u);
  EXPECT_EQ(m[c][f], 1u);
  EXPECT_EQ(m[f][f], 1u);
  EXPECT_EQ(m[c][c], 1u);
  std::size_t total = 0;
  for (const auto& row : m) total += std::accumulate(row.begin(), row.end(), std::size_t{0});
  EXPECT_EQ(total, 4u);

  const auto zero = cooccurrence(std::vector<Sample>{});
  for (const auto& row : zero) {
    for (auto v : row) EXPECT_EQ(v, 0u);
  }

  std::vector<Sample> singles(3);
  singles[0].techniques = {Technique::fud};
  singles[1].techniques = {Technique::euphoria};
  singles[2].techniques = {Technique::fud};
  const auto ms = cooccurrence(singles);
  for (std::size_t i = 0; i < kNumTechniques; ++i) {
    for (std::size_t j = 0; j < kNumTechniques; ++j) {
      if (i != j) {
        EXPECT_EQ(ms[i][j], 0u);
      }
      EXPECT_EQ(ms[i][j], ms[j][i]);
    }
  }
  EXPECT_EQ(ms[f][f], 2u);
}
