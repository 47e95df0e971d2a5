#include <gtest/gtest.h>

#include "manipdet/promptgen.hpp"
#include "oracles.hpp"

using namespace manipdet;

namespace {

EmbeddingMatrix matrix(std::vector<std::pair<std::string, std::vector<double>>> rows) {
  EmbeddingMatrix m;
  m.dim = rows.front().second.size();
  for (auto& [id, v] : rows) {
    m.ids.push_back(id);
    m.data.insert(m.data.end(), v.begin(), v.end());
  }
  return m;
}

std::map<std::string, std::size_t> short_lengths(const EmbeddingMatrix& m) {
  std::map<std::string, std::size_t> out;
  for (const auto& id : m.ids) out[id] = 10;
  return out;
}

std::string resource(const std::string& name) { return std::string(MANIPDET_RESOURCE_DIR) + "/" + name; }

std::size_t occurrences(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST(FewShots, OverlapFallsToLowerTriggerRanks) {
  // Text ranking: a, b, then the rest. Trigger ranking: a, b, c, d, e, f.
  const auto text = matrix({{"t", {1, 0, 0}},
                            {"a", {1, 0.1, 0}},
                            {"b", {1, 0.2, 0}},
                            {"c", {0, 1, 0}},
                            {"d", {0, 0, 1}},
                            {"e", {0, 1, 1}},
                            {"f", {-1, 0, 0}}});
  const auto trigger = matrix({{"a", {1, 0, 0}},
                               {"b", {1, 0.05, 0}},
                               {"c", {1, 0.5, 0}},
                               {"d", {1, 1, 0}},
                               {"e", {0, 1, 0}},
                               {"f", {-1, 0, 0}}});
  const auto picked = select_fewshots("t", text, trigger, short_lengths(text));
  EXPECT_EQ(picked, (std::array<std::string, 4>{"a", "b", "c", "d"}));
}

TEST(FewShots, ForcedSelectionAndExclusions) {
  const auto text = matrix({{"t", {1, 0}}, {"p", {0, 1}}, {"q", {-1, 0}}, {"r", {1, 1}}, {"s", {0, -1}}, {"long", {1, 0}}});
  auto lengths = short_lengths(text);
  lengths["long"] = 500;  // not strictly shorter than the bound
  const auto picked = select_fewshots("t", text, EmbeddingMatrix{}, lengths);
  std::set<std::string> got(picked.begin(), picked.end());
  EXPECT_EQ(got, (std::set<std::string>{"p", "q", "r", "s"}));

  lengths["long"] = 499;
  const auto with_long = select_fewshots("t", text, EmbeddingMatrix{}, lengths);
  EXPECT_EQ(with_long[0], "long");  // identical embedding ranks first

  lengths.erase("s");
  lengths["long"] = 900;
  EXPECT_THROW(select_fewshots("t", text, EmbeddingMatrix{}, lengths), Error);
  EXPECT_THROW(select_fewshots("missing", text, EmbeddingMatrix{}, short_lengths(text)), Error);
}

TEST(FewShots, TiesGoToAscendingId) {
  const auto text = matrix({{"t", {1, 0}}, {"z", {1, 0}}, {"y", {1, 0}}, {"x", {1, 0}}, {"w", {1, 0}}, {"v", {0, 1}}});
  const auto picked = select_fewshots("t", text, EmbeddingMatrix{}, short_lengths(text));
  EXPECT_EQ(picked, (std::array<std::string, 4>{"w", "x", "y", "z"}));
}

TEST(FewShots, NeverSelectsTargetAndRespectsBound) {
  Rng rng(3);
  EmbeddingMatrix text;
  EmbeddingMatrix trigger;
  text.dim = trigger.dim = 6;
  std::map<std::string, std::size_t> lengths;
  for (int i = 0; i < 40; ++i) {
    const std::string id = "s" + std::to_string(i);
    text.ids.push_back(id);
    for (int k = 0; k < 6; ++k) text.data.push_back(rng.normal());
    if (i % 3 != 0) {
      trigger.ids.push_back(id);
      for (int k = 0; k < 6; ++k) trigger.data.push_back(rng.normal());
    }
    lengths[id] = rng.below(800);
  }
  for (const auto& target : text.ids) {
    const auto picked = select_fewshots(target, text, trigger, lengths);
    std::set<std::string> unique(picked.begin(), picked.end());
    EXPECT_EQ(unique.size(), 4u);
    for (const auto& id : picked) {
      EXPECT_NE(id, target);
      EXPECT_LT(lengths.at(id), kFewShotMaxChars);
    }
  }
}

TEST(Completion, CanonicalOrderAndSentinel) {
  EXPECT_EQ(completion_for({Technique::loaded_language, Technique::fud}), "fud, loaded_language");
  EXPECT_EQ(completion_for({}), "none");
}

TEST(Resources, DescriptionsAndTemplate) {
  const auto catalog = load_descriptions(resource("technique_descriptions.txt"));
  for (const auto& d : catalog) {
    EXPECT_FALSE(d.name.empty());
    EXPECT_FALSE(d.description.empty());
  }
  EXPECT_EQ(catalog[index_of(Technique::loaded_language)].name, "Loaded Language");
  EXPECT_NO_THROW(load_template(resource("prompt_template_v1.txt")));

  EXPECT_THROW(parse_descriptions("fud|FUD|x\n"), Error);                   // missing entries
  EXPECT_THROW(parse_descriptions("sarcasm|S|x\n"), Error);                 // unknown label
  EXPECT_THROW(parse_descriptions("fud|FUD|x\nfud|FUD|y\n"), Error);        // duplicate
  EXPECT_THROW(parse_descriptions("fud FUD x\n"), Error);                   // no separators
  EXPECT_THROW(PromptTemplate("{descriptions} {examples}"), Error);
  EXPECT_THROW(PromptTemplate("{descriptions} {examples} {text} {text}"), Error);
  EXPECT_EQ(PromptTemplate("a{descriptions}b{examples}c{text}{other}").render("D", "E", "T"), "aDbEcT{other}");
}

TEST(BuildPrompts, StructureAndDeterminism) {
  std::vector<Sample> ds;
  EmbeddingMatrix text;
  EmbeddingMatrix trigger;
  text.dim = trigger.dim = 4;
  Rng rng(5);
  for (int i = 0; i < 8; ++i) {
    Sample s;
    s.id = "p" + std::to_string(i);
    s.content = "Пост номер " + std::to_string(i);
    if (i % 2 == 0) s.techniques = {Technique::fud, Technique::loaded_language};
    ds.push_back(s);
    text.ids.push_back(s.id);
    trigger.ids.push_back(s.id);
    for (int k = 0; k < 4; ++k) {
      text.data.push_back(rng.normal());
      trigger.data.push_back(rng.normal());
    }
  }
  // A long post can be a target but never an example.
  ds[7].content = std::string(600, 'x');

  const auto catalog = load_descriptions(resource("technique_descriptions.txt"));
  const auto tmpl = load_template(resource("prompt_template_v1.txt"));
  const auto records = build_prompts(ds, text, trigger, catalog, tmpl);
  ASSERT_EQ(records.size(), ds.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    EXPECT_EQ(r.id, ds[i].id);
    EXPECT_EQ(r.completion, i % 2 == 0 ? "fud, loaded_language" : "none");
    for (std::size_t t = 0; t < kNumTechniques; ++t) {
      EXPECT_EQ(occurrences(r.prompt, "- " + std::string(kTechniqueNames[t]) + " ("), 1u);
    }
    for (int k = 1; k <= 4; ++k) EXPECT_EQ(occurrences(r.prompt, "Example " + std::to_string(k) + "\n"), 1u);
    EXPECT_EQ(occurrences(r.prompt, "Example 5"), 0u);
    EXPECT_NE(r.prompt.find(catalog[0].description), std::string::npos);
    for (const auto& id : r.fewshot_ids) {
      EXPECT_NE(id, r.id);
      EXPECT_NE(id, "p7");
    }
  }

  oracle::TempDir dir("prompts");
  write_prompts(dir.file("a.jsonl"), records);
  write_prompts(dir.file("b.jsonl"), build_prompts(ds, text, trigger, catalog, tmpl));
  const auto a = oracle::slurp(dir.file("a.jsonl"));
  EXPECT_EQ(a, oracle::slurp(dir.file("b.jsonl")));
  std::istringstream in(a);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.size(), 3u);
    EXPECT_EQ(j["id"], records[n].id);
    EXPECT_EQ(j["prompt"], records[n].prompt);
    ++n;
  }
  EXPECT_EQ(n, records.size());
}
