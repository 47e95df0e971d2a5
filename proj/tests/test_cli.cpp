#include <gtest/gtest.h>

#include "manipdet/manipdet.hpp"
#include "oracles.hpp"

using namespace manipdet;

namespace {

oracle::CommandResult cli(const std::vector<std::string>& args) { return oracle::run_command(MANIPDET_CLI, args); }

// One synthetic corpus shared by every test in this file.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new oracle::TempDir("cli");
    const auto r = cli({"gen-synthetic", "--out-dir", dir_->path().string(), "--samples", "60", "--seed", "4"});
    ASSERT_EQ(r.exit_code, 0) << r.output;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string f(const std::string& name) { return dir_->file(name); }

  static oracle::TempDir* dir_;
};

oracle::TempDir* CliTest::dir_ = nullptr;

}  // namespace

TEST_F(CliTest, UsageErrorsExitTwo) {
  const auto unknown_flag = cli({"eval-spans", "--gold", f("dataset.jsonl"), "--pred", f("dataset.jsonl"), "--bogus"});
  EXPECT_EQ(unknown_flag.exit_code, 2);
  EXPECT_NE(unknown_flag.output.find("Usage"), std::string::npos) << unknown_flag.output;
  EXPECT_EQ(cli({"no-such-command"}).exit_code, 2);
  EXPECT_EQ(cli({}).exit_code, 2);
  EXPECT_EQ(cli({"eval-spans", "--gold", f("dataset.jsonl")}).exit_code, 2);  // missing required flag
  EXPECT_EQ(cli({"--help"}).exit_code, 0);
  const auto v = cli({"--version"});
  EXPECT_EQ(v.exit_code, 0);
  EXPECT_NE(v.output.find(std::string(kVersion)), std::string::npos);
}

TEST_F(CliTest, ModuleErrorsExitOne) {
  // A well-formed file that is not a dataset.
  const auto r = cli({"eval-techniques", "--gold", f("base_probs.csv"), "--pred", f("dataset.jsonl")});
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("error"), std::string::npos);
  EXPECT_EQ(cli({"gradcheck", "--tolerance", "1e-30", "--seed", "1"}).exit_code, 1);
}

TEST_F(CliTest, EvalSpansPerfectPrediction) {
  const auto r = cli({"eval-spans", "--gold", f("dataset.jsonl"), "--pred", f("dataset.jsonl"), "--json-out", f("span.json")});
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("span_f1 1.00000"), std::string::npos) << r.output;
  const auto j = nlohmann::json::parse(oracle::slurp(f("span.json")));
  EXPECT_EQ(j["f1"], 1.0);
  EXPECT_TRUE(std::filesystem::exists(f("span.json.meta.json")));
}

TEST_F(CliTest, EvalTechniquesPerfectPrediction) {
  const auto r = cli({"eval-techniques", "--gold", f("dataset.jsonl"), "--pred", f("dataset.jsonl"), "--json-out",
                      f("report.json")});
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto j = nlohmann::json::parse(oracle::slurp(f("report.json")));
  const auto ds = read_dataset(f("dataset.jsonl")).samples;
  std::vector<LabelVector> gold;
  for (const auto& s : ds) gold.push_back(s.labels());
  EXPECT_DOUBLE_EQ(j["macro_f1"].get<double>(), macro_f1(gold, gold).macro_f1);
}

TEST_F(CliTest, StackingPipeline) {
  ASSERT_EQ(cli({"build-features", "--dataset", f("dataset.jsonl"), "--text-emb", f("text.emb"), "--trigger-emb",
                 f("trigger.emb"), "--probs", f("base_probs.csv"), "--out", f("features.emb"), "--seed", "4"})
                .exit_code,
            0);
  const auto features = read_embedding_matrix(f("features.emb"));
  EXPECT_EQ(features.rows(), 60u);
  EXPECT_EQ(features.dim, kFeatureDim);

  const auto meta = nlohmann::json::parse(oracle::slurp(f("features.emb.meta.json")));
  EXPECT_EQ(meta["command"], "build-features");
  EXPECT_EQ(meta["seed"], 4);
  EXPECT_EQ(meta["version"], std::string(kVersion));
  EXPECT_TRUE(meta.contains("timestamp"));
  EXPECT_TRUE(meta["inputs"].contains("dataset"));

  ASSERT_EQ(cli({"train-stacker", "--features", f("features.emb"), "--dataset", f("dataset.jsonl"), "--out",
                 f("model.json"), "--rounds", "20"})
                .exit_code,
            0);
  const auto model = gbdt_from_json(nlohmann::json::parse(oracle::slurp(f("model.json"))));
  EXPECT_EQ(model.config.rounds, 20u);

  const auto opt = cli({"optimize-thresholds", "--dataset", f("dataset.jsonl"), "--features", f("features.emb"), "--out",
                        f("thresholds.json"), "--oof-out", f("oof.csv"), "--folds", "3", "--rounds", "20"});
  ASSERT_EQ(opt.exit_code, 0) << opt.output;
  EXPECT_NE(opt.output.find("global-0.5"), std::string::npos);
  const auto set = threshold_set_from_json(nlohmann::json::parse(oracle::slurp(f("thresholds.json"))));
  EXPECT_EQ(set.folds, 3u);
  EXPECT_EQ(read_prob_table(f("oof.csv")).ids.size(), 60u);

  // --features and --probs are mutually exclusive.
  EXPECT_EQ(cli({"optimize-thresholds", "--dataset", f("dataset.jsonl"), "--features", f("features.emb"), "--probs",
                 f("base_probs.csv"), "--out", f("x.json")})
                .exit_code,
            2);

  ASSERT_EQ(cli({"predict", "--model", f("model.json"), "--thresholds", f("thresholds.json"), "--features",
                 f("features.emb"), "--out", f("pred.jsonl"), "--probs-out", f("pred_probs.csv")})
                .exit_code,
            0);
  const auto ev = cli({"eval-techniques", "--gold", f("dataset.jsonl"), "--pred", f("pred.jsonl")});
  ASSERT_EQ(ev.exit_code, 0) << ev.output;
  EXPECT_NE(ev.output.find("loaded_language"), std::string::npos);

  // The predicted labels are the thresholds applied to the written probabilities.
  const auto probs = read_prob_table(f("pred_probs.csv"));
  const auto pred = read_predictions(f("pred.jsonl"));
  ASSERT_EQ(pred.size(), probs.ids.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    EXPECT_EQ(pred[i].id, probs.ids[i]);
    EXPECT_EQ(pred[i].labels(), apply_thresholds(probs.probs[i], set.thresholds));
  }
}

TEST_F(CliTest, SpanPipeline) {
  ASSERT_EQ(cli({"train-heads", "--tokens", f("tokens.tem"), "--dataset", f("dataset.jsonl"), "--out", f("heads.json"),
                 "--hidden", "16", "--epochs", "3", "--seed", "2"})
                .exit_code,
            0);
  ASSERT_EQ(cli({"predict-heads", "--params", f("heads.json"), "--tokens", f("tokens.tem"), "--token-probs-out",
                 f("token_probs.csv"), "--class-probs-out", f("class_probs.csv")})
                .exit_code,
            0);
  EXPECT_EQ(read_prob_table(f("class_probs.csv")).ids.size(), 60u);
  const auto opt = cli({"optimize-span-threshold", "--token-probs", f("token_probs.csv"), "--tokens", f("tokens.tem"),
                        "--dataset", f("dataset.jsonl"), "--out", f("span_thr.json"), "--folds", "3"});
  ASSERT_EQ(opt.exit_code, 0) << opt.output;
  ASSERT_EQ(cli({"extract-spans", "--token-probs", f("token_probs.csv"), "--tokens", f("tokens.tem"), "--threshold-file",
                 f("span_thr.json"), "--out", f("spans.jsonl")})
                .exit_code,
            0);
  const auto ev = cli({"eval-spans", "--gold", f("dataset.jsonl"), "--pred", f("spans.jsonl")});
  ASSERT_EQ(ev.exit_code, 0) << ev.output;
  EXPECT_NE(ev.output.find("span_f1"), std::string::npos);

  // Gold token labels as probabilities cover every gold character once the
  // single spaces inside multi-word triggers are bridged.
  const auto tokens = read_token_embeddings(f("tokens.tem"));
  const auto ds = read_dataset(f("dataset.jsonl")).samples;
  TokenProbRows rows;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto labels = token_labels_from_spans(ds[i].trigger_spans, tokens[i].offsets);
    rows.ids.push_back(tokens[i].id);
    rows.probs.emplace_back(labels.begin(), labels.end());
  }
  write_token_probs(rows, f("gold_token_probs.csv"));
  ASSERT_EQ(cli({"extract-spans", "--token-probs", f("gold_token_probs.csv"), "--tokens", f("tokens.tem"), "--max-gap",
                 "1", "--out", f("gold_spans.jsonl")})
                .exit_code,
            0);
  const auto exact = cli({"eval-spans", "--gold", f("dataset.jsonl"), "--pred", f("gold_spans.jsonl")});
  EXPECT_NE(exact.output.find("recall 1.00000"), std::string::npos) << exact.output;
}

TEST_F(CliTest, PromptsAndCooccurrence) {
  ASSERT_EQ(cli({"gen-prompts", "--dataset", f("dataset.jsonl"), "--text-emb", f("text.emb"), "--trigger-emb",
                 f("trigger.emb"), "--out", f("prompts.jsonl")})
                .exit_code,
            0);
  std::istringstream in(oracle::slurp(f("prompts.jsonl")));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("prompt"));
    ++n;
  }
  EXPECT_EQ(n, 60u);

  const auto co = cli({"cooccurrence", "--dataset", f("dataset.jsonl"), "--json-out", f("co.json")});
  ASSERT_EQ(co.exit_code, 0) << co.output;
  const auto j = nlohmann::json::parse(oracle::slurp(f("co.json")));
  const auto m = cooccurrence(read_dataset(f("dataset.jsonl")).samples);
  EXPECT_EQ(j["labels"].size(), kNumTechniques);
  EXPECT_EQ(j["counts"].dump(), nlohmann::json(m).dump());
}
