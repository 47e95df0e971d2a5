#pragma once

// Command-line surface. Exit codes: 0 success, 1 operational error, 2 usage error.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "manipdet/manipdet.hpp"

#ifndef MANIPDET_RESOURCE_DIR
#define MANIPDET_RESOURCE_DIR "resources"
#endif

namespace manipdet::cli {

using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;

struct Invocation {
  std::string command;
  std::vector<std::string> argv;
  std::map<std::string, std::string> inputs;
  std::uint64_t seed = 0;
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// <artifact>.meta.json: enough to re-run the producing command.
inline void write_metadata(const std::string& artifact, const Invocation& inv, const json& extra = json::object()) {
  json meta;
  meta["artifact"] = std::filesystem::path(artifact).filename().string();
  meta["command"] = inv.command;
  meta["argv"] = inv.argv;
  meta["inputs"] = inv.inputs;
  meta["seed"] = inv.seed;
  meta["version"] = kVersion;
  meta["timestamp"] = utc_timestamp();
  if (!extra.empty()) meta["details"] = extra;
  std::ofstream out(artifact + ".meta.json");
  if (!out) throw Error(ErrorCode::io_error, "cannot write metadata for \"" + artifact + "\"");
  out << meta.dump(2) << '\n';
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_error, "cannot open \"" + path + "\" for writing");
  out << j.dump(2) << '\n';
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open \"" + path + "\" for reading");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, "\"" + path + "\": " + e.what());
  }
}

inline std::vector<Sample> load_samples(const std::string& path) {
  DatasetFile file = read_dataset(path);
  if (!file.violations.empty()) {
    std::string msg = "dataset \"" + path + "\" has " + std::to_string(file.violations.size()) + " violation(s)";
    for (const auto& v : file.violations) msg += "\n  " + std::string(to_string(v.kind)) + ": " + v.message;
    throw Error(ErrorCode::parse_error, msg);
  }
  return std::move(file.samples);
}

inline std::map<std::string, std::vector<CharSpan>> spans_by_id(std::span<const Sample> samples) {
  std::map<std::string, std::vector<CharSpan>> out;
  for (const Sample& s : samples) {
    if (!out.emplace(s.id, s.trigger_spans).second) throw Error(ErrorCode::parse_error, "duplicate id \"" + s.id + "\"");
  }
  return out;
}

// Token probability rows joined with TEM1 offsets.
inline std::vector<TokenProbSequence> join_token_probs(const TokenProbRows& rows,
                                                       std::span<const TokenEmbeddingSequence> tokens) {
  std::unordered_map<std::string, const TokenEmbeddingSequence*> by_id;
  for (const auto& t : tokens) by_id[t.id] = &t;
  std::vector<TokenProbSequence> out;
  for (std::size_t i = 0; i < rows.ids.size(); ++i) {
    const auto it = by_id.find(rows.ids[i]);
    if (it == by_id.end()) throw Error(ErrorCode::invalid_argument, "no token offsets for id \"" + rows.ids[i] + "\"");
    if (it->second->offsets.size() != rows.probs[i].size()) {
      throw Error(ErrorCode::invalid_offsets, "sample \"" + rows.ids[i] + "\": token prob count != offset count");
    }
    out.push_back({rows.ids[i], rows.probs[i], it->second->offsets});
  }
  return out;
}

struct GridFlags {
  double start = 0.01;
  double stop = 0.99;
  double step = 0.01;

  void add(CLI::App* app) {
    app->add_option("--grid-start", start, "First grid threshold")->capture_default_str();
    app->add_option("--grid-stop", stop, "Last grid threshold")->capture_default_str();
    app->add_option("--grid-step", step, "Grid spacing")->capture_default_str();
  }
  ThresholdGrid grid() const { return {start, stop, step}; }
};

struct StackerFlags {
  TrainConfig config;

  void add(CLI::App* app) {
    app->add_option("--rounds", config.rounds, "Boosting rounds per technique")->capture_default_str();
    app->add_option("--learning-rate", config.learning_rate, "Shrinkage")->capture_default_str();
    app->add_option("--max-depth", config.max_depth, "Maximum tree depth")->capture_default_str();
    app->add_option("--min-leaf", config.min_leaf, "Minimum samples per leaf")->capture_default_str();
  }
};

class App {
 public:
  App() : app_("Manipulation technique classification and span detection toolkit", "manipdet") {
    app_.require_subcommand(1);
    app_.set_version_flag("--version", kVersion);
    add_gen_synthetic();
    add_build_features();
    add_train_stacker();
    add_optimize_thresholds();
    add_predict();
    add_eval_techniques();
    add_eval_spans();
    add_train_heads();
    add_predict_heads();
    add_extract_spans();
    add_optimize_span_threshold();
    add_gen_prompts();
    add_cooccurrence();
    add_gradcheck();
  }

  int run(int argc, const char* const* argv) {
    inv_.argv.assign(argv, argv + argc);
    try {
      app_.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app_.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app_.exit(e);
    } catch (const CLI::CallForVersion& e) {
      return app_.exit(e);
    } catch (const CLI::ParseError& e) {
      std::cerr << "error: " << e.what() << "\n\n" << app_.help();
      return kExitUsage;
    }
    try {
      for (auto* sub : app_.get_subcommands()) inv_.command = sub->get_name();
      return action_();
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitError;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitError;
    }
  }

 private:
  CLI::App* sub(const std::string& name, const std::string& description, std::function<int()> action) {
    CLI::App* s = app_.add_subcommand(name, description);
    s->callback([this, action] { action_ = action; });
    return s;
  }

  // ---- synthetic data ----------------------------------------------------
  void add_gen_synthetic() {
    auto* s = sub("gen-synthetic", "Write a seeded synthetic corpus (dataset, embeddings, base probs, tokens)",
                  [this] { return gen_synthetic(); });
    s->add_option("--out-dir", out_dir_, "Output directory")->required();
    s->add_option("--samples", samples_, "Number of posts")->capture_default_str();
    s->add_option("--seed", seed_, "Random seed")->capture_default_str();
  }

  int gen_synthetic() {
    inv_.seed = seed_;
    std::filesystem::create_directories(out_dir_);
    const SyntheticCorpus c = make_synthetic_corpus(samples_, seed_);
    const auto p = [&](const char* name) { return (std::filesystem::path(out_dir_) / name).string(); };
    write_dataset(p("dataset.jsonl"), c.samples);
    write_embedding_matrix(c.text_embeddings, p("text.emb"));
    write_embedding_matrix(c.trigger_embeddings, p("trigger.emb"));
    write_prob_table(c.base_probs, p("base_probs.csv"));
    write_token_embeddings(c.tokens, p("tokens.tem"));
    for (const char* name : {"dataset.jsonl", "text.emb", "trigger.emb", "base_probs.csv", "tokens.tem"}) {
      write_metadata(p(name), inv_, {{"samples", samples_}});
    }
    std::cout << "wrote " << samples_ << " synthetic samples to " << out_dir_ << '\n';
    return kExitOk;
  }

  // ---- stacking --------------------------------------------------------------
  void add_build_features() {
    auto* s = sub("build-features", "Assemble 48-dim stacked features (EMB1)", [this] { return build_features(); });
    s->add_option("--dataset", dataset_, "Samples to featurize (JSONL)")->required()->check(CLI::ExistingFile);
    s->add_option("--reference", reference_, "Reference set for neighbours and clusters (default: --dataset)")
        ->check(CLI::ExistingFile);
    s->add_option("--text-emb", text_emb_, "Sentence embeddings (EMB1) covering dataset and reference")
        ->required()
        ->check(CLI::ExistingFile);
    s->add_option("--trigger-emb", trigger_emb_, "Trigger-phrase embeddings of the reference set (EMB1)")
        ->required()
        ->check(CLI::ExistingFile);
    s->add_option("--probs", probs_, "Base probabilities (CSV)")->required()->check(CLI::ExistingFile);
    s->add_option("--out", out_, "Output feature matrix (EMB1)")->required();
    s->add_option("--seed", seed_, "k-means seed")->capture_default_str();
    s->add_option("--neighbors", neighbors_, "Neighbours per frequency feature")->capture_default_str();
    s->add_flag("--no-exclude-self", no_exclude_self_, "Let a sample be its own neighbour");
  }

  int build_features() {
    inv_.seed = seed_;
    inv_.inputs = {{"dataset", dataset_}, {"text_emb", text_emb_}, {"trigger_emb", trigger_emb_}, {"probs", probs_}};
    const auto targets = load_samples(dataset_);
    const auto reference = reference_.empty() ? targets : load_samples(reference_);
    if (!reference_.empty()) inv_.inputs["reference"] = reference_;
    FeatureBuildOptions opt;
    opt.seed = seed_;
    opt.neighbors = neighbors_;
    opt.exclude_self = !no_exclude_self_;
    const auto result = build_feature_matrix(targets, reference, read_embedding_matrix(text_emb_),
                                             read_embedding_matrix(trigger_emb_), read_prob_table(probs_), opt);
    write_embedding_matrix(result.features, out_);
    write_metadata(out_, inv_,
                   {{"columns", feature_names()},
                    {"kmeans", {{"k", result.kmeans.k}, {"iterations", result.kmeans.iterations},
                                {"inertia", result.kmeans.inertia}}},
                    {"exclude_self", opt.exclude_self},
                    {"neighbors", opt.neighbors}});
    std::cout << "features: " << result.features.rows() << " x " << result.features.dim << " -> " << out_ << '\n';
    return kExitOk;
  }

  void add_train_stacker() {
    auto* s = sub("train-stacker", "Fit the boosted second-level classifier", [this] { return train_stacker(); });
    s->add_option("--features", features_, "Feature matrix (EMB1)")->required()->check(CLI::ExistingFile);
    s->add_option("--dataset", dataset_, "Gold labels (JSONL)")->required()->check(CLI::ExistingFile);
    s->add_option("--out", out_, "Model JSON (gbdt-v1)")->required();
    s->add_option("--seed", seed_, "Seed recorded in the model")->capture_default_str();
    stacker_.add(s);
  }

  int train_stacker() {
    inv_.seed = seed_;
    inv_.inputs = {{"features", features_}, {"dataset", dataset_}};
    const auto feats = read_embedding_matrix(features_);
    const auto labels = labels_for(feats.ids, load_samples(dataset_));
    TrainConfig cfg = stacker_.config;
    cfg.seed = seed_;
    const GbdtModel model = fit(to_feature_matrix(feats), labels, cfg);
    write_json_file(out_, to_json(model));
    write_metadata(out_, inv_);
    for (std::size_t t = 0; t < kNumTechniques; ++t) {
      const auto& curve = model.ensembles[t].loss_curve;
      std::printf("%-25s trees %3zu  loss %.5f -> %.5f\n", std::string(kTechniqueNames[t]).c_str(),
                  model.ensembles[t].trees.size(), curve.front(), curve.back());
    }
    return kExitOk;
  }

  void add_optimize_thresholds() {
    auto* s = sub("optimize-thresholds", "Per-class thresholds by k-fold grid search (median of fold optima)",
                  [this] { return optimize_thresholds_cmd(); });
    s->add_option("--dataset", dataset_, "Gold labels (JSONL)")->required()->check(CLI::ExistingFile);
    auto* f = s->add_option("--features", features_, "Feature matrix; out-of-fold stacker probabilities are used")
                  ->check(CLI::ExistingFile);
    auto* p = s->add_option("--probs", probs_, "Calibrate these probabilities directly (CSV)")->check(CLI::ExistingFile);
    f->excludes(p);
    s->add_option("--out", out_, "thresholds.json")->required();
    s->add_option("--oof-out", oof_out_, "Also write the out-of-fold probabilities (CSV)");
    s->add_option("--folds", folds_, "Number of folds")->capture_default_str();
    s->add_option("--seed", seed_, "Fold shuffle seed")->capture_default_str();
    grid_.add(s);
    stacker_.add(s);
  }

  int optimize_thresholds_cmd() {
    inv_.seed = seed_;
    const auto dataset = load_samples(dataset_);
    ProbTable table;
    if (!features_.empty()) {
      inv_.inputs = {{"features", features_}, {"dataset", dataset_}};
      const auto feats = read_embedding_matrix(features_);
      TrainConfig cfg = stacker_.config;
      cfg.seed = seed_;
      table.ids = feats.ids;
      table.probs = out_of_fold_probs(to_feature_matrix(feats), labels_for(feats.ids, dataset), folds_, seed_, cfg);
    } else if (!probs_.empty()) {
      inv_.inputs = {{"probs", probs_}, {"dataset", dataset_}};
      table = read_prob_table(probs_);
    } else {
      throw CLI::RequiredError("--features or --probs");
    }
    const auto labels = labels_for(table.ids, dataset);
    const ThresholdSet set = optimize_thresholds(table.probs, labels, folds_, seed_, grid_.grid());
    write_json_file(out_, to_json(set));
    write_metadata(out_, inv_, {{"probabilities", features_.empty() ? "given" : "out-of-fold stacker"}});
    if (!oof_out_.empty()) {
      write_prob_table(table, oof_out_);
      write_metadata(oof_out_, inv_);
    }
    const auto cmp = compare_to_global(table.probs, labels, set);
    std::printf("macro-F1 calibrated %.5f  global-0.5 %.5f\n", cmp.calibrated_macro_f1, cmp.global_macro_f1);
    return kExitOk;
  }

  void add_predict() {
    auto* s = sub("predict", "Stacker + thresholds -> technique labels (JSONL)", [this] { return predict_cmd(); });
    s->add_option("--model", model_, "Stacker model (gbdt-v1)")->required()->check(CLI::ExistingFile);
    s->add_option("--thresholds", thresholds_, "thresholds.json")->required()->check(CLI::ExistingFile);
    s->add_option("--features", features_, "Feature matrix (EMB1)")->required()->check(CLI::ExistingFile);
    s->add_option("--out", out_, "Predicted labels (JSONL)")->required();
    s->add_option("--probs-out", probs_out_, "Also write stacker probabilities (CSV)");
  }

  int predict_cmd() {
    inv_.inputs = {{"model", model_}, {"thresholds", thresholds_}, {"features", features_}};
    const GbdtModel model = gbdt_from_json(read_json_file(model_));
    const ThresholdSet set = threshold_set_from_json(read_json_file(thresholds_));
    inv_.seed = set.seed;
    const auto feats = read_embedding_matrix(features_);
    const auto probs = predict_proba(model, to_feature_matrix(feats));
    const auto labels = apply_thresholds(probs, set);
    write_label_predictions(out_, feats.ids, labels);
    write_metadata(out_, inv_);
    if (!probs_out_.empty()) {
      write_prob_table(ProbTable{feats.ids, probs}, probs_out_);
      write_metadata(probs_out_, inv_);
    }
    std::cout << "predicted " << labels.size() << " samples -> " << out_ << '\n';
    return kExitOk;
  }

  // ---- evaluation --------------------------------------------------------------
  void add_eval_techniques() {
    auto* s = sub("eval-techniques", "Macro-F1 and per-technique report", [this] { return eval_techniques(); });
    s->add_option("--gold", gold_, "Gold dataset (JSONL)")->required()->check(CLI::ExistingFile);
    s->add_option("--pred", pred_, "Predictions (JSONL with id, techniques)")->required()->check(CLI::ExistingFile);
    s->add_option("--json-out", json_out_, "Write the report as JSON");
  }

  int eval_techniques() {
    inv_.inputs = {{"gold", gold_}, {"pred", pred_}};
    const auto gold = load_samples(gold_);
    const auto pred = read_predictions(pred_);
    std::unordered_map<std::string, LabelVector> pred_by_id;
    for (const auto& p : pred) {
      if (!pred_by_id.emplace(p.id, p.labels()).second) throw Error(ErrorCode::parse_error, "duplicate prediction id \"" + p.id + "\"");
    }
    std::vector<LabelVector> g;
    std::vector<LabelVector> q;
    for (const auto& s : gold) {
      g.push_back(s.labels());
      const auto it = pred_by_id.find(s.id);
      q.push_back(it == pred_by_id.end() ? LabelVector{} : it->second);
      if (it != pred_by_id.end()) pred_by_id.erase(it);
    }
    if (!pred_by_id.empty()) throw Error(ErrorCode::invalid_argument, "prediction for id \"" + pred_by_id.begin()->first + "\" not in gold");
    const auto result = macro_f1(g, q);
    std::cout << classification_report(result);
    if (!json_out_.empty()) {
      write_json_file(json_out_, report_json(result));
      write_metadata(json_out_, inv_);
    }
    return kExitOk;
  }

  void add_eval_spans() {
    auto* s = sub("eval-spans", "Span-level F1 over character sets", [this] { return eval_spans(); });
    s->add_option("--gold", gold_, "Gold dataset (JSONL)")->required()->check(CLI::ExistingFile);
    s->add_option("--pred", pred_, "Predicted spans (JSONL with id, trigger_words)")->required()->check(CLI::ExistingFile);
    s->add_option("--json-out", json_out_, "Write the scores as JSON");
  }

  int eval_spans() {
    inv_.inputs = {{"gold", gold_}, {"pred", pred_}};
    const auto gold = load_samples(gold_);
    const auto pred = read_predictions(pred_);
    const auto r = span_f1(spans_by_id(gold), spans_by_id(pred));
    std::printf("span_f1 %.5f  precision %.5f  recall %.5f\n", r.f1, r.precision, r.recall);
    if (!json_out_.empty()) {
      write_json_file(json_out_, {{"f1", r.f1},
                                  {"precision", r.precision},
                                  {"recall", r.recall},
                                  {"sum_intersection", r.counts.sum_intersection},
                                  {"sum_predicted", r.counts.sum_predicted},
                                  {"sum_gold", r.counts.sum_gold}});
      write_metadata(json_out_, inv_);
    }
    return kExitOk;
  }

  // ---- dual-head network ---------------------------------------------------------
  void add_train_heads() {
    auto* s = sub("train-heads", "Train span and technique heads over token embeddings", [this] { return train_heads_cmd(); });
    s->add_option("--tokens", tokens_, "Token embeddings (TEM1)")->required()->check(CLI::ExistingFile);
    s->add_option("--dataset", dataset_, "Gold spans and labels (JSONL)")->required()->check(CLI::ExistingFile);
    s->add_option("--out", out_, "Parameter manifest (heads-v1); blocks go to <out>.bin")->required();
    s->add_option("--hidden", heads_.hidden, "Technique head width")->capture_default_str();
    s->add_option("--lambda", heads_.class_loss_weight, "Technique loss weight, < 1")->capture_default_str();
    s->add_option("--dropout", heads_.dropout, "Dropout rate")->capture_default_str();
    s->add_option("--learning-rate", heads_.learning_rate, "Adam step size")->capture_default_str();
    s->add_option("--epochs", heads_.epochs, "Training epochs")->capture_default_str();
    s->add_option("--batch-size", heads_.batch_size, "Mini-batch size")->capture_default_str();
    s->add_option("--seed", seed_, "Initialization and shuffling seed")->capture_default_str();
  }

  int train_heads_cmd() {
    inv_.seed = seed_;
    inv_.inputs = {{"tokens", tokens_}, {"dataset", dataset_}};
    const auto seqs = read_token_embeddings(tokens_);
    if (seqs.empty()) throw Error(ErrorCode::invalid_argument, "no token sequences");
    const auto dataset = load_samples(dataset_);
    std::unordered_map<std::string, const Sample*> by_id;
    for (const auto& s : dataset) by_id[s.id] = &s;
    std::vector<std::vector<CharSpan>> spans;
    std::vector<LabelVector> labels;
    for (const auto& seq : seqs) {
      const auto it = by_id.find(seq.id);
      if (it == by_id.end()) throw Error(ErrorCode::invalid_argument, "sequence \"" + seq.id + "\" not in dataset");
      spans.push_back(it->second->trigger_spans);
      labels.push_back(it->second->labels());
    }
    HeadsConfig cfg = heads_;
    cfg.dim = seqs.front().dim;
    cfg.seed = seed_;
    const auto examples = make_examples(seqs, spans, labels);
    const auto result = train_heads(examples, cfg, [](std::size_t epoch, double loss) {
      std::fprintf(stderr, "epoch %zu loss %.6f\n", epoch + 1, loss);
    });
    save_heads(result.params, cfg, out_);
    write_metadata(out_, inv_, {{"loss_history", result.loss_history}});
    return kExitOk;
  }

  void add_predict_heads() {
    auto* s = sub("predict-heads", "Token and technique probabilities from trained heads",
                  [this] { return predict_heads_cmd(); });
    s->add_option("--params", params_, "Parameter manifest (heads-v1)")->required()->check(CLI::ExistingFile);
    s->add_option("--tokens", tokens_, "Token embeddings (TEM1)")->required()->check(CLI::ExistingFile);
    s->add_option("--token-probs-out", token_probs_out_, "Token probabilities (CSV)")->required();
    s->add_option("--class-probs-out", class_probs_out_, "Technique probabilities (CSV)")->required();
  }

  int predict_heads_cmd() {
    inv_.inputs = {{"params", params_}, {"tokens", tokens_}};
    const auto loaded = load_heads(params_);
    inv_.seed = loaded.config.seed;
    const auto seqs = read_token_embeddings(tokens_);
    const auto pred = predict_heads(loaded.params, seqs, loaded.config.ln_eps);
    TokenProbRows rows;
    for (const auto& t : pred.token_probs) {
      rows.ids.push_back(t.id);
      rows.probs.push_back(t.probs);
    }
    write_token_probs(rows, token_probs_out_);
    write_prob_table(pred.class_probs, class_probs_out_);
    write_metadata(token_probs_out_, inv_);
    write_metadata(class_probs_out_, inv_);
    std::cout << "predicted " << seqs.size() << " sequences\n";
    return kExitOk;
  }

  // ---- spans ------------------------------------------------------------------
  void add_extract_spans() {
    auto* s = sub("extract-spans", "Threshold token probabilities and merge into character spans",
                  [this] { return extract_spans_cmd(); });
    s->add_option("--token-probs", token_probs_, "Token probabilities (CSV)")->required()->check(CLI::ExistingFile);
    s->add_option("--tokens", tokens_, "Token offsets source (TEM1)")->required()->check(CLI::ExistingFile);
    auto* t = s->add_option("--threshold", threshold_, "Token probability threshold")->capture_default_str();
    auto* f = s->add_option("--threshold-file", threshold_file_, "Use the threshold from optimize-span-threshold")
                  ->check(CLI::ExistingFile);
    t->excludes(f);
    s->add_option("--max-gap", max_gap_, "Merge spans separated by at most this many characters")->capture_default_str();
    s->add_option("--out", out_, "Predicted spans (JSONL)")->required();
  }

  int extract_spans_cmd() {
    inv_.inputs = {{"token_probs", token_probs_}, {"tokens", tokens_}};
    double threshold = threshold_;
    if (!threshold_file_.empty()) {
      inv_.inputs["threshold_file"] = threshold_file_;
      const auto st = span_threshold_from_json(read_json_file(threshold_file_));
      threshold = st.threshold;
      inv_.seed = st.seed;
    }
    const auto seqs = join_token_probs(read_token_probs(token_probs_), read_token_embeddings(tokens_));
    std::vector<std::string> ids;
    std::vector<std::vector<CharSpan>> spans;
    for (const auto& seq : seqs) {
      ids.push_back(seq.id);
      spans.push_back(extract_spans(seq, threshold, max_gap_));
    }
    write_span_predictions(out_, ids, spans);
    write_metadata(out_, inv_, {{"threshold", threshold}, {"max_gap", max_gap_}});
    std::cout << "extracted spans for " << ids.size() << " samples -> " << out_ << '\n';
    return kExitOk;
  }

  void add_optimize_span_threshold() {
    auto* s = sub("optimize-span-threshold", "Span threshold by k-fold grid search on span F1",
                  [this] { return optimize_span_threshold_cmd(); });
    s->add_option("--token-probs", token_probs_, "Token probabilities (CSV)")->required()->check(CLI::ExistingFile);
    s->add_option("--tokens", tokens_, "Token offsets source (TEM1)")->required()->check(CLI::ExistingFile);
    s->add_option("--dataset", dataset_, "Gold spans (JSONL)")->required()->check(CLI::ExistingFile);
    s->add_option("--out", out_, "Threshold JSON")->required();
    s->add_option("--folds", folds_, "Number of folds")->capture_default_str();
    s->add_option("--seed", seed_, "Fold shuffle seed")->capture_default_str();
    s->add_option("--max-gap", max_gap_, "Merge gap used during the search")->capture_default_str();
    grid_.add(s);
  }

  int optimize_span_threshold_cmd() {
    inv_.seed = seed_;
    inv_.inputs = {{"token_probs", token_probs_}, {"tokens", tokens_}, {"dataset", dataset_}};
    const auto seqs = join_token_probs(read_token_probs(token_probs_), read_token_embeddings(tokens_));
    const auto gold = spans_by_id(load_samples(dataset_));
    std::vector<std::vector<CharSpan>> aligned;
    for (const auto& seq : seqs) {
      const auto it = gold.find(seq.id);
      if (it == gold.end()) throw Error(ErrorCode::invalid_argument, "sequence \"" + seq.id + "\" not in dataset");
      aligned.push_back(it->second);
    }
    const auto st = optimize_span_threshold(seqs, aligned, folds_, seed_, grid_.grid(), max_gap_);
    write_json_file(out_, to_json(st));
    write_metadata(out_, inv_);
    std::printf("span threshold %.2f (fold optima:", st.threshold);
    for (double v : st.fold_optima) std::printf(" %.2f", v);
    std::printf(")\n");
    return kExitOk;
  }

  // ---- prompts, statistics, diagnostics -----------------------------------------
  void add_gen_prompts() {
    auto* s = sub("gen-prompts", "Few-shot instruction prompts (JSONL)", [this] { return gen_prompts(); });
    s->add_option("--dataset", dataset_, "Training dataset (JSONL)")->required()->check(CLI::ExistingFile);
    s->add_option("--text-emb", text_emb_, "Sentence embeddings (EMB1)")->required()->check(CLI::ExistingFile);
    s->add_option("--trigger-emb", trigger_emb_, "Trigger-phrase embeddings (EMB1)")->required()->check(CLI::ExistingFile);
    s->add_option("--descriptions", descriptions_, "Technique descriptions resource")
        ->capture_default_str()
        ->check(CLI::ExistingFile);
    s->add_option("--template", template_, "Prompt template resource")->capture_default_str()->check(CLI::ExistingFile);
    s->add_option("--out", out_, "Prompt records (JSONL)")->required();
  }

  int gen_prompts() {
    inv_.inputs = {{"dataset", dataset_}, {"text_emb", text_emb_}, {"trigger_emb", trigger_emb_},
                   {"descriptions", descriptions_}, {"template", template_}};
    const auto dataset = load_samples(dataset_);
    const auto records = build_prompts(dataset, read_embedding_matrix(text_emb_), read_embedding_matrix(trigger_emb_),
                                       load_descriptions(descriptions_), load_template(template_));
    write_prompts(out_, records);
    write_metadata(out_, inv_);
    std::cout << "wrote " << records.size() << " prompts -> " << out_ << '\n';
    return kExitOk;
  }

  void add_cooccurrence() {
    auto* s = sub("cooccurrence", "Technique co-occurrence counts", [this] { return cooccurrence_cmd(); });
    s->add_option("--dataset", dataset_, "Dataset (JSONL)")->required()->check(CLI::ExistingFile);
    s->add_option("--json-out", json_out_, "Write the matrix as JSON");
  }

  int cooccurrence_cmd() {
    inv_.inputs = {{"dataset", dataset_}};
    const auto m = cooccurrence(load_samples(dataset_));
    std::cout << format_cooccurrence(m);
    if (!json_out_.empty()) {
      write_json_file(json_out_, {{"labels", kTechniqueNames}, {"counts", m}});
      write_metadata(json_out_, inv_);
    }
    return kExitOk;
  }

  void add_gradcheck() {
    auto* s = sub("gradcheck", "Finite-difference check of the dual-head gradients", [this] { return gradcheck_cmd(); });
    s->add_option("--seed", seed_, "Fixture seed")->capture_default_str();
    s->add_option("--tolerance", tolerance_, "Maximum accepted relative error")->capture_default_str();
  }

  int gradcheck_cmd() {
    double worst = 0.0;
    for (const auto& c : default_gradcheck_cases(seed_)) {
      const auto r = run_gradcheck(c);
      std::printf("D=%-3zu T=%-3zu params=%-6zu max_rel_err=%.3e (%s[%zu])\n", c.dim, c.tokens, r.parameters,
                  r.max_relative_error, r.worst_tensor.c_str(), r.worst_index);
      worst = std::max(worst, r.max_relative_error);
    }
    std::printf("max relative error %.3e (tolerance %.0e): %s\n", worst, tolerance_, worst < tolerance_ ? "PASS" : "FAIL");
    return worst < tolerance_ ? kExitOk : kExitError;
  }

  CLI::App app_;
  std::function<int()> action_;
  Invocation inv_;

  std::string out_dir_;
  std::size_t samples_ = 200;
  std::uint64_t seed_ = 0;
  std::string dataset_;
  std::string reference_;
  std::string text_emb_;
  std::string trigger_emb_;
  std::string probs_;
  std::string out_;
  std::string oof_out_;
  std::string features_;
  std::string model_;
  std::string thresholds_;
  std::string probs_out_;
  std::string gold_;
  std::string pred_;
  std::string json_out_;
  std::string tokens_;
  std::string params_;
  std::string token_probs_;
  std::string token_probs_out_;
  std::string class_probs_out_;
  std::string threshold_file_;
  std::string descriptions_ = std::string(MANIPDET_RESOURCE_DIR) + "/technique_descriptions.txt";
  std::string template_ = std::string(MANIPDET_RESOURCE_DIR) + "/prompt_template_v1.txt";
  std::size_t neighbors_ = 10;
  bool no_exclude_self_ = false;
  std::size_t folds_ = 5;
  std::size_t max_gap_ = 1;
  double threshold_ = 0.5;
  double tolerance_ = 1e-4;
  GridFlags grid_;
  StackerFlags stacker_;
  HeadsConfig heads_;
};

inline int run(int argc, const char* const* argv) {
  App app;
  return app.run(argc, argv);
}

}  // namespace manipdet::cli
