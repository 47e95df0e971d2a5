#pragma once

// Instruction prompts for LLM fine-tuning: technique descriptions plus four
// few-shot examples picked by embedding similarity (two by text-to-text,
// two by text-to-trigger-phrase), with the gold technique list as target.

#include <algorithm>
#include <array>
#include <iterator>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "manipdet/core.hpp"
#include "manipdet/ingest.hpp"
#include "manipdet/vecmath.hpp"

namespace manipdet {

inline constexpr std::size_t kFewShotCount = 4;
inline constexpr std::size_t kFewShotMaxChars = 500;  // examples must be strictly shorter
inline constexpr std::string_view kNoneCompletion = "none";

struct TechniqueDescription {
  std::string name;
  std::string description;
};

using DescriptionCatalog = std::array<TechniqueDescription, kNumTechniques>;

// Lines "<label>|<name>|<description>"; '#' lines and blank lines ignored.
// Every canonical label must appear exactly once.
inline DescriptionCatalog parse_descriptions(std::string_view text) {
  DescriptionCatalog catalog;
  std::array<bool, kNumTechniques> seen{};
  std::size_t pos = 0;
  std::size_t lineno = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = detail::chomp(text.substr(pos, eol - pos));
    pos = eol + 1;
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    const std::size_t a = line.find('|');
    const std::size_t b = a == std::string_view::npos ? a : line.find('|', a + 1);
    if (b == std::string_view::npos) {
      throw Error(ErrorCode::parse_error, "descriptions line " + std::to_string(lineno) + ": expected label|name|description");
    }
    const Technique t = parse_technique_or_throw(line.substr(0, a));
    if (seen[index_of(t)]) throw Error(ErrorCode::parse_error, "descriptions: duplicate entry for " + std::string(to_string(t)));
    seen[index_of(t)] = true;
    catalog[index_of(t)] = {std::string(line.substr(a + 1, b - a - 1)), std::string(line.substr(b + 1))};
  }
  for (std::size_t i = 0; i < kNumTechniques; ++i) {
    if (!seen[i]) throw Error(ErrorCode::parse_error, "descriptions: missing entry for " + std::string(kTechniqueNames[i]));
  }
  return catalog;
}

inline std::string read_text_file(const std::string& path) {
  auto in = detail::open_in(path, true);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline DescriptionCatalog load_descriptions(const std::string& path) { return parse_descriptions(read_text_file(path)); }

// Template with {descriptions}, {examples} and {text} placeholders, each
// required exactly once.
class PromptTemplate {
 public:
  explicit PromptTemplate(std::string text) : text_(std::move(text)) {
    for (std::string_view key : {"{descriptions}", "{examples}", "{text}"}) {
      const auto first = text_.find(key);
      if (first == std::string::npos || text_.find(key, first + 1) != std::string::npos) {
        throw Error(ErrorCode::parse_error, "prompt template must contain " + std::string(key) + " exactly once");
      }
    }
  }

  std::string render(std::string_view descriptions, std::string_view examples, std::string_view target) const {
    std::string out;
    std::size_t pos = 0;
    while (pos < text_.size()) {
      const std::size_t open = text_.find('{', pos);
      if (open == std::string::npos) {
        out.append(text_, pos);
        break;
      }
      out.append(text_, pos, open - pos);
      const std::string_view rest = std::string_view(text_).substr(open);
      if (rest.starts_with("{descriptions}")) {
        out += descriptions;
        pos = open + 14;
      } else if (rest.starts_with("{examples}")) {
        out += examples;
        pos = open + 10;
      } else if (rest.starts_with("{text}")) {
        out += target;
        pos = open + 6;
      } else {
        out += '{';
        pos = open + 1;
      }
    }
    return out;
  }

  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

inline PromptTemplate load_template(const std::string& path) { return PromptTemplate(read_text_file(path)); }

inline std::string completion_for(const std::set<Technique>& techniques) {
  if (techniques.empty()) return std::string(kNoneCompletion);
  std::string out;
  for (Technique t : techniques) {  // std::set iterates in canonical order
    if (!out.empty()) out += ", ";
    out += to_string(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Few-shot selection

namespace detail {

inline double similarity_or_zero(std::span<const double> a, std::span<const double> b) {
  const double na = vec::norm(a);
  const double nb = vec::norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) return 0.0;
  return vec::dot(a, b) / (na * nb);
}

struct Ranked {
  double sim;
  std::string id;
};

inline void rank(std::vector<Ranked>& items) {
  std::sort(items.begin(), items.end(),
            [](const Ranked& a, const Ranked& b) { return a.sim > b.sim || (a.sim == b.sim && a.id < b.id); });
}

}  // namespace detail

// Two ids by text-to-text similarity, then two by text-to-trigger similarity
// skipping ids already picked. Candidates: ids in `lengths` shorter than
// 500 code points, other than the target, with a text embedding. If too few
// candidates carry trigger embeddings, the remainder comes from the text ranking.
inline std::array<std::string, kFewShotCount> select_fewshots(const std::string& target_id,
                                                              const EmbeddingMatrix& text_embeddings,
                                                              const EmbeddingMatrix& trigger_embeddings,
                                                              const std::map<std::string, std::size_t>& lengths) {
  const auto text_index = text_embeddings.id_index();
  const auto trigger_index = trigger_embeddings.id_index();
  const auto target_it = text_index.find(target_id);
  if (target_it == text_index.end()) {
    throw Error(ErrorCode::invalid_argument, "select_fewshots: no text embedding for target \"" + target_id + "\"");
  }
  const auto target = text_embeddings.row(target_it->second);
  if (trigger_embeddings.rows() > 0 && trigger_embeddings.dim != text_embeddings.dim) {
    throw Error(ErrorCode::dimension_mismatch, "select_fewshots: text and trigger embeddings differ in dim");
  }

  std::vector<detail::Ranked> by_text;
  std::vector<detail::Ranked> by_trigger;
  for (const auto& [id, length] : lengths) {
    if (id == target_id || length >= kFewShotMaxChars) continue;
    const auto it = text_index.find(id);
    if (it == text_index.end()) continue;
    by_text.push_back({detail::similarity_or_zero(target, text_embeddings.row(it->second)), id});
    if (const auto tr = trigger_index.find(id); tr != trigger_index.end()) {
      by_trigger.push_back({detail::similarity_or_zero(target, trigger_embeddings.row(tr->second)), id});
    }
  }
  if (by_text.size() < kFewShotCount) {
    throw Error(ErrorCode::invalid_argument, "select_fewshots: only " + std::to_string(by_text.size()) +
                                                 " eligible candidates for \"" + target_id + "\"");
  }
  detail::rank(by_text);
  detail::rank(by_trigger);

  std::array<std::string, kFewShotCount> picked;
  std::size_t n = 0;
  const auto already = [&](const std::string& id) { return std::find(picked.begin(), picked.begin() + n, id) != picked.begin() + n; };
  for (const auto& r : by_text) {
    if (n == 2) break;
    picked[n++] = r.id;
  }
  for (const auto& r : by_trigger) {
    if (n == kFewShotCount) break;
    if (!already(r.id)) picked[n++] = r.id;
  }
  for (const auto& r : by_text) {
    if (n == kFewShotCount) break;
    if (!already(r.id)) picked[n++] = r.id;
  }
  return picked;
}

struct PromptRecord {
  std::string id;
  std::string prompt;
  std::string completion;
  std::array<std::string, kFewShotCount> fewshot_ids;
};

inline std::string render_descriptions(const DescriptionCatalog& catalog) {
  std::string out;
  for (std::size_t i = 0; i < kNumTechniques; ++i) {
    out += "- " + std::string(kTechniqueNames[i]) + " (" + catalog[i].name + "): " + catalog[i].description + "\n";
  }
  if (!out.empty()) out.pop_back();
  return out;
}

inline std::vector<PromptRecord> build_prompts(std::span<const Sample> dataset, const EmbeddingMatrix& text_embeddings,
                                               const EmbeddingMatrix& trigger_embeddings,
                                               const DescriptionCatalog& catalog, const PromptTemplate& tmpl) {
  std::map<std::string, std::size_t> lengths;
  std::unordered_map<std::string, const Sample*> by_id;
  for (const Sample& s : dataset) {
    lengths[s.id] = codepoint_count(s.content);
    by_id[s.id] = &s;
  }
  const std::string descriptions = render_descriptions(catalog);
  std::vector<PromptRecord> out;
  out.reserve(dataset.size());
  for (const Sample& s : dataset) {
    PromptRecord rec;
    rec.id = s.id;
    rec.fewshot_ids = select_fewshots(s.id, text_embeddings, trigger_embeddings, lengths);
    std::string examples;
    for (std::size_t k = 0; k < kFewShotCount; ++k) {
      const Sample& ex = *by_id.at(rec.fewshot_ids[k]);
      if (k > 0) examples += "\n\n";
      examples += "Example " + std::to_string(k + 1) + "\nPost: " + ex.content +
                  "\nTechniques used: " + completion_for(ex.techniques);
    }
    rec.prompt = tmpl.render(descriptions, examples, s.content);
    rec.completion = completion_for(s.techniques);
    out.push_back(std::move(rec));
  }
  return out;
}

inline void write_prompts(const std::string& path, std::span<const PromptRecord> records) {
  auto out = detail::open_out(path);
  for (const auto& r : records) {
    out << nlohmann::json{{"id", r.id}, {"prompt", r.prompt}, {"completion", r.completion}}.dump() << '\n';
  }
}

}  // namespace manipdet
