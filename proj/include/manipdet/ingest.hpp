#pragma once

// Readers and writers for every on-disk artifact.
//
//   dataset JSONL   {"id", "content", "lang"?, "techniques": [...], "trigger_words": [[s, e], ...]}
//   EMB1            "EMB1" u32 rows u32 dim, rows*dim f32 LE; ids in <path>.ids.json
//   TEM1            "TEM1" u32 count, then per sample: u16 id_len, id bytes, u32 T, u32 dim,
//                   T*dim f32 LE, T pairs of u32 (start, end)
//   prob CSV        id,<10 canonical labels>
//   token prob CSV  id,token_index,prob
//
// All integers and floats on disk are little-endian. Offsets are code points.

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "manipdet/core.hpp"

namespace manipdet {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Domain types

struct EmbeddingMatrix {
  std::vector<std::string> ids;
  std::size_t dim = 0;
  std::vector<double> data;  // row-major, ids.size() * dim

  std::size_t rows() const { return ids.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data).subspan(i * dim, dim);
  }
  std::span<double> row(std::size_t i) { return std::span<double>(data).subspan(i * dim, dim); }

  // Row index by id; throws if absent.
  std::size_t index_of(std::string_view id) const {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] == id) return i;
    }
    throw Error(ErrorCode::invalid_argument, "id \"" + std::string(id) + "\" not in embedding matrix");
  }

  std::unordered_map<std::string, std::size_t> id_index() const {
    std::unordered_map<std::string, std::size_t> out;
    for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], i);
    return out;
  }
};

// Character offsets of one token. (0, 0) marks a special token.
struct TokenOffset {
  std::uint32_t start = 0;
  std::uint32_t end = 0;

  constexpr bool is_special() const { return start == 0 && end == 0; }
  friend constexpr bool operator==(const TokenOffset&, const TokenOffset&) = default;
};

struct TokenEmbeddingSequence {
  std::string id;
  std::size_t dim = 0;
  std::vector<double> tokens;  // T * dim, row-major
  std::vector<TokenOffset> offsets;

  std::size_t length() const { return offsets.size(); }
  std::span<const double> token(std::size_t i) const {
    return std::span<const double>(tokens).subspan(i * dim, dim);
  }
};

struct ProbTable {
  std::vector<std::string> ids;
  std::vector<ProbVector> probs;
};

// ---------------------------------------------------------------------------
// Low-level helpers

namespace detail {

inline std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw Error(ErrorCode::io_error, "cannot open \"" + path + "\" for reading");
  return in;
}

inline std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? (std::ios::binary | std::ios::trunc) : std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot open \"" + path + "\" for writing");
  return out;
}

inline void put_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF)};
  out.write(b, 2);
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

inline void put_f32(std::ostream& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

// Reads exactly n bytes or throws a truncation error.
inline void get_bytes(std::istream& in, char* dst, std::size_t n, std::string_view what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw Error(ErrorCode::truncated, "truncated payload while reading " + std::string(what));
  }
}

inline std::uint16_t get_u16(std::istream& in, std::string_view what) {
  unsigned char b[2];
  get_bytes(in, reinterpret_cast<char*>(b), 2, what);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t get_u32(std::istream& in, std::string_view what) {
  unsigned char b[4];
  get_bytes(in, reinterpret_cast<char*>(b), 4, what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline float get_f32(std::istream& in, std::string_view what) {
  return std::bit_cast<float>(get_u32(in, what));
}

inline void expect_magic(std::istream& in, std::string_view magic) {
  char buf[4] = {};
  in.read(buf, 4);
  if (in.gcount() != 4 || std::string_view(buf, 4) != magic) {
    throw Error(ErrorCode::bad_magic, "bad magic: expected \"" + std::string(magic) + "\"");
  }
}

inline void expect_eof(std::istream& in, std::string_view what) {
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::parse_error, "trailing bytes after " + std::string(what));
  }
}

inline float checked_f32(double v, std::string_view what) {
  if (!std::isfinite(v)) throw Error(ErrorCode::non_finite, "non-finite value in " + std::string(what));
  const auto f = static_cast<float>(v);
  if (!std::isfinite(f)) throw Error(ErrorCode::non_finite, "value overflows f32 in " + std::string(what));
  return f;
}

inline std::uint32_t checked_u32(std::size_t v, std::string_view what) {
  if (v > 0xFFFFFFFFull) throw Error(ErrorCode::out_of_range, std::string(what) + " exceeds u32");
  return static_cast<std::uint32_t>(v);
}

inline double parse_double(std::string_view s, std::string_view what) {
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw Error(ErrorCode::parse_error, "cannot parse number \"" + std::string(s) + "\" in " + std::string(what));
  }
  return v;
}

inline std::size_t parse_index(std::string_view s, std::string_view what) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::parse_error, "cannot parse integer \"" + std::string(s) + "\" in " + std::string(what));
  }
  return v;
}

inline std::string format_g9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

inline std::string_view chomp(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dataset JSONL

struct DatasetFile {
  std::vector<Sample> samples;
  std::vector<Violation> violations;
};

// Parses one JSON object into a Sample. With require_content=false the
// content field may be absent (prediction files).
inline Sample sample_from_json(const json& j, bool require_content = true) {
  if (!j.is_object()) throw Error(ErrorCode::parse_error, "record is not a JSON object");
  Sample s;
  if (!j.contains("id") || !j["id"].is_string()) throw Error(ErrorCode::parse_error, "missing string field \"id\"");
  s.id = j["id"].get<std::string>();
  if (j.contains("content")) {
    if (!j["content"].is_string()) throw Error(ErrorCode::parse_error, "field \"content\" must be a string");
    s.content = j["content"].get<std::string>();
  } else if (require_content) {
    throw Error(ErrorCode::parse_error, "missing string field \"content\"");
  }
  if (j.contains("lang") && !j["lang"].is_null()) {
    const auto tag = j["lang"].get<std::string>();
    s.lang = parse_language(tag);
    if (!s.lang) throw Error(ErrorCode::parse_error, "unknown lang tag \"" + tag + "\"");
  }
  if (j.contains("techniques") && !j["techniques"].is_null()) {
    if (!j["techniques"].is_array()) throw Error(ErrorCode::parse_error, "field \"techniques\" must be an array");
    for (const auto& t : j["techniques"]) {
      if (!t.is_string()) throw Error(ErrorCode::parse_error, "technique entries must be strings");
      s.techniques.insert(parse_technique_or_throw(t.get<std::string>()));
    }
  }
  if (j.contains("trigger_words") && !j["trigger_words"].is_null()) {
    if (!j["trigger_words"].is_array()) throw Error(ErrorCode::parse_error, "field \"trigger_words\" must be an array");
    for (const auto& pair : j["trigger_words"]) {
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_unsigned() || !pair[1].is_number_unsigned()) {
        throw Error(ErrorCode::parse_error, "trigger_words entries must be [start, end] pairs of non-negative integers");
      }
      s.trigger_spans.push_back({pair[0].get<std::size_t>(), pair[1].get<std::size_t>()});
    }
  }
  return s;
}

inline json sample_to_json(const Sample& s) {
  json j;
  j["id"] = s.id;
  j["content"] = s.content;
  if (s.lang) j["lang"] = std::string(to_string(*s.lang));
  j["techniques"] = json::array();
  for (Technique t : s.techniques) j["techniques"].push_back(std::string(to_string(t)));
  j["trigger_words"] = json::array();
  for (const CharSpan& sp : s.trigger_spans) j["trigger_words"].push_back({sp.start, sp.end});
  return j;
}

inline std::vector<Sample> parse_jsonl(std::istream& in, bool require_content) {
  std::vector<Sample> samples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto view = detail::chomp(line);
    if (view.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      samples.push_back(sample_from_json(json::parse(view), require_content));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::parse_error, "line " + std::to_string(lineno) + ": malformed JSON: " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return samples;
}

inline DatasetFile read_dataset(std::istream& in) {
  DatasetFile out;
  out.samples = parse_jsonl(in, true);
  out.violations = validate_dataset(out.samples);
  return out;
}

inline DatasetFile read_dataset(const std::string& path) {
  auto in = detail::open_in(path);
  return read_dataset(in);
}

// Prediction files carry id plus techniques and/or trigger_words; content is optional.
inline std::vector<Sample> read_predictions(const std::string& path) {
  auto in = detail::open_in(path);
  return parse_jsonl(in, false);
}

inline void write_dataset(const std::string& path, std::span<const Sample> samples) {
  auto out = detail::open_out(path);
  for (const Sample& s : samples) out << sample_to_json(s).dump() << '\n';
}

inline void write_label_predictions(const std::string& path, std::span<const std::string> ids,
                                    std::span<const LabelVector> labels) {
  if (ids.size() != labels.size()) throw Error(ErrorCode::dimension_mismatch, "ids/labels length mismatch");
  auto out = detail::open_out(path);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    json j;
    j["id"] = ids[i];
    j["techniques"] = json::array();
    for (Technique t : technique_set(labels[i])) j["techniques"].push_back(std::string(to_string(t)));
    out << j.dump() << '\n';
  }
}

inline void write_span_predictions(const std::string& path, std::span<const std::string> ids,
                                   std::span<const std::vector<CharSpan>> spans) {
  if (ids.size() != spans.size()) throw Error(ErrorCode::dimension_mismatch, "ids/spans length mismatch");
  auto out = detail::open_out(path);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    json j;
    j["id"] = ids[i];
    j["trigger_words"] = json::array();
    for (const CharSpan& sp : spans[i]) j["trigger_words"].push_back({sp.start, sp.end});
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// EMB1

inline std::string ids_sidecar_path(const std::string& path) { return path + ".ids.json"; }

inline void validate_embedding_matrix(const EmbeddingMatrix& m) {
  if (m.dim == 0) throw Error(ErrorCode::invalid_argument, "embedding dim must be positive");
  if (m.data.size() != m.ids.size() * m.dim) {
    throw Error(ErrorCode::dimension_mismatch, "embedding payload size does not match rows * dim");
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : m.ids) {
    if (!seen.insert(id).second) throw Error(ErrorCode::invalid_argument, "duplicate id \"" + id + "\" in embedding matrix");
  }
  for (double v : m.data) {
    if (!std::isfinite(v)) throw Error(ErrorCode::non_finite, "non-finite entry in embedding matrix");
  }
}

// Writes the binary block only (no ids).
inline void write_emb1_block(std::ostream& out, std::size_t rows, std::size_t dim, std::span<const double> data) {
  if (data.size() != rows * dim) throw Error(ErrorCode::dimension_mismatch, "EMB1 block size mismatch");
  out.write("EMB1", 4);
  detail::put_u32(out, detail::checked_u32(rows, "row count"));
  detail::put_u32(out, detail::checked_u32(dim, "dim"));
  for (double v : data) detail::put_f32(out, detail::checked_f32(v, "EMB1 payload"));
}

struct Emb1Block {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> data;
};

inline Emb1Block read_emb1_block(std::istream& in) {
  detail::expect_magic(in, "EMB1");
  Emb1Block b;
  b.rows = detail::get_u32(in, "EMB1 header");
  b.dim = detail::get_u32(in, "EMB1 header");
  if (b.dim == 0) throw Error(ErrorCode::parse_error, "EMB1 dim must be positive");
  b.data.resize(b.rows * b.dim);
  for (double& v : b.data) {
    const float f = detail::get_f32(in, "EMB1 payload");
    if (!std::isfinite(f)) throw Error(ErrorCode::non_finite, "non-finite entry in EMB1 payload");
    v = f;
  }
  return b;
}

inline void write_embedding_matrix(const EmbeddingMatrix& m, const std::string& path) {
  validate_embedding_matrix(m);
  {
    auto out = detail::open_out(path, true);
    write_emb1_block(out, m.rows(), m.dim, m.data);
  }
  auto sidecar = detail::open_out(ids_sidecar_path(path));
  sidecar << json(m.ids).dump() << '\n';
}

inline EmbeddingMatrix read_embedding_matrix(const std::string& path) {
  Emb1Block block;
  {
    auto in = detail::open_in(path, true);
    block = read_emb1_block(in);
    detail::expect_eof(in, "EMB1 payload");
  }
  auto sidecar_in = detail::open_in(ids_sidecar_path(path));
  json ids;
  try {
    ids = json::parse(sidecar_in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, "malformed id sidecar: " + std::string(e.what()));
  }
  if (!ids.is_array() || ids.size() != block.rows) {
    throw Error(ErrorCode::dimension_mismatch, "id sidecar length does not match EMB1 row count");
  }
  EmbeddingMatrix m;
  for (const auto& id : ids) {
    if (!id.is_string()) throw Error(ErrorCode::parse_error, "id sidecar entries must be strings");
    m.ids.push_back(id.get<std::string>());
  }
  m.dim = block.dim;
  m.data = std::move(block.data);
  validate_embedding_matrix(m);
  return m;
}

// ---------------------------------------------------------------------------
// TEM1

inline void validate_token_sequence(const TokenEmbeddingSequence& s) {
  const auto fail = [&](const std::string& msg) {
    throw Error(ErrorCode::invalid_offsets, "sample \"" + s.id + "\": " + msg);
  };
  if (s.dim == 0) fail("dim must be positive");
  if (s.offsets.empty()) fail("sequence has no tokens");
  if (s.tokens.size() != s.offsets.size() * s.dim) fail("offset count does not match token count");
  if (!s.offsets.front().is_special()) fail("row 0 must be the sequence-start token with offset (0, 0)");
  std::uint32_t last_start = 0;
  bool seen_regular = false;
  for (std::size_t i = 0; i < s.offsets.size(); ++i) {
    const TokenOffset o = s.offsets[i];
    if (o.is_special()) continue;
    if (o.start >= o.end) {
      fail("token " + std::to_string(i) + " has offset (" + std::to_string(o.start) + ", " +
           std::to_string(o.end) + ") with start >= end");
    }
    if (seen_regular && o.start < last_start) fail("token " + std::to_string(i) + " start decreases");
    last_start = o.start;
    seen_regular = true;
  }
  for (double v : s.tokens) {
    if (!std::isfinite(v)) throw Error(ErrorCode::non_finite, "sample \"" + s.id + "\": non-finite token embedding");
  }
}

inline void write_token_embeddings(std::ostream& out, std::span<const TokenEmbeddingSequence> seqs) {
  out.write("TEM1", 4);
  detail::put_u32(out, detail::checked_u32(seqs.size(), "sample count"));
  for (const auto& s : seqs) {
    validate_token_sequence(s);
    if (s.id.size() > 0xFFFF) throw Error(ErrorCode::out_of_range, "sample id longer than 65535 bytes");
    detail::put_u16(out, static_cast<std::uint16_t>(s.id.size()));
    out.write(s.id.data(), static_cast<std::streamsize>(s.id.size()));
    detail::put_u32(out, detail::checked_u32(s.length(), "token count"));
    detail::put_u32(out, detail::checked_u32(s.dim, "dim"));
    for (double v : s.tokens) detail::put_f32(out, detail::checked_f32(v, "TEM1 payload"));
    for (const auto& o : s.offsets) {
      detail::put_u32(out, o.start);
      detail::put_u32(out, o.end);
    }
  }
}

inline std::vector<TokenEmbeddingSequence> read_token_embeddings(std::istream& in) {
  detail::expect_magic(in, "TEM1");
  const std::uint32_t count = detail::get_u32(in, "TEM1 header");
  std::vector<TokenEmbeddingSequence> out;
  std::unordered_set<std::string> seen;
  for (std::uint32_t n = 0; n < count; ++n) {
    TokenEmbeddingSequence s;
    const std::uint16_t id_len = detail::get_u16(in, "TEM1 id length");
    s.id.resize(id_len);
    detail::get_bytes(in, s.id.data(), id_len, "TEM1 id");
    const std::uint32_t t = detail::get_u32(in, "TEM1 token count");
    s.dim = detail::get_u32(in, "TEM1 dim");
    s.tokens.resize(static_cast<std::size_t>(t) * s.dim);
    for (double& v : s.tokens) {
      const float f = detail::get_f32(in, "TEM1 payload");
      if (!std::isfinite(f)) throw Error(ErrorCode::non_finite, "sample \"" + s.id + "\": non-finite token embedding");
      v = f;
    }
    s.offsets.resize(t);
    for (auto& o : s.offsets) {
      o.start = detail::get_u32(in, "TEM1 offsets");
      o.end = detail::get_u32(in, "TEM1 offsets");
    }
    validate_token_sequence(s);
    if (!seen.insert(s.id).second) throw Error(ErrorCode::parse_error, "duplicate sample id \"" + s.id + "\" in TEM1");
    out.push_back(std::move(s));
  }
  detail::expect_eof(in, "TEM1 payload");
  return out;
}

inline void write_token_embeddings(std::span<const TokenEmbeddingSequence> seqs, const std::string& path) {
  auto out = detail::open_out(path, true);
  write_token_embeddings(out, seqs);
}

inline std::vector<TokenEmbeddingSequence> read_token_embeddings(const std::string& path) {
  auto in = detail::open_in(path, true);
  return read_token_embeddings(in);
}

// ---------------------------------------------------------------------------
// Probability CSV

inline std::string prob_table_header() {
  std::string h = "id";
  for (auto name : kTechniqueNames) {
    h += ',';
    h += name;
  }
  return h;
}

inline void write_prob_table(const ProbTable& table, std::ostream& out) {
  if (table.ids.size() != table.probs.size()) throw Error(ErrorCode::dimension_mismatch, "prob table ids/rows mismatch");
  out << prob_table_header() << '\n';
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    if (table.ids[i].find_first_of(",\n\r\"") != std::string::npos) {
      throw Error(ErrorCode::invalid_argument, "id \"" + table.ids[i] + "\" cannot be written to CSV");
    }
    out << table.ids[i];
    for (double p : table.probs[i].values()) out << ',' << detail::format_g9(p);
    out << '\n';
  }
}

inline ProbTable read_prob_table(std::istream& in) {
  ProbTable table;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::parse_error, "prob table is missing its header");
  const auto header = detail::split_csv(detail::chomp(line));
  if (header.size() != kNumTechniques + 1 || header[0] != "id") {
    throw Error(ErrorCode::column_order, "prob table header must be \"" + prob_table_header() + "\"");
  }
  for (std::size_t i = 0; i < kNumTechniques; ++i) {
    if (header[i + 1] != kTechniqueNames[i]) {
      throw Error(ErrorCode::column_order, "prob table column " + std::to_string(i + 1) + " is \"" +
                                               std::string(header[i + 1]) + "\", expected \"" +
                                               std::string(kTechniqueNames[i]) + "\"");
    }
  }
  std::unordered_set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto view = detail::chomp(line);
    if (view.empty()) continue;
    const auto cells = detail::split_csv(view);
    const std::string where = "prob table line " + std::to_string(lineno);
    if (cells.size() != kNumTechniques + 1) throw Error(ErrorCode::parse_error, where + ": expected 11 cells");
    std::string id(cells[0]);
    if (!seen.insert(id).second) throw Error(ErrorCode::parse_error, where + ": duplicate id \"" + id + "\"");
    std::array<double, kNumTechniques> values{};
    for (std::size_t i = 0; i < kNumTechniques; ++i) values[i] = detail::parse_double(cells[i + 1], where);
    try {
      table.probs.emplace_back(values);
    } catch (const Error& e) {
      throw Error(ErrorCode::out_of_range, where + ": " + e.what());
    }
    table.ids.push_back(std::move(id));
  }
  return table;
}

inline void write_prob_table(const ProbTable& table, const std::string& path) {
  auto out = detail::open_out(path);
  write_prob_table(table, out);
}

inline ProbTable read_prob_table(const std::string& path) {
  auto in = detail::open_in(path);
  return read_prob_table(in);
}

// ---------------------------------------------------------------------------
// Token probability CSV: one row per token, token indices contiguous from 0.

struct TokenProbRows {
  std::vector<std::string> ids;              // first-appearance order
  std::vector<std::vector<double>> probs;    // aligned with ids
};

inline void write_token_probs(const TokenProbRows& rows, std::ostream& out) {
  out << "id,token_index,prob\n";
  for (std::size_t i = 0; i < rows.ids.size(); ++i) {
    for (std::size_t t = 0; t < rows.probs[i].size(); ++t) {
      out << rows.ids[i] << ',' << t << ',' << detail::format_g9(rows.probs[i][t]) << '\n';
    }
  }
}

inline TokenProbRows read_token_probs(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::chomp(line) != "id,token_index,prob") {
    throw Error(ErrorCode::column_order, "token prob CSV header must be \"id,token_index,prob\"");
  }
  TokenProbRows rows;
  std::unordered_map<std::string, std::size_t> where_id;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto view = detail::chomp(line);
    if (view.empty()) continue;
    const std::string where = "token prob line " + std::to_string(lineno);
    const auto cells = detail::split_csv(view);
    if (cells.size() != 3) throw Error(ErrorCode::parse_error, where + ": expected 3 cells");
    std::string id(cells[0]);
    const std::size_t index = detail::parse_index(cells[1], where);
    const double p = detail::parse_double(cells[2], where);
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::out_of_range, where + ": probability outside [0, 1]");
    auto [it, inserted] = where_id.emplace(id, rows.ids.size());
    if (inserted) {
      rows.ids.push_back(id);
      rows.probs.emplace_back();
    }
    auto& seq = rows.probs[it->second];
    if (index != seq.size()) throw Error(ErrorCode::parse_error, where + ": token indices must be contiguous from 0");
    seq.push_back(p);
  }
  return rows;
}

inline void write_token_probs(const TokenProbRows& rows, const std::string& path) {
  auto out = detail::open_out(path);
  write_token_probs(rows, out);
}

inline TokenProbRows read_token_probs(const std::string& path) {
  auto in = detail::open_in(path);
  return read_token_probs(in);
}

}  // namespace manipdet
