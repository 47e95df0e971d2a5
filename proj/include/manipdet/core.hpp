#pragma once

// Domain types shared by every module: the technique label set, spans,
// samples, label/probability vectors and dataset validation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace manipdet {

enum class ErrorCode {
  invalid_argument,
  dimension_mismatch,
  parse_error,
  unknown_technique,
  bad_magic,
  truncated,
  non_finite,
  invalid_offsets,
  column_order,
  out_of_range,
  io_error,
  config,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline constexpr std::size_t kNumTechniques = 10;

// Canonical order. Every vector, CSV column and JSON array uses it.
enum class Technique : std::uint8_t {
  appeal_to_fear,
  bandwagon,
  cherry_picking,
  cliche,
  euphoria,
  fud,
  glittering_generalities,
  loaded_language,
  straw_man,
  whataboutism,
};

inline constexpr std::array<std::string_view, kNumTechniques> kTechniqueNames = {
    "appeal_to_fear", "bandwagon",   "cherry_picking", "cliche",
    "euphoria",       "fud",         "glittering_generalities",
    "loaded_language", "straw_man",  "whataboutism",
};

constexpr std::size_t index_of(Technique t) { return static_cast<std::size_t>(t); }

constexpr Technique technique_at(std::size_t i) { return static_cast<Technique>(i); }

constexpr std::string_view to_string(Technique t) { return kTechniqueNames[index_of(t)]; }

inline std::optional<Technique> parse_technique(std::string_view name) {
  for (std::size_t i = 0; i < kNumTechniques; ++i) {
    if (kTechniqueNames[i] == name) return technique_at(i);
  }
  return std::nullopt;
}

inline Technique parse_technique_or_throw(std::string_view name) {
  if (auto t = parse_technique(name)) return *t;
  throw Error(ErrorCode::unknown_technique, "unknown technique \"" + std::string(name) + "\"");
}

inline constexpr std::array<Technique, kNumTechniques> all_techniques() {
  std::array<Technique, kNumTechniques> out{};
  for (std::size_t i = 0; i < kNumTechniques; ++i) out[i] = technique_at(i);
  return out;
}

// Half-open interval [start, end) of code-point indices.
struct CharSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  constexpr std::size_t length() const { return end > start ? end - start : 0; }
  constexpr bool valid() const { return start < end; }
  constexpr bool overlaps(const CharSpan& other) const {
    return start < other.end && other.start < end;
  }
  friend constexpr auto operator<=>(const CharSpan&, const CharSpan&) = default;
};

class LabelVector {
 public:
  LabelVector() = default;
  explicit LabelVector(const std::array<bool, kNumTechniques>& bits) : bits_(bits) {}

  bool operator[](std::size_t i) const { return bits_.at(i); }
  bool has(Technique t) const { return bits_[index_of(t)]; }
  void set(Technique t, bool value = true) { bits_[index_of(t)] = value; }
  void set(std::size_t i, bool value) { bits_.at(i) = value; }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), true));
  }
  const std::array<bool, kNumTechniques>& bits() const { return bits_; }

  friend bool operator==(const LabelVector&, const LabelVector&) = default;

 private:
  std::array<bool, kNumTechniques> bits_{};
};

inline LabelVector label_vector_from_set(const std::set<Technique>& techniques) {
  LabelVector v;
  for (Technique t : techniques) v.set(t);
  return v;
}

inline std::set<Technique> technique_set(const LabelVector& v) {
  std::set<Technique> out;
  for (std::size_t i = 0; i < kNumTechniques; ++i) {
    if (v[i]) out.insert(technique_at(i));
  }
  return out;
}

// Ten probabilities in canonical order, each in [0, 1].
class ProbVector {
 public:
  ProbVector() = default;
  explicit ProbVector(const std::array<double, kNumTechniques>& probs) : probs_(probs) {
    for (std::size_t i = 0; i < kNumTechniques; ++i) {
      if (!(probs_[i] >= 0.0 && probs_[i] <= 1.0)) {
        throw Error(ErrorCode::out_of_range, "probability for " + std::string(kTechniqueNames[i]) +
                                                 " outside [0, 1]: " + std::to_string(probs_[i]));
      }
    }
  }

  double operator[](std::size_t i) const { return probs_.at(i); }
  double at(Technique t) const { return probs_[index_of(t)]; }
  const std::array<double, kNumTechniques>& values() const { return probs_; }

  friend bool operator==(const ProbVector&, const ProbVector&) = default;

 private:
  std::array<double, kNumTechniques> probs_{};
};

enum class Language { uk, ru };

inline std::string_view to_string(Language l) { return l == Language::uk ? "uk" : "ru"; }

inline std::optional<Language> parse_language(std::string_view s) {
  if (s == "uk") return Language::uk;
  if (s == "ru") return Language::ru;
  return std::nullopt;
}

struct Sample {
  std::string id;
  std::string content;  // UTF-8
  std::optional<Language> lang;
  std::set<Technique> techniques;
  std::vector<CharSpan> trigger_spans;

  LabelVector labels() const { return label_vector_from_set(techniques); }
};

// ---------------------------------------------------------------------------
// UTF-8 helpers. Span indices count Unicode scalar values.

inline std::optional<std::u32string> try_decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    char32_t cp = 0;
    std::size_t len = 0;
    if (b0 < 0x80) {
      cp = b0;
      len = 1;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      len = 2;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      len = 3;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      len = 4;
    } else {
      return std::nullopt;
    }
    if (i + len > s.size()) return std::nullopt;
    for (std::size_t k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) return std::nullopt;
      cp = (cp << 6) | (b & 0x3F);
    }
    // reject overlong forms, surrogates and out-of-range values
    static constexpr char32_t kMin[5] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return std::nullopt;
    out.push_back(cp);
    i += len;
  }
  return out;
}

inline std::u32string decode_utf8(std::string_view s) {
  auto decoded = try_decode_utf8(s);
  if (!decoded) throw Error(ErrorCode::parse_error, "invalid UTF-8 text");
  return std::move(*decoded);
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline std::string encode_utf8(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t cp : s) append_utf8(out, cp);
  return out;
}

inline std::size_t codepoint_count(std::string_view s) { return decode_utf8(s).size(); }

// ---------------------------------------------------------------------------
// Dataset validation. Violations are data, never exceptions.

struct Violation {
  enum class Kind { empty_id, duplicate_id, invalid_span, span_out_of_range, invalid_utf8 };
  Kind kind;
  std::size_t index = 0;  // position of the offending sample
  std::string sample_id;
  std::string message;
};

inline std::string_view to_string(Violation::Kind k) {
  switch (k) {
    case Violation::Kind::empty_id: return "empty-id";
    case Violation::Kind::duplicate_id: return "duplicate-id";
    case Violation::Kind::invalid_span: return "invalid-span";
    case Violation::Kind::span_out_of_range: return "span-out-of-range";
    case Violation::Kind::invalid_utf8: return "invalid-utf8";
  }
  return "unknown";
}

inline std::vector<Violation> validate_dataset(std::span<const Sample> samples) {
  std::vector<Violation> report;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    if (s.id.empty()) {
      report.push_back({Violation::Kind::empty_id, i, s.id, "sample has an empty id"});
    } else if (!seen.insert(s.id).second) {
      report.push_back({Violation::Kind::duplicate_id, i, s.id, "duplicate id \"" + s.id + "\""});
    }
    const auto decoded = try_decode_utf8(s.content);
    if (!decoded) {
      report.push_back({Violation::Kind::invalid_utf8, i, s.id, "content is not valid UTF-8"});
      continue;
    }
    for (const CharSpan& span : s.trigger_spans) {
      const std::string where =
          "[" + std::to_string(span.start) + ", " + std::to_string(span.end) + ")";
      if (!span.valid()) {
        report.push_back({Violation::Kind::invalid_span, i, s.id, "span " + where + " is empty or reversed"});
      } else if (span.end > decoded->size()) {
        report.push_back({Violation::Kind::span_out_of_range, i, s.id,
                          "span " + where + " exceeds text length " + std::to_string(decoded->size())});
      }
    }
  }
  return report;
}

}  // namespace manipdet
