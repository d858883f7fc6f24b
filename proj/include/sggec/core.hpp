#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sggec/utf8.hpp"

namespace sggec {

// Error taxonomy: data errors (bad input content), config errors (bad setup),
// io errors (filesystem), contract violations (caller bugs).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

// A token is a Unicode codepoint or one of the reserved symbols below.
// Reserved symbols live above the Unicode range so they can never collide
// with corpus text.
using Token = char32_t;

namespace sym {
inline constexpr Token PAD = 0x110000;
inline constexpr Token UNK = 0x110001;
inline constexpr Token BOS = 0x110002;
inline constexpr Token EOS = 0x110003;
inline constexpr Token MASK = 0x110004;
}  // namespace sym

inline bool is_reserved(Token t) { return t >= 0x110000; }

inline std::string token_to_string(Token t) {
  switch (t) {
    case sym::PAD: return "<pad>";
    case sym::UNK: return "<unk>";
    case sym::BOS: return "<bos>";
    case sym::EOS: return "<eos>";
    case sym::MASK: return "<mask>";
    default: {
      std::string s;
      utf8::append(s, t);
      return s;
    }
  }
}

using CharSeq = std::vector<Token>;

inline CharSeq to_charseq(std::string_view text) {
  std::vector<char32_t> cps = utf8::decode(text);
  return CharSeq(cps.begin(), cps.end());
}

inline std::string to_string(const CharSeq& seq) {
  std::string out;
  for (Token t : seq) out += token_to_string(t);
  return out;
}

// Bijective character <-> id map. Ids 0..4 are fixed for the reserved
// symbols so checkpoints stay portable.
class Vocab {
 public:
  static constexpr int32_t kPadId = 0;
  static constexpr int32_t kUnkId = 1;
  static constexpr int32_t kBosId = 2;
  static constexpr int32_t kEosId = 3;
  static constexpr int32_t kMaskId = 4;
  static constexpr int32_t kNumReserved = 5;

  Vocab() {
    tokens_ = {sym::PAD, sym::UNK, sym::BOS, sym::EOS, sym::MASK};
    for (int32_t i = 0; i < kNumReserved; ++i) ids_[tokens_[i]] = i;
  }

  // Adds a token if not present; returns its id.
  int32_t add(Token t) {
    auto it = ids_.find(t);
    if (it != ids_.end()) return it->second;
    int32_t id = static_cast<int32_t>(tokens_.size());
    tokens_.push_back(t);
    ids_[t] = id;
    return id;
  }

  int32_t encode(Token t) const {
    auto it = ids_.find(t);
    return it == ids_.end() ? kUnkId : it->second;
  }

  std::vector<int32_t> encode(const CharSeq& seq) const {
    std::vector<int32_t> out;
    out.reserve(seq.size());
    for (Token t : seq) out.push_back(encode(t));
    return out;
  }

  Token decode(int32_t id) const {
    if (id < 0 || id >= static_cast<int32_t>(tokens_.size()))
      throw ContractViolation("vocab id out of range: " + std::to_string(id));
    return tokens_[id];
  }

  CharSeq decode(const std::vector<int32_t>& ids) const {
    CharSeq out;
    out.reserve(ids.size());
    for (int32_t id : ids) out.push_back(decode(id));
    return out;
  }

  bool contains(Token t) const { return ids_.count(t) != 0; }
  int32_t size() const { return static_cast<int32_t>(tokens_.size()); }

  // Non-reserved tokens in id order.
  std::vector<Token> characters() const {
    return std::vector<Token>(tokens_.begin() + kNumReserved, tokens_.end());
  }

 private:
  std::vector<Token> tokens_;
  std::unordered_map<Token, int32_t> ids_;
};

inline Vocab build_vocab(const std::vector<CharSeq>& corpus, int64_t min_count = 1) {
  if (corpus.empty()) throw ConfigError("build_vocab: empty corpus");
  std::map<Token, int64_t> counts;  // ordered: codepoint-sorted id assignment
  for (const CharSeq& seq : corpus)
    for (Token t : seq) {
      if (is_reserved(t)) throw DataError("reserved symbol in corpus text");
      ++counts[t];
    }
  Vocab v;
  for (const auto& [tok, n] : counts)
    if (n >= min_count) v.add(tok);
  return v;
}

// Closed set of POS tag names; index order is stable for a loaded config.
class PosTagSet {
 public:
  PosTagSet() : PosTagSet(default_tags()) {}

  explicit PosTagSet(std::vector<std::string> names) : names_(std::move(names)) {
    for (size_t i = 0; i < names_.size(); ++i) {
      if (!index_.emplace(names_[i], static_cast<int32_t>(i)).second)
        throw ConfigError("duplicate POS tag name: " + names_[i]);
    }
  }

  static std::vector<std::string> default_tags() {
    return {"noun",        "verb",      "adjective", "adverb",
            "pronoun",     "preposition", "conjunction", "particle",
            "numeral",     "measure",   "punctuation", "other"};
  }

  int32_t index(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw DataError("unknown POS tag: " + std::string(name));
    return it->second;
  }
  bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }
  const std::string& name(int32_t i) const {
    if (i < 0 || i >= size()) throw ContractViolation("POS tag index out of range");
    return names_[static_cast<size_t>(i)];
  }
  int32_t size() const { return static_cast<int32_t>(names_.size()); }
  int32_t other() const { return index("other"); }
  int32_t punctuation() const { return index("punctuation"); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int32_t> index_;
};

// Per-level semantic class ids; id 0 at every level is the distinguished
// NONE value for out-of-lexicon words.
inline constexpr int32_t kSemNone = 0;

struct SemClassPath {
  std::vector<int32_t> levels;  // size k; levels[l] == kSemNone allowed

  static SemClassPath none(int32_t k) {
    SemClassPath p;
    p.levels.assign(static_cast<size_t>(k), kSemNone);
    return p;
  }
  bool operator==(const SemClassPath&) const = default;
};

enum class FusionMode { kConcatenate, kAccumulate };
enum class AuxTask { kPosCrf, kPosCe, kClassL1, kClassL2, kNone };
enum class CrfEmission { kLogProb, kProb };

struct PipelineConfig {
  int64_t k_c = 80000;
  int32_t top_k_candidates = 3;
  int32_t class_levels = 3;
  FusionMode fusion_mode = FusionMode::kConcatenate;
  AuxTask aux_task = AuxTask::kPosCrf;
  CrfEmission crf_emission = CrfEmission::kLogProb;
  bool tone_sensitive = false;
  int32_t d_model = 128;
  int32_t encoder_layers = 2;
  int32_t decoder_layers = 2;
  int32_t num_heads = 4;
  int32_t ffn_hidden = 256;
  int32_t beam_size = 12;
  uint64_t seed = 1;

  void validate() const {
    if (top_k_candidates < 1) throw ConfigError("top_k_candidates must be >= 1");
    if (class_levels < 1) throw ConfigError("class_levels must be >= 1");
    if (k_c < 0) throw ConfigError("k_c must be non-negative");
    if (d_model < class_levels + 1)
      throw ConfigError("d_model must be >= class_levels + 1");
    if (num_heads < 1 || d_model % num_heads != 0)
      throw ConfigError("d_model must be divisible by num_heads");
    if (beam_size < 1) throw ConfigError("beam_size must be >= 1");
  }
};

namespace detail {
inline std::string trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}
}  // namespace detail

// Flat `key = value` config file, `#` starts a comment.
inline PipelineConfig parse_config(std::istream& in) {
  PipelineConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (size_t h = line.find('#'); h != std::string::npos) line.erase(h);
    std::string s = detail::trim(line);
    if (s.empty()) continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = detail::trim(s.substr(0, eq));
    std::string val = detail::trim(s.substr(eq + 1));
    try {
      if (key == "k_c") cfg.k_c = std::stoll(val);
      else if (key == "top_k_candidates") cfg.top_k_candidates = std::stoi(val);
      else if (key == "class_levels") cfg.class_levels = std::stoi(val);
      else if (key == "fusion_mode") {
        if (val == "concatenate") cfg.fusion_mode = FusionMode::kConcatenate;
        else if (val == "accumulate") cfg.fusion_mode = FusionMode::kAccumulate;
        else throw ConfigError("bad fusion_mode: " + val);
      } else if (key == "aux_task") {
        if (val == "pos_crf") cfg.aux_task = AuxTask::kPosCrf;
        else if (val == "pos_ce") cfg.aux_task = AuxTask::kPosCe;
        else if (val == "class_l1") cfg.aux_task = AuxTask::kClassL1;
        else if (val == "class_l2") cfg.aux_task = AuxTask::kClassL2;
        else if (val == "none") cfg.aux_task = AuxTask::kNone;
        else throw ConfigError("bad aux_task: " + val);
      } else if (key == "crf_emission") {
        if (val == "logprob") cfg.crf_emission = CrfEmission::kLogProb;
        else if (val == "prob") cfg.crf_emission = CrfEmission::kProb;
        else throw ConfigError("bad crf_emission: " + val);
      } else if (key == "tone_sensitive") cfg.tone_sensitive = (val == "true" || val == "1");
      else if (key == "d_model") cfg.d_model = std::stoi(val);
      else if (key == "encoder_layers") cfg.encoder_layers = std::stoi(val);
      else if (key == "decoder_layers") cfg.decoder_layers = std::stoi(val);
      else if (key == "num_heads") cfg.num_heads = std::stoi(val);
      else if (key == "ffn_hidden") cfg.ffn_hidden = std::stoi(val);
      else if (key == "beam_size") cfg.beam_size = std::stoi(val);
      else if (key == "seed") cfg.seed = std::stoull(val);
      else throw ConfigError("config line " + std::to_string(lineno) + ": unknown key " + key);
    } catch (const std::invalid_argument&) {
      throw ConfigError("config line " + std::to_string(lineno) + ": bad value for " + key);
    }
  }
  cfg.validate();
  return cfg;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file: " + path);
  return parse_config(f);
}

}  // namespace sggec
