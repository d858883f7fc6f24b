#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sggec/core.hpp"

namespace sggec {

// A pronunciation syllable: base letters plus optional tone digit 1-5
// (tone 0 means "no tone recorded").
struct Syllable {
  std::string base;
  int tone = 0;

  bool operator==(const Syllable&) const = default;
  auto operator<=>(const Syllable&) const = default;

  static Syllable parse(std::string_view s) {
    if (s.empty()) throw DataError("empty syllable");
    Syllable syl;
    std::string_view body = s;
    char last = s.back();
    if (last >= '1' && last <= '5') {
      syl.tone = last - '0';
      body = s.substr(0, s.size() - 1);
    }
    if (body.empty()) throw DataError("syllable has no letters: " + std::string(s));
    for (char c : body)
      if (!std::isalpha(static_cast<unsigned char>(c)))
        throw DataError("invalid syllable character in: " + std::string(s));
    syl.base.assign(body.begin(), body.end());
    std::transform(syl.base.begin(), syl.base.end(), syl.base.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return syl;
  }

  std::string str() const { return tone ? base + std::to_string(tone) : base; }
};

// character -> set of readings; induces SimSet (homophone classes).
class PhoneticLexicon {
 public:
  void add(Token c, const Syllable& s) {
    auto& set = readings_[c];
    if (std::find(set.begin(), set.end(), s) == set.end()) {
      set.push_back(s);
      std::sort(set.begin(), set.end());
      base_index_[s.base].insert(c);
      toned_index_[s.str()].insert(c);
    }
  }

  const std::vector<Syllable>* readings(Token c) const {
    auto it = readings_.find(c);
    return it == readings_.end() ? nullptr : &it->second;
  }

  bool contains(Token c) const { return readings_.count(c) != 0; }
  size_t size() const { return readings_.size(); }

  // All characters sharing at least one reading with c, excluding c itself.
  // Polyphonic characters contribute the union over all readings.
  std::set<Token> sim_set(Token c, bool tone_sensitive = false) const {
    std::set<Token> out;
    auto it = readings_.find(c);
    if (it == readings_.end()) return out;
    for (const Syllable& s : it->second) {
      const auto& index = tone_sensitive ? toned_index_ : base_index_;
      auto hit = index.find(tone_sensitive ? s.str() : s.base);
      if (hit == index.end()) continue;
      out.insert(hit->second.begin(), hit->second.end());
    }
    out.erase(c);
    return out;
  }

 private:
  std::unordered_map<Token, std::vector<Syllable>> readings_;
  std::map<std::string, std::set<Token>> base_index_;
  std::map<std::string, std::set<Token>> toned_index_;
};

// File format: UTF-8 TSV, `char<TAB>syll1,syll2,...`. Duplicate lines for
// one character merge their syllable sets.
inline PhoneticLexicon parse_phonetic_lexicon(std::istream& in) {
  PhoneticLexicon lex;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError("phonetic lexicon line " + std::to_string(lineno) + ": missing TAB");
    std::vector<char32_t> cps = utf8::decode(line.substr(0, tab));
    if (cps.size() != 1)
      throw DataError("phonetic lexicon line " + std::to_string(lineno) +
                      ": key must be a single character");
    std::string rest = line.substr(tab + 1);
    std::stringstream ss(rest);
    std::string part;
    bool any = false;
    while (std::getline(ss, part, ',')) {
      part = detail::trim(part);
      if (part.empty()) continue;
      try {
        lex.add(cps[0], Syllable::parse(part));
      } catch (const DataError& e) {
        throw DataError("phonetic lexicon line " + std::to_string(lineno) + ": " + e.what());
      }
      any = true;
    }
    if (!any)
      throw DataError("phonetic lexicon line " + std::to_string(lineno) + ": no syllables");
  }
  return lex;
}

inline PhoneticLexicon load_phonetic_lexicon(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open phonetic lexicon: " + path);
  return parse_phonetic_lexicon(f);
}

inline bool is_punctuation(Token c) {
  if (is_reserved(c)) return false;
  // ASCII punctuation.
  if (c < 0x80)
    return std::ispunct(static_cast<unsigned char>(c)) != 0;
  // CJK symbols/punctuation, fullwidth forms, and general punctuation blocks.
  return (c >= 0x3000 && c <= 0x303F) || (c >= 0xFF00 && c <= 0xFF0F) ||
         (c >= 0xFF1A && c <= 0xFF20) || (c >= 0xFF3B && c <= 0xFF40) ||
         (c >= 0xFF5B && c <= 0xFF65) || (c >= 0x2000 && c <= 0x206F);
}

// Per-character occurrence counts over the training corpus, plus the
// punctuation classification used by the maskability rule.
class FrequencyTable {
 public:
  void add(Token c, int64_t n = 1) { counts_[c] += n; }

  int64_t count(Token c) const {
    auto it = counts_.find(c);
    return it == counts_.end() ? 0 : it->second;
  }

  int64_t total() const {
    int64_t t = 0;
    for (const auto& [c, n] : counts_) t += n;
    return t;
  }

  const std::map<Token, int64_t>& counts() const { return counts_; }

  void save(std::ostream& out) const {
    for (const auto& [c, n] : counts_)
      out << token_to_string(c) << '\t' << n << '\n';
  }

  static FrequencyTable parse(std::istream& in) {
    FrequencyTable ft;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      size_t tab = line.find('\t');
      if (tab == std::string::npos)
        throw DataError("frequency table line " + std::to_string(lineno) + ": missing TAB");
      std::vector<char32_t> cps = utf8::decode(line.substr(0, tab));
      if (cps.size() != 1)
        throw DataError("frequency table line " + std::to_string(lineno) +
                        ": key must be a single character");
      ft.add(cps[0], std::stoll(line.substr(tab + 1)));
    }
    return ft;
  }

 private:
  std::map<Token, int64_t> counts_;
};

inline FrequencyTable load_frequency_table(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open frequency table: " + path);
  return FrequencyTable::parse(f);
}

inline FrequencyTable build_frequency_table(const std::vector<CharSeq>& corpus) {
  FrequencyTable ft;
  for (const CharSeq& seq : corpus)
    for (Token c : seq) ft.add(c);
  return ft;
}

// A character stays fixed (not maskable) when it is punctuation or its
// corpus count exceeds k_c. Boundary count == k_c is still maskable.
inline bool is_maskable(const FrequencyTable& ft, Token c, int64_t k_c) {
  if (is_punctuation(c)) return false;
  return ft.count(c) <= k_c;
}

// word -> POS tag; single-character entries double as the per-character
// fallback for unknown words.
class PosLexicon {
 public:
  explicit PosLexicon(PosTagSet tags = PosTagSet()) : tags_(std::move(tags)) {}

  void add(const CharSeq& word, int32_t tag) {
    if (word.empty()) throw DataError("empty word in POS lexicon");
    if (tag < 0 || tag >= tags_.size()) throw DataError("POS tag index out of range");
    entries_[word] = tag;
    max_word_len_ = std::max(max_word_len_, word.size());
  }

  const PosTagSet& tags() const { return tags_; }
  size_t max_word_len() const { return max_word_len_; }

  bool contains(const CharSeq& word) const { return entries_.count(word) != 0; }

  // -1 when absent.
  int32_t tag_of(const CharSeq& word) const {
    auto it = entries_.find(word);
    return it == entries_.end() ? -1 : it->second;
  }

 private:
  struct SeqHash {
    size_t operator()(const CharSeq& s) const {
      size_t h = 1469598103934665603ull;
      for (Token t : s) {
        h ^= static_cast<size_t>(t);
        h *= 1099511628211ull;
      }
      return h;
    }
  };
  PosTagSet tags_;
  std::unordered_map<CharSeq, int32_t, SeqHash> entries_;
  size_t max_word_len_ = 0;
};

// TSV `word<TAB>tag`.
inline PosLexicon parse_pos_lexicon(std::istream& in, PosTagSet tags = PosTagSet()) {
  PosLexicon lex(std::move(tags));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError("POS lexicon line " + std::to_string(lineno) + ": missing TAB");
    std::string tag = detail::trim(line.substr(tab + 1));
    if (!lex.tags().contains(tag))
      throw DataError("POS lexicon line " + std::to_string(lineno) + ": unknown tag " + tag);
    lex.add(to_charseq(line.substr(0, tab)), lex.tags().index(tag));
  }
  return lex;
}

inline PosLexicon load_pos_lexicon(const std::string& path, PosTagSet tags = PosTagSet()) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open POS lexicon: " + path);
  return parse_pos_lexicon(f, std::move(tags));
}

// word -> semantic class path. Level codes are interned per level; id 0 is
// reserved for NONE at every level. The tree property (a level-l code
// determines its parent) is enforced at load time.
class SemClassDict {
 public:
  void add(const CharSeq& word, const std::vector<std::string>& level_codes) {
    if (level_codes.empty()) throw DataError("empty semantic class path");
    SemClassPath path;
    std::string parent;
    for (size_t l = 0; l < level_codes.size(); ++l) {
      const std::string& code = level_codes[l];
      if (code.empty()) throw DataError("empty level code in semantic class path");
      if (l >= alphabets_.size()) {
        alphabets_.emplace_back();
        alphabets_.back().push_back("<none>");
        code_ids_.emplace_back();
      }
      auto& ids = code_ids_[l];
      auto it = ids.find(code);
      int32_t id;
      if (it == ids.end()) {
        id = static_cast<int32_t>(alphabets_[l].size());
        alphabets_[l].push_back(code);
        ids.emplace(code, id);
        if (l > 0) parents_.emplace(level_key(l, code), parent);
      } else {
        id = it->second;
        if (l > 0) {
          auto p = parents_.find(level_key(l, code));
          if (p != parents_.end() && p->second != parent)
            throw DataError("semantic class code " + code +
                            " has conflicting parents (" + p->second + " vs " + parent + ")");
        }
      }
      path.levels.push_back(id);
      parent = code;
    }
    entries_[word] = std::move(path);
  }

  // Truncated/padded to k levels; unknown word -> all-NONE.
  SemClassPath lookup(const CharSeq& word, int32_t k) const {
    if (k < 1) throw ContractViolation("lookup_semclass: k must be >= 1");
    auto it = entries_.find(word);
    SemClassPath out = SemClassPath::none(k);
    if (it == entries_.end()) return out;
    const auto& levels = it->second.levels;
    for (int32_t l = 0; l < k && l < static_cast<int32_t>(levels.size()); ++l)
      out.levels[static_cast<size_t>(l)] = levels[static_cast<size_t>(l)];
    return out;
  }

  // Alphabet size at level l (1-based count including NONE); levels never
  // loaded report just the NONE slot.
  int32_t level_size(int32_t l) const {
    if (l < 0) throw ContractViolation("negative semantic class level");
    if (l >= static_cast<int32_t>(alphabets_.size())) return 1;
    return static_cast<int32_t>(alphabets_[static_cast<size_t>(l)].size());
  }

  const std::string& code_name(int32_t level, int32_t id) const {
    if (level >= static_cast<int32_t>(alphabets_.size()) || id >= level_size(level))
      throw ContractViolation("semantic class id out of range");
    return alphabets_[static_cast<size_t>(level)][static_cast<size_t>(id)];
  }

 private:
  static std::string level_key(size_t l, const std::string& code) {
    return std::to_string(l) + ":" + code;
  }
  struct SeqHash {
    size_t operator()(const CharSeq& s) const {
      size_t h = 1469598103934665603ull;
      for (Token t : s) {
        h ^= static_cast<size_t>(t);
        h *= 1099511628211ull;
      }
      return h;
    }
  };
  std::unordered_map<CharSeq, SemClassPath, SeqHash> entries_;
  std::vector<std::vector<std::string>> alphabets_;  // per level, [0] = NONE
  std::vector<std::unordered_map<std::string, int32_t>> code_ids_;
  std::unordered_map<std::string, std::string> parents_;
};

// TSV `word<TAB>L1/L2/L3` with slash-separated level codes.
inline SemClassDict parse_semclass_dict(std::istream& in) {
  SemClassDict dict;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError("semantic dictionary line " + std::to_string(lineno) + ": missing TAB");
    std::vector<std::string> codes;
    std::stringstream ss(line.substr(tab + 1));
    std::string part;
    while (std::getline(ss, part, '/')) codes.push_back(detail::trim(part));
    try {
      dict.add(to_charseq(line.substr(0, tab)), codes);
    } catch (const DataError& e) {
      throw DataError("semantic dictionary line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return dict;
}

inline SemClassDict load_semclass_dict(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open semantic dictionary: " + path);
  return parse_semclass_dict(f);
}

}  // namespace sggec
