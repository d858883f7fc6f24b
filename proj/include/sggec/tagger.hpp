#pragma once

#include <vector>

#include "sggec/core.hpp"
#include "sggec/lexicons.hpp"

namespace sggec {

// Per-character features: POS tag index, semantic class ids for levels
// 1..k, and the index of the word each character belongs to.
struct SemanticFeatureSeq {
  std::vector<int32_t> pos;                     // n
  std::vector<std::vector<int32_t>> class_ids;  // n x k
  std::vector<int32_t> word_index;              // n
  std::vector<bool> word_begin;                 // n

  size_t size() const { return pos.size(); }
};

// Greedy forward maximum-match segmentation. Characters that start no
// lexicon word become single-character words; concatenation of the output
// reproduces the input exactly.
inline std::vector<CharSeq> segment_maxmatch(const CharSeq& seq, const PosLexicon& lex) {
  std::vector<CharSeq> words;
  size_t i = 0;
  while (i < seq.size()) {
    size_t best = 1;
    size_t limit = std::min(lex.max_word_len(), seq.size() - i);
    for (size_t len = limit; len >= 2; --len) {
      CharSeq cand(seq.begin() + i, seq.begin() + i + len);
      if (lex.contains(cand)) {
        best = len;
        break;
      }
    }
    words.emplace_back(seq.begin() + i, seq.begin() + i + best);
    i += best;
  }
  return words;
}

// Lexicon lookup per word. Out-of-lexicon words fall back to the tag of
// their first character (as a single-character entry), else `other`;
// punctuation characters get the punctuation tag.
inline std::vector<int32_t> pos_tag(const std::vector<CharSeq>& words, const PosLexicon& lex) {
  std::vector<int32_t> tags;
  tags.reserve(words.size());
  for (const CharSeq& w : words) {
    int32_t t = lex.tag_of(w);
    if (t < 0 && w.size() > 1) t = lex.tag_of(CharSeq{w.front()});
    if (t < 0) t = (w.size() == 1 && is_punctuation(w.front())) ? lex.tags().punctuation()
                                                                : lex.tags().other();
    tags.push_back(t);
  }
  return tags;
}

// Segments, POS-tags, looks up semantic classes per word, then broadcasts
// each word-level feature to every character of that word.
inline SemanticFeatureSeq feature_sequence(const CharSeq& seq, const PosLexicon& pos_lex,
                                           const SemClassDict& sem_dict, int32_t class_levels) {
  SemanticFeatureSeq out;
  std::vector<CharSeq> words = segment_maxmatch(seq, pos_lex);
  std::vector<int32_t> tags = pos_tag(words, pos_lex);
  for (size_t w = 0; w < words.size(); ++w) {
    SemClassPath path = sem_dict.lookup(words[w], class_levels);
    for (size_t c = 0; c < words[w].size(); ++c) {
      out.pos.push_back(tags[w]);
      out.class_ids.push_back(path.levels);
      out.word_index.push_back(static_cast<int32_t>(w));
      out.word_begin.push_back(c == 0);
    }
  }
  return out;
}

}  // namespace sggec
