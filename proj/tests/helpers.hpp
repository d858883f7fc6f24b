#pragma once

#include <cstdlib>
#include <random>
#include <sstream>
#include <string>

#include "sggec/core.hpp"
#include "sggec/lexicons.hpp"

inline std::string data_dir() {
  const char* d = std::getenv("SGGEC_DATA_DIR");
  return d ? std::string(d) : std::string("data");
}

inline std::string data_path(const std::string& name) { return data_dir() + "/" + name; }

// Small in-memory phonetic lexicon shared across unit tests.
inline sggec::PhoneticLexicon tiny_phonetic() {
  std::istringstream in(
      "金\tjin1\n"
      "今\tjin1\n"
      "进\tjin4\n"
      "天\ttian1\n"
      "田\ttian2\n"
      "去\tqu4\n"
      "趣\tqu4\n"
      "在\tzai4\n"
      "再\tzai4\n"
      "乐\tle4,yue4\n"
      "月\tyue4\n");
  return sggec::parse_phonetic_lexicon(in);
}

inline sggec::CharSeq random_seq(std::mt19937_64& rng, const std::u32string& alphabet,
                                 size_t min_len, size_t max_len) {
  size_t len = min_len + rng() % (max_len - min_len + 1);
  sggec::CharSeq out;
  for (size_t i = 0; i < len; ++i) out.push_back(alphabet[rng() % alphabet.size()]);
  return out;
}
