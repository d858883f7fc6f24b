#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sggec/core.hpp"
#include "sggec/lexicons.hpp"
#include "sggec/model.hpp"
#include "sggec/tagger.hpp"

namespace sggec {

// Span edit over the source sequence: replace src[start, end) with
// `replacement`. Half-open character spans.
struct Edit {
  int64_t start = 0;
  int64_t end = 0;
  CharSeq replacement;

  bool operator==(const Edit&) const = default;
  auto operator<=>(const Edit&) const = default;
};

struct EditSet {
  std::vector<Edit> edits;  // sorted by start, non-overlapping

  void validate(int64_t src_len) const {
    int64_t prev_end = -1;
    for (const Edit& e : edits) {
      if (e.start < 0 || e.end < e.start || e.end > src_len)
        throw DataError("edit span out of range");
      if (e.start < prev_end) throw DataError("overlapping edits");
      prev_end = e.end;
    }
  }
};

inline CharSeq apply_edits(const CharSeq& src, const EditSet& es) {
  es.validate(static_cast<int64_t>(src.size()));
  CharSeq out;
  int64_t i = 0;
  for (const Edit& e : es.edits) {
    for (; i < e.start; ++i) out.push_back(src[static_cast<size_t>(i)]);
    out.insert(out.end(), e.replacement.begin(), e.replacement.end());
    i = e.end;
  }
  for (; i < static_cast<int64_t>(src.size()); ++i) out.push_back(src[static_cast<size_t>(i)]);
  return out;
}

inline double f_beta(double p, double r, double beta) {
  if (p < 0 || p > 1 || r < 0 || r > 1) throw ContractViolation("f_beta: p, r must be in [0,1]");
  if (beta <= 0) throw ContractViolation("f_beta: beta must be > 0");
  double b2 = beta * beta;
  double denom = b2 * p + r;
  if (denom == 0) return 0.0;
  return (1 + b2) * p * r / denom;
}

struct PrfScore {
  int64_t tp = 0;
  int64_t sys_count = 0;
  int64_t gold_count = 0;
  double precision = 0;
  double recall = 0;
  double f = 0;

  void finalize(double beta) {
    precision = sys_count ? static_cast<double>(tp) / static_cast<double>(sys_count) : 0.0;
    recall = gold_count ? static_cast<double>(tp) / static_cast<double>(gold_count) : 0.0;
    f = f_beta(precision, recall, beta);
  }
};

// --- Longest common subsequence ---

struct LcsResult {
  int64_t length = 0;
  std::vector<std::pair<int64_t, int64_t>> matches;  // (index in a, index in b)
};

// DP over suffixes with a deterministic backtrace: prefer matches with the
// smallest index in a, then in b.
template <typename Seq>
LcsResult lcs(const Seq& a, const Seq& b) {
  const int64_t n = static_cast<int64_t>(a.size());
  const int64_t m = static_cast<int64_t>(b.size());
  std::vector<std::vector<int64_t>> dp(static_cast<size_t>(n + 1),
                                       std::vector<int64_t>(static_cast<size_t>(m + 1), 0));
  for (int64_t i = n - 1; i >= 0; --i)
    for (int64_t j = m - 1; j >= 0; --j) {
      auto& cur = dp[static_cast<size_t>(i)][static_cast<size_t>(j)];
      if (a[static_cast<size_t>(i)] == b[static_cast<size_t>(j)])
        cur = dp[static_cast<size_t>(i + 1)][static_cast<size_t>(j + 1)] + 1;
      cur = std::max({cur, dp[static_cast<size_t>(i + 1)][static_cast<size_t>(j)],
                      dp[static_cast<size_t>(i)][static_cast<size_t>(j + 1)]});
    }
  LcsResult out;
  out.length = dp[0][0];
  int64_t i = 0, j = 0;
  while (i < n && j < m) {
    if (a[static_cast<size_t>(i)] == b[static_cast<size_t>(j)] &&
        dp[static_cast<size_t>(i)][static_cast<size_t>(j)] ==
            dp[static_cast<size_t>(i + 1)][static_cast<size_t>(j + 1)] + 1) {
      out.matches.push_back({i, j});
      ++i;
      ++j;
    } else if (dp[static_cast<size_t>(i)][static_cast<size_t>(j + 1)] ==
               dp[static_cast<size_t>(i)][static_cast<size_t>(j)]) {
      ++j;  // keep the a-index small
    } else {
      ++i;
    }
  }
  return out;
}

enum class TokenLabel { kCorr, kErr };

// Source tokens on the LCS backtrace are Corr, the rest Err.
template <typename Seq>
std::vector<TokenLabel> classify_corr_err_tokens(const Seq& src, const Seq& tgt) {
  LcsResult r = lcs(src, tgt);
  std::vector<TokenLabel> labels(src.size(), TokenLabel::kErr);
  for (const auto& [i, j] : r.matches) labels[static_cast<size_t>(i)] = TokenLabel::kCorr;
  return labels;
}

// --- Character-level edit extraction ---

// Levenshtein alignment with unit costs; tie-break prefers
// match > substitution > deletion > insertion. Adjacent non-match
// operations merge into span edits.
inline EditSet extract_edits(const CharSeq& src, const CharSeq& hyp) {
  const int64_t n = static_cast<int64_t>(src.size());
  const int64_t m = static_cast<int64_t>(hyp.size());
  std::vector<std::vector<int64_t>> dp(static_cast<size_t>(n + 1),
                                       std::vector<int64_t>(static_cast<size_t>(m + 1), 0));
  for (int64_t i = n; i >= 0; --i)
    for (int64_t j = m; j >= 0; --j) {
      if (i == n && j == m) continue;
      int64_t best = std::numeric_limits<int64_t>::max();
      if (i < n && j < m) {
        int64_t c = (src[static_cast<size_t>(i)] == hyp[static_cast<size_t>(j)]) ? 0 : 1;
        best = std::min(best, c + dp[static_cast<size_t>(i + 1)][static_cast<size_t>(j + 1)]);
      }
      if (i < n) best = std::min(best, 1 + dp[static_cast<size_t>(i + 1)][static_cast<size_t>(j)]);
      if (j < m) best = std::min(best, 1 + dp[static_cast<size_t>(i)][static_cast<size_t>(j + 1)]);
      dp[static_cast<size_t>(i)][static_cast<size_t>(j)] = best;
    }
  // Walk the alignment, collecting per-op records.
  enum Op { kMatch, kSub, kDel, kIns };
  std::vector<std::pair<Op, std::pair<int64_t, int64_t>>> ops;  // op, (i, j) at start
  int64_t i = 0, j = 0;
  while (i < n || j < m) {
    int64_t cur = dp[static_cast<size_t>(i)][static_cast<size_t>(j)];
    if (i < n && j < m && src[static_cast<size_t>(i)] == hyp[static_cast<size_t>(j)] &&
        dp[static_cast<size_t>(i + 1)][static_cast<size_t>(j + 1)] == cur) {
      ops.push_back({kMatch, {i, j}});
      ++i;
      ++j;
    } else if (i < n && j < m &&
               dp[static_cast<size_t>(i + 1)][static_cast<size_t>(j + 1)] + 1 == cur) {
      ops.push_back({kSub, {i, j}});
      ++i;
      ++j;
    } else if (i < n && dp[static_cast<size_t>(i + 1)][static_cast<size_t>(j)] + 1 == cur) {
      ops.push_back({kDel, {i, j}});
      ++i;
    } else {
      ops.push_back({kIns, {i, j}});
      ++j;
    }
  }
  EditSet out;
  size_t k = 0;
  while (k < ops.size()) {
    if (ops[k].first == kMatch) {
      ++k;
      continue;
    }
    int64_t i0 = ops[k].second.first;
    int64_t j0 = ops[k].second.second;
    int64_t i1 = i0, j1 = j0;
    while (k < ops.size() && ops[k].first != kMatch) {
      switch (ops[k].first) {
        case kSub: ++i1; ++j1; break;
        case kDel: ++i1; break;
        case kIns: ++j1; break;
        default: break;
      }
      ++k;
    }
    Edit e;
    e.start = i0;
    e.end = i1;
    e.replacement.assign(hyp.begin() + j0, hyp.begin() + j1);
    out.edits.push_back(std::move(e));
  }
  return out;
}

// --- MaxMatch (M2) scoring ---

namespace m2 {

// One annotator's gold edit set plus a fast membership test. Each distinct
// gold edit can be credited at most once, so membership maps to an index.
struct GoldSet {
  EditSet edits;
  std::map<Edit, int> index;

  explicit GoldSet(EditSet es) : edits(std::move(es)) {
    if (edits.edits.size() > 63)
      throw ContractViolation("M2: more than 63 gold edits per annotation unsupported");
    for (const Edit& e : edits.edits)
      index.emplace(e, static_cast<int>(index.size()));
  }
};

struct PathScore {
  int64_t tp = 0;
  int64_t edits = 0;
};

inline constexpr int kMaxUnchanged = 2;

// System edit selection over the Levenshtein edit lattice between src and
// hyp. Elementary edges are restricted to optimal alignments; merged edit
// edges combine consecutive non-match operations with at most kMaxUnchanged
// unchanged tokens inside. The chosen path maximizes true positives against
// the gold set, then minimizes its own edit count.
inline PathScore best_path(const CharSeq& src, const CharSeq& hyp, const GoldSet& gold) {
  const int64_t n = static_cast<int64_t>(src.size());
  const int64_t m = static_cast<int64_t>(hyp.size());
  // dist0 from (0,0), dist1 to (n,m).
  auto lev = [&](bool forward) {
    std::vector<std::vector<int64_t>> d(static_cast<size_t>(n + 1),
                                        std::vector<int64_t>(static_cast<size_t>(m + 1), 0));
    if (forward) {
      for (int64_t i = 0; i <= n; ++i)
        for (int64_t j = 0; j <= m; ++j) {
          if (i == 0 && j == 0) continue;
          int64_t best = std::numeric_limits<int64_t>::max();
          if (i > 0 && j > 0) {
            int64_t c = src[static_cast<size_t>(i - 1)] == hyp[static_cast<size_t>(j - 1)] ? 0 : 1;
            best = std::min(best, d[static_cast<size_t>(i - 1)][static_cast<size_t>(j - 1)] + c);
          }
          if (i > 0) best = std::min(best, d[static_cast<size_t>(i - 1)][static_cast<size_t>(j)] + 1);
          if (j > 0) best = std::min(best, d[static_cast<size_t>(i)][static_cast<size_t>(j - 1)] + 1);
          d[static_cast<size_t>(i)][static_cast<size_t>(j)] = best;
        }
    } else {
      for (int64_t i = n; i >= 0; --i)
        for (int64_t j = m; j >= 0; --j) {
          if (i == n && j == m) continue;
          int64_t best = std::numeric_limits<int64_t>::max();
          if (i < n && j < m) {
            int64_t c = src[static_cast<size_t>(i)] == hyp[static_cast<size_t>(j)] ? 0 : 1;
            best = std::min(best, d[static_cast<size_t>(i + 1)][static_cast<size_t>(j + 1)] + c);
          }
          if (i < n) best = std::min(best, d[static_cast<size_t>(i + 1)][static_cast<size_t>(j)] + 1);
          if (j < m) best = std::min(best, d[static_cast<size_t>(i)][static_cast<size_t>(j + 1)] + 1);
          d[static_cast<size_t>(i)][static_cast<size_t>(j)] = best;
        }
    }
    return d;
  };
  std::vector<std::vector<int64_t>> d0 = lev(true), d1 = lev(false);
  const int64_t total = d0[static_cast<size_t>(n)][static_cast<size_t>(m)];
  auto node_ok = [&](int64_t i, int64_t j) {
    return d0[static_cast<size_t>(i)][static_cast<size_t>(j)] +
               d1[static_cast<size_t>(i)][static_cast<size_t>(j)] ==
           total;
  };
  auto edge_ok = [&](int64_t i, int64_t j, int64_t i2, int64_t j2, int64_t cost) {
    return node_ok(i, j) && node_ok(i2, j2) &&
           d0[static_cast<size_t>(i)][static_cast<size_t>(j)] + cost ==
               d0[static_cast<size_t>(i2)][static_cast<size_t>(j2)];
  };

  // Merged edit edges discovered by DFS over elementary lattice edges.
  struct EditEdge {
    int64_t i2, j2;
  };
  // edit_edges[(i,j)] -> reachable (i2,j2) endpoints of a merged edit.
  std::map<std::pair<int64_t, int64_t>, std::set<std::pair<int64_t, int64_t>>> edit_edges;
  for (int64_t i = 0; i <= n; ++i)
    for (int64_t j = 0; j <= m; ++j) {
      if (!node_ok(i, j)) continue;
      // DFS states: (pos, #matches used, whether last edge was a match).
      struct St {
        int64_t i, j;
        int matches;
        bool last_match;
        bool started;
      };
      std::vector<St> stack{{i, j, 0, false, false}};
      while (!stack.empty()) {
        St s = stack.back();
        stack.pop_back();
        if (s.started && !s.last_match && (s.i != i || s.j != j))
          edit_edges[{i, j}].insert({s.i, s.j});
        // expand
        auto try_edge = [&](int64_t ni, int64_t nj, bool is_match, int64_t cost) {
          if (ni > n || nj > m) return;
          if (!edge_ok(s.i, s.j, ni, nj, cost)) return;
          if (is_match) {
            if (!s.started) return;  // edits never start with unchanged tokens
            if (s.matches + 1 > kMaxUnchanged) return;
            stack.push_back({ni, nj, s.matches + 1, true, true});
          } else {
            stack.push_back({ni, nj, s.matches, false, true});
          }
        };
        bool match_here = s.i < n && s.j < m &&
                          src[static_cast<size_t>(s.i)] == hyp[static_cast<size_t>(s.j)];
        if (s.i < n && s.j < m) {
          if (match_here)
            try_edge(s.i + 1, s.j + 1, true, 0);
          else
            try_edge(s.i + 1, s.j + 1, false, 1);
        }
        try_edge(s.i + 1, s.j, false, 1);
        try_edge(s.i, s.j + 1, false, 1);
      }
    }

  // DP over the DAG ordered by (i + j, i). The state carries the set of
  // gold edits already credited (as a bitmask) so each one counts at most
  // once; per node we keep, for every reachable mask, the minimum edit
  // count. The answer maximizes distinct matches, then minimizes edits.
  std::vector<std::vector<std::map<uint64_t, int64_t>>> best(
      static_cast<size_t>(n + 1),
      std::vector<std::map<uint64_t, int64_t>>(static_cast<size_t>(m + 1)));
  best[0][0][0] = 0;
  auto relax = [](std::map<uint64_t, int64_t>& states, uint64_t mask, int64_t edits) {
    auto [it, inserted] = states.emplace(mask, edits);
    if (!inserted && edits < it->second) it->second = edits;
  };
  std::vector<std::pair<int64_t, int64_t>> order;
  for (int64_t i = 0; i <= n; ++i)
    for (int64_t j = 0; j <= m; ++j)
      if (node_ok(i, j)) order.push_back({i, j});
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.first + a.second != b.first + b.second) return a.first + a.second < b.first + b.second;
    return a.first < b.first;
  });
  for (const auto& [i, j] : order) {
    const auto& states = best[static_cast<size_t>(i)][static_cast<size_t>(j)];
    if (states.empty()) continue;
    // unchanged-token edge
    if (i < n && j < m && src[static_cast<size_t>(i)] == hyp[static_cast<size_t>(j)] &&
        edge_ok(i, j, i + 1, j + 1, 0)) {
      auto& nx = best[static_cast<size_t>(i + 1)][static_cast<size_t>(j + 1)];
      for (const auto& [mask, edits] : states) relax(nx, mask, edits);
    }
    auto it = edit_edges.find({i, j});
    if (it == edit_edges.end()) continue;
    for (const auto& [i2, j2] : it->second) {
      Edit e;
      e.start = i;
      e.end = i2;
      e.replacement.assign(hyp.begin() + j, hyp.begin() + j2);
      auto gi = gold.index.find(e);
      auto& nx = best[static_cast<size_t>(i2)][static_cast<size_t>(j2)];
      for (const auto& [mask, edits] : states) {
        uint64_t nm = mask;
        if (gi != gold.index.end()) nm |= uint64_t{1} << gi->second;
        relax(nx, nm, edits + 1);
      }
    }
  }
  const auto& final_states = best[static_cast<size_t>(n)][static_cast<size_t>(m)];
  if (final_states.empty()) throw ContractViolation("M2 lattice: target unreachable");
  PathScore final{-1, 0};
  for (const auto& [mask, edits] : final_states) {
    int64_t tp = static_cast<int64_t>(std::popcount(mask));
    if (tp > final.tp || (tp == final.tp && edits < final.edits)) final = {tp, edits};
  }
  return final;
}

}  // namespace m2

// Sentence-level M2 counts against the best-matching annotation (the one
// maximizing sentence F_beta; ties prefer the earliest annotator).
inline PrfScore max_match_prf(const CharSeq& src, const CharSeq& hyp,
                              const std::vector<EditSet>& gold_annotations, double beta = 0.5) {
  if (gold_annotations.empty())
    throw ContractViolation("max_match_prf: need at least one gold annotation");
  std::optional<PrfScore> best;
  for (const EditSet& gold : gold_annotations) {
    gold.validate(static_cast<int64_t>(src.size()));
    m2::GoldSet gs(gold);
    m2::PathScore ps = m2::best_path(src, hyp, gs);
    PrfScore s;
    s.tp = ps.tp;
    s.sys_count = ps.edits;
    s.gold_count = static_cast<int64_t>(gold.edits.size());
    s.finalize(beta);
    if (!best || s.f > best->f) best = s;
  }
  return *best;
}

// Corpus-level aggregation: counts summed over sentences, then P/R/F.
struct M2Sentence {
  CharSeq src;
  CharSeq hyp;
  std::vector<EditSet> gold;
};

inline PrfScore max_match_corpus(const std::vector<M2Sentence>& sentences, double beta = 0.5) {
  PrfScore total;
  for (const M2Sentence& s : sentences) {
    PrfScore one = max_match_prf(s.src, s.hyp, s.gold, beta);
    total.tp += one.tp;
    total.sys_count += one.sys_count;
    total.gold_count += one.gold_count;
  }
  total.finalize(beta);
  return total;
}

// --- M2 annotation file format ---
// `S <chars>` line, then `A <start> <end>|||<type>|||<replacement>|||...`
// lines per edit (annotator id as the last field), blank line between
// sentences.

struct M2Record {
  CharSeq source;
  std::vector<EditSet> annotations;
};

inline std::vector<M2Record> parse_m2_file(std::istream& in) {
  std::vector<M2Record> out;
  std::string line;
  std::optional<M2Record> cur;
  std::map<int, EditSet> by_annotator;
  auto flush = [&] {
    if (!cur) return;
    if (by_annotator.empty()) by_annotator[0] = EditSet{};
    for (auto& [id, es] : by_annotator) {
      std::sort(es.edits.begin(), es.edits.end());
      cur->annotations.push_back(es);
    }
    out.push_back(std::move(*cur));
    cur.reset();
    by_annotator.clear();
  };
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    if (line.rfind("S ", 0) == 0) {
      flush();
      cur = M2Record{};
      cur->source = to_charseq(line.substr(2));
    } else if (line.rfind("A ", 0) == 0) {
      if (!cur) throw DataError("M2 line " + std::to_string(lineno) + ": A before S");
      std::string body = line.substr(2);
      std::vector<std::string> fields;
      size_t pos = 0;
      while (true) {
        size_t sep = body.find("|||", pos);
        if (sep == std::string::npos) {
          fields.push_back(body.substr(pos));
          break;
        }
        fields.push_back(body.substr(pos, sep - pos));
        pos = sep + 3;
      }
      if (fields.size() < 3) throw DataError("M2 line " + std::to_string(lineno) + ": malformed");
      std::istringstream span(fields[0]);
      Edit e;
      span >> e.start >> e.end;
      if (!span) throw DataError("M2 line " + std::to_string(lineno) + ": bad span");
      std::string repl = fields[2];
      if (repl != "-NONE-") e.replacement = to_charseq(repl);
      int annot = 0;
      if (!fields.back().empty()) {
        try {
          annot = std::stoi(fields.back());
        } catch (...) {
          annot = 0;
        }
      }
      if (!(fields[1] == "noop")) by_annotator[annot].edits.push_back(e);
      else by_annotator[annot];  // record an explicit empty annotation
    } else {
      throw DataError("M2 line " + std::to_string(lineno) + ": unknown record type");
    }
  }
  flush();
  return out;
}

inline void write_m2_record(std::ostream& out, const CharSeq& src, const EditSet& edits) {
  out << "S " << to_string(src) << '\n';
  if (edits.edits.empty()) {
    out << "A -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0\n";
  } else {
    for (const Edit& e : edits.edits) {
      std::string repl = e.replacement.empty() ? "-NONE-" : to_string(e.replacement);
      out << "A " << e.start << ' ' << e.end << "|||sub|||" << repl
          << "|||REQUIRED|||-NONE-|||0\n";
    }
  }
  out << '\n';
}

// --- Corpus diagnostics (POS reliability analysis) ---

struct CorpusPosStats {
  double divergence_rate = 0;       // fraction of pairs with differing POS sequences
  double corr_pos_accuracy = 0;     // fraction of Corr-tokens with matching POS
  double mean_dist_wrong_pos = 0;   // wrong-POS Corr-token -> nearest Err-token
  double mean_dist_correct_pos = 0; // correct-POS Corr-token -> nearest Err-token
  int64_t wrong_pos_samples = 0;
  int64_t correct_pos_samples = 0;
};

// Tags a whole segmented sentence; context-sensitive taggers may give the
// same word different tags in different sentences.
using SentenceTagger = std::function<std::vector<int32_t>(const std::vector<CharSeq>&)>;

// Word-level analysis: segments both sides, labels source words Corr/Err by
// LCS over word sequences, checks whether matched Corr words keep their POS
// tag, and measures token distances to the nearest Err word. Sentences with
// no Err-token are excluded from the distance statistics.
inline CorpusPosStats analyze_corpus(const std::vector<std::pair<CharSeq, CharSeq>>& corpus,
                                     const PosLexicon& pos_lex,
                                     const SentenceTagger& tagger) {
  if (corpus.empty()) throw ContractViolation("analyze_corpus: empty corpus");
  CorpusPosStats out;
  int64_t diverged = 0;
  int64_t corr_total = 0, corr_pos_ok = 0;
  double sum_wrong = 0, sum_correct = 0;
  for (const auto& [src, tgt] : corpus) {
    std::vector<CharSeq> src_words = segment_maxmatch(src, pos_lex);
    std::vector<CharSeq> tgt_words = segment_maxmatch(tgt, pos_lex);
    std::vector<int32_t> src_tags = tagger(src_words);
    std::vector<int32_t> tgt_tags = tagger(tgt_words);
    if (src_tags.size() != src_words.size() || tgt_tags.size() != tgt_words.size())
      throw ContractViolation("analyze_corpus: tagger must emit one tag per word");
    if (src_tags != tgt_tags) ++diverged;
    LcsResult r = lcs(src_words, tgt_words);
    std::vector<bool> is_corr(src_words.size(), false);
    std::vector<int64_t> partner(src_words.size(), -1);
    for (const auto& [i, j] : r.matches) {
      is_corr[static_cast<size_t>(i)] = true;
      partner[static_cast<size_t>(i)] = j;
    }
    std::vector<int64_t> err_positions;
    for (size_t i = 0; i < src_words.size(); ++i)
      if (!is_corr[i]) err_positions.push_back(static_cast<int64_t>(i));
    for (size_t i = 0; i < src_words.size(); ++i) {
      if (!is_corr[i]) continue;
      ++corr_total;
      bool pos_ok = src_tags[i] == tgt_tags[static_cast<size_t>(partner[i])];
      if (pos_ok) ++corr_pos_ok;
      if (err_positions.empty()) continue;
      int64_t dist = std::numeric_limits<int64_t>::max();
      for (int64_t e : err_positions)
        dist = std::min<int64_t>(dist, std::llabs(e - static_cast<int64_t>(i)));
      if (pos_ok) {
        sum_correct += static_cast<double>(dist);
        ++out.correct_pos_samples;
      } else {
        sum_wrong += static_cast<double>(dist);
        ++out.wrong_pos_samples;
      }
    }
  }
  out.divergence_rate = static_cast<double>(diverged) / static_cast<double>(corpus.size());
  out.corr_pos_accuracy =
      corr_total ? static_cast<double>(corr_pos_ok) / static_cast<double>(corr_total) : 0.0;
  out.mean_dist_wrong_pos =
      out.wrong_pos_samples ? sum_wrong / static_cast<double>(out.wrong_pos_samples) : 0.0;
  out.mean_dist_correct_pos =
      out.correct_pos_samples ? sum_correct / static_cast<double>(out.correct_pos_samples) : 0.0;
  return out;
}

inline CorpusPosStats analyze_corpus(const std::vector<std::pair<CharSeq, CharSeq>>& corpus,
                                     const PosLexicon& pos_lex) {
  return analyze_corpus(corpus, pos_lex,
                        [&](const std::vector<CharSeq>& words) { return pos_tag(words, pos_lex); });
}

inline double pos_divergence_rate(const std::vector<std::pair<CharSeq, CharSeq>>& corpus,
                                  const PosLexicon& pos_lex) {
  return analyze_corpus(corpus, pos_lex).divergence_rate;
}

inline std::pair<double, double> err_distance_stats(
    const std::vector<std::pair<CharSeq, CharSeq>>& corpus, const PosLexicon& pos_lex) {
  CorpusPosStats s = analyze_corpus(corpus, pos_lex);
  return {s.mean_dist_wrong_pos, s.mean_dist_correct_pos};
}

// --- Trained-model inspection ---

struct TagNeighbors {
  std::string tag;
  std::vector<std::pair<Token, double>> neighbors;  // (character, cosine)
};

// Nearest word-embedding rows to each auxiliary tag embedding by cosine
// similarity; tag vectors are zero-padded to d_E. Zero-norm rows are
// skipped.
inline std::vector<TagNeighbors> pos_embedding_neighbors(const ModelState& state, int32_t top_n) {
  if (top_n < 0) throw ContractViolation("pos_embedding_neighbors: top_n must be >= 0");
  const Tensor& word = state.param("emb.word");
  const Tensor& pos = state.param("emb.pos_tag");
  const int64_t d = word.cols();
  auto norm_of = [](const float* v, int64_t len) {
    double s = 0;
    for (int64_t i = 0; i < len; ++i) s += static_cast<double>(v[i]) * static_cast<double>(v[i]);
    return std::sqrt(s);
  };
  std::vector<TagNeighbors> out;
  for (int32_t t = 0; t < state.tags.size(); ++t) {
    TagNeighbors tn;
    tn.tag = state.tags.name(t);
    const float* pv = pos.values.data() + static_cast<size_t>(t) * static_cast<size_t>(pos.cols());
    double pn = norm_of(pv, pos.cols());
    if (pn == 0) {
      out.push_back(std::move(tn));
      continue;
    }
    std::vector<std::pair<double, Token>> scored;
    for (int32_t id = Vocab::kNumReserved; id < state.vocab.size(); ++id) {
      const float* wv =
          word.values.data() + static_cast<size_t>(id) * static_cast<size_t>(d);
      double wn = norm_of(wv, d);
      if (wn == 0) continue;
      double dot = 0;  // pos vector zero-padded to d_E: only first cols overlap
      for (int64_t i = 0; i < pos.cols() && i < d; ++i)
        dot += static_cast<double>(pv[i]) * static_cast<double>(wv[i]);
      scored.push_back({dot / (pn * wn), state.vocab.decode(id)});
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (int32_t i = 0; i < top_n && i < static_cast<int32_t>(scored.size()); ++i)
      tn.neighbors.push_back({scored[static_cast<size_t>(i)].second,
                              scored[static_cast<size_t>(i)].first});
    out.push_back(std::move(tn));
  }
  return out;
}

// Transition matrix dump: raw scores and row-softmaxed probabilities with
// tag labels.
inline void export_transition_matrix(const ModelState& state, std::ostream& out) {
  const Tensor& m = state.param("crf.M");
  const int64_t t = m.rows();
  std::vector<std::string> labels;
  bool tag_labels = t == state.tags.size() &&
                    (state.cfg.aux_task == AuxTask::kPosCrf ||
                     state.cfg.aux_task == AuxTask::kPosCe);
  for (int64_t i = 0; i < t; ++i)
    labels.push_back(tag_labels ? state.tags.name(static_cast<int32_t>(i))
                                : "c" + std::to_string(i));
  auto header = [&](const char* title) {
    out << title;
    for (int64_t j = 0; j < t; ++j) out << '\t' << labels[static_cast<size_t>(j)];
    out << '\n';
  };
  header("raw");
  for (int64_t i = 0; i < t; ++i) {
    out << labels[static_cast<size_t>(i)];
    for (int64_t j = 0; j < t; ++j) out << '\t' << m.at(i, j);
    out << '\n';
  }
  header("softmax");
  for (int64_t i = 0; i < t; ++i) {
    double mx = -1e300;
    for (int64_t j = 0; j < t; ++j) mx = std::max(mx, static_cast<double>(m.at(i, j)));
    double z = 0;
    for (int64_t j = 0; j < t; ++j) z += std::exp(static_cast<double>(m.at(i, j)) - mx);
    out << labels[static_cast<size_t>(i)];
    for (int64_t j = 0; j < t; ++j)
      out << '\t' << std::exp(static_cast<double>(m.at(i, j)) - mx) / z;
    out << '\n';
  }
}

}  // namespace sggec
