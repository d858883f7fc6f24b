#pragma once

#include <limits>
#include <set>
#include <string>
#include <vector>

#include "sggec/core.hpp"
#include "sggec/lexicons.hpp"
#include "sggec/masked_lm.hpp"

namespace sggec {

// Per-position record of what the corrector did and why.
struct SecRecord {
  enum class Reason { kNotMaskable, kNoCandidateInSimSet, kReplaced };

  size_t position = 0;
  Token original = 0;
  bool masked = false;
  std::vector<std::pair<Token, double>> candidates;
  Token replacement = 0;  // meaningful only when reason == kReplaced
  Reason reason = Reason::kNotMaskable;
};

struct SecTrace {
  std::vector<SecRecord> records;  // exactly one per input position
};

inline const char* to_string(SecRecord::Reason r) {
  switch (r) {
    case SecRecord::Reason::kNotMaskable: return "not_maskable";
    case SecRecord::Reason::kNoCandidateInSimSet: return "no_candidate_in_simset";
    case SecRecord::Reason::kReplaced: return "replaced";
  }
  return "?";
}

// Zero-shot spelling error correction. One pass, left to right: each
// maskable position is masked in turn and queried against the partially
// corrected sequence; the highest-scoring LM candidate that is a homophone
// of the original replaces it, otherwise the original stays. Substitution
// only, so output length always equals input length.
inline std::pair<CharSeq, SecTrace> correct_spelling(const CharSeq& seq, const MaskedLm& lm,
                                                     const PhoneticLexicon& lex,
                                                     const FrequencyTable& ft,
                                                     const PipelineConfig& cfg) {
  for (Token t : seq)
    if (is_reserved(t)) throw ContractViolation("correct_spelling: reserved symbol in input");
  CharSeq out = seq;
  SecTrace trace;
  trace.records.reserve(seq.size());
  for (size_t i = 0; i < seq.size(); ++i) {
    SecRecord rec;
    rec.position = i;
    rec.original = seq[i];
    if (!is_maskable(ft, out[i], cfg.k_c)) {
      rec.reason = SecRecord::Reason::kNotMaskable;
      trace.records.push_back(std::move(rec));
      continue;
    }
    Token original = out[i];
    out[i] = sym::MASK;
    rec.masked = true;
    MaskedPrediction pred = top_k_candidates(lm, out, i, cfg.top_k_candidates);
    rec.candidates = pred.candidates;
    std::set<Token> sims = lex.sim_set(original, cfg.tone_sensitive);
    Token chosen = original;
    rec.reason = SecRecord::Reason::kNoCandidateInSimSet;
    for (const auto& [cand, score] : pred.candidates) {
      if (sims.count(cand)) {  // candidates are already score-ordered
        chosen = cand;
        rec.replacement = cand;
        rec.reason = SecRecord::Reason::kReplaced;
        break;
      }
    }
    out[i] = chosen;
    trace.records.push_back(std::move(rec));
  }
  return {std::move(out), std::move(trace)};
}

struct SweepPoint {
  int64_t k_c = 0;
  int64_t tp = 0;
  int64_t sys = 0;
  int64_t gold = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f05 = 0.0;
};

// Character-substitution P/R/F0.5 of SEC against gold at each threshold.
// Dataset pairs must differ only by substitutions (equal lengths).
inline std::vector<SweepPoint> sweep_threshold(
    const std::vector<std::pair<CharSeq, CharSeq>>& dataset, const MaskedLm& lm,
    const PhoneticLexicon& lex, const FrequencyTable& ft, const PipelineConfig& base_cfg,
    const std::vector<int64_t>& k_c_values) {
  for (const auto& [src, tgt] : dataset)
    if (src.size() != tgt.size())
      throw DataError("sweep_threshold: source/target length mismatch");
  std::vector<SweepPoint> out;
  for (int64_t k_c : k_c_values) {
    PipelineConfig cfg = base_cfg;
    cfg.k_c = k_c;
    SweepPoint pt;
    pt.k_c = k_c;
    for (const auto& [src, tgt] : dataset) {
      auto [hyp, trace] = correct_spelling(src, lm, lex, ft, cfg);
      for (size_t i = 0; i < src.size(); ++i) {
        bool changed = hyp[i] != src[i];
        bool gold_err = tgt[i] != src[i];
        if (changed) ++pt.sys;
        if (gold_err) ++pt.gold;
        if (changed && hyp[i] == tgt[i]) ++pt.tp;
      }
    }
    pt.precision = pt.sys ? static_cast<double>(pt.tp) / static_cast<double>(pt.sys) : 0.0;
    pt.recall = pt.gold ? static_cast<double>(pt.tp) / static_cast<double>(pt.gold) : 0.0;
    double denom = 0.25 * pt.precision + pt.recall;
    pt.f05 = denom > 0 ? 1.25 * pt.precision * pt.recall / denom : 0.0;
    out.push_back(pt);
  }
  return out;
}

}  // namespace sggec
