#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "sggec/checkpoint.hpp"
#include "sggec/core.hpp"

namespace sggec {

// Ranked candidates for a single masked position; scores non-increasing.
struct MaskedPrediction {
  std::vector<std::pair<Token, double>> candidates;
};

// Masked character LM contract: score a single masked position against the
// surrounding context. Implementations must be deterministic.
class MaskedLm {
 public:
  virtual ~MaskedLm() = default;

  // Conditional distribution over the model's character set for the masked
  // position. Probabilities sum to 1 over the returned map.
  virtual std::map<Token, double> score_masked(const CharSeq& seq, size_t pos) const = 0;
};

// Top-k characters by model score; ties broken by codepoint ascending so
// runs are reproducible across platforms.
inline MaskedPrediction top_k_candidates(const MaskedLm& model, const CharSeq& seq, size_t pos,
                                         int32_t k) {
  if (pos >= seq.size() || seq[pos] != sym::MASK)
    throw ContractViolation("top_k_candidates: position is not a MASK token");
  if (k < 1) throw ContractViolation("top_k_candidates: k must be >= 1");
  std::map<Token, double> dist = model.score_masked(seq, pos);
  std::vector<std::pair<Token, double>> ranked(dist.begin(), dist.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (static_cast<size_t>(k) < ranked.size()) ranked.resize(static_cast<size_t>(k));
  MaskedPrediction pred;
  pred.candidates = std::move(ranked);
  return pred;
}

// Count-based reference masked LM. For each position it records the
// character under three context shapes: both-sides window of radius w,
// left-only, and right-only. Scoring interpolates the add-alpha smoothed
// conditional distributions of the three shapes, so backing off degrades
// gracefully when a full context was never seen.
class NGramMlm : public MaskedLm {
 public:
  static constexpr int kNumShapes = 3;  // 0 = both sides, 1 = left, 2 = right

  NGramMlm() = default;
  NGramMlm(int32_t window, double alpha) : window_(window), alpha_(alpha) {
    if (window_ < 1) throw ConfigError("n-gram window must be >= 1");
    if (alpha_ <= 0) throw ConfigError("smoothing constant must be > 0");
  }

  int32_t window() const { return window_; }
  double alpha() const { return alpha_; }
  const std::set<Token>& charset() const { return charset_; }

  void observe(const CharSeq& seq) {
    for (size_t i = 0; i < seq.size(); ++i) {
      if (is_reserved(seq[i])) throw DataError("reserved symbol in LM training text");
      charset_.insert(seq[i]);
      for (int shape = 0; shape < kNumShapes; ++shape) {
        auto& slot = tables_[shape][context_key(seq, i, shape)];
        ++slot[seq[i]];
        ++totals_[shape][context_key(seq, i, shape)];
      }
    }
  }

  std::map<Token, double> score_masked(const CharSeq& seq, size_t pos) const override {
    static constexpr double kWeights[kNumShapes] = {0.6, 0.2, 0.2};
    std::map<Token, double> out;
    if (charset_.empty()) return out;
    const double v = static_cast<double>(charset_.size());
    for (Token c : charset_) out[c] = 0.0;
    for (int shape = 0; shape < kNumShapes; ++shape) {
      std::u32string key = context_key(seq, pos, shape);
      auto tot_it = totals_[shape].find(key);
      double total = tot_it == totals_[shape].end() ? 0.0 : static_cast<double>(tot_it->second);
      auto tab_it = tables_[shape].find(key);
      const CountMap* counts = tab_it == tables_[shape].end() ? nullptr : &tab_it->second;
      double denom = total + alpha_ * v;
      for (auto& [c, p] : out) {
        double n = 0.0;
        if (counts) {
          auto it = counts->find(c);
          if (it != counts->end()) n = static_cast<double>(it->second);
        }
        p += kWeights[shape] * (n + alpha_) / denom;
      }
    }
    return out;
  }

  int64_t context_count(const CharSeq& seq, size_t pos, int shape = 0) const {
    auto tab_it = tables_[shape].find(context_key(seq, pos, shape));
    if (tab_it == tables_[shape].end()) return 0;
    auto it = tab_it->second.find(seq[pos]);
    return it == tab_it->second.end() ? 0 : it->second;
  }

  // Count tables dump: per shape, a keys tensor of (context tokens +
  // predicted character) rows and a parallel counts tensor.
  TensorMap to_tensors() const {
    TensorMap out;
    Tensor meta({3});
    meta.values = {static_cast<float>(window_), static_cast<float>(alpha_),
                   static_cast<float>(kNumShapes)};
    out["ngram.meta"] = std::move(meta);
    Tensor chars({static_cast<int64_t>(charset_.size())});
    chars.values.clear();
    for (Token c : charset_) chars.values.push_back(static_cast<float>(c));
    out["ngram.charset"] = std::move(chars);
    for (int shape = 0; shape < kNumShapes; ++shape) {
      std::vector<std::pair<std::u32string, std::pair<Token, int64_t>>> rows;
      for (const auto& [ctx, counts] : tables_[shape])
        for (const auto& [c, n] : counts) rows.push_back({ctx, {c, n}});
      std::sort(rows.begin(), rows.end());
      int64_t ctx_len = shape == 0 ? 2 * window_ : window_;
      Tensor keys({static_cast<int64_t>(rows.size()), ctx_len + 1});
      Tensor counts({static_cast<int64_t>(rows.size())});
      for (size_t r = 0; r < rows.size(); ++r) {
        const auto& [ctx, entry] = rows[r];
        for (int64_t j = 0; j < ctx_len; ++j)
          keys.at(static_cast<int64_t>(r), j) = static_cast<float>(ctx[static_cast<size_t>(j)]);
        keys.at(static_cast<int64_t>(r), ctx_len) = static_cast<float>(entry.first);
        counts.values[r] = static_cast<float>(entry.second);
      }
      out["ngram.shape" + std::to_string(shape) + ".keys"] = std::move(keys);
      out["ngram.shape" + std::to_string(shape) + ".counts"] = std::move(counts);
    }
    return out;
  }

  static NGramMlm from_tensors(const TensorMap& tensors) {
    auto meta_it = tensors.find("ngram.meta");
    if (meta_it == tensors.end()) throw DataError("checkpoint has no n-gram model");
    const Tensor& meta = meta_it->second;
    NGramMlm m(static_cast<int32_t>(meta.values.at(0)), meta.values.at(1));
    const Tensor& chars = tensors.at("ngram.charset");
    for (float v : chars.values) m.charset_.insert(static_cast<Token>(v));
    for (int shape = 0; shape < kNumShapes; ++shape) {
      const Tensor& keys = tensors.at("ngram.shape" + std::to_string(shape) + ".keys");
      const Tensor& counts = tensors.at("ngram.shape" + std::to_string(shape) + ".counts");
      int64_t ctx_len = keys.cols() - 1;
      for (int64_t r = 0; r < keys.rows(); ++r) {
        std::u32string ctx;
        for (int64_t j = 0; j < ctx_len; ++j)
          ctx.push_back(static_cast<char32_t>(keys.at(r, j)));
        Token c = static_cast<Token>(keys.at(r, ctx_len));
        int64_t n = static_cast<int64_t>(counts.values[static_cast<size_t>(r)]);
        m.tables_[shape][ctx][c] += n;
        m.totals_[shape][ctx] += n;
      }
    }
    return m;
  }

 private:
  using CountMap = std::unordered_map<Token, int64_t>;
  struct KeyHash {
    size_t operator()(const std::u32string& s) const {
      size_t h = 1469598103934665603ull;
      for (char32_t c : s) {
        h ^= static_cast<size_t>(c);
        h *= 1099511628211ull;
      }
      return h;
    }
  };

  std::u32string context_key(const CharSeq& seq, size_t pos, int shape) const {
    std::u32string key;
    auto at = [&](int64_t i) -> char32_t {
      if (i < 0) return sym::BOS;
      if (i >= static_cast<int64_t>(seq.size())) return sym::EOS;
      return seq[static_cast<size_t>(i)];
    };
    int64_t p = static_cast<int64_t>(pos);
    if (shape == 0 || shape == 1)
      for (int64_t i = p - window_; i < p; ++i) key.push_back(at(i));
    if (shape == 0 || shape == 2)
      for (int64_t i = p + 1; i <= p + window_; ++i) key.push_back(at(i));
    return key;
  }

  int32_t window_ = 2;
  double alpha_ = 1.0;
  std::set<Token> charset_;
  std::unordered_map<std::u32string, CountMap, KeyHash> tables_[kNumShapes];
  std::unordered_map<std::u32string, int64_t, KeyHash> totals_[kNumShapes];
};

inline NGramMlm train_ngram_mlm(const std::vector<CharSeq>& corpus, int32_t window = 2,
                                double alpha = 1.0) {
  if (corpus.empty()) throw ConfigError("train_ngram_mlm: empty corpus");
  NGramMlm m(window, alpha);
  for (const CharSeq& seq : corpus) m.observe(seq);
  return m;
}

}  // namespace sggec
