#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "sggec/autodiff.hpp"
#include "sggec/checkpoint.hpp"
#include "sggec/core.hpp"
#include "sggec/crf.hpp"
#include "sggec/tagger.hpp"

namespace sggec {

// Encoder-decoder model with semantic feature fusion at the encoder input
// and a dual-head decoder (token generation + auxiliary tag prediction
// scored by a linear-chain CRF). Parameters live in a named float tensor
// map; all math runs in double.
class ModelState {
 public:
  ModelState() = default;

  ModelState(PipelineConfig cfg, Vocab vocab, PosTagSet tags, std::vector<int32_t> class_sizes)
      : cfg(std::move(cfg)),
        vocab(std::move(vocab)),
        tags(std::move(tags)),
        class_sizes(std::move(class_sizes)) {
    this->cfg.validate();
    if (static_cast<int32_t>(this->class_sizes.size()) != this->cfg.class_levels)
      throw ConfigError("class_sizes must have one entry per class level");
    init_params();
  }

  PipelineConfig cfg;
  Vocab vocab;
  PosTagSet tags;
  std::vector<int32_t> class_sizes;  // alphabet size per level, incl. NONE
  TensorMap params;

  // Feature embedding width: d_p = d_c = floor(d_E / (k + 1)); the
  // remainder r = d_E - (k+1)*d_p is zero-padded in concatenate mode.
  int32_t feat_dim() const { return cfg.d_model / (cfg.class_levels + 1); }

  // Alphabet of the auxiliary prediction head.
  int32_t aux_size() const {
    switch (cfg.aux_task) {
      case AuxTask::kClassL1: return class_sizes.at(0);
      case AuxTask::kClassL2:
        if (class_sizes.size() < 2) throw ConfigError("class_l2 aux task needs >= 2 levels");
        return class_sizes.at(1);
      default: return tags.size();
    }
  }

  bool aux_uses_crf() const {
    return cfg.aux_task == AuxTask::kPosCrf || cfg.aux_task == AuxTask::kClassL1 ||
           cfg.aux_task == AuxTask::kClassL2;
  }

  const Tensor& param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw ContractViolation("missing parameter: " + name);
    return it->second;
  }

  CrfParams crf_params() const { return CrfParams{param("crf.M")}; }

  // Checkpoint payload: parameters plus the metadata needed to rebuild the
  // model (dims, vocab characters, tag names, class alphabet sizes).
  TensorMap to_tensors() const {
    TensorMap out = params;
    Tensor dims({12});
    dims.values = {static_cast<float>(cfg.d_model),
                   static_cast<float>(cfg.encoder_layers),
                   static_cast<float>(cfg.decoder_layers),
                   static_cast<float>(cfg.num_heads),
                   static_cast<float>(cfg.ffn_hidden),
                   static_cast<float>(cfg.class_levels),
                   static_cast<float>(static_cast<int>(cfg.fusion_mode)),
                   static_cast<float>(static_cast<int>(cfg.aux_task)),
                   static_cast<float>(static_cast<int>(cfg.crf_emission)),
                   static_cast<float>(cfg.beam_size),
                   static_cast<float>(vocab.size()),
                   static_cast<float>(tags.size())};
    out["meta.dims"] = std::move(dims);
    std::vector<Token> chars = vocab.characters();
    Tensor vt({static_cast<int64_t>(chars.size())});
    for (size_t i = 0; i < chars.size(); ++i) vt.values[i] = static_cast<float>(chars[i]);
    out["meta.vocab_chars"] = std::move(vt);
    size_t max_name = 1;
    for (int32_t i = 0; i < tags.size(); ++i) max_name = std::max(max_name, tags.name(i).size());
    Tensor tt({tags.size(), static_cast<int64_t>(max_name)});
    for (int32_t i = 0; i < tags.size(); ++i) {
      const std::string& n = tags.name(i);
      for (size_t j = 0; j < n.size(); ++j)
        tt.at(i, static_cast<int64_t>(j)) = static_cast<float>(static_cast<unsigned char>(n[j]));
    }
    out["meta.pos_tags"] = std::move(tt);
    Tensor cs({static_cast<int64_t>(class_sizes.size())});
    for (size_t i = 0; i < class_sizes.size(); ++i)
      cs.values[i] = static_cast<float>(class_sizes[i]);
    out["meta.class_sizes"] = std::move(cs);
    return out;
  }

  static ModelState from_tensors(const TensorMap& tensors) {
    ModelState s;
    auto it = tensors.find("meta.dims");
    if (it == tensors.end()) throw DataError("checkpoint missing meta.dims");
    const auto& d = it->second.values;
    s.cfg.d_model = static_cast<int32_t>(d.at(0));
    s.cfg.encoder_layers = static_cast<int32_t>(d.at(1));
    s.cfg.decoder_layers = static_cast<int32_t>(d.at(2));
    s.cfg.num_heads = static_cast<int32_t>(d.at(3));
    s.cfg.ffn_hidden = static_cast<int32_t>(d.at(4));
    s.cfg.class_levels = static_cast<int32_t>(d.at(5));
    s.cfg.fusion_mode = static_cast<FusionMode>(static_cast<int>(d.at(6)));
    s.cfg.aux_task = static_cast<AuxTask>(static_cast<int>(d.at(7)));
    s.cfg.crf_emission = static_cast<CrfEmission>(static_cast<int>(d.at(8)));
    s.cfg.beam_size = static_cast<int32_t>(d.at(9));
    for (float v : tensors.at("meta.vocab_chars").values)
      s.vocab.add(static_cast<Token>(v));
    const Tensor& tt = tensors.at("meta.pos_tags");
    std::vector<std::string> names;
    for (int64_t i = 0; i < tt.rows(); ++i) {
      std::string n;
      for (int64_t j = 0; j < tt.cols(); ++j) {
        auto c = static_cast<unsigned char>(tt.at(i, j));
        if (c) n.push_back(static_cast<char>(c));
      }
      names.push_back(n);
    }
    s.tags = PosTagSet(names);
    for (float v : tensors.at("meta.class_sizes").values)
      s.class_sizes.push_back(static_cast<int32_t>(v));
    for (const auto& [name, t] : tensors)
      if (name.rfind("meta.", 0) != 0) s.params[name] = t;
    return s;
  }

 private:
  void init_params() {
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> dist(0.0, 0.02);
    auto randn = [&](const std::string& name, std::vector<int64_t> shape) {
      Tensor t(std::move(shape));
      for (float& v : t.values) v = static_cast<float>(dist(rng));
      params[name] = std::move(t);
    };
    auto zeros = [&](const std::string& name, std::vector<int64_t> shape) {
      params[name] = Tensor(std::move(shape));
    };
    auto ones = [&](const std::string& name, std::vector<int64_t> shape) {
      Tensor t(std::move(shape));
      for (float& v : t.values) v = 1.0f;
      params[name] = std::move(t);
    };
    const int64_t d = cfg.d_model, h = cfg.ffn_hidden;
    const int64_t df = feat_dim();
    randn("emb.word", {vocab.size(), d});
    randn("emb.pos_tag", {tags.size(), df});
    for (int32_t l = 0; l < cfg.class_levels; ++l)
      randn("emb.class." + std::to_string(l + 1), {class_sizes[static_cast<size_t>(l)], df});
    randn("proj.pos", {df, d});
    for (int32_t l = 0; l < cfg.class_levels; ++l)
      randn("proj.class." + std::to_string(l + 1), {df, d});
    auto block = [&](const std::string& p) {
      for (const char* w : {"wq", "wk", "wv", "wo"}) randn(p + "." + w, {d, d});
      for (const char* b : {"bq", "bk", "bv", "bo"}) zeros(p + "." + b, {1, d});
    };
    auto layer_common = [&](const std::string& p) {
      ones(p + ".ln1.g", {1, d});
      zeros(p + ".ln1.b", {1, d});
      ones(p + ".ln2.g", {1, d});
      zeros(p + ".ln2.b", {1, d});
      randn(p + ".ffn.w1", {d, h});
      zeros(p + ".ffn.b1", {1, h});
      randn(p + ".ffn.w2", {h, d});
      zeros(p + ".ffn.b2", {1, d});
    };
    for (int32_t i = 0; i < cfg.encoder_layers; ++i) {
      std::string p = "enc." + std::to_string(i);
      block(p + ".attn");
      layer_common(p);
    }
    for (int32_t i = 0; i < cfg.decoder_layers; ++i) {
      std::string p = "dec." + std::to_string(i);
      block(p + ".self");
      block(p + ".cross");
      layer_common(p);
      ones(p + ".ln3.g", {1, d});
      zeros(p + ".ln3.b", {1, d});
    }
    randn("head.token.w", {d, vocab.size()});
    zeros("head.token.b", {1, vocab.size()});
    randn("head.aux.w", {d, aux_size()});
    zeros("head.aux.b", {1, aux_size()});
    // Transitions start at zero and are learnt end-to-end.
    zeros("crf.M", {aux_size(), aux_size()});
  }
};

namespace model {

inline std::vector<double> sinusoidal_positions(int64_t n, int64_t d) {
  std::vector<double> pe(static_cast<size_t>(n * d), 0.0);
  for (int64_t p = 0; p < n; ++p)
    for (int64_t i = 0; i < d; i += 2) {
      double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      pe[static_cast<size_t>(p * d + i)] = std::sin(static_cast<double>(p) * freq);
      if (i + 1 < d) pe[static_cast<size_t>(p * d + i + 1)] = std::cos(static_cast<double>(p) * freq);
    }
  return pe;
}

// Builds forward graphs over a ModelState. One builder per Graph; leaves
// are memoized so each parameter tensor appears once, which lets callers
// read back per-parameter gradients after backward().
class GraphBuilder {
 public:
  GraphBuilder(ad::Graph& g, const ModelState& s) : g_(g), s_(s) {}

  ad::Node* leaf(const std::string& name) {
    auto it = leaves_.find(name);
    if (it != leaves_.end()) return it->second;
    const Tensor& t = s_.param(name);
    int64_t rows = t.rows();
    int64_t cols = t.shape.size() < 2 ? 1 : t.shape[1];
    if (t.shape.size() == 1) {
      rows = 1;
      cols = t.shape[0];
    }
    ad::Node* n = g_.leaf(rows, cols, t.values.data());
    leaves_.emplace(name, n);
    return n;
  }

  const std::map<std::string, ad::Node*>& leaves() const { return leaves_; }

  // Fused encoder input: word embedding + positional encoding + semantic
  // feature representation (Eq. 10 floor/pad arithmetic in concatenate
  // mode; per-feature projection to d_E in accumulate mode).
  ad::Node* fuse(const std::vector<int32_t>& char_ids, const SemanticFeatureSeq& feats) {
    if (feats.size() != char_ids.size())
      throw ContractViolation("fuse_embeddings: feature length mismatch");
    const int64_t n = static_cast<int64_t>(char_ids.size());
    const int64_t d = s_.cfg.d_model;
    ad::Node* word = g_.gather_rows(leaf("emb.word"), char_ids);
    ad::Node* pos_enc = g_.constant(n, d, sinusoidal_positions(n, d));
    ad::Node* base = g_.add(word, pos_enc);
    std::vector<std::vector<int32_t>> level_ids(static_cast<size_t>(s_.cfg.class_levels));
    for (size_t i = 0; i < feats.size(); ++i)
      for (int32_t l = 0; l < s_.cfg.class_levels; ++l)
        level_ids[static_cast<size_t>(l)].push_back(feats.class_ids[i][static_cast<size_t>(l)]);
    ad::Node* ep = g_.gather_rows(leaf("emb.pos_tag"), feats.pos);
    std::vector<ad::Node*> ecs;
    for (int32_t l = 0; l < s_.cfg.class_levels; ++l)
      ecs.push_back(g_.gather_rows(leaf("emb.class." + std::to_string(l + 1)),
                                   level_ids[static_cast<size_t>(l)]));
    ad::Node* sem = nullptr;
    if (s_.cfg.fusion_mode == FusionMode::kConcatenate) {
      std::vector<ad::Node*> parts{ep};
      parts.insert(parts.end(), ecs.begin(), ecs.end());
      int64_t pad = d - static_cast<int64_t>(s_.cfg.class_levels + 1) * s_.feat_dim();
      if (pad > 0) parts.push_back(g_.zeros(n, pad));
      sem = g_.concat_cols(parts);
    } else {
      sem = g_.matmul(ep, leaf("proj.pos"));
      for (int32_t l = 0; l < s_.cfg.class_levels; ++l)
        sem = g_.add(sem, g_.matmul(ecs[static_cast<size_t>(l)],
                                    leaf("proj.class." + std::to_string(l + 1))));
    }
    return g_.add(base, sem);
  }

  ad::Node* encoder(ad::Node* x) {
    for (int32_t i = 0; i < s_.cfg.encoder_layers; ++i) {
      std::string p = "enc." + std::to_string(i);
      ad::Node* n1 = norm(x, p + ".ln1");
      x = g_.add(x, attention(n1, n1, p + ".attn", false));
      x = g_.add(x, ffn(norm(x, p + ".ln2"), p));
    }
    return x;
  }

  // Decoder over the full prefix (teacher forcing); rows align with the
  // input prefix positions.
  ad::Node* decoder(const std::vector<int32_t>& prefix_ids, ad::Node* h_src) {
    if (prefix_ids.empty() || prefix_ids.front() != Vocab::kBosId)
      throw ContractViolation("decoder prefix must start with BOS");
    const int64_t d = s_.cfg.d_model;
    const int64_t m = static_cast<int64_t>(prefix_ids.size());
    ad::Node* x = g_.add(g_.gather_rows(leaf("emb.word"), prefix_ids),
                         g_.constant(m, d, sinusoidal_positions(m, d)));
    for (int32_t i = 0; i < s_.cfg.decoder_layers; ++i) {
      std::string p = "dec." + std::to_string(i);
      ad::Node* n1 = norm(x, p + ".ln1");
      x = g_.add(x, attention(n1, n1, p + ".self", true));
      ad::Node* ca = attention(norm(x, p + ".ln2"), h_src, p + ".cross", false);
      x = g_.add(x, ca);
      x = g_.add(x, ffn(norm(x, p + ".ln3"), p));
    }
    return x;
  }

  ad::Node* token_logits(ad::Node* h) {
    return g_.add_rowvec(g_.matmul(h, leaf("head.token.w")), leaf("head.token.b"));
  }

  ad::Node* aux_logits(ad::Node* h) {
    return g_.add_rowvec(g_.matmul(h, leaf("head.aux.w")), leaf("head.aux.b"));
  }

  ad::Graph& graph() { return g_; }

 private:
  ad::Node* norm(ad::Node* x, const std::string& p) {
    return g_.layernorm_rows(x, leaf(p + ".g"), leaf(p + ".b"));
  }

  ad::Node* ffn(ad::Node* x, const std::string& p) {
    ad::Node* h = g_.relu(g_.add_rowvec(g_.matmul(x, leaf(p + ".ffn.w1")), leaf(p + ".ffn.b1")));
    return g_.add_rowvec(g_.matmul(h, leaf(p + ".ffn.w2")), leaf(p + ".ffn.b2"));
  }

  // Multi-head scaled dot-product attention; queries from x_q, keys and
  // values from x_kv. Causal masking restricts row i to columns <= i.
  ad::Node* attention(ad::Node* x_q, ad::Node* x_kv, const std::string& p, bool causal) {
    const int64_t d = s_.cfg.d_model;
    const int32_t heads = s_.cfg.num_heads;
    const int64_t dk = d / heads;
    ad::Node* q = g_.add_rowvec(g_.matmul(x_q, leaf(p + ".wq")), leaf(p + ".bq"));
    ad::Node* k = g_.add_rowvec(g_.matmul(x_kv, leaf(p + ".wk")), leaf(p + ".bk"));
    ad::Node* v = g_.add_rowvec(g_.matmul(x_kv, leaf(p + ".wv")), leaf(p + ".bv"));
    std::vector<ad::Node*> outs;
    for (int32_t hh = 0; hh < heads; ++hh) {
      int64_t c0 = hh * dk, c1 = (hh + 1) * dk;
      ad::Node* qh = g_.slice_cols(q, c0, c1);
      ad::Node* kh = g_.slice_cols(k, c0, c1);
      ad::Node* vh = g_.slice_cols(v, c0, c1);
      ad::Node* scores = g_.scale(g_.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dk)));
      ad::Node* attn = g_.softmax_rows(scores, causal, 0);
      outs.push_back(g_.matmul(attn, vh));
    }
    ad::Node* cat = g_.concat_cols(outs);
    return g_.add_rowvec(g_.matmul(cat, leaf(p + ".wo")), leaf(p + ".bo"));
  }

  ad::Graph& g_;
  const ModelState& s_;
  std::map<std::string, ad::Node*> leaves_;
};

// CRF negative log-likelihood as a tape node with a custom backward based
// on forward-backward marginals.
inline ad::Node* crf_nll_node(ad::Graph& g, ad::Node* emissions, ad::Node* transitions,
                              const std::vector<int32_t>& tags) {
  crf::Emissions em(emissions->rows, emissions->cols);
  em.v = emissions->v;
  crf::Transitions tr(transitions->rows);
  tr.v = transitions->v;
  double score = crf::sequence_score(em, tr, tags);
  crf::Marginals marg = crf::forward_backward(em, tr);
  ad::Node* out = g.alloc(1, 1);
  out->v[0] = marg.log_z - score;
  auto marg_ptr = std::make_shared<crf::Marginals>(std::move(marg));
  g.custom([emissions, transitions, out, tags, marg_ptr] {
    double gv = out->g[0];
    const int64_t m = emissions->rows, t = emissions->cols;
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < t; ++j)
        emissions->grad(i, j) += gv * marg_ptr->unary.at(i, j);
    for (int64_t i = 0; i < m; ++i)
      emissions->grad(i, tags[static_cast<size_t>(i)]) -= gv;
    for (int64_t i = 1; i < m; ++i) {
      const crf::Transitions& pw = marg_ptr->pairwise[static_cast<size_t>(i - 1)];
      for (int64_t a = 0; a < t; ++a)
        for (int64_t b = 0; b < t; ++b) transitions->grad(a, b) += gv * pw.at(a, b);
      transitions->grad(tags[static_cast<size_t>(i - 1)], tags[static_cast<size_t>(i)]) -= gv;
    }
  });
  return out;
}

inline Tensor to_tensor(const ad::Node* n) {
  Tensor t({n->rows, n->cols});
  for (size_t i = 0; i < n->v.size(); ++i) t.values[i] = static_cast<float>(n->v[i]);
  return t;
}

}  // namespace model

// --- Inference-facing operations ---

inline Tensor fuse_embeddings(const ModelState& state, const std::vector<int32_t>& char_ids,
                              const SemanticFeatureSeq& features) {
  ad::Graph g;
  model::GraphBuilder b(g, state);
  return model::to_tensor(b.fuse(char_ids, features));
}

inline Tensor encode(const ModelState& state, const Tensor& fused) {
  if (fused.shape.size() != 2 || fused.shape[1] != state.cfg.d_model)
    throw ContractViolation("encode: fused input must be n x d_model");
  ad::Graph g;
  model::GraphBuilder b(g, state);
  std::vector<double> vals(fused.values.begin(), fused.values.end());
  ad::Node* x = g.constant(fused.shape[0], fused.shape[1], vals);
  return model::to_tensor(b.encoder(x));
}

// Token and auxiliary-head logits for the next position given a decoder
// prefix. Both heads read the same trunk hidden state.
inline std::pair<Tensor, Tensor> decode_step(const ModelState& state,
                                             const std::vector<int32_t>& tgt_prefix_ids,
                                             const Tensor& h_src) {
  if (tgt_prefix_ids.empty()) throw ContractViolation("decode_step: empty prefix");
  ad::Graph g;
  model::GraphBuilder b(g, state);
  std::vector<double> vals(h_src.values.begin(), h_src.values.end());
  ad::Node* src = g.constant(h_src.shape.at(0), h_src.shape.at(1), vals);
  ad::Node* h = b.decoder(tgt_prefix_ids, src);
  ad::Node* last = g.slice_rows(h, h->rows - 1, h->rows);
  Tensor tok = model::to_tensor(b.token_logits(last));
  Tensor aux = model::to_tensor(b.aux_logits(last));
  tok.shape = {tok.shape[1]};
  aux.shape = {aux.shape[1]};
  return {std::move(tok), std::move(aux)};
}

// Length-normalized beam search over the token head; the auxiliary head is
// ignored at inference. Reserved symbols other than EOS are never emitted.
inline CharSeq beam_search_decode(const ModelState& state, const CharSeq& src,
                                  const SemanticFeatureSeq& features, int32_t beam,
                                  int32_t max_len) {
  if (beam < 1) throw ContractViolation("beam_search_decode: beam must be >= 1");
  if (max_len < 1) throw ContractViolation("beam_search_decode: max_len must be >= 1");
  Tensor h_src = encode(state, fuse_embeddings(state, state.vocab.encode(src), features));

  struct Beam {
    std::vector<int32_t> ids{Vocab::kBosId};
    double logp = 0.0;
    bool done = false;
    double norm_score() const {
      size_t len = ids.size() - 1;
      return len == 0 ? -1e30 : logp / static_cast<double>(len);
    }
  };
  auto better = [](const Beam& a, const Beam& b) {
    if (a.norm_score() != b.norm_score()) return a.norm_score() > b.norm_score();
    return a.ids < b.ids;  // deterministic tie-break
  };

  std::vector<Beam> beams{Beam{}};
  std::vector<Beam> finished;
  for (int32_t step = 0; step < max_len && !beams.empty(); ++step) {
    std::vector<Beam> next;
    for (const Beam& bm : beams) {
      auto [tok_logits, aux_logits] = decode_step(state, bm.ids, h_src);
      (void)aux_logits;
      // log-softmax over the full vocabulary, then ban reserved ids
      // except EOS.
      double mx = -1e300;
      for (float v : tok_logits.values) mx = std::max(mx, static_cast<double>(v));
      double z = 0;
      for (float v : tok_logits.values) z += std::exp(static_cast<double>(v) - mx);
      double lz = mx + std::log(z);
      std::vector<std::pair<double, int32_t>> cands;
      for (int32_t id = 0; id < state.vocab.size(); ++id) {
        if (id == Vocab::kPadId || id == Vocab::kUnkId || id == Vocab::kBosId ||
            id == Vocab::kMaskId)
          continue;
        cands.push_back({static_cast<double>(tok_logits.values[static_cast<size_t>(id)]) - lz, id});
      }
      std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      size_t take = std::min<size_t>(static_cast<size_t>(beam), cands.size());
      for (size_t i = 0; i < take; ++i) {
        Beam nb = bm;
        nb.ids.push_back(cands[i].second);
        nb.logp += cands[i].first;
        if (cands[i].second == Vocab::kEosId) {
          nb.done = true;
          finished.push_back(nb);
        } else {
          next.push_back(nb);
        }
      }
    }
    std::sort(next.begin(), next.end(), better);
    if (next.size() > static_cast<size_t>(beam)) next.resize(static_cast<size_t>(beam));
    beams = std::move(next);
    if (!finished.empty() && !beams.empty()) {
      std::sort(finished.begin(), finished.end(), better);
      if (finished.size() >= static_cast<size_t>(beam) &&
          better(finished[static_cast<size_t>(beam) - 1], beams.front()))
        break;
    }
  }
  std::vector<Beam> pool = finished.empty() ? beams : finished;
  if (pool.empty()) return {};
  std::sort(pool.begin(), pool.end(), better);
  const Beam& best = pool.front();
  std::vector<int32_t> body(best.ids.begin() + 1, best.ids.end());
  if (!body.empty() && body.back() == Vocab::kEosId) body.pop_back();
  return state.vocab.decode(body);
}

}  // namespace sggec
