#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sggec/eval.hpp"
#include "sggec/model.hpp"
#include "sggec/tagger.hpp"

namespace sggec {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int64_t warmup_steps = 500;
  double decay_power = 1.0;
  double end_lr_fraction = 0.1;  // polynomial decay floor, as a fraction of learning_rate
  int32_t max_epochs = 200;
  int64_t batch_tokens = 512;  // token budget per batch (source + target lengths)
  double aux_weight = 1.0;
  uint64_t seed = 1;
  int32_t average_window = 5;
  int32_t eval_every = 1;          // dev exact-match cadence, in epochs
  double stop_exact_match = 1.0;   // stop once dev exact-match reaches this

  void validate() const {
    if (learning_rate <= 0) throw ConfigError("learning_rate must be > 0");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
      throw ConfigError("moment constants must be in [0,1)");
    if (adam_eps <= 0) throw ConfigError("adam_eps must be > 0");
    if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (batch_tokens < 1) throw ConfigError("batch_tokens must be >= 1");
    if (aux_weight < 0) throw ConfigError("aux_weight must be >= 0");
    if (average_window < 1) throw ConfigError("average_window must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  }
};

struct GecPair {
  CharSeq src;
  CharSeq tgt;
};

// A pair with the auxiliary tag sequence of the target attached.
struct PreparedExample {
  std::vector<int32_t> src_ids;
  SemanticFeatureSeq feats;
  std::vector<int32_t> tgt_ids;
  std::vector<int32_t> aux_tags;  // one per target character
};

inline std::vector<int32_t> target_aux_tags(const ModelState& state, const CharSeq& tgt,
                                            const PosLexicon& pos_lex,
                                            const SemClassDict& sem_dict) {
  if (state.cfg.aux_task == AuxTask::kNone) return {};
  SemanticFeatureSeq f = feature_sequence(tgt, pos_lex, sem_dict, state.cfg.class_levels);
  std::vector<int32_t> tags;
  tags.reserve(f.size());
  for (size_t i = 0; i < f.size(); ++i) {
    switch (state.cfg.aux_task) {
      case AuxTask::kClassL1: tags.push_back(f.class_ids[i][0]); break;
      case AuxTask::kClassL2: tags.push_back(f.class_ids[i][1]); break;
      default: tags.push_back(f.pos[i]); break;
    }
  }
  return tags;
}

inline PreparedExample prepare_example(const ModelState& state, const GecPair& pair,
                                       const PosLexicon& pos_lex, const SemClassDict& sem_dict) {
  PreparedExample ex;
  ex.src_ids = state.vocab.encode(pair.src);
  ex.feats = feature_sequence(pair.src, pos_lex, sem_dict, state.cfg.class_levels);
  ex.tgt_ids = state.vocab.encode(pair.tgt);
  ex.aux_tags = target_aux_tags(state, pair.tgt, pos_lex, sem_dict);
  return ex;
}

// Gradients per parameter name, kept in double for the optimizer.
using GradMap = std::map<std::string, std::vector<double>>;

struct JointLoss {
  double total = 0;
  double token_ce = 0;
  double aux = 0;
  GradMap grads;
};

namespace train_detail {

// Forward + backward for one example; returns loss components and adds
// gradients into `grads`.
inline std::pair<double, double> example_loss(const ModelState& state, const PreparedExample& ex,
                                              double aux_weight, GradMap* grads) {
  ad::Graph g;
  model::GraphBuilder b(g, state);
  ad::Node* h_src = b.encoder(b.fuse(ex.src_ids, ex.feats));
  std::vector<int32_t> prefix{Vocab::kBosId};
  prefix.insert(prefix.end(), ex.tgt_ids.begin(), ex.tgt_ids.end());
  ad::Node* h = b.decoder(prefix, h_src);
  std::vector<int32_t> targets = ex.tgt_ids;
  targets.push_back(Vocab::kEosId);
  ad::Node* ce = g.cross_entropy(b.token_logits(h), targets);
  ad::Node* loss = ce;
  ad::Node* aux = nullptr;
  const int64_t m = static_cast<int64_t>(ex.tgt_ids.size());
  if (state.cfg.aux_task != AuxTask::kNone && m > 0) {
    if (static_cast<int64_t>(ex.aux_tags.size()) != m)
      throw ContractViolation("joint_loss: aux tag count must match target length");
    ad::Node* logits = b.aux_logits(g.slice_rows(h, 0, m));
    if (state.cfg.aux_task == AuxTask::kPosCe) {
      aux = g.cross_entropy(logits, ex.aux_tags);
    } else {
      ad::Node* em = state.cfg.crf_emission == CrfEmission::kLogProb
                         ? g.log_softmax_rows(logits)
                         : g.softmax_rows(logits);
      aux = model::crf_nll_node(g, em, b.leaf("crf.M"), ex.aux_tags);
    }
    if (aux_weight != 1.0) aux = g.scale(aux, aux_weight);
    loss = g.add_scalar(ce, aux);
  }
  if (grads) {
    g.backward(loss);
    for (const auto& [name, node] : b.leaves()) {
      std::vector<double>& acc = (*grads)[name];
      if (acc.empty()) acc.assign(node->g.size(), 0.0);
      for (size_t i = 0; i < node->g.size(); ++i) acc[i] += node->g[i];
    }
  }
  return {ce->v[0], aux ? aux->v[0] : 0.0};
}

}  // namespace train_detail

// Eq. 13 joint objective summed over the batch: token-level cross-entropy
// over the target plus EOS, plus the auxiliary tag loss (CRF NLL or plain
// cross-entropy depending on configuration).
inline JointLoss joint_loss(const ModelState& state, const std::vector<PreparedExample>& batch,
                            double aux_weight = 1.0, bool with_grads = true) {
  if (batch.empty()) throw ContractViolation("joint_loss: empty batch");
  JointLoss out;
  for (const PreparedExample& ex : batch) {
    auto [ce, aux] =
        train_detail::example_loss(state, ex, aux_weight, with_grads ? &out.grads : nullptr);
    out.token_ce += ce;
    out.aux += aux;
  }
  out.total = out.token_ce + out.aux;
  return out;
}

// Adaptive-moment optimizer with linear warmup and polynomial decay down to
// end_lr_fraction of the peak rate.
class AdamOptimizer {
 public:
  AdamOptimizer(TrainConfig cfg, int64_t total_steps) : cfg_(cfg), total_steps_(total_steps) {
    cfg_.validate();
  }

  double learning_rate(int64_t step) const {
    double peak = cfg_.learning_rate;
    if (cfg_.warmup_steps > 0 && step <= cfg_.warmup_steps)
      return peak * static_cast<double>(step) / static_cast<double>(cfg_.warmup_steps);
    double end_lr = peak * cfg_.end_lr_fraction;
    int64_t decay_span = total_steps_ - cfg_.warmup_steps;
    if (decay_span <= 0) return peak;
    double progress = static_cast<double>(std::min(step, total_steps_) - cfg_.warmup_steps) /
                      static_cast<double>(decay_span);
    return (peak - end_lr) * std::pow(1.0 - progress, cfg_.decay_power) + end_lr;
  }

  void step(ModelState& state, const GradMap& grads) {
    ++step_;
    double lr = learning_rate(step_);
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (const auto& [name, g] : grads) {
      Tensor& p = state.params.at(name);
      if (p.values.size() != g.size())
        throw ContractViolation("optimizer: gradient shape mismatch for " + name);
      std::vector<double>& m = m_[name];
      std::vector<double>& v = v_[name];
      if (m.empty()) {
        m.assign(g.size(), 0.0);
        v.assign(g.size(), 0.0);
      }
      for (size_t i = 0; i < g.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        double update = lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.adam_eps);
        p.values[i] = static_cast<float>(static_cast<double>(p.values[i]) - update);
      }
    }
  }

  int64_t steps_taken() const { return step_; }

 private:
  TrainConfig cfg_;
  int64_t total_steps_;
  int64_t step_ = 0;
  GradMap m_, v_;
};

// Fraction of pairs whose greedy decode equals the target exactly.
inline double exact_match_rate(const ModelState& state, const std::vector<GecPair>& corpus,
                               const PosLexicon& pos_lex, const SemClassDict& sem_dict) {
  if (corpus.empty()) return 0.0;
  int64_t hits = 0;
  for (const GecPair& p : corpus) {
    SemanticFeatureSeq f = feature_sequence(p.src, pos_lex, sem_dict, state.cfg.class_levels);
    int32_t max_len = static_cast<int32_t>(p.src.size() + p.tgt.size() + 8);
    if (beam_search_decode(state, p.src, f, 1, max_len) == p.tgt) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(corpus.size());
}

struct TrainLogEntry {
  int32_t epoch = 0;
  double loss = 0;
  double dev_exact_match = -1;  // -1 when not evaluated this epoch
};

struct TrainResult {
  std::vector<TrainLogEntry> log;
  std::vector<std::string> checkpoint_paths;
};

inline void write_train_log(std::ostream& out, const std::vector<TrainLogEntry>& log) {
  out << "epoch\tloss\tdev_exact_match\n";
  for (const TrainLogEntry& e : log) {
    out << e.epoch << '\t' << e.loss << '\t';
    if (e.dev_exact_match >= 0) out << e.dev_exact_match;
    else out << "-";
    out << '\n';
  }
}

// Seed-deterministic epoch loop over token-budget batches. Writes one
// checkpoint per epoch when out_dir is non-empty and aborts if the loss
// diverges.
inline TrainResult train_loop(ModelState& state, const std::vector<GecPair>& corpus,
                              const PosLexicon& pos_lex, const SemClassDict& sem_dict,
                              const TrainConfig& cfg, const std::string& out_dir = "") {
  cfg.validate();
  if (corpus.empty()) throw ConfigError("train_loop: empty corpus");
  std::vector<PreparedExample> examples;
  examples.reserve(corpus.size());
  for (const GecPair& p : corpus) examples.push_back(prepare_example(state, p, pos_lex, sem_dict));

  // Upper bound on optimizer steps for the decay schedule.
  int64_t tokens_per_epoch = 0;
  for (const PreparedExample& ex : examples)
    tokens_per_epoch += static_cast<int64_t>(ex.src_ids.size() + ex.tgt_ids.size());
  int64_t batches_per_epoch =
      std::max<int64_t>(1, (tokens_per_epoch + cfg.batch_tokens - 1) / cfg.batch_tokens);
  AdamOptimizer opt(cfg, batches_per_epoch * cfg.max_epochs);

  std::mt19937_64 rng(cfg.seed);
  std::vector<size_t> order(examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  for (int32_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    size_t i = 0;
    while (i < order.size()) {
      std::vector<PreparedExample> batch;
      int64_t budget = 0;
      while (i < order.size()) {
        const PreparedExample& ex = examples[order[i]];
        int64_t cost = static_cast<int64_t>(ex.src_ids.size() + ex.tgt_ids.size());
        if (!batch.empty() && budget + cost > cfg.batch_tokens) break;
        batch.push_back(ex);
        budget += cost;
        ++i;
      }
      JointLoss jl = joint_loss(state, batch, cfg.aux_weight);
      if (!std::isfinite(jl.total))
        throw DataError("train_loop: loss diverged (non-finite) at epoch " +
                        std::to_string(epoch));
      epoch_loss += jl.total;
      opt.step(state, jl.grads);
    }
    TrainLogEntry entry;
    entry.epoch = epoch;
    entry.loss = epoch_loss;
    bool eval_now = epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs;
    if (eval_now) entry.dev_exact_match = exact_match_rate(state, corpus, pos_lex, sem_dict);
    result.log.push_back(entry);
    if (!out_dir.empty()) {
      std::string path = out_dir + "/ckpt_" + std::to_string(epoch) + ".sqmd";
      save_tensors_file(path, state.to_tensors());
      result.checkpoint_paths.push_back(path);
    }
    if (eval_now && entry.dev_exact_match >= cfg.stop_exact_match) break;
  }
  return result;
}

// Element-wise arithmetic mean of every tensor across checkpoints.
inline TensorMap average_tensor_maps(const std::vector<TensorMap>& maps) {
  if (maps.empty()) throw ConfigError("average_checkpoints: need at least one checkpoint");
  TensorMap out = maps.front();
  for (size_t k = 1; k < maps.size(); ++k) {
    if (maps[k].size() != out.size())
      throw DataError("average_checkpoints: checkpoint tensor sets differ");
    for (auto& [name, t] : out) {
      auto it = maps[k].find(name);
      if (it == maps[k].end())
        throw DataError("average_checkpoints: missing tensor " + name);
      if (it->second.shape != t.shape)
        throw DataError("average_checkpoints: shape mismatch for tensor " + name);
    }
  }
  for (auto& [name, t] : out) {
    for (size_t i = 0; i < t.values.size(); ++i) {
      double s = 0;
      for (const TensorMap& m : maps) s += static_cast<double>(m.at(name).values[i]);
      t.values[i] = static_cast<float>(s / static_cast<double>(maps.size()));
    }
  }
  return out;
}

inline ModelState average_checkpoints(const std::vector<std::string>& paths) {
  std::vector<TensorMap> maps;
  maps.reserve(paths.size());
  for (const std::string& p : paths) maps.push_back(load_tensors_file(p));
  return ModelState::from_tensors(average_tensor_maps(maps));
}

// --- Synthetic corpus generation ---

struct SyntheticSpec {
  // Each template is a sequence of slots; each slot lists the words that may
  // fill it (one choice drawn uniformly per sentence).
  std::vector<std::vector<std::vector<CharSeq>>> templates;
  double substitution_rate = 0;  // homophone substitution, drawn from sim_set
  double deletion_rate = 0;      // character dropped on the erroneous side
  double insertion_rate = 0;     // character doubled on the erroneous side
  double swap_rate = 0;          // adjacent characters transposed
  int64_t size = 0;
  uint64_t seed = 1;

  void validate() const {
    if (templates.empty()) throw ConfigError("SyntheticSpec: no templates");
    for (const auto& tpl : templates) {
      if (tpl.empty()) throw ConfigError("SyntheticSpec: empty template");
      for (const auto& slot : tpl)
        if (slot.empty()) throw ConfigError("SyntheticSpec: empty slot");
    }
    for (double r :
         {substitution_rate, deletion_rate, insertion_rate, swap_rate})
      if (r < 0 || r > 1) throw ConfigError("SyntheticSpec: rates must be in [0,1]");
    if (size < 0) throw ConfigError("SyntheticSpec: size must be >= 0");
  }
};

// Template file: `P <pool> <words...>` lines define named pools; `T` lines
// give templates as space-separated items where `$pool` draws from a pool
// and anything else is a literal word. `#` starts a comment.
inline std::vector<std::vector<std::vector<CharSeq>>> parse_template_file(std::istream& in) {
  std::map<std::string, std::vector<CharSeq>> pools;
  std::vector<std::vector<std::vector<CharSeq>>> templates;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (size_t h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ss(line);
    std::string kind;
    if (!(ss >> kind)) continue;
    if (kind == "P") {
      std::string name, word;
      if (!(ss >> name))
        throw DataError("templates line " + std::to_string(lineno) + ": pool needs a name");
      std::vector<CharSeq>& pool = pools[name];
      while (ss >> word) pool.push_back(to_charseq(word));
      if (pool.empty())
        throw DataError("templates line " + std::to_string(lineno) + ": empty pool " + name);
    } else if (kind == "T") {
      std::vector<std::vector<CharSeq>> tpl;
      std::string item;
      while (ss >> item) {
        if (item.size() > 1 && item[0] == '$') {
          auto it = pools.find(item.substr(1));
          if (it == pools.end())
            throw DataError("templates line " + std::to_string(lineno) + ": unknown pool " +
                            item.substr(1));
          tpl.push_back(it->second);
        } else {
          tpl.push_back({to_charseq(item)});
        }
      }
      if (tpl.empty())
        throw DataError("templates line " + std::to_string(lineno) + ": empty template");
      templates.push_back(std::move(tpl));
    } else {
      throw DataError("templates line " + std::to_string(lineno) + ": unknown record " + kind);
    }
  }
  if (templates.empty()) throw DataError("template file defines no templates");
  return templates;
}

inline std::vector<std::vector<std::vector<CharSeq>>> load_template_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open template file: " + path);
  return parse_template_file(f);
}

struct SyntheticPair {
  CharSeq erroneous;
  CharSeq correct;
  EditSet edits;  // over the erroneous side; applying them yields `correct`
};

namespace train_detail {

// One sentence as mutation cells: `cur` is the erroneous-side realization of
// the original character `orig`. Edits fall out of a single walk, so the
// round-trip identity holds by construction.
struct Cell {
  CharSeq cur;
  Token orig;
};

inline SyntheticPair cells_to_pair(std::vector<Cell> cells) {
  SyntheticPair out;
  // Coalesce transpositions: a swap is represented by a cell holding two
  // characters followed by an empty cell (handled by the caller).
  int64_t pos = 0;
  size_t i = 0;
  while (i < cells.size()) {
    if (cells[i].cur.size() == 1 && cells[i].cur[0] == cells[i].orig) {
      out.erroneous.push_back(cells[i].orig);
      out.correct.push_back(cells[i].orig);
      ++pos;
      ++i;
      continue;
    }
    // run of mutated cells
    Edit e;
    e.start = pos;
    while (i < cells.size() && !(cells[i].cur.size() == 1 && cells[i].cur[0] == cells[i].orig)) {
      for (Token t : cells[i].cur) {
        out.erroneous.push_back(t);
        ++pos;
      }
      out.correct.push_back(cells[i].orig);
      e.replacement.push_back(cells[i].orig);
      ++i;
    }
    e.end = pos;
    out.edits.edits.push_back(std::move(e));
  }
  return out;
}

}  // namespace train_detail

// Correct sentences drawn from templates; errors injected at the given
// rates with exactly recorded gold edits (erroneous -> correct).
inline std::vector<SyntheticPair> make_synthetic_corpus(const SyntheticSpec& spec,
                                                        const PhoneticLexicon& lex) {
  spec.validate();
  for (const auto& tpl : spec.templates)
    for (const auto& slot : tpl)
      for (const CharSeq& word : slot)
        for (Token c : word)
          if (!is_punctuation(c) && !lex.contains(c))
            throw DataError("make_synthetic_corpus: template word contains character "
                            "missing from the phonetic lexicon: " +
                            token_to_string(c));
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<SyntheticPair> out;
  out.reserve(static_cast<size_t>(spec.size));
  for (int64_t s = 0; s < spec.size; ++s) {
    const auto& tpl = spec.templates[rng() % spec.templates.size()];
    CharSeq correct;
    for (const auto& slot : tpl) {
      const CharSeq& w = slot[rng() % slot.size()];
      correct.insert(correct.end(), w.begin(), w.end());
    }
    std::vector<train_detail::Cell> cells;
    cells.reserve(correct.size());
    for (Token c : correct) cells.push_back({CharSeq{c}, c});
    // Transpositions first, over original adjacent pairs; a swapped pair is
    // excluded from further per-character mutation.
    std::vector<bool> locked(cells.size(), false);
    for (size_t i = 0; i < cells.size(); ++i)
      if (is_punctuation(cells[i].orig)) locked[i] = true;  // errors only on text
    for (size_t i = 0; i + 1 < cells.size(); ++i) {
      if (locked[i] || locked[i + 1]) continue;
      if (cells[i].orig != cells[i + 1].orig && coin(rng) < spec.swap_rate) {
        cells[i].cur = {cells[i + 1].orig, cells[i].orig};
        cells[i + 1].cur.clear();
        locked[i] = locked[i + 1] = true;
      }
    }
    for (size_t i = 0; i < cells.size(); ++i) {
      if (locked[i]) continue;
      if (coin(rng) < spec.substitution_rate) {
        std::set<Token> sims = lex.sim_set(cells[i].orig);
        if (!sims.empty()) {
          size_t pick = rng() % sims.size();
          auto it = sims.begin();
          std::advance(it, static_cast<long>(pick));
          cells[i].cur = {*it};
          continue;
        }
      }
      if (coin(rng) < spec.deletion_rate) {
        cells[i].cur.clear();
        continue;
      }
      if (coin(rng) < spec.insertion_rate) cells[i].cur = {cells[i].orig, cells[i].orig};
    }
    out.push_back(train_detail::cells_to_pair(std::move(cells)));
  }
  return out;
}

}  // namespace sggec
