// Command-line front end for the correction pipeline: data generation,
// training, correction, scoring, and diagnostics.

#include <atomic>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "sggec/eval.hpp"
#include "sggec/sec.hpp"
#include "sggec/train.hpp"

using json = nlohmann::json;

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::istream* in = &std::cin;
  std::ifstream f;
  if (!path.empty()) {
    f.open(path);
    if (!f) throw sggec::IoError("cannot open input file: " + path);
    in = &f;
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(*in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw sggec::IoError("cannot open output file: " + path);
  return f;
}

std::vector<sggec::GecPair> read_pairs(const std::string& path) {
  std::vector<sggec::GecPair> pairs;
  std::vector<std::string> lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    size_t tab = lines[i].find('\t');
    if (tab == std::string::npos)
      throw sggec::DataError("pairs file line " + std::to_string(i + 1) +
                             ": expected source<TAB>target");
    pairs.push_back({sggec::to_charseq(lines[i].substr(0, tab)),
                     sggec::to_charseq(lines[i].substr(tab + 1))});
  }
  if (pairs.empty()) throw sggec::DataError("pairs file is empty: " + path);
  return pairs;
}

sggec::PipelineConfig config_from(const std::string& path) {
  return path.empty() ? sggec::PipelineConfig{} : sggec::load_config(path);
}

// Runs fn(i) over all indices with `jobs` threads; results keep input order.
template <typename Fn>
void for_each_indexed(size_t n, int32_t jobs, Fn fn) {
  if (jobs <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  auto worker = [&] {
    while (true) {
      size_t i = next.fetch_add(1);
      if (i >= n) break;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  for (int32_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

int cmd_gen(const std::string& templates_path, const std::string& pinyin_path, int64_t size,
            double sub, double del, double ins, double swap, uint64_t seed,
            const std::string& pairs_out, const std::string& m2_out) {
  sggec::SyntheticSpec spec;
  spec.templates = sggec::load_template_file(templates_path);
  spec.substitution_rate = sub;
  spec.deletion_rate = del;
  spec.insertion_rate = ins;
  spec.swap_rate = swap;
  spec.size = size;
  spec.seed = seed;
  sggec::PhoneticLexicon lex = sggec::load_phonetic_lexicon(pinyin_path);
  std::vector<sggec::SyntheticPair> corpus = sggec::make_synthetic_corpus(spec, lex);
  std::ostream* out = &std::cout;
  std::ofstream pf;
  if (!pairs_out.empty()) {
    pf = open_out(pairs_out);
    out = &pf;
  }
  for (const auto& p : corpus)
    *out << sggec::to_string(p.erroneous) << '\t' << sggec::to_string(p.correct) << '\n';
  if (!m2_out.empty()) {
    std::ofstream mf = open_out(m2_out);
    for (const auto& p : corpus) sggec::write_m2_record(mf, p.erroneous, p.edits);
  }
  return 0;
}

int cmd_freq(const std::string& in_path, const std::string& out_path) {
  std::vector<sggec::CharSeq> corpus;
  for (const std::string& line : read_lines(in_path))
    if (!line.empty()) corpus.push_back(sggec::to_charseq(line));
  sggec::FrequencyTable ft = sggec::build_frequency_table(corpus);
  if (out_path.empty()) {
    ft.save(std::cout);
  } else {
    std::ofstream f = open_out(out_path);
    ft.save(f);
  }
  return 0;
}

int cmd_mlm_train(const std::string& in_path, const std::string& out_path, int32_t window,
                  double alpha) {
  std::vector<sggec::CharSeq> corpus;
  for (const std::string& line : read_lines(in_path))
    if (!line.empty()) corpus.push_back(sggec::to_charseq(line));
  sggec::NGramMlm mlm = sggec::train_ngram_mlm(corpus, window, alpha);
  sggec::save_tensors_file(out_path, mlm.to_tensors());
  return 0;
}

json trace_json(size_t line_no, const sggec::SecTrace& trace) {
  json records = json::array();
  for (const auto& r : trace.records) {
    json cands = json::array();
    for (const auto& [tok, score] : r.candidates)
      cands.push_back({{"char", sggec::token_to_string(tok)}, {"score", score}});
    json rec = {{"position", r.position},
                {"original", sggec::token_to_string(r.original)},
                {"masked", r.masked},
                {"candidates", cands},
                {"reason", sggec::to_string(r.reason)}};
    if (r.reason == sggec::SecRecord::Reason::kReplaced)
      rec["replacement"] = sggec::token_to_string(r.replacement);
    records.push_back(rec);
  }
  return {{"line", line_no}, {"records", records}};
}

int cmd_sec(const std::string& model_path, const std::string& pinyin_path,
            const std::string& freq_path, const std::string& config_path, int64_t kc,
            const std::string& in_path, const std::string& trace_path) {
  sggec::NGramMlm mlm = sggec::NGramMlm::from_tensors(sggec::load_tensors_file(model_path));
  sggec::PhoneticLexicon lex = sggec::load_phonetic_lexicon(pinyin_path);
  sggec::FrequencyTable ft = sggec::load_frequency_table(freq_path);
  sggec::PipelineConfig cfg = config_from(config_path);
  if (kc >= 0) cfg.k_c = kc;
  std::ofstream trace_file;
  if (!trace_path.empty()) trace_file = open_out(trace_path);
  std::vector<std::string> lines = read_lines(in_path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) {
      std::cout << '\n';
      continue;
    }
    auto [fixed, trace] = sggec::correct_spelling(sggec::to_charseq(lines[i]), mlm, lex, ft, cfg);
    std::cout << sggec::to_string(fixed) << '\n';
    if (trace_file.is_open()) trace_file << trace_json(i + 1, trace).dump() << '\n';
  }
  return 0;
}

int cmd_tag(const std::string& pos_path, const std::string& sem_path,
            const std::string& config_path, const std::string& in_path) {
  sggec::PosLexicon pos_lex = sggec::load_pos_lexicon(pos_path);
  sggec::SemClassDict sem_dict;
  if (!sem_path.empty()) sem_dict = sggec::load_semclass_dict(sem_path);
  sggec::PipelineConfig cfg = config_from(config_path);
  for (const std::string& line : read_lines(in_path)) {
    if (line.empty()) {
      std::cout << '\n';
      continue;
    }
    sggec::CharSeq seq = sggec::to_charseq(line);
    std::vector<sggec::CharSeq> words = sggec::segment_maxmatch(seq, pos_lex);
    std::vector<int32_t> tags = sggec::pos_tag(words, pos_lex);
    for (size_t w = 0; w < words.size(); ++w) {
      if (w) std::cout << ' ';
      std::cout << sggec::to_string(words[w]) << '/' << pos_lex.tags().name(tags[w]);
      if (!sem_path.empty()) {
        sggec::SemClassPath path = sem_dict.lookup(words[w], cfg.class_levels);
        std::cout << '/';
        for (size_t l = 0; l < path.levels.size(); ++l) {
          if (l) std::cout << '.';
          int32_t id = path.levels[l];
          std::cout << (id == sggec::kSemNone ? "<none>"
                                              : sem_dict.code_name(static_cast<int32_t>(l), id));
        }
      }
    }
    std::cout << '\n';
  }
  return 0;
}

int cmd_train(const std::string& pairs_path, const std::string& pos_path,
              const std::string& sem_path, const std::string& config_path,
              const std::string& out_dir, const std::string& model_out,
              const std::string& log_path, sggec::TrainConfig tcfg) {
  std::vector<sggec::GecPair> pairs = read_pairs(pairs_path);
  sggec::PosLexicon pos_lex = sggec::load_pos_lexicon(pos_path);
  sggec::SemClassDict sem_dict = sggec::load_semclass_dict(sem_path);
  sggec::PipelineConfig cfg = config_from(config_path);
  cfg.seed = tcfg.seed;
  std::vector<sggec::CharSeq> texts;
  for (const auto& p : pairs) {
    texts.push_back(p.src);
    texts.push_back(p.tgt);
  }
  sggec::Vocab vocab = sggec::build_vocab(texts);
  std::vector<int32_t> class_sizes;
  for (int32_t l = 0; l < cfg.class_levels; ++l) class_sizes.push_back(sem_dict.level_size(l));
  sggec::ModelState state(cfg, vocab, pos_lex.tags(), class_sizes);
  sggec::TrainResult result = sggec::train_loop(state, pairs, pos_lex, sem_dict, tcfg, out_dir);
  if (!log_path.empty()) {
    std::ofstream lf = open_out(log_path);
    sggec::write_train_log(lf, result.log);
  } else {
    sggec::write_train_log(std::cout, result.log);
  }
  if (!model_out.empty()) {
    size_t window = std::min<size_t>(static_cast<size_t>(tcfg.average_window),
                                     result.checkpoint_paths.size());
    if (window == 0) {
      sggec::save_tensors_file(model_out, state.to_tensors());
    } else {
      std::vector<std::string> last(result.checkpoint_paths.end() - static_cast<long>(window),
                                    result.checkpoint_paths.end());
      sggec::ModelState avg = sggec::average_checkpoints(last);
      sggec::save_tensors_file(model_out, avg.to_tensors());
    }
  }
  return 0;
}

int cmd_correct(const std::string& model_path, const std::string& mlm_path,
                const std::string& pinyin_path, const std::string& freq_path,
                const std::string& pos_path, const std::string& sem_path,
                const std::string& config_path, int64_t kc, int32_t beam, int32_t jobs,
                bool sec_only, bool gec_only, const std::string& in_path) {
  if (sec_only && gec_only)
    throw sggec::ConfigError("--sec-only and --gec-only are mutually exclusive");
  sggec::PipelineConfig cfg = config_from(config_path);
  if (kc >= 0) cfg.k_c = kc;
  if (beam >= 1) cfg.beam_size = beam;

  std::optional<sggec::NGramMlm> mlm;
  std::optional<sggec::PhoneticLexicon> lex;
  std::optional<sggec::FrequencyTable> ft;
  if (!gec_only) {
    mlm = sggec::NGramMlm::from_tensors(sggec::load_tensors_file(mlm_path));
    lex = sggec::load_phonetic_lexicon(pinyin_path);
    ft = sggec::load_frequency_table(freq_path);
  }
  std::optional<sggec::ModelState> state;
  std::optional<sggec::PosLexicon> pos_lex;
  std::optional<sggec::SemClassDict> sem_dict;
  if (!sec_only) {
    state = sggec::ModelState::from_tensors(sggec::load_tensors_file(model_path));
    pos_lex = sggec::load_pos_lexicon(pos_path, state->tags);
    sem_dict = sggec::load_semclass_dict(sem_path);
  }

  std::vector<std::string> lines = read_lines(in_path);
  std::vector<std::string> outputs(lines.size());
  for_each_indexed(lines.size(), jobs, [&](size_t i) {
    if (lines[i].empty()) return;
    sggec::CharSeq seq = sggec::to_charseq(lines[i]);
    if (!gec_only) seq = sggec::correct_spelling(seq, *mlm, *lex, *ft, cfg).first;
    if (!sec_only) {
      sggec::SemanticFeatureSeq f =
          sggec::feature_sequence(seq, *pos_lex, *sem_dict, state->cfg.class_levels);
      seq = sggec::beam_search_decode(*state, seq, f, cfg.beam_size,
                                      static_cast<int32_t>(seq.size()) + 8);
    }
    outputs[i] = sggec::to_string(seq);
  });
  for (const std::string& out : outputs) std::cout << out << '\n';
  return 0;
}

int cmd_score(const std::string& hyp_path, const std::string& gold_path, double beta) {
  std::ifstream gf(gold_path);
  if (!gf) throw sggec::IoError("cannot open gold file: " + gold_path);
  std::vector<sggec::M2Record> gold = sggec::parse_m2_file(gf);
  std::vector<std::string> hyp_lines = read_lines(hyp_path);
  if (hyp_lines.size() < gold.size())
    throw sggec::DataError("hypothesis file has fewer lines than gold records");
  std::vector<sggec::M2Sentence> sentences;
  for (size_t i = 0; i < gold.size(); ++i)
    sentences.push_back(
        {gold[i].source, sggec::to_charseq(hyp_lines[i]), gold[i].annotations});
  sggec::PrfScore s = sggec::max_match_corpus(sentences, beta);
  std::cout << "tp\tsys\tgold\tprecision\trecall\tf" << beta << '\n';
  std::cout << s.tp << '\t' << s.sys_count << '\t' << s.gold_count << '\t' << s.precision << '\t'
            << s.recall << '\t' << s.f << '\n';
  return 0;
}

int cmd_analyze(const std::string& pairs_path, const std::string& pos_path) {
  std::vector<sggec::GecPair> pairs = read_pairs(pairs_path);
  sggec::PosLexicon pos_lex = sggec::load_pos_lexicon(pos_path);
  std::vector<std::pair<sggec::CharSeq, sggec::CharSeq>> corpus;
  for (const auto& p : pairs) corpus.push_back({p.src, p.tgt});
  sggec::CorpusPosStats stats = sggec::analyze_corpus(corpus, pos_lex);
  std::cout << "pos_divergence_rate\t" << stats.divergence_rate << '\n';
  std::cout << "corr_pos_accuracy\t" << stats.corr_pos_accuracy << '\n';
  std::cout << "mean_dist_wrong_pos\t" << stats.mean_dist_wrong_pos << '\n';
  std::cout << "mean_dist_correct_pos\t" << stats.mean_dist_correct_pos << '\n';
  return 0;
}

int cmd_sweep_kc(const std::string& pairs_path, const std::string& mlm_path,
                 const std::string& pinyin_path, const std::string& freq_path,
                 const std::string& config_path, const std::string& kc_list) {
  std::vector<sggec::GecPair> pairs = read_pairs(pairs_path);
  std::vector<std::pair<sggec::CharSeq, sggec::CharSeq>> dataset;
  for (const auto& p : pairs) dataset.push_back({p.src, p.tgt});
  sggec::NGramMlm mlm = sggec::NGramMlm::from_tensors(sggec::load_tensors_file(mlm_path));
  sggec::PhoneticLexicon lex = sggec::load_phonetic_lexicon(pinyin_path);
  sggec::FrequencyTable ft = sggec::load_frequency_table(freq_path);
  sggec::PipelineConfig cfg = config_from(config_path);
  std::vector<int64_t> kcs;
  std::stringstream ss(kc_list);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) kcs.push_back(std::stoll(item));
  if (kcs.empty()) throw sggec::ConfigError("--kc-values is empty");
  std::cout << "k_c\ttp\tsys\tgold\tprecision\trecall\tf0.5\n";
  for (const auto& pt : sggec::sweep_threshold(dataset, mlm, lex, ft, cfg, kcs))
    std::cout << pt.k_c << '\t' << pt.tp << '\t' << pt.sys << '\t' << pt.gold << '\t'
              << pt.precision << '\t' << pt.recall << '\t' << pt.f05 << '\n';
  return 0;
}

int cmd_inspect(const std::string& model_path, int32_t top_n) {
  sggec::ModelState state = sggec::ModelState::from_tensors(sggec::load_tensors_file(model_path));
  sggec::export_transition_matrix(state, std::cout);
  std::cout << '\n';
  for (const auto& tn : sggec::pos_embedding_neighbors(state, top_n)) {
    std::cout << tn.tag;
    for (const auto& [tok, cos] : tn.neighbors)
      std::cout << '\t' << sggec::token_to_string(tok) << ':' << cos;
    std::cout << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chinese grammatical error correction pipeline"};
  app.require_subcommand(1);

  std::string config, model, mlm, pinyin, freq, pos_lex, semclass, trace;
  std::string in_path, out_path, pairs_path, templates_path, gold_path, hyp_path;
  std::string out_dir, model_out, log_path, kc_values;
  int64_t kc = -1, size = 100;
  int32_t beam = -1, jobs = 1, window = 2, top_n = 3;
  double alpha = 1.0, sub = 0, del = 0, ins = 0, swap = 0, beta = 0.5;
  bool sec_only = false, gec_only = false;
  sggec::TrainConfig tcfg;
  uint64_t seed = 1;

  auto* gen = app.add_subcommand("gen", "generate a synthetic parallel corpus");
  gen->add_option("--templates", templates_path)->required();
  gen->add_option("--pinyin", pinyin);
  gen->add_option("--size", size);
  gen->add_option("--sub-rate", sub);
  gen->add_option("--del-rate", del);
  gen->add_option("--ins-rate", ins);
  gen->add_option("--swap-rate", swap);
  gen->add_option("--seed", seed);
  gen->add_option("--pairs-out", out_path);
  gen->add_option("--m2-out", gold_path);

  auto* freq_cmd = app.add_subcommand("freq", "build a character frequency table");
  freq_cmd->add_option("--in", in_path);
  freq_cmd->add_option("--out", out_path);

  auto* mlm_train = app.add_subcommand("mlm-train", "train the n-gram masked LM");
  mlm_train->add_option("--in", in_path);
  mlm_train->add_option("--out", out_path)->required();
  mlm_train->add_option("--window", window);
  mlm_train->add_option("--alpha", alpha);

  auto* sec = app.add_subcommand("sec", "zero-shot spelling error correction");
  sec->add_option("--model", model)->required();
  sec->add_option("--pinyin", pinyin)->required();
  sec->add_option("--freq", freq)->required();
  sec->add_option("--config", config);
  sec->add_option("--kc", kc);
  sec->add_option("--in", in_path);
  sec->add_option("--trace", trace);

  auto* tag = app.add_subcommand("tag", "segment and POS-tag input lines");
  tag->add_option("--pos-lex", pos_lex)->required();
  tag->add_option("--semclass", semclass);
  tag->add_option("--config", config);
  tag->add_option("--in", in_path);

  auto* train = app.add_subcommand("train", "train the correction model");
  train->add_option("--pairs", pairs_path)->required();
  train->add_option("--pos-lex", pos_lex)->required();
  train->add_option("--semclass", semclass)->required();
  train->add_option("--config", config);
  train->add_option("--out-dir", out_dir);
  train->add_option("--model-out", model_out);
  train->add_option("--log", log_path);
  train->add_option("--epochs", tcfg.max_epochs);
  train->add_option("--lr", tcfg.learning_rate);
  train->add_option("--warmup", tcfg.warmup_steps);
  train->add_option("--batch-tokens", tcfg.batch_tokens);
  train->add_option("--aux-weight", tcfg.aux_weight);
  train->add_option("--stop-exact", tcfg.stop_exact_match);
  train->add_option("--eval-every", tcfg.eval_every);
  train->add_option("--average-window", tcfg.average_window);
  train->add_option("--seed", tcfg.seed);

  auto* correct = app.add_subcommand("correct", "run the correction pipeline");
  correct->add_option("--model", model);
  correct->add_option("--mlm", mlm);
  correct->add_option("--pinyin", pinyin);
  correct->add_option("--freq", freq);
  correct->add_option("--pos-lex", pos_lex);
  correct->add_option("--semclass", semclass);
  correct->add_option("--config", config);
  correct->add_option("--kc", kc);
  correct->add_option("--beam", beam);
  correct->add_option("--jobs", jobs);
  correct->add_option("--in", in_path);
  correct->add_flag("--sec-only", sec_only);
  correct->add_flag("--gec-only", gec_only);

  auto* score = app.add_subcommand("score", "MaxMatch scoring against gold edits");
  score->add_option("--hyp", hyp_path)->required();
  score->add_option("--gold", gold_path)->required();
  score->add_option("--beta", beta);

  auto* analyze = app.add_subcommand("analyze", "LCS / POS corpus diagnostics");
  analyze->add_option("--pairs", pairs_path)->required();
  analyze->add_option("--pos-lex", pos_lex)->required();

  auto* sweep = app.add_subcommand("sweep-kc", "sweep the SEC frequency threshold");
  sweep->add_option("--pairs", pairs_path)->required();
  sweep->add_option("--mlm", mlm)->required();
  sweep->add_option("--pinyin", pinyin)->required();
  sweep->add_option("--freq", freq)->required();
  sweep->add_option("--config", config);
  sweep->add_option("--kc-values", kc_values)->required();

  auto* inspect = app.add_subcommand("inspect", "export transition matrix and tag neighbors");
  inspect->add_option("--model", model)->required();
  inspect->add_option("--top-n", top_n);

  try {
    app.parse(argc, argv);
    if (gen->parsed())
      return cmd_gen(templates_path, pinyin, size, sub, del, ins, swap, seed, out_path, gold_path);
    if (freq_cmd->parsed()) return cmd_freq(in_path, out_path);
    if (mlm_train->parsed()) return cmd_mlm_train(in_path, out_path, window, alpha);
    if (sec->parsed()) return cmd_sec(model, pinyin, freq, config, kc, in_path, trace);
    if (tag->parsed()) return cmd_tag(pos_lex, semclass, config, in_path);
    if (train->parsed())
      return cmd_train(pairs_path, pos_lex, semclass, config, out_dir, model_out, log_path, tcfg);
    if (correct->parsed())
      return cmd_correct(model, mlm, pinyin, freq, pos_lex, semclass, config, kc, beam, jobs,
                         sec_only, gec_only, in_path);
    if (score->parsed()) return cmd_score(hyp_path, gold_path, beta);
    if (analyze->parsed()) return cmd_analyze(pairs_path, pos_lex);
    if (sweep->parsed()) return cmd_sweep_kc(pairs_path, mlm, pinyin, freq, config, kc_values);
    if (inspect->parsed()) return cmd_inspect(model, top_n);
    return 2;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const sggec::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 2;
  } catch (const sggec::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
