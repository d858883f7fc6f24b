#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "helpers.hpp"
#include "sggec/sec.hpp"

using namespace sggec;

namespace {

struct Fixture {
  PhoneticLexicon lex = tiny_phonetic();
  std::vector<CharSeq> corpus{to_charseq("我今天去学校"), to_charseq("他今天去公园"),
                              to_charseq("我今天在学校"), to_charseq("他明天去学校")};
  NGramMlm mlm = train_ngram_mlm(corpus, 2, 0.1);
  FrequencyTable ft = build_frequency_table(corpus);
  PipelineConfig cfg;

  Fixture() {
    cfg.k_c = 1000;
    cfg.top_k_candidates = 3;
  }
};

}  // namespace

TEST_CASE("homophone error gets corrected, clean text survives") {
  Fixture f;
  auto [fixed, trace] = correct_spelling(to_charseq("我金天去学校"), f.mlm, f.lex, f.ft, f.cfg);
  CHECK(to_string(fixed) == "我今天去学校");
  auto [clean, t2] = correct_spelling(to_charseq("我今天去学校"), f.mlm, f.lex, f.ft, f.cfg);
  CHECK(to_string(clean) == "我今天去学校");
}

TEST_CASE("output length always equals input length") {
  Fixture f;
  std::mt19937_64 rng(11);
  std::u32string alpha = U"我他今金天田去趣在再学校公园。";
  for (int trial = 0; trial < 300; ++trial) {
    CharSeq seq = random_seq(rng, alpha, 1, 14);
    auto [out, trace] = correct_spelling(seq, f.mlm, f.lex, f.ft, f.cfg);
    CHECK(out.size() == seq.size());
    CHECK(trace.records.size() == seq.size());
  }
}

TEST_CASE("every replacement is a homophone of the original") {
  Fixture f;
  std::mt19937_64 rng(13);
  std::u32string alpha = U"我他今金天田去趣在再学校公园。";
  for (int trial = 0; trial < 300; ++trial) {
    CharSeq seq = random_seq(rng, alpha, 1, 14);
    auto [out, trace] = correct_spelling(seq, f.mlm, f.lex, f.ft, f.cfg);
    for (size_t i = 0; i < seq.size(); ++i) {
      if (out[i] == seq[i]) continue;
      CHECK(f.lex.sim_set(seq[i], f.cfg.tone_sensitive).count(out[i]));
      CHECK(trace.records[i].reason == SecRecord::Reason::kReplaced);
      CHECK(trace.records[i].replacement == out[i]);
    }
  }
}

TEST_CASE("non-maskable positions are never altered") {
  Fixture f;
  f.cfg.k_c = 2;  // most corpus characters exceed the threshold
  std::mt19937_64 rng(17);
  std::u32string alpha = U"我他今金天田去趣在再学校公园。";
  for (int trial = 0; trial < 200; ++trial) {
    CharSeq seq = random_seq(rng, alpha, 1, 14);
    auto [out, trace] = correct_spelling(seq, f.mlm, f.lex, f.ft, f.cfg);
    for (size_t i = 0; i < seq.size(); ++i) {
      if (!is_maskable(f.ft, seq[i], f.cfg.k_c)) {
        CHECK(out[i] == seq[i]);
        CHECK(trace.records[i].reason == SecRecord::Reason::kNotMaskable);
        CHECK(!trace.records[i].masked);
      }
    }
  }
}

TEST_CASE("punctuation is never masked regardless of threshold") {
  Fixture f;
  auto [out, trace] = correct_spelling(to_charseq("。。"), f.mlm, f.lex, f.ft, f.cfg);
  CHECK(to_string(out) == "。。");
  for (const auto& r : trace.records) CHECK(r.reason == SecRecord::Reason::kNotMaskable);
}

TEST_CASE("candidate outside SimSet leaves the character unchanged") {
  Fixture f;
  // 猫 has no lexicon entry, so its SimSet is empty: LM candidates can never
  // pass the filter.
  auto [out, trace] = correct_spelling(to_charseq("猫猫猫"), f.mlm, f.lex, f.ft, f.cfg);
  CHECK(to_string(out) == "猫猫猫");
  for (const auto& r : trace.records) {
    CHECK(r.masked);
    CHECK(r.reason == SecRecord::Reason::kNoCandidateInSimSet);
  }
}

TEST_CASE("later positions see earlier corrections") {
  Fixture f;
  auto [out, trace] = correct_spelling(to_charseq("我金田去学校"), f.mlm, f.lex, f.ft, f.cfg);
  // After 金→今, the context for 田 is the already-corrected prefix.
  CHECK(to_string(out) == "我今天去学校");
}

TEST_CASE("reserved symbols in input are rejected") {
  Fixture f;
  CHECK_THROWS_AS(correct_spelling(CharSeq{U'我', sym::MASK}, f.mlm, f.lex, f.ft, f.cfg),
                  ContractViolation);
}

TEST_CASE("trace reasons serialize to stable strings") {
  CHECK(std::string(to_string(SecRecord::Reason::kNotMaskable)) == "not_maskable");
  CHECK(std::string(to_string(SecRecord::Reason::kNoCandidateInSimSet)) ==
        "no_candidate_in_simset");
  CHECK(std::string(to_string(SecRecord::Reason::kReplaced)) == "replaced");
}

TEST_CASE("sweep_threshold rejects length-mismatched pairs and is monotone in coverage") {
  Fixture f;
  std::vector<std::pair<CharSeq, CharSeq>> bad{{to_charseq("我金"), to_charseq("我")}};
  CHECK_THROWS_AS(sweep_threshold(bad, f.mlm, f.lex, f.ft, f.cfg, {1}), DataError);

  std::vector<std::pair<CharSeq, CharSeq>> data{
      {to_charseq("我金天去学校"), to_charseq("我今天去学校")},
      {to_charseq("他明天趣学校"), to_charseq("他明天去学校")}};
  auto pts = sweep_threshold(data, f.mlm, f.lex, f.ft, f.cfg, {0, 1000});
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].k_c == 0);
  // k_c = 0 masks exactly the unseen characters, which here are the two
  // injected errors; both contexts exist verbatim in the LM corpus.
  CHECK(pts[0].tp == 2);
  CHECK(pts[0].sys == 2);
  CHECK(pts[0].gold == 2);
  CHECK(pts[0].precision == 1.0);
  CHECK(pts[1].tp == 2);
  CHECK(pts[1].gold == 2);
  CHECK(pts[1].f05 > 0.5);
}
