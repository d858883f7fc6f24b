#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "helpers.hpp"
#include "sggec/masked_lm.hpp"

using namespace sggec;

namespace {

std::vector<CharSeq> tiny_corpus() {
  return {to_charseq("我今天去学校"), to_charseq("他今天去公园"), to_charseq("我明天去学校")};
}

}  // namespace

TEST_CASE("masked distribution is a proper distribution") {
  NGramMlm m = train_ngram_mlm(tiny_corpus(), 2, 0.5);
  CharSeq q = to_charseq("我今天去学校");
  q[1] = sym::MASK;
  auto dist = m.score_masked(q, 1);
  CHECK(dist.size() == m.charset().size());
  double sum = 0;
  for (const auto& [c, p] : dist) {
    CHECK(p > 0);
    sum += p;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("seen context dominates the smoothed distribution") {
  NGramMlm m = train_ngram_mlm(tiny_corpus(), 2, 0.1);
  CharSeq q = to_charseq("我今天去学校");
  q[4] = sym::MASK;
  auto pred = top_k_candidates(m, q, 4, 1);
  REQUIRE(pred.candidates.size() == 1);
  CHECK(pred.candidates[0].first == U'学');
}

TEST_CASE("top_k contract checks") {
  NGramMlm m = train_ngram_mlm(tiny_corpus(), 2, 1.0);
  CharSeq q = to_charseq("我今天");
  CHECK_THROWS_AS(top_k_candidates(m, q, 1, 3), ContractViolation);  // not masked
  q[1] = sym::MASK;
  CHECK_THROWS_AS(top_k_candidates(m, q, 1, 0), ContractViolation);
  CHECK_THROWS_AS(top_k_candidates(m, q, 9, 3), ContractViolation);  // out of range
  auto pred = top_k_candidates(m, q, 1, 3);
  CHECK(pred.candidates.size() == 3);
  for (size_t i = 1; i < pred.candidates.size(); ++i)
    CHECK(pred.candidates[i - 1].second >= pred.candidates[i].second);
}

TEST_CASE("score ties break toward the smaller codepoint") {
  // Single observation; all unseen characters tie by smoothing.
  NGramMlm m = train_ngram_mlm({to_charseq("丙乙甲")}, 1, 1.0);
  CharSeq q = to_charseq("丙乙甲");
  q[0] = sym::MASK;
  auto pred = top_k_candidates(m, q, 0, 3);
  REQUIRE(pred.candidates.size() == 3);
  CHECK(pred.candidates[0].first == U'丙');  // only char seen in this left-edge context
  // remaining two tie; smaller codepoint first (乙 U+4E59 < 甲 U+7532)
  CHECK(pred.candidates[1].first == U'乙');
  CHECK(pred.candidates[2].first == U'甲');
}

TEST_CASE("reserved symbols rejected in training text") {
  NGramMlm m(2, 1.0);
  CHECK_THROWS_AS(m.observe(CharSeq{U'中', sym::MASK}), DataError);
  CHECK_THROWS_AS(train_ngram_mlm({}, 2, 1.0), ConfigError);
  CHECK_THROWS_AS(NGramMlm(0, 1.0), ConfigError);
  CHECK_THROWS_AS(NGramMlm(2, 0.0), ConfigError);
}

TEST_CASE("serialization round trip preserves every score") {
  NGramMlm m = train_ngram_mlm(tiny_corpus(), 2, 0.7);
  NGramMlm back = NGramMlm::from_tensors(m.to_tensors());
  CHECK(back.window() == m.window());
  CHECK(back.alpha() == doctest::Approx(m.alpha()));
  CHECK(back.charset() == m.charset());
  std::mt19937_64 rng(3);
  std::u32string alpha = U"我他今明天去学校公园";
  for (int trial = 0; trial < 50; ++trial) {
    CharSeq q = random_seq(rng, alpha, 2, 8);
    size_t pos = rng() % q.size();
    q[pos] = sym::MASK;
    auto a = m.score_masked(q, pos);
    auto b = back.score_masked(q, pos);
    REQUIRE(a.size() == b.size());
    // alpha is stored in float32 on disk, so scores agree to float precision
    for (const auto& [c, p] : a) CHECK(b.at(c) == doctest::Approx(p).epsilon(1e-6));
  }
}

TEST_CASE("counts are additive across disjoint corpora") {
  std::vector<CharSeq> c1{to_charseq("我今天去学校")};
  std::vector<CharSeq> c2{to_charseq("他明天去公园")};
  NGramMlm merged(2, 1.0);
  for (const auto& s : c1) merged.observe(s);
  for (const auto& s : c2) merged.observe(s);
  std::vector<CharSeq> both = c1;
  both.insert(both.end(), c2.begin(), c2.end());
  NGramMlm joint = train_ngram_mlm(both, 2, 1.0);
  CharSeq q = to_charseq("我今天去学校");
  for (size_t i = 0; i < q.size(); ++i)
    for (int shape = 0; shape < NGramMlm::kNumShapes; ++shape)
      CHECK(merged.context_count(q, i, shape) == joint.context_count(q, i, shape));
}

TEST_CASE("deterministic across identical runs") {
  NGramMlm a = train_ngram_mlm(tiny_corpus(), 2, 1.0);
  NGramMlm b = train_ngram_mlm(tiny_corpus(), 2, 1.0);
  CHECK(a.to_tensors() == b.to_tensors());
}
