#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "sggec/crf.hpp"

using namespace sggec;

namespace {

crf::Emissions random_emissions(std::mt19937_64& rng, int64_t m, int64_t t) {
  std::normal_distribution<double> dist(0.0, 2.0);
  crf::Emissions em(m, t);
  for (double& v : em.v) v = dist(rng);
  return em;
}

crf::Transitions random_transitions(std::mt19937_64& rng, int64_t t) {
  std::normal_distribution<double> dist(0.0, 2.0);
  crf::Transitions tr(t);
  for (double& v : tr.v) v = dist(rng);
  return tr;
}

// Enumerates all t^m tag sequences.
template <typename Fn>
void for_all_paths(int64_t m, int64_t t, Fn fn) {
  std::vector<int32_t> tags(static_cast<size_t>(m), 0);
  while (true) {
    fn(tags);
    int64_t i = m - 1;
    while (i >= 0 && tags[static_cast<size_t>(i)] == t - 1) tags[static_cast<size_t>(i--)] = 0;
    if (i < 0) break;
    ++tags[static_cast<size_t>(i)];
  }
}

double brute_log_z(const crf::Emissions& em, const crf::Transitions& tr) {
  std::vector<double> scores;
  for_all_paths(em.m, em.t, [&](const std::vector<int32_t>& tags) {
    scores.push_back(crf::sequence_score(em, tr, tags));
  });
  return crf::log_sum_exp(scores);
}

// Argmax path with the same tie-break contract: smallest tag indices win,
// compared position by position (enumeration order is lexicographic, so the
// first strict maximum is the canonical one).
std::vector<int32_t> brute_viterbi(const crf::Emissions& em, const crf::Transitions& tr) {
  std::vector<int32_t> best;
  double best_score = -1e300;
  for_all_paths(em.m, em.t, [&](const std::vector<int32_t>& tags) {
    double s = crf::sequence_score(em, tr, tags);
    if (s > best_score + 1e-12) {
      best_score = s;
      best = tags;
    }
  });
  return best;
}

}  // namespace

TEST_CASE("log_partition matches brute force on 200 random instances") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    int64_t m = 1 + static_cast<int64_t>(rng() % 5);
    int64_t t = 1 + static_cast<int64_t>(rng() % 4);
    crf::Emissions em = random_emissions(rng, m, t);
    crf::Transitions tr = random_transitions(rng, t);
    CHECK(std::abs(crf::log_partition(em, tr) - brute_log_z(em, tr)) < 1e-6);
  }
}

TEST_CASE("viterbi matches brute-force argmax on 200 random instances") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 200; ++trial) {
    int64_t m = 1 + static_cast<int64_t>(rng() % 5);
    int64_t t = 1 + static_cast<int64_t>(rng() % 4);
    crf::Emissions em = random_emissions(rng, m, t);
    crf::Transitions tr = random_transitions(rng, t);
    auto [path, score] = crf::viterbi(em, tr);
    CHECK(path == brute_viterbi(em, tr));
    CHECK(score == doctest::Approx(crf::sequence_score(em, tr, path)));
  }
}

TEST_CASE("viterbi ties break toward the smallest tag index") {
  crf::Emissions em(3, 3);  // all zeros: every path ties
  crf::Transitions tr(3);
  auto [path, score] = crf::viterbi(em, tr);
  CHECK(path == std::vector<int32_t>{0, 0, 0});
  CHECK(score == 0.0);
}

TEST_CASE("nll is non-negative and zero transitions factorize") {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 50; ++trial) {
    int64_t m = 1 + static_cast<int64_t>(rng() % 5);
    int64_t t = 2 + static_cast<int64_t>(rng() % 3);
    crf::Emissions em = random_emissions(rng, m, t);
    crf::Transitions tr = random_transitions(rng, t);
    std::vector<int32_t> tags;
    for (int64_t i = 0; i < m; ++i) tags.push_back(static_cast<int32_t>(rng() % t));
    CHECK(crf::neg_log_likelihood(em, tr, tags) >= -1e-12);
  }
  // With zero transitions, log Z decomposes into independent per-position
  // log-sum-exps.
  std::mt19937_64 rng2(45);
  crf::Emissions em = random_emissions(rng2, 4, 3);
  crf::Transitions zero(3);
  double expect = 0;
  for (int64_t i = 0; i < 4; ++i) {
    std::vector<double> row;
    for (int64_t j = 0; j < 3; ++j) row.push_back(em.at(i, j));
    expect += crf::log_sum_exp(row);
  }
  CHECK(crf::log_partition(em, zero) == doctest::Approx(expect));
}

TEST_CASE("forward_backward marginals match enumeration") {
  std::mt19937_64 rng(46);
  for (int trial = 0; trial < 30; ++trial) {
    int64_t m = 2 + static_cast<int64_t>(rng() % 3);
    int64_t t = 2 + static_cast<int64_t>(rng() % 3);
    crf::Emissions em = random_emissions(rng, m, t);
    crf::Transitions tr = random_transitions(rng, t);
    double log_z = brute_log_z(em, tr);
    crf::Marginals marg = crf::forward_backward(em, tr);
    CHECK(marg.log_z == doctest::Approx(log_z).epsilon(1e-9));
    // enumerate exact marginals
    crf::Emissions unary(m, t);
    std::vector<crf::Transitions> pair(static_cast<size_t>(m - 1), crf::Transitions(t));
    for_all_paths(m, t, [&](const std::vector<int32_t>& tags) {
      double p = std::exp(crf::sequence_score(em, tr, tags) - log_z);
      for (int64_t i = 0; i < m; ++i) unary.at(i, tags[static_cast<size_t>(i)]) += p;
      for (int64_t i = 1; i < m; ++i)
        pair[static_cast<size_t>(i - 1)].at(tags[static_cast<size_t>(i - 1)],
                                            tags[static_cast<size_t>(i)]) += p;
    });
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < t; ++j)
        CHECK(marg.unary.at(i, j) == doctest::Approx(unary.at(i, j)).epsilon(1e-8));
    for (int64_t i = 0; i < m - 1; ++i)
      for (int64_t a = 0; a < t; ++a)
        for (int64_t b = 0; b < t; ++b)
          CHECK(marg.pairwise[static_cast<size_t>(i)].at(a, b) ==
                doctest::Approx(pair[static_cast<size_t>(i)].at(a, b)).epsilon(1e-8));
  }
}

TEST_CASE("single-position sequence reduces to softmax normalization") {
  crf::Emissions em(1, 3);
  em.at(0, 0) = 1.0;
  em.at(0, 1) = 2.0;
  em.at(0, 2) = 0.5;
  crf::Transitions tr(3);
  CHECK(crf::log_partition(em, tr) ==
        doctest::Approx(std::log(std::exp(1.0) + std::exp(2.0) + std::exp(0.5))));
  auto [path, score] = crf::viterbi(em, tr);
  CHECK(path == std::vector<int32_t>{1});
}

TEST_CASE("shape contract violations") {
  crf::Emissions em(2, 3);
  crf::Transitions tr(2);  // mismatched tag count
  CHECK_THROWS_AS(crf::log_partition(em, tr), ContractViolation);
  crf::Transitions ok(3);
  CHECK_THROWS_AS(crf::sequence_score(em, ok, {0}), ContractViolation);       // wrong length
  CHECK_THROWS_AS(crf::sequence_score(em, ok, {0, 5}), ContractViolation);    // tag range
  crf::Emissions empty(0, 3);
  CHECK_THROWS_AS(crf::log_partition(empty, ok), ContractViolation);
}

TEST_CASE("tensor wrappers agree with the double-precision core") {
  Tensor m({2, 2});
  m.values = {0.5f, -0.25f, 1.0f, 0.0f};
  CrfParams params{m};
  Tensor em({3, 2});
  em.values = {0.1f, 0.7f, -0.2f, 0.3f, 0.9f, -0.5f};
  double lz = crf_log_partition(params, em);
  crf::Emissions em_d = crf::Emissions::from_tensor(em);
  crf::Transitions tr_d = crf::Transitions::from_tensor(m);
  CHECK(lz == doctest::Approx(crf::log_partition(em_d, tr_d)));
  std::vector<int32_t> tags{0, 1, 0};
  CHECK(crf_neg_log_likelihood(params, em, tags) ==
        doctest::Approx(lz - crf::sequence_score(em_d, tr_d, tags)));
  CHECK(viterbi_decode(params, em).first == crf::viterbi(em_d, tr_d).first);
}
