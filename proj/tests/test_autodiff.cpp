#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>
#include <random>

#include "sggec/autodiff.hpp"

using namespace sggec;

namespace {

// Central finite-difference check of d(loss)/d(input) for a forward map
// built fresh on every evaluation. `build` must place `x` into a graph and
// return a scalar loss node.
using Builder = std::function<ad::Node*(ad::Graph&, ad::Node*)>;

void check_gradient(int64_t rows, int64_t cols, const Builder& build, uint64_t seed,
                    double tol = 1e-6) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> x0(static_cast<size_t>(rows * cols));
  for (double& v : x0) v = dist(rng);

  auto eval = [&](const std::vector<double>& x) {
    ad::Graph g;
    ad::Node* in = g.constant(rows, cols, x);
    return build(g, in)->v[0];
  };

  ad::Graph g;
  ad::Node* in = g.constant(rows, cols, x0);
  ad::Node* loss = build(g, in);
  g.backward(loss);

  const double h = 1e-5;
  for (size_t i = 0; i < x0.size(); ++i) {
    std::vector<double> xp = x0, xm = x0;
    xp[i] += h;
    xm[i] -= h;
    double fd = (eval(xp) - eval(xm)) / (2 * h);
    double an = in->g[i];
    double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
    CHECK(std::abs(fd - an) / denom < tol);
  }
}

// Sum of all entries as a differentiable scalar.
ad::Node* sum_all(ad::Graph& g, ad::Node* x) {
  ad::Node* ones_row = g.constant(1, x->rows, std::vector<double>(static_cast<size_t>(x->rows), 1.0));
  ad::Node* ones_col = g.constant(x->cols, 1, std::vector<double>(static_cast<size_t>(x->cols), 1.0));
  return g.matmul(g.matmul(ones_row, x), ones_col);
}

// Entry-weighted sum so gradients are not washed out by symmetry.
ad::Node* weighted_sum(ad::Graph& g, ad::Node* x) {
  std::vector<double> wr(static_cast<size_t>(x->rows)), wc(static_cast<size_t>(x->cols));
  for (size_t i = 0; i < wr.size(); ++i) wr[i] = 0.3 + 0.7 * static_cast<double>(i);
  for (size_t j = 0; j < wc.size(); ++j) wc[j] = 1.0 - 0.2 * static_cast<double>(j);
  ad::Node* r = g.constant(1, x->rows, wr);
  ad::Node* c = g.constant(x->cols, 1, wc);
  return g.matmul(g.matmul(r, x), c);
}

std::vector<double> randn(int64_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = dist(rng);
  return v;
}

}  // namespace

TEST_CASE("matmul gradients") {
  check_gradient(3, 4, [](ad::Graph& g, ad::Node* x) {
    ad::Node* w = g.constant(4, 2, randn(8, 100));
    return weighted_sum(g, g.matmul(x, w));
  }, 1);
  check_gradient(4, 2, [](ad::Graph& g, ad::Node* x) {
    ad::Node* a = g.constant(3, 4, randn(12, 101));
    return weighted_sum(g, g.matmul(a, x));
  }, 2);
}

TEST_CASE("matmul_nt gradients") {
  check_gradient(3, 4, [](ad::Graph& g, ad::Node* x) {
    ad::Node* b = g.constant(5, 4, randn(20, 102));
    return weighted_sum(g, g.matmul_nt(x, b));
  }, 3);
}

TEST_CASE("add, scale, add_rowvec gradients") {
  check_gradient(3, 4, [](ad::Graph& g, ad::Node* x) {
    ad::Node* b = g.constant(3, 4, randn(12, 103));
    return weighted_sum(g, g.scale(g.add(x, b), -1.7));
  }, 4);
  check_gradient(1, 4, [](ad::Graph& g, ad::Node* x) {
    ad::Node* a = g.constant(3, 4, randn(12, 104));
    return weighted_sum(g, g.add_rowvec(a, x));
  }, 5);
}

TEST_CASE("relu gradient away from the kink") {
  check_gradient(3, 4, [](ad::Graph& g, ad::Node* x) {
    // shift so |entries| are comfortably away from zero
    return weighted_sum(g, g.relu(g.add(x, g.constant(3, 4, std::vector<double>(12, 3.0)))));
  }, 6);
}

TEST_CASE("slice and concat gradients") {
  check_gradient(4, 6, [](ad::Graph& g, ad::Node* x) {
    ad::Node* a = g.slice_cols(x, 1, 4);
    ad::Node* b = g.slice_rows(x, 0, 2);
    return g.add_scalar(weighted_sum(g, a), weighted_sum(g, b));
  }, 7);
  check_gradient(3, 2, [](ad::Graph& g, ad::Node* x) {
    ad::Node* other = g.constant(3, 3, randn(9, 105));
    return weighted_sum(g, g.concat_cols({x, other, x}));
  }, 8);
}

TEST_CASE("gather_rows gradient accumulates repeated rows") {
  check_gradient(4, 3, [](ad::Graph& g, ad::Node* x) {
    return weighted_sum(g, g.gather_rows(x, {2, 0, 2, 3}));
  }, 9);
}

TEST_CASE("softmax gradients, full and causal") {
  check_gradient(4, 4, [](ad::Graph& g, ad::Node* x) {
    return weighted_sum(g, g.softmax_rows(x));
  }, 10);
  check_gradient(4, 4, [](ad::Graph& g, ad::Node* x) {
    return weighted_sum(g, g.softmax_rows(x, true, 0));
  }, 11);
}

TEST_CASE("causal softmax masks future columns") {
  ad::Graph g;
  ad::Node* x = g.constant(3, 3, randn(9, 106));
  ad::Node* s = g.softmax_rows(x, true, 0);
  CHECK(s->val(0, 0) == doctest::Approx(1.0));
  CHECK(s->val(0, 1) == 0.0);
  CHECK(s->val(0, 2) == 0.0);
  CHECK(s->val(1, 2) == 0.0);
  for (int64_t i = 0; i < 3; ++i) {
    double row = 0;
    for (int64_t j = 0; j < 3; ++j) row += s->val(i, j);
    CHECK(row == doctest::Approx(1.0));
  }
}

TEST_CASE("log_softmax gradient") {
  check_gradient(3, 5, [](ad::Graph& g, ad::Node* x) {
    return weighted_sum(g, g.log_softmax_rows(x));
  }, 12);
}

TEST_CASE("layernorm gradient including gain and bias") {
  check_gradient(3, 6, [](ad::Graph& g, ad::Node* x) {
    ad::Node* gain = g.constant(1, 6, randn(6, 107));
    ad::Node* bias = g.constant(1, 6, randn(6, 108));
    return weighted_sum(g, g.layernorm_rows(x, gain, bias));
  }, 13);
  check_gradient(1, 6, [](ad::Graph& g, ad::Node* x) {  // w.r.t. gain
    ad::Node* a = g.constant(3, 6, randn(18, 109));
    ad::Node* bias = g.constant(1, 6, randn(6, 110));
    return weighted_sum(g, g.layernorm_rows(a, x, bias));
  }, 14);
}

TEST_CASE("cross_entropy value and gradient") {
  ad::Graph g;
  ad::Node* logits = g.constant(2, 3, {0, 0, 0, 1, 1, 1});
  ad::Node* loss = g.cross_entropy(logits, {0, 2});
  CHECK(loss->v[0] == doctest::Approx(2 * std::log(3.0)));
  check_gradient(3, 4, [](ad::Graph& g2, ad::Node* x) {
    return g2.cross_entropy(x, {1, 3, 0});
  }, 15);
}

TEST_CASE("backward rejects non-scalar loss, sum helper works") {
  ad::Graph g;
  ad::Node* x = g.constant(2, 2, {1, 2, 3, 4});
  CHECK_THROWS_AS(g.backward(x), ContractViolation);
  CHECK(sum_all(g, x)->v[0] == doctest::Approx(10.0));
}

TEST_CASE("composed transformer-style block gradient") {
  check_gradient(3, 4, [](ad::Graph& g, ad::Node* x) {
    ad::Node* wq = g.constant(4, 4, randn(16, 111));
    ad::Node* wk = g.constant(4, 4, randn(16, 112));
    ad::Node* wv = g.constant(4, 4, randn(16, 113));
    ad::Node* q = g.matmul(x, wq);
    ad::Node* k = g.matmul(x, wk);
    ad::Node* v = g.matmul(x, wv);
    ad::Node* attn = g.softmax_rows(g.scale(g.matmul_nt(q, k), 0.5), true, 0);
    ad::Node* gain = g.constant(1, 4, {1, 1, 1, 1});
    ad::Node* bias = g.constant(1, 4, {0, 0, 0, 0});
    ad::Node* y = g.layernorm_rows(g.add(x, g.matmul(attn, v)), gain, bias);
    return g.cross_entropy(y, {0, 3, 1});
  }, 16, 1e-5);
}
