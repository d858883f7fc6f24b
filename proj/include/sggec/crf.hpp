#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sggec/checkpoint.hpp"
#include "sggec/core.hpp"

namespace sggec {

// Linear-chain CRF transition scores; square over the tag alphabet.
struct CrfParams {
  Tensor transitions;  // T x T

  int64_t num_tags() const { return transitions.rows(); }
};

namespace crf {

// Dense m x T emission matrix in double precision.
struct Emissions {
  int64_t m = 0;
  int64_t t = 0;
  std::vector<double> v;

  Emissions() = default;
  Emissions(int64_t m_, int64_t t_) : m(m_), t(t_), v(static_cast<size_t>(m_ * t_), 0.0) {}

  double& at(int64_t i, int64_t j) { return v[static_cast<size_t>(i * t + j)]; }
  double at(int64_t i, int64_t j) const { return v[static_cast<size_t>(i * t + j)]; }

  static Emissions from_tensor(const Tensor& e) {
    if (e.shape.size() != 2) throw ContractViolation("emissions must be m x T");
    Emissions out(e.shape[0], e.shape[1]);
    for (size_t i = 0; i < e.values.size(); ++i) out.v[i] = static_cast<double>(e.values[i]);
    return out;
  }
};

struct Transitions {
  int64_t t = 0;
  std::vector<double> v;

  Transitions() = default;
  explicit Transitions(int64_t t_) : t(t_), v(static_cast<size_t>(t_ * t_), 0.0) {}

  double& at(int64_t i, int64_t j) { return v[static_cast<size_t>(i * t + j)]; }
  double at(int64_t i, int64_t j) const { return v[static_cast<size_t>(i * t + j)]; }

  static Transitions from_tensor(const Tensor& m) {
    if (m.shape.size() != 2 || m.shape[0] != m.shape[1])
      throw ContractViolation("transition matrix must be square");
    Transitions out(m.shape[0]);
    for (size_t i = 0; i < m.values.size(); ++i) out.v[i] = static_cast<double>(m.values[i]);
    return out;
  }
};

inline void check_shapes(const Emissions& em, const Transitions& tr,
                         const std::vector<int32_t>* tags = nullptr) {
  if (em.m < 1) throw ContractViolation("CRF: empty emission sequence");
  if (em.t != tr.t) throw ContractViolation("CRF: emission/transition tag-count mismatch");
  if (tags) {
    if (static_cast<int64_t>(tags->size()) != em.m)
      throw ContractViolation("CRF: tag sequence length mismatch");
    for (int32_t y : *tags)
      if (y < 0 || y >= em.t) throw ContractViolation("CRF: tag index out of range");
  }
}

// Sum of emission scores plus pairwise transitions along one tag path.
inline double sequence_score(const Emissions& em, const Transitions& tr,
                             const std::vector<int32_t>& tags) {
  check_shapes(em, tr, &tags);
  double s = em.at(0, tags[0]);
  for (int64_t i = 1; i < em.m; ++i)
    s += tr.at(tags[static_cast<size_t>(i - 1)], tags[static_cast<size_t>(i)]) +
         em.at(i, tags[static_cast<size_t>(i)]);
  return s;
}

inline double log_sum_exp(const std::vector<double>& xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double z = 0;
  for (double x : xs) z += std::exp(x - mx);
  return mx + std::log(z);
}

// log Z by the forward algorithm in log space.
inline double log_partition(const Emissions& em, const Transitions& tr) {
  check_shapes(em, tr);
  std::vector<double> alpha(static_cast<size_t>(em.t));
  for (int64_t j = 0; j < em.t; ++j) alpha[static_cast<size_t>(j)] = em.at(0, j);
  std::vector<double> next(static_cast<size_t>(em.t));
  std::vector<double> acc(static_cast<size_t>(em.t));
  for (int64_t i = 1; i < em.m; ++i) {
    for (int64_t j = 0; j < em.t; ++j) {
      for (int64_t k = 0; k < em.t; ++k)
        acc[static_cast<size_t>(k)] = alpha[static_cast<size_t>(k)] + tr.at(k, j);
      next[static_cast<size_t>(j)] = log_sum_exp(acc) + em.at(i, j);
    }
    alpha.swap(next);
  }
  return log_sum_exp(alpha);
}

inline double neg_log_likelihood(const Emissions& em, const Transitions& tr,
                                 const std::vector<int32_t>& tags) {
  return log_partition(em, tr) - sequence_score(em, tr, tags);
}

// Posterior marginals needed for the NLL gradient: unary P(y_i = j) and
// pairwise P(y_{i-1} = a, y_i = b), via forward-backward in log space.
struct Marginals {
  double log_z = 0;
  Emissions unary;                  // m x T
  std::vector<Transitions> pairwise;  // m-1 matrices
};

inline Marginals forward_backward(const Emissions& em, const Transitions& tr) {
  check_shapes(em, tr);
  const int64_t m = em.m, t = em.t;
  Emissions alpha(m, t), beta(m, t);
  std::vector<double> acc(static_cast<size_t>(t));
  for (int64_t j = 0; j < t; ++j) alpha.at(0, j) = em.at(0, j);
  for (int64_t i = 1; i < m; ++i)
    for (int64_t j = 0; j < t; ++j) {
      for (int64_t k = 0; k < t; ++k)
        acc[static_cast<size_t>(k)] = alpha.at(i - 1, k) + tr.at(k, j);
      alpha.at(i, j) = log_sum_exp(acc) + em.at(i, j);
    }
  for (int64_t j = 0; j < t; ++j) beta.at(m - 1, j) = 0.0;
  for (int64_t i = m - 2; i >= 0; --i)
    for (int64_t j = 0; j < t; ++j) {
      for (int64_t k = 0; k < t; ++k)
        acc[static_cast<size_t>(k)] = tr.at(j, k) + em.at(i + 1, k) + beta.at(i + 1, k);
      beta.at(i, j) = log_sum_exp(acc);
    }
  Marginals out;
  out.unary = Emissions(m, t);
  std::vector<double> last(static_cast<size_t>(t));
  for (int64_t j = 0; j < t; ++j) last[static_cast<size_t>(j)] = alpha.at(m - 1, j);
  out.log_z = log_sum_exp(last);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < t; ++j)
      out.unary.at(i, j) = std::exp(alpha.at(i, j) + beta.at(i, j) - out.log_z);
  out.pairwise.assign(static_cast<size_t>(m - 1), Transitions(t));
  for (int64_t i = 1; i < m; ++i)
    for (int64_t a = 0; a < t; ++a)
      for (int64_t b = 0; b < t; ++b)
        out.pairwise[static_cast<size_t>(i - 1)].at(a, b) =
            std::exp(alpha.at(i - 1, a) + tr.at(a, b) + em.at(i, b) + beta.at(i, b) - out.log_z);
  return out;
}

// Max-scoring tag path. Ties break toward the smallest tag index, both at
// each backtrack step and at the final position.
inline std::pair<std::vector<int32_t>, double> viterbi(const Emissions& em,
                                                       const Transitions& tr) {
  check_shapes(em, tr);
  const int64_t m = em.m, t = em.t;
  Emissions best(m, t);
  std::vector<std::vector<int32_t>> back(static_cast<size_t>(m),
                                         std::vector<int32_t>(static_cast<size_t>(t), 0));
  for (int64_t j = 0; j < t; ++j) best.at(0, j) = em.at(0, j);
  for (int64_t i = 1; i < m; ++i)
    for (int64_t j = 0; j < t; ++j) {
      double b = -std::numeric_limits<double>::infinity();
      int32_t arg = 0;
      for (int64_t k = 0; k < t; ++k) {
        double s = best.at(i - 1, k) + tr.at(k, j);
        if (s > b) {
          b = s;
          arg = static_cast<int32_t>(k);
        }
      }
      best.at(i, j) = b + em.at(i, j);
      back[static_cast<size_t>(i)][static_cast<size_t>(j)] = arg;
    }
  double b = -std::numeric_limits<double>::infinity();
  int32_t arg = 0;
  for (int64_t j = 0; j < t; ++j)
    if (best.at(m - 1, j) > b) {
      b = best.at(m - 1, j);
      arg = static_cast<int32_t>(j);
    }
  std::vector<int32_t> tags(static_cast<size_t>(m));
  tags[static_cast<size_t>(m - 1)] = arg;
  for (int64_t i = m - 1; i > 0; --i)
    tags[static_cast<size_t>(i - 1)] =
        back[static_cast<size_t>(i)][static_cast<size_t>(tags[static_cast<size_t>(i)])];
  return {tags, b};
}

}  // namespace crf

// Tensor-facing wrappers.

inline double crf_sequence_score(const CrfParams& crf, const Tensor& emissions,
                                 const std::vector<int32_t>& tags) {
  return crf::sequence_score(crf::Emissions::from_tensor(emissions),
                             crf::Transitions::from_tensor(crf.transitions), tags);
}

inline double crf_log_partition(const CrfParams& crf, const Tensor& emissions) {
  return crf::log_partition(crf::Emissions::from_tensor(emissions),
                            crf::Transitions::from_tensor(crf.transitions));
}

inline double crf_neg_log_likelihood(const CrfParams& crf, const Tensor& emissions,
                                     const std::vector<int32_t>& gold_tags) {
  return crf::neg_log_likelihood(crf::Emissions::from_tensor(emissions),
                                 crf::Transitions::from_tensor(crf.transitions), gold_tags);
}

inline std::pair<std::vector<int32_t>, double> viterbi_decode(const CrfParams& crf,
                                                              const Tensor& emissions) {
  return crf::viterbi(crf::Emissions::from_tensor(emissions),
                      crf::Transitions::from_tensor(crf.transitions));
}

}  // namespace sggec
