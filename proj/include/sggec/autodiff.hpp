#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include "sggec/core.hpp"

namespace sggec::ad {

// Reverse-mode tape over dense double matrices. One Graph per forward pass;
// nodes live in an arena so references stay stable.
struct Node {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> v;
  std::vector<double> g;

  double& val(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols + c)]; }
  double val(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols + c)]; }
  double& grad(int64_t r, int64_t c) { return g[static_cast<size_t>(r * cols + c)]; }
};

class Graph {
 public:
  Node* alloc(int64_t rows, int64_t cols) {
    nodes_.emplace_back();
    Node& n = nodes_.back();
    n.rows = rows;
    n.cols = cols;
    n.v.assign(static_cast<size_t>(rows * cols), 0.0);
    n.g.assign(static_cast<size_t>(rows * cols), 0.0);
    return &n;
  }

  // Leaf initialized from float parameter storage.
  Node* leaf(int64_t rows, int64_t cols, const float* data) {
    Node* n = alloc(rows, cols);
    for (size_t i = 0; i < n->v.size(); ++i) n->v[i] = static_cast<double>(data[i]);
    return n;
  }

  Node* constant(int64_t rows, int64_t cols, const std::vector<double>& data) {
    Node* n = alloc(rows, cols);
    n->v = data;
    return n;
  }

  Node* zeros(int64_t rows, int64_t cols) { return alloc(rows, cols); }

  // c = a @ b
  Node* matmul(Node* a, Node* b) {
    if (a->cols != b->rows) throw ContractViolation("matmul shape mismatch");
    Node* c = alloc(a->rows, b->cols);
    for (int64_t i = 0; i < a->rows; ++i)
      for (int64_t k = 0; k < a->cols; ++k) {
        double av = a->val(i, k);
        if (av == 0.0) continue;
        for (int64_t j = 0; j < b->cols; ++j) c->val(i, j) += av * b->val(k, j);
      }
    tape_.push_back([a, b, c] {
      for (int64_t i = 0; i < a->rows; ++i)
        for (int64_t j = 0; j < c->cols; ++j) {
          double gv = c->grad(i, j);
          if (gv == 0.0) continue;
          for (int64_t k = 0; k < a->cols; ++k) {
            a->grad(i, k) += gv * b->val(k, j);
            b->grad(k, j) += gv * a->val(i, k);
          }
        }
    });
    return c;
  }

  // c = a @ b^T
  Node* matmul_nt(Node* a, Node* b) {
    if (a->cols != b->cols) throw ContractViolation("matmul_nt shape mismatch");
    Node* c = alloc(a->rows, b->rows);
    for (int64_t i = 0; i < a->rows; ++i)
      for (int64_t j = 0; j < b->rows; ++j) {
        double s = 0;
        for (int64_t k = 0; k < a->cols; ++k) s += a->val(i, k) * b->val(j, k);
        c->val(i, j) = s;
      }
    tape_.push_back([a, b, c] {
      for (int64_t i = 0; i < a->rows; ++i)
        for (int64_t j = 0; j < b->rows; ++j) {
          double gv = c->grad(i, j);
          if (gv == 0.0) continue;
          for (int64_t k = 0; k < a->cols; ++k) {
            a->grad(i, k) += gv * b->val(j, k);
            b->grad(j, k) += gv * a->val(i, k);
          }
        }
    });
    return c;
  }

  Node* add(Node* a, Node* b) {
    if (a->rows != b->rows || a->cols != b->cols) throw ContractViolation("add shape mismatch");
    Node* c = alloc(a->rows, a->cols);
    for (size_t i = 0; i < c->v.size(); ++i) c->v[i] = a->v[i] + b->v[i];
    tape_.push_back([a, b, c] {
      for (size_t i = 0; i < c->v.size(); ++i) {
        a->g[i] += c->g[i];
        b->g[i] += c->g[i];
      }
    });
    return c;
  }

  // Adds a 1 x cols bias row to every row of a.
  Node* add_rowvec(Node* a, Node* bias) {
    if (bias->rows != 1 || bias->cols != a->cols)
      throw ContractViolation("add_rowvec shape mismatch");
    Node* c = alloc(a->rows, a->cols);
    for (int64_t i = 0; i < a->rows; ++i)
      for (int64_t j = 0; j < a->cols; ++j) c->val(i, j) = a->val(i, j) + bias->val(0, j);
    tape_.push_back([a, bias, c] {
      for (int64_t i = 0; i < c->rows; ++i)
        for (int64_t j = 0; j < c->cols; ++j) {
          a->grad(i, j) += c->grad(i, j);
          bias->grad(0, j) += c->grad(i, j);
        }
    });
    return c;
  }

  Node* scale(Node* a, double s) {
    Node* c = alloc(a->rows, a->cols);
    for (size_t i = 0; i < c->v.size(); ++i) c->v[i] = a->v[i] * s;
    tape_.push_back([a, c, s] {
      for (size_t i = 0; i < c->v.size(); ++i) a->g[i] += c->g[i] * s;
    });
    return c;
  }

  Node* relu(Node* a) {
    Node* c = alloc(a->rows, a->cols);
    for (size_t i = 0; i < c->v.size(); ++i) c->v[i] = a->v[i] > 0 ? a->v[i] : 0.0;
    tape_.push_back([a, c] {
      for (size_t i = 0; i < c->v.size(); ++i)
        if (a->v[i] > 0) a->g[i] += c->g[i];
    });
    return c;
  }

  Node* slice_cols(Node* a, int64_t c0, int64_t c1) {
    if (c0 < 0 || c1 > a->cols || c0 >= c1) throw ContractViolation("slice_cols out of range");
    Node* c = alloc(a->rows, c1 - c0);
    for (int64_t i = 0; i < a->rows; ++i)
      for (int64_t j = c0; j < c1; ++j) c->val(i, j - c0) = a->val(i, j);
    tape_.push_back([a, c, c0] {
      for (int64_t i = 0; i < c->rows; ++i)
        for (int64_t j = 0; j < c->cols; ++j) a->grad(i, c0 + j) += c->grad(i, j);
    });
    return c;
  }

  Node* slice_rows(Node* a, int64_t r0, int64_t r1) {
    if (r0 < 0 || r1 > a->rows || r0 >= r1) throw ContractViolation("slice_rows out of range");
    Node* c = alloc(r1 - r0, a->cols);
    for (int64_t i = r0; i < r1; ++i)
      for (int64_t j = 0; j < a->cols; ++j) c->val(i - r0, j) = a->val(i, j);
    tape_.push_back([a, c, r0] {
      for (int64_t i = 0; i < c->rows; ++i)
        for (int64_t j = 0; j < c->cols; ++j) a->grad(r0 + i, j) += c->grad(i, j);
    });
    return c;
  }

  Node* concat_cols(const std::vector<Node*>& parts) {
    if (parts.empty()) throw ContractViolation("concat_cols: empty");
    int64_t rows = parts[0]->rows;
    int64_t cols = 0;
    for (Node* p : parts) {
      if (p->rows != rows) throw ContractViolation("concat_cols row mismatch");
      cols += p->cols;
    }
    Node* c = alloc(rows, cols);
    int64_t off = 0;
    for (Node* p : parts) {
      for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < p->cols; ++j) c->val(i, off + j) = p->val(i, j);
      off += p->cols;
    }
    std::vector<Node*> ps = parts;
    tape_.push_back([ps, c] {
      int64_t off = 0;
      for (Node* p : ps) {
        for (int64_t i = 0; i < c->rows; ++i)
          for (int64_t j = 0; j < p->cols; ++j) p->grad(i, j) += c->grad(i, off + j);
        off += p->cols;
      }
    });
    return c;
  }

  // Row gather from an embedding table; backward scatters into the table.
  Node* gather_rows(Node* table, const std::vector<int32_t>& ids) {
    Node* c = alloc(static_cast<int64_t>(ids.size()), table->cols);
    for (size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= table->rows)
        throw ContractViolation("gather_rows: id out of range");
      for (int64_t j = 0; j < table->cols; ++j)
        c->val(static_cast<int64_t>(i), j) = table->val(ids[i], j);
    }
    tape_.push_back([table, c, ids] {
      for (size_t i = 0; i < ids.size(); ++i)
        for (int64_t j = 0; j < table->cols; ++j)
          table->grad(ids[i], j) += c->grad(static_cast<int64_t>(i), j);
    });
    return c;
  }

  // Row-wise softmax; when causal is true, row i only attends to columns
  // j <= i + offset (offset allows rectangular masks).
  Node* softmax_rows(Node* a, bool causal = false, int64_t offset = 0) {
    Node* c = alloc(a->rows, a->cols);
    for (int64_t i = 0; i < a->rows; ++i) {
      int64_t lim = causal ? std::min(a->cols, i + offset + 1) : a->cols;
      double mx = -1e300;
      for (int64_t j = 0; j < lim; ++j) mx = std::max(mx, a->val(i, j));
      double z = 0;
      for (int64_t j = 0; j < lim; ++j) z += std::exp(a->val(i, j) - mx);
      for (int64_t j = 0; j < lim; ++j) c->val(i, j) = std::exp(a->val(i, j) - mx) / z;
    }
    tape_.push_back([a, c, causal, offset] {
      for (int64_t i = 0; i < c->rows; ++i) {
        int64_t lim = causal ? std::min(c->cols, i + offset + 1) : c->cols;
        double dot = 0;
        for (int64_t j = 0; j < lim; ++j) dot += c->grad(i, j) * c->val(i, j);
        for (int64_t j = 0; j < lim; ++j)
          a->grad(i, j) += c->val(i, j) * (c->grad(i, j) - dot);
      }
    });
    return c;
  }

  Node* log_softmax_rows(Node* a) {
    Node* c = alloc(a->rows, a->cols);
    for (int64_t i = 0; i < a->rows; ++i) {
      double mx = -1e300;
      for (int64_t j = 0; j < a->cols; ++j) mx = std::max(mx, a->val(i, j));
      double z = 0;
      for (int64_t j = 0; j < a->cols; ++j) z += std::exp(a->val(i, j) - mx);
      double lz = mx + std::log(z);
      for (int64_t j = 0; j < a->cols; ++j) c->val(i, j) = a->val(i, j) - lz;
    }
    tape_.push_back([a, c] {
      for (int64_t i = 0; i < c->rows; ++i) {
        double sum = 0;
        for (int64_t j = 0; j < c->cols; ++j) sum += c->grad(i, j);
        for (int64_t j = 0; j < c->cols; ++j)
          a->grad(i, j) += c->grad(i, j) - std::exp(c->val(i, j)) * sum;
      }
    });
    return c;
  }

  // Row-wise layer normalization with learnable gain/bias (1 x cols each).
  Node* layernorm_rows(Node* a, Node* gain, Node* bias, double eps = 1e-5) {
    Node* c = alloc(a->rows, a->cols);
    int64_t d = a->cols;
    auto stats =
        std::make_shared<std::vector<std::pair<double, double>>>(static_cast<size_t>(a->rows));
    for (int64_t i = 0; i < a->rows; ++i) {
      double mean = 0;
      for (int64_t j = 0; j < d; ++j) mean += a->val(i, j);
      mean /= static_cast<double>(d);
      double var = 0;
      for (int64_t j = 0; j < d; ++j) {
        double t = a->val(i, j) - mean;
        var += t * t;
      }
      var /= static_cast<double>(d);
      double inv = 1.0 / std::sqrt(var + eps);
      (*stats)[static_cast<size_t>(i)] = {mean, inv};
      for (int64_t j = 0; j < d; ++j)
        c->val(i, j) = (a->val(i, j) - mean) * inv * gain->val(0, j) + bias->val(0, j);
    }
    tape_.push_back([a, gain, bias, c, stats, d] {
      for (int64_t i = 0; i < a->rows; ++i) {
        auto [mean, inv] = (*stats)[static_cast<size_t>(i)];
        double sum_g = 0, sum_gx = 0;
        for (int64_t j = 0; j < d; ++j) {
          double xhat = (a->val(i, j) - mean) * inv;
          double gj = c->grad(i, j) * gain->val(0, j);
          sum_g += gj;
          sum_gx += gj * xhat;
          gain->grad(0, j) += c->grad(i, j) * xhat;
          bias->grad(0, j) += c->grad(i, j);
        }
        double n = static_cast<double>(d);
        for (int64_t j = 0; j < d; ++j) {
          double xhat = (a->val(i, j) - mean) * inv;
          double gj = c->grad(i, j) * gain->val(0, j);
          a->grad(i, j) += inv * (gj - sum_g / n - xhat * sum_gx / n);
        }
      }
    });
    return c;
  }

  // Scalar node: sum over selected rows of -log-prob of target column,
  // computed from raw logits.
  Node* cross_entropy(Node* logits, const std::vector<int32_t>& targets) {
    if (static_cast<int64_t>(targets.size()) != logits->rows)
      throw ContractViolation("cross_entropy: target count mismatch");
    Node* loss = alloc(1, 1);
    auto probs = std::make_shared<std::vector<double>>(logits->v.size());
    double total = 0;
    for (int64_t i = 0; i < logits->rows; ++i) {
      double mx = -1e300;
      for (int64_t j = 0; j < logits->cols; ++j) mx = std::max(mx, logits->val(i, j));
      double z = 0;
      for (int64_t j = 0; j < logits->cols; ++j) z += std::exp(logits->val(i, j) - mx);
      double lz = mx + std::log(z);
      for (int64_t j = 0; j < logits->cols; ++j)
        (*probs)[static_cast<size_t>(i * logits->cols + j)] = std::exp(logits->val(i, j) - lz);
      int32_t t = targets[static_cast<size_t>(i)];
      if (t < 0 || t >= logits->cols) throw ContractViolation("cross_entropy: bad target id");
      total += lz - logits->val(i, t);
    }
    loss->v[0] = total;
    tape_.push_back([logits, loss, probs, targets] {
      double gv = loss->g[0];
      for (int64_t i = 0; i < logits->rows; ++i) {
        for (int64_t j = 0; j < logits->cols; ++j)
          logits->grad(i, j) += gv * (*probs)[static_cast<size_t>(i * logits->cols + j)];
        logits->grad(i, targets[static_cast<size_t>(i)]) -= gv;
      }
    });
    return loss;
  }

  Node* add_scalar(Node* a, Node* b) {
    Node* c = alloc(1, 1);
    c->v[0] = a->v[0] + b->v[0];
    tape_.push_back([a, b, c] {
      a->g[0] += c->g[0];
      b->g[0] += c->g[0];
    });
    return c;
  }

  // Registers a custom backward hook; forward must already be computed into
  // the output node by the caller.
  void custom(std::function<void()> backward) { tape_.push_back(std::move(backward)); }

  void backward(Node* loss) {
    if (loss->rows != 1 || loss->cols != 1) throw ContractViolation("backward: non-scalar loss");
    loss->g[0] = 1.0;
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
  }

 private:
  std::deque<Node> nodes_;
  std::vector<std::function<void()>> tape_;
};

}  // namespace sggec::ad
