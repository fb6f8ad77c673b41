// SPDX-License-Identifier: Apache-2.0
//
// Attention heads with factorized query-key and output-value matrices.
//
// A head with factors W_Q, W_K, W_V (d_head x d) and W_O (d x d_head) acts on
// X (n x d) as
//
//   h(X) = A(X) X W_OV^T,   A(X) = masked_softmax(X W_QK X^T),
//
// where W_QK = W_Q^T W_K and W_OV = W_O W_V are assembled once and both have
// rank at most d_head. There is no score scaling unless requested, and no
// bias anywhere.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "minigpt/tensor.hpp"

namespace minigpt {

struct HeadOptions {
  SoftmaxMode mode = SoftmaxMode::PaperGlobal;
  // Multiply scores by 1/sqrt(d_head) before the softmax.
  bool scale_scores = false;

  friend bool operator==(const HeadOptions&, const HeadOptions&) = default;
};

class AttentionHead {
 public:
  // Throws ConfigError on inconsistent shapes or d_head >= d.
  AttentionHead(Matrix query, Matrix key, Matrix value, Matrix output, HeadOptions options = {});

  std::size_t d() const { return query_.cols(); }
  std::size_t d_head() const { return query_.rows(); }
  const HeadOptions& options() const { return options_; }

  const Matrix& query() const { return query_; }
  const Matrix& key() const { return key_; }
  const Matrix& value() const { return value_; }
  const Matrix& output() const { return output_; }
  const Matrix& qk() const { return qk_; }
  const Matrix& ov() const { return ov_; }

  friend bool operator==(const AttentionHead&, const AttentionHead&) = default;

 private:
  Matrix query_, key_, value_, output_;
  Matrix qk_, ov_;
  HeadOptions options_;
};

inline AttentionHead assemble_head(Matrix query, Matrix key, Matrix value, Matrix output, HeadOptions options = {}) {
  return AttentionHead(std::move(query), std::move(key), std::move(value), std::move(output), options);
}

// Scores X W_QK X^T, entry (i,j) being the bilinear form <x_i, x_j>.
Matrix attention_scores(const AttentionHead& head, const Matrix& x);

Matrix attention_pattern(const AttentionHead& head, const Matrix& x);

// A(X) X W_OV^T.
Matrix attention_head_apply(const AttentionHead& head, const Matrix& x);

// (A(X) ⊗ W_OV) acting on the row-major vectorization of X, reshaped back to
// n x d. Same map as attention_head_apply, computed through the Kronecker
// product.
Matrix attention_head_apply_tensor(const AttentionHead& head, const Matrix& x);

// A X W_OV^T for a caller-supplied pattern A.
Matrix apply_with_pattern(const AttentionHead& head, const Matrix& pattern, const Matrix& x);

// Heads sharing d and d_head.
class MultiHead {
 public:
  explicit MultiHead(std::vector<AttentionHead> heads);

  std::size_t d() const { return heads_.front().d(); }
  std::size_t d_head() const { return heads_.front().d_head(); }
  std::size_t size() const { return heads_.size(); }
  const std::vector<AttentionHead>& heads() const { return heads_; }

  friend bool operator==(const MultiHead&, const MultiHead&) = default;

 private:
  std::vector<AttentionHead> heads_;
};

// X + sum_h h(X).
Matrix attention_layer(const MultiHead& heads, const Matrix& x);

// Product of heads under fixed patterns: pattern A_1 A_2 ... A_k and
// output-value matrix W_OV^1 W_OV^2 ... W_OV^k.
class VirtualHead {
 public:
  VirtualHead(const AttentionHead& head);  // NOLINT: a head is a one-factor virtual head

  std::size_t d() const { return ov_.rows(); }
  std::size_t length() const { return factors_.size(); }
  const std::vector<AttentionHead>& factors() const { return factors_; }
  const Matrix& ov() const { return ov_; }

 private:
  VirtualHead(std::vector<AttentionHead> factors, Matrix ov);
  friend VirtualHead compose_heads(const VirtualHead& outer, const VirtualHead& inner);

  std::vector<AttentionHead> factors_;
  Matrix ov_;
};

// outer ∘ inner. Throws ConfigError when widths differ.
VirtualHead compose_heads(const VirtualHead& outer, const VirtualHead& inner);

// (A_1 ... A_k) X (W_OV)^T with one pattern per factor, in factor order.
Matrix apply_virtual(const VirtualHead& head, std::span<const Matrix> patterns, const Matrix& x);

}  // namespace minigpt
