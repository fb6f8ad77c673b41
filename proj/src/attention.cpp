// SPDX-License-Identifier: Apache-2.0
#include "minigpt/attention.hpp"

#include <cmath>

#include "minigpt/errors.hpp"

namespace minigpt {

namespace {

void require_width(const AttentionHead& head, const Matrix& x, const char* op) {
  if (x.cols() != head.d()) {
    throw DimensionError(std::string(op) + ": head width " + std::to_string(head.d()) + " vs input " +
                         x.shape_string());
  }
}

}  // namespace

AttentionHead::AttentionHead(Matrix query, Matrix key, Matrix value, Matrix output, HeadOptions options)
    : query_(std::move(query)),
      key_(std::move(key)),
      value_(std::move(value)),
      output_(std::move(output)),
      options_(options) {
  const std::size_t dh = query_.rows(), dm = query_.cols();
  auto shaped = [](const Matrix& m, std::size_t r, std::size_t c) { return m.rows() == r && m.cols() == c; };
  if (dh == 0 || dm == 0) throw ConfigError("attention head: empty query matrix");
  if (!shaped(key_, dh, dm) || !shaped(value_, dh, dm)) {
    throw ConfigError("attention head: W_Q " + query_.shape_string() + ", W_K " + key_.shape_string() + ", W_V " +
                      value_.shape_string() + " must share one d_head x d shape");
  }
  if (!shaped(output_, dm, dh)) {
    throw ConfigError("attention head: W_O " + output_.shape_string() + " must be " + std::to_string(dm) + "x" +
                      std::to_string(dh));
  }
  if (dh >= dm) {
    throw ConfigError("attention head: d_head = " + std::to_string(dh) + " must be smaller than d = " +
                      std::to_string(dm));
  }
  qk_ = matmul(transpose(query_), key_);
  ov_ = matmul(output_, value_);
}

Matrix attention_scores(const AttentionHead& head, const Matrix& x) {
  require_width(head, x, "attention_scores");
  Matrix scores = matmul(matmul(x, head.qk()), transpose(x));
  if (head.options().scale_scores) scores = scale(scores, 1.0 / std::sqrt(static_cast<double>(head.d_head())));
  return scores;
}

Matrix attention_pattern(const AttentionHead& head, const Matrix& x) {
  return masked_softmax(attention_scores(head, x), head.options().mode);
}

Matrix attention_head_apply(const AttentionHead& head, const Matrix& x) {
  return apply_with_pattern(head, attention_pattern(head, x), x);
}

Matrix attention_head_apply_tensor(const AttentionHead& head, const Matrix& x) {
  const Matrix big = kronecker(attention_pattern(head, x), head.ov());
  return unvectorize_rows(matvec(big, vectorize_rows(x)), x.rows(), x.cols());
}

Matrix apply_with_pattern(const AttentionHead& head, const Matrix& pattern, const Matrix& x) {
  require_width(head, x, "apply_with_pattern");
  if (pattern.rows() != x.rows() || pattern.cols() != x.rows()) {
    throw DimensionError("apply_with_pattern: pattern " + pattern.shape_string() + " for input " + x.shape_string());
  }
  return matmul(matmul(pattern, x), transpose(head.ov()));
}

MultiHead::MultiHead(std::vector<AttentionHead> heads) : heads_(std::move(heads)) {
  if (heads_.empty()) throw ConfigError("multi-head: at least one head required");
  for (std::size_t h = 1; h < heads_.size(); ++h) {
    if (heads_[h].d() != heads_[0].d() || heads_[h].d_head() != heads_[0].d_head()) {
      throw ConfigError("multi-head: head " + std::to_string(h) + " has (d, d_head) = (" +
                        std::to_string(heads_[h].d()) + ", " + std::to_string(heads_[h].d_head()) +
                        "), expected (" + std::to_string(heads_[0].d()) + ", " + std::to_string(heads_[0].d_head()) +
                        ")");
    }
  }
}

Matrix attention_layer(const MultiHead& heads, const Matrix& x) {
  Matrix out = x;
  for (const auto& h : heads.heads()) out = add(out, attention_head_apply(h, x));
  return out;
}

VirtualHead::VirtualHead(const AttentionHead& head) : factors_{head}, ov_(head.ov()) {}

VirtualHead::VirtualHead(std::vector<AttentionHead> factors, Matrix ov)
    : factors_(std::move(factors)), ov_(std::move(ov)) {}

VirtualHead compose_heads(const VirtualHead& outer, const VirtualHead& inner) {
  if (outer.d() != inner.d()) {
    throw ConfigError("compose_heads: widths " + std::to_string(outer.d()) + " and " + std::to_string(inner.d()));
  }
  std::vector<AttentionHead> factors = outer.factors();
  factors.insert(factors.end(), inner.factors().begin(), inner.factors().end());
  return VirtualHead(std::move(factors), matmul(outer.ov(), inner.ov()));
}

Matrix apply_virtual(const VirtualHead& head, std::span<const Matrix> patterns, const Matrix& x) {
  if (patterns.size() != head.length()) {
    throw DimensionError("apply_virtual: " + std::to_string(patterns.size()) + " patterns for a virtual head of " +
                         std::to_string(head.length()) + " factors");
  }
  if (x.cols() != head.d()) throw DimensionError("apply_virtual: input " + x.shape_string());
  Matrix combined = Matrix::identity(x.rows());
  for (const auto& p : patterns) combined = matmul(combined, p);
  if (combined.rows() != x.rows() || combined.cols() != x.rows()) {
    throw DimensionError("apply_virtual: patterns do not match input " + x.shape_string());
  }
  return matmul(matmul(combined, x), transpose(head.ov()));
}

}  // namespace minigpt
