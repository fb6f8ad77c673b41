// SPDX-License-Identifier: Apache-2.0
//
// The decoder-only transformer:
//
//   T = Unembed ∘ D ∘ Embed,   D = B_n ∘ ... ∘ B_1,   B = FF_m ∘ Attn_H
//
// with Embed(t) = t W_E^T + P[0..n), Unembed(X) = X W_U^T. There is no layer
// normalization. Contexts of any length 1..n_ctx are accepted and use the
// first n rows of the positional matrix P.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "minigpt/attention.hpp"
#include "minigpt/ffn.hpp"
#include "minigpt/tensor.hpp"
#include "minigpt/tokenizer.hpp"

namespace minigpt {

struct ModelConfig {
  std::size_t n_vocab = 0;
  std::size_t n_ctx = 0;
  std::size_t d = 0;
  std::size_t d_head = 0;
  std::size_t n_heads = 1;
  std::size_t n_blocks = 1;
  std::size_t mlp_depth = 2;
  std::size_t mlp_hidden = 0;  // ignored when mlp_depth == 1
  Activation activation = Activation::GELU;
  SoftmaxMode softmax_mode = SoftmaxMode::PaperGlobal;
  bool tied_embedding = false;
  bool attention_scale = false;

  // Throws ConfigError unless d < n_vocab, d_head < d and every count is >= 1.
  void validate() const;

  HeadOptions head_options() const { return {softmax_mode, attention_scale}; }
  // d, hidden, ..., hidden, d (mlp_depth + 1 entries).
  std::vector<std::size_t> mlp_widths() const;
  // Closed-form size of the parameter space.
  std::size_t parameter_count() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ResidualBlock {
  MultiHead heads;
  Mlp mlp;

  friend bool operator==(const ResidualBlock&, const ResidualBlock&) = default;
};

// FF_m(Attn_H(X)).
Matrix residual_block_apply(const ResidualBlock& block, const Matrix& x);

class TransformerModel {
 public:
  // Validates every shape against the config. `unembedding` must be absent
  // for tied models (it is materialized as W_E^T) and present otherwise.
  TransformerModel(ModelConfig config, Matrix embedding, std::optional<Matrix> unembedding, Matrix positional,
                   std::vector<ResidualBlock> blocks);

  const ModelConfig& config() const { return config_; }
  const Matrix& embedding() const { return embedding_; }      // W_E, d x n_vocab
  const Matrix& unembedding() const { return unembedding_; }  // W_U, n_vocab x d
  const Matrix& positional() const { return positional_; }    // P, n_ctx x d
  const std::vector<ResidualBlock>& blocks() const { return blocks_; }

  // Element count of every trainable tensor; W_U counts only when untied.
  std::size_t parameter_count() const;

  friend bool operator==(const TransformerModel&, const TransformerModel&) = default;

 private:
  ModelConfig config_;
  Matrix embedding_;
  Matrix unembedding_;
  Matrix positional_;
  std::vector<ResidualBlock> blocks_;
};

// Weights ~ N(0, 0.02^2), P ~ N(0, 0.01^2), biases 0. Draw order: W_E, W_U
// (untied only), P, then per block each head's W_Q, W_K, W_V, W_O followed by
// the MLP weight matrices, all row-major.
TransformerModel init_model(const ModelConfig& config, std::uint64_t seed);

Matrix embed(const TransformerModel& model, const TokenMatrix& tokens);
Matrix unembed(const TransformerModel& model, const Matrix& x);
Matrix decoder_apply(const TransformerModel& model, const Matrix& x);
// Per-position logits, n x n_vocab.
Matrix transformer_forward(const TransformerModel& model, const TokenMatrix& tokens);

// Final row of transformer_forward for the context.
Vector next_token_logits(const TransformerModel& model, const TokenSeq& tokens);

struct NextTokenDistribution {
  Vector probs;
};

NextTokenDistribution next_token_distribution(const TransformerModel& model, const TokenSeq& tokens);

// Most probable next token; ties go to the lowest id.
TokenId predict_next(const TransformerModel& model, const TokenSeq& tokens);

struct GenerationStrategy {
  enum class Kind { Greedy, Sample };
  Kind kind = Kind::Greedy;
  double temperature = 1.0;
  std::uint64_t seed = 0;

  static GenerationStrategy greedy() { return {}; }
  static GenerationStrategy sample(double temperature, std::uint64_t seed) {
    return {Kind::Sample, temperature, seed};
  }
};

// Appends `steps` tokens to the context one at a time. Once the context is
// longer than n_ctx only the most recent n_ctx tokens are fed to the model.
TokenSeq generate_tokens(const TransformerModel& model, TokenSeq context, std::size_t steps,
                         const GenerationStrategy& strategy);

// Tokenizes the prompt, generates, and detokenizes prompt plus continuation.
std::string generate(const TransformerModel& model, const BpeModel& bpe, const std::string& prompt,
                     std::size_t steps, const GenerationStrategy& strategy);

}  // namespace minigpt
