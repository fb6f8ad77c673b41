// SPDX-License-Identifier: Apache-2.0
#include "minigpt/model.hpp"

#include <algorithm>

#include "minigpt/errors.hpp"
#include "minigpt/random.hpp"

namespace minigpt {

namespace {

std::string dims(const Matrix& m) { return m.shape_string(); }

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ConfigError(name + " has shape " + dims(m) + ", expected " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  }
}

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  std::vector<double> data(rows * cols);
  for (double& v : data) v = rng.normal(0.0, stddev);
  return Matrix(rows, cols, std::move(data));
}

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be at least 1");
  };
  positive(n_vocab, "n_vocab");
  positive(n_ctx, "n_ctx");
  positive(d, "d");
  positive(d_head, "d_head");
  positive(n_heads, "n_heads");
  positive(n_blocks, "n_blocks");
  positive(mlp_depth, "mlp_depth");
  if (mlp_depth > 1) positive(mlp_hidden, "mlp_hidden");
  if (d >= n_vocab) {
    throw ConfigError("d = " + std::to_string(d) + " must be smaller than n_vocab = " + std::to_string(n_vocab));
  }
  if (d_head >= d) {
    throw ConfigError("d_head = " + std::to_string(d_head) + " must be smaller than d = " + std::to_string(d));
  }
}

std::vector<std::size_t> ModelConfig::mlp_widths() const {
  std::vector<std::size_t> widths{d};
  for (std::size_t l = 1; l < mlp_depth; ++l) widths.push_back(mlp_hidden);
  widths.push_back(d);
  return widths;
}

std::size_t ModelConfig::parameter_count() const {
  std::size_t total = d * n_vocab;
  if (!tied_embedding) total += d * n_vocab;
  total += n_ctx * d;
  std::size_t per_block = n_heads * (3 * d_head * d + d * d_head);
  const auto widths = mlp_widths();
  for (std::size_t l = 1; l < widths.size(); ++l) per_block += widths[l] * widths[l - 1] + widths[l];
  return total + n_blocks * per_block;
}

Matrix residual_block_apply(const ResidualBlock& block, const Matrix& x) {
  return feedforward_layer(block.mlp, attention_layer(block.heads, x));
}

TransformerModel::TransformerModel(ModelConfig config, Matrix embedding, std::optional<Matrix> unembedding,
                                   Matrix positional, std::vector<ResidualBlock> blocks)
    : config_(config), embedding_(std::move(embedding)), positional_(std::move(positional)), blocks_(std::move(blocks)) {
  config_.validate();
  const auto& c = config_;
  require_shape(embedding_, c.d, c.n_vocab, "W_E");
  if (c.tied_embedding) {
    if (unembedding) throw ConfigError("W_U given for a model with tied embeddings");
    unembedding_ = transpose(embedding_);
  } else {
    if (!unembedding) throw ConfigError("W_U missing for a model with untied embeddings");
    require_shape(*unembedding, c.n_vocab, c.d, "W_U");
    unembedding_ = std::move(*unembedding);
  }
  require_shape(positional_, c.n_ctx, c.d, "P");

  if (blocks_.size() != c.n_blocks) {
    throw ConfigError("expected " + std::to_string(c.n_blocks) + " blocks, got " + std::to_string(blocks_.size()));
  }
  const auto widths = c.mlp_widths();
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string name = "blocks[" + std::to_string(b) + "]";
    const auto& block = blocks_[b];
    if (block.heads.size() != c.n_heads) throw ConfigError(name + " has " + std::to_string(block.heads.size()) + " heads");
    if (block.heads.d() != c.d || block.heads.d_head() != c.d_head) {
      throw ConfigError(name + " heads do not match (d, d_head)");
    }
    for (const auto& h : block.heads.heads()) {
      if (h.options() != c.head_options()) throw ConfigError(name + " head options differ from the config");
    }
    if (block.mlp.widths() != widths) throw ConfigError(name + ".mlp widths do not match the config");
    if (block.mlp.activation() != c.activation) throw ConfigError(name + ".mlp activation differs from the config");
  }
}

std::size_t TransformerModel::parameter_count() const {
  std::size_t total = embedding_.size() + positional_.size();
  if (!config_.tied_embedding) total += unembedding_.size();
  for (const auto& block : blocks_) {
    for (const auto& h : block.heads.heads())
      total += h.query().size() + h.key().size() + h.value().size() + h.output().size();
    total += block.mlp.parameter_count();
  }
  return total;
}

TransformerModel init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  constexpr double kWeightStd = 0.02;
  constexpr double kPositionalStd = 0.01;
  Rng rng(seed);

  Matrix embedding = random_matrix(rng, config.d, config.n_vocab, kWeightStd);
  std::optional<Matrix> unembedding;
  if (!config.tied_embedding) unembedding = random_matrix(rng, config.n_vocab, config.d, kWeightStd);
  Matrix positional = random_matrix(rng, config.n_ctx, config.d, kPositionalStd);

  const auto widths = config.mlp_widths();
  std::vector<ResidualBlock> blocks;
  for (std::size_t b = 0; b < config.n_blocks; ++b) {
    std::vector<AttentionHead> heads;
    for (std::size_t h = 0; h < config.n_heads; ++h) {
      Matrix q = random_matrix(rng, config.d_head, config.d, kWeightStd);
      Matrix k = random_matrix(rng, config.d_head, config.d, kWeightStd);
      Matrix v = random_matrix(rng, config.d_head, config.d, kWeightStd);
      Matrix o = random_matrix(rng, config.d, config.d_head, kWeightStd);
      heads.emplace_back(std::move(q), std::move(k), std::move(v), std::move(o), config.head_options());
    }
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    for (std::size_t l = 1; l < widths.size(); ++l) {
      weights.push_back(random_matrix(rng, widths[l], widths[l - 1], kWeightStd));
      biases.emplace_back(widths[l]);
    }
    blocks.push_back({MultiHead(std::move(heads)), Mlp(std::move(weights), std::move(biases), config.activation)});
  }
  return TransformerModel(config, std::move(embedding), std::move(unembedding), std::move(positional),
                          std::move(blocks));
}

Matrix embed(const TransformerModel& model, const TokenMatrix& tokens) {
  const auto& c = model.config();
  if (tokens.width() != c.n_vocab) {
    throw DimensionError("embed: token matrix width " + std::to_string(tokens.width()) + " vs n_vocab " +
                         std::to_string(c.n_vocab));
  }
  if (tokens.n() == 0 || tokens.n() > c.n_ctx) {
    throw DimensionError("embed: context of " + std::to_string(tokens.n()) + " tokens, n_ctx = " +
                         std::to_string(c.n_ctx));
  }
  return add(matmul(tokens.dense(), transpose(model.embedding())), model.positional().top_rows(tokens.n()));
}

Matrix unembed(const TransformerModel& model, const Matrix& x) {
  if (x.cols() != model.config().d) throw DimensionError("unembed: input " + dims(x));
  return matmul(x, transpose(model.unembedding()));
}

Matrix decoder_apply(const TransformerModel& model, const Matrix& x) {
  if (x.cols() != model.config().d) throw DimensionError("decoder_apply: input " + dims(x));
  Matrix out = x;
  for (const auto& block : model.blocks()) out = residual_block_apply(block, out);
  return out;
}

Matrix transformer_forward(const TransformerModel& model, const TokenMatrix& tokens) {
  return unembed(model, decoder_apply(model, embed(model, tokens)));
}

Vector next_token_logits(const TransformerModel& model, const TokenSeq& tokens) {
  if (tokens.empty()) throw DomainError("next-token prediction needs a non-empty context");
  if (tokens.size() > model.config().n_ctx) {
    throw DimensionError("context of " + std::to_string(tokens.size()) + " tokens exceeds n_ctx = " +
                         std::to_string(model.config().n_ctx));
  }
  const Matrix logits = transformer_forward(model, TokenMatrix(tokens, model.config().n_vocab));
  return logits.row_vector(logits.rows() - 1);
}

NextTokenDistribution next_token_distribution(const TransformerModel& model, const TokenSeq& tokens) {
  return {softmax_vector(next_token_logits(model, tokens))};
}

TokenId predict_next(const TransformerModel& model, const TokenSeq& tokens) {
  const Vector probs = next_token_distribution(model, tokens).probs;
  // max_element returns the first maximum.
  return static_cast<TokenId>(std::max_element(probs.values().begin(), probs.values().end()) -
                              probs.values().begin());
}

TokenSeq generate_tokens(const TransformerModel& model, TokenSeq context, std::size_t steps,
                         const GenerationStrategy& strategy) {
  if (context.empty()) throw DomainError("generation needs a non-empty prompt");
  if (strategy.kind == GenerationStrategy::Kind::Sample && !(strategy.temperature > 0.0)) {
    throw ConfigError("temperature must be positive");
  }
  const std::size_t n_ctx = model.config().n_ctx;
  Rng rng(strategy.seed);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t start = context.size() > n_ctx ? context.size() - n_ctx : 0;
    const TokenSeq window(context.begin() + static_cast<std::ptrdiff_t>(start), context.end());
    TokenId next;
    if (strategy.kind == GenerationStrategy::Kind::Greedy) {
      next = predict_next(model, window);
    } else {
      const Vector probs = softmax_vector(scale(next_token_logits(model, window), 1.0 / strategy.temperature));
      const double u = rng.uniform();
      double cumulative = 0.0;
      next = static_cast<TokenId>(probs.size() - 1);
      for (std::size_t i = 0; i < probs.size(); ++i) {
        cumulative += probs[i];
        if (u < cumulative) {
          next = static_cast<TokenId>(i);
          break;
        }
      }
    }
    context.push_back(next);
  }
  return context;
}

std::string generate(const TransformerModel& model, const BpeModel& bpe, const std::string& prompt,
                     std::size_t steps, const GenerationStrategy& strategy) {
  if (bpe.n_vocab() != model.config().n_vocab) {
    throw ConfigError("vocabulary has " + std::to_string(bpe.n_vocab()) + " tokens but the model expects " +
                      std::to_string(model.config().n_vocab));
  }
  const TokenSeq prompt_tokens = tokenize(bpe, prompt);
  if (prompt_tokens.empty()) throw DomainError("prompt tokenizes to an empty sequence");
  return detokenize(bpe, generate_tokens(model, prompt_tokens, steps, strategy));
}

}  // namespace minigpt
