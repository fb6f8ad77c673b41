// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include <gtest/gtest.h>

#include "generators.hpp"
#include "minigpt/errors.hpp"
#include "minigpt/model.hpp"
#include "minigpt/serialization.hpp"
#include "reference_forward.hpp"

namespace minigpt {
namespace {

using testing::Gen;

ModelConfig toy_config() {
  ModelConfig c;
  c.n_vocab = 12;
  c.n_ctx = 8;
  c.d = 6;
  c.d_head = 2;
  c.n_heads = 2;
  c.n_blocks = 2;
  c.mlp_depth = 2;
  c.mlp_hidden = 10;
  return c;
}

// Same shapes as `model`, with every parameter set to zero.
TransformerModel zeroed(const TransformerModel& model, bool keep_embedding = false, bool keep_mlp = false) {
  const auto& c = model.config();
  std::vector<ResidualBlock> blocks;
  for (const auto& b : model.blocks()) {
    std::vector<AttentionHead> heads;
    for (const auto& h : b.heads.heads())
      heads.emplace_back(Matrix(c.d_head, c.d), Matrix(c.d_head, c.d), Matrix(c.d_head, c.d), Matrix(c.d, c.d_head),
                         c.head_options());
    std::vector<Matrix> w;
    std::vector<Vector> bias;
    for (std::size_t l = 0; l < b.mlp.depth(); ++l) {
      w.push_back(keep_mlp ? b.mlp.weights()[l] : Matrix(b.mlp.weights()[l].rows(), b.mlp.weights()[l].cols()));
      bias.push_back(keep_mlp ? b.mlp.biases()[l] : Vector(b.mlp.biases()[l].size()));
    }
    blocks.push_back({MultiHead(std::move(heads)), Mlp(std::move(w), std::move(bias), c.activation)});
  }
  std::optional<Matrix> wu;
  if (!c.tied_embedding) wu = Matrix(c.n_vocab, c.d);
  return TransformerModel(c, keep_embedding ? model.embedding() : Matrix(c.d, c.n_vocab),
                          c.tied_embedding ? std::nullopt : wu, Matrix(c.n_ctx, c.d), std::move(blocks));
}

TEST(ModelConfigTest, Validation) {
  ModelConfig c = toy_config();
  EXPECT_NO_THROW(c.validate());
  c.d = c.n_vocab;
  EXPECT_THROW(c.validate(), ConfigError);
  c = toy_config();
  c.d_head = c.d;
  EXPECT_THROW(c.validate(), ConfigError);
  c = toy_config();
  c.n_blocks = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = toy_config();
  c.d = c.n_vocab + 3;
  EXPECT_THROW(init_model(c, 1), ConfigError);
}

TEST(ModelConfigTest, ParameterCountMatchesTensors) {
  for (bool tied : {false, true}) {
    for (std::size_t depth : {1u, 2u, 3u}) {
      ModelConfig c = toy_config();
      c.tied_embedding = tied;
      c.mlp_depth = depth;
      const TransformerModel m = init_model(c, 3);
      EXPECT_EQ(m.parameter_count(), c.parameter_count());
    }
  }
}

TEST(InitModelTest, DeterministicPerSeed) {
  const ModelConfig c = toy_config();
  EXPECT_EQ(init_model(c, 42), init_model(c, 42));
  EXPECT_NE(init_model(c, 42), init_model(c, 43));
}

TEST(InitModelTest, TiedUnembeddingIsTransposedEmbedding) {
  ModelConfig c = toy_config();
  c.tied_embedding = true;
  const TransformerModel m = init_model(c, 5);
  EXPECT_EQ(m.unembedding(), transpose(m.embedding()));
  Gen g(1);
  const Vector v = g.vector(c.d);
  EXPECT_EQ(matvec(m.unembedding(), v), matvec(transpose(m.embedding()), v));
}

TEST(InitModelTest, BiasesStartAtZero) {
  const TransformerModel m = init_model(toy_config(), 9);
  for (const auto& b : m.blocks())
    for (const auto& bias : b.mlp.biases())
      for (double v : bias.values()) EXPECT_EQ(v, 0.0);
}

TEST(InitModelTest, WeightScale) {
  ModelConfig c = toy_config();
  c.n_vocab = 400;
  c.d = 50;
  c.d_head = 5;
  const TransformerModel m = init_model(c, 2);
  double sq = 0.0;
  for (double v : m.embedding().values()) sq += v * v;
  EXPECT_NEAR(std::sqrt(sq / m.embedding().size()), 0.02, 0.001);
  sq = 0.0;
  for (double v : m.positional().values()) sq += v * v;
  EXPECT_NEAR(std::sqrt(sq / m.positional().size()), 0.01, 0.001);
}

TEST(TransformerModelTest, ConstructorValidatesTying) {
  const TransformerModel m = init_model(toy_config(), 1);
  ModelConfig tied = toy_config();
  tied.tied_embedding = true;
  EXPECT_THROW(TransformerModel(tied, m.embedding(), m.unembedding(), m.positional(), m.blocks()), ConfigError);
  EXPECT_THROW(TransformerModel(toy_config(), m.embedding(), std::nullopt, m.positional(), m.blocks()), ConfigError);
  EXPECT_THROW(TransformerModel(toy_config(), transpose(m.embedding()), m.unembedding(), m.positional(), m.blocks()),
               ConfigError);
}

TEST(EmbedTest, OneHotSelectsEmbeddingColumn) {
  const TransformerModel m = init_model(toy_config(), 7);
  const TransformerModel no_pos(m.config(), m.embedding(), m.unembedding(), Matrix(8, 6), m.blocks());
  const Matrix x = embed(no_pos, TokenMatrix({5, 0, 11}, 12));
  EXPECT_EQ(x.row_vector(0), m.embedding().col_vector(5));
  EXPECT_EQ(x.row_vector(1), m.embedding().col_vector(0));
  EXPECT_EQ(x.row_vector(2), m.embedding().col_vector(11));
}

TEST(EmbedTest, ZeroEmbeddingLeavesPositional) {
  const TransformerModel m = init_model(toy_config(), 7);
  const TransformerModel no_we(m.config(), Matrix(6, 12), m.unembedding(), m.positional(), m.blocks());
  EXPECT_EQ(embed(no_we, TokenMatrix({3, 4, 5}, 12)), m.positional().top_rows(3));
}

TEST(EmbedTest, HandComputedSmallCase) {
  ModelConfig c;
  c.n_vocab = 3;
  c.n_ctx = 2;
  c.d = 2;
  c.d_head = 1;
  c.n_heads = 1;
  c.n_blocks = 1;
  c.mlp_depth = 1;
  const TransformerModel base = init_model(c, 1);
  const Matrix we{{1, 2, 3}, {4, 5, 6}};
  const Matrix p{{0.5, -0.5}, {10, 20}};
  const TransformerModel m(c, we, base.unembedding(), p, base.blocks());
  // tokens [2, 0]: rows (3,6)+(0.5,-0.5) and (1,4)+(10,20)
  EXPECT_EQ(embed(m, TokenMatrix({2, 0}, 3)), (Matrix{{3.5, 5.5}, {11, 24}}));
}

TEST(EmbedTest, ShapeErrors) {
  const TransformerModel m = init_model(toy_config(), 1);
  EXPECT_THROW(embed(m, TokenMatrix({1}, 11)), DimensionError);
  EXPECT_THROW(embed(m, TokenMatrix(TokenSeq(9, 0), 12)), DimensionError);
}

TEST(UnembedTest, ZeroAndSelector) {
  const TransformerModel m = init_model(toy_config(), 1);
  Gen g(2);
  const Matrix x = g.matrix(3, 6);
  EXPECT_EQ(unembed(zeroed(m), x), Matrix(3, 12));

  Matrix wu(12, 6);
  wu(7, 4) = 1.0;
  const TransformerModel sel(m.config(), m.embedding(), wu, m.positional(), m.blocks());
  const Matrix out = unembed(sel, x);
  EXPECT_EQ(out.col_vector(7), x.col_vector(4));
  EXPECT_THROW(unembed(m, Matrix(3, 5)), DimensionError);
}

TEST(UnembedTest, TiedRoundTripIsGramMatrix) {
  ModelConfig c = toy_config();
  c.tied_embedding = true;
  const TransformerModel m = zeroed(init_model(c, 3), /*keep_embedding=*/true);
  const TokenMatrix t({1, 4, 4, 9}, 12);
  // Oracle: entry (i, v) = sum_k W_E[k, t_i] W_E[k, v].
  const Matrix got = unembed(m, embed(m, t));
  for (std::size_t i = 0; i < t.n(); ++i)
    for (std::size_t v = 0; v < 12; ++v) {
      double gram = 0.0;
      for (std::size_t k = 0; k < c.d; ++k) gram += m.embedding()(k, t.ids()[i]) * m.embedding()(k, v);
      EXPECT_NEAR(got(i, v), gram, 1e-15);
    }
  EXPECT_LE(max_abs_diff(transformer_forward(m, t), got), 0.0);
}

TEST(ResidualBlockTest, ZeroBlockIsIdentity) {
  const TransformerModel z = zeroed(init_model(toy_config(), 4));
  Gen g(5);
  const Matrix x = g.matrix(5, 6);
  EXPECT_EQ(residual_block_apply(z.blocks()[0], x), x);
}

TEST(ResidualBlockTest, ZeroOutputValueLeavesFeedforward) {
  const TransformerModel m = init_model(toy_config(), 4);
  const TransformerModel z = zeroed(m, false, /*keep_mlp=*/true);
  Gen g(6);
  const Matrix x = g.matrix(5, 6);
  EXPECT_EQ(residual_block_apply(z.blocks()[0], x), feedforward_layer(z.blocks()[0].mlp, x));
}

TEST(ResidualBlockTest, MatchesExplicitFormula) {
  Gen g(7);
  ModelConfig c = toy_config();
  for (int trial = 0; trial < 20; ++trial) {
    const TransformerModel m = init_model(c, 100 + trial);
    const ResidualBlock& b = m.blocks()[0];
    const Matrix x = g.matrix(g.size(1, 8), c.d);
    // B(X) = X + sum_h h(X) + m(X + sum_h h(X))
    Matrix heads_sum(x.rows(), x.cols());
    for (const auto& h : b.heads.heads()) heads_sum = add(heads_sum, attention_head_apply(h, x));
    const Matrix inner = add(x, heads_sum);
    const Matrix expected = add(inner, apply_rows(b.mlp, inner));
    EXPECT_LE(max_abs_diff(residual_block_apply(b, x), expected), 1e-12);
  }
}

TEST(DecoderTest, CompositionOfBlocks) {
  const TransformerModel m = init_model(toy_config(), 8);
  Gen g(8);
  const Matrix x = g.matrix(4, 6);
  const Matrix step = residual_block_apply(m.blocks()[1], residual_block_apply(m.blocks()[0], x));
  EXPECT_EQ(decoder_apply(m, x), step);
  EXPECT_EQ(decoder_apply(zeroed(m), x), x);

  ModelConfig one = toy_config();
  one.n_blocks = 1;
  const TransformerModel m1 = init_model(one, 8);
  EXPECT_EQ(decoder_apply(m1, x), residual_block_apply(m1.blocks()[0], x));
  EXPECT_THROW(decoder_apply(m, Matrix(2, 5)), DimensionError);
}

TEST(TransformerForwardTest, ZeroModelHasZeroLogits) {
  const TransformerModel z = zeroed(init_model(toy_config(), 1));
  EXPECT_EQ(transformer_forward(z, TokenMatrix({1, 2, 3}, 12)), Matrix(3, 12));
}

TEST(TransformerForwardTest, ShapeForEveryContextLength) {
  const TransformerModel m = init_model(toy_config(), 2);
  for (std::size_t n = 1; n <= 8; ++n) {
    const Matrix out = transformer_forward(m, TokenMatrix(TokenSeq(n, 3), 12));
    EXPECT_EQ(out.rows(), n);
    EXPECT_EQ(out.cols(), 12u);
  }
}

TEST(TransformerForwardTest, RowWiseModelIsCausal) {
  ModelConfig c = toy_config();
  c.softmax_mode = SoftmaxMode::RowWise;
  const TransformerModel m = init_model(c, 11);
  Gen g(12);
  TokenSeq ids(8);
  for (auto& id : ids) id = static_cast<TokenId>(g.size(0, 11));
  const Matrix base = transformer_forward(m, TokenMatrix(ids, 12));
  for (std::size_t i = 0; i < 8; ++i) {
    TokenSeq changed = ids;
    changed[i] = (changed[i] + 1 + static_cast<TokenId>(g.size(0, 10))) % 12;
    const Matrix out = transformer_forward(m, TokenMatrix(changed, 12));
    for (std::size_t r = 0; r < i; ++r) EXPECT_TRUE(std::equal(out.row(r).begin(), out.row(r).end(), base.row(r).begin()));
  }
}

TEST(NextTokenTest, ZeroModelIsUniformAndPredictsTokenZero) {
  const TransformerModel z = zeroed(init_model(toy_config(), 1));
  const auto dist = next_token_distribution(z, {3, 7});
  for (double p : dist.probs.values()) EXPECT_NEAR(p, 1.0 / 12, 1e-15);
  EXPECT_EQ(predict_next(z, {3, 7}), 0u);
}

TEST(NextTokenTest, NormalizedAndPositive) {
  Gen g(13);
  for (int trial = 0; trial < 20; ++trial) {
    const TransformerModel m = init_model(toy_config(), 200 + trial);
    TokenSeq ids(g.size(1, 8));
    for (auto& id : ids) id = static_cast<TokenId>(g.size(0, 11));
    const auto dist = next_token_distribution(m, ids);
    EXPECT_NEAR(sum(dist.probs), 1.0, 1e-12);
    for (double p : dist.probs.values()) EXPECT_GT(p, 0.0);
  }
}

TEST(NextTokenTest, Errors) {
  const TransformerModel m = init_model(toy_config(), 1);
  EXPECT_THROW(next_token_distribution(m, {}), DomainError);
  EXPECT_THROW(next_token_distribution(m, TokenSeq(9, 1)), DimensionError);
  EXPECT_THROW(next_token_distribution(m, {12}), RangeError);
}

TEST(NextTokenTest, PredictsUniqueMaximum) {
  // Zero model except W_U row k, with P giving the last position a nonzero state.
  const TransformerModel base = zeroed(init_model(toy_config(), 1));
  Matrix p(8, 6);
  p(1, 0) = 1.0;
  Matrix wu(12, 6);
  wu(9, 0) = 3.0;
  const TransformerModel m(base.config(), base.embedding(), wu, p, base.blocks());
  EXPECT_EQ(predict_next(m, {0, 0}), 9u);
  // A constant shift of every logit (W_U column gets an equal offset) leaves the argmax alone.
  Matrix shifted = wu;
  for (std::size_t v = 0; v < 12; ++v) shifted(v, 0) += 5.0;
  const TransformerModel m2(base.config(), base.embedding(), shifted, p, base.blocks());
  EXPECT_EQ(predict_next(m2, {0, 0}), 9u);
}

TEST(NextTokenTest, MatchesStraightLineReference) {
  for (auto mode : {SoftmaxMode::PaperGlobal, SoftmaxMode::RowWise}) {
    for (bool tied : {false, true}) {
      ModelConfig c = toy_config();
      c.softmax_mode = mode;
      c.tied_embedding = tied;
      c.activation = tied ? Activation::ReLU : Activation::GELU;
      // Larger weights so attention patterns are far from uniform.
      const TransformerModel small = init_model(c, 17);
      Gen g(99);
      std::vector<ResidualBlock> blocks;
      for (const auto& b : small.blocks()) {
        std::vector<AttentionHead> heads;
        for (std::size_t h = 0; h < c.n_heads; ++h) heads.push_back(g.head(c.d, c.d_head, c.head_options()));
        blocks.push_back({MultiHead(std::move(heads)), g.mlp(c.mlp_widths(), c.activation, 0.5)});
      }
      std::optional<Matrix> wu;
      if (!tied) wu = g.matrix(c.n_vocab, c.d);
      const TransformerModel m(c, g.matrix(c.d, c.n_vocab), wu, g.matrix(c.n_ctx, c.d, 0.1), std::move(blocks));
      const TokenSeq ids{3, 1, 4, 1, 5, 9, 2};
      const auto ref = testing::reference_next_token_distribution(model_to_json(m), {3, 1, 4, 1, 5, 9, 2});
      const auto got = next_token_distribution(m, ids).probs;
      ASSERT_EQ(ref.size(), got.size());
      for (std::size_t v = 0; v < ref.size(); ++v) EXPECT_NEAR(got[v], ref[v], 1e-10);
    }
  }
}

TEST(GenerateTest, ZeroStepsReturnsPrompt) {
  ModelConfig c = toy_config();
  const BpeModel bpe = train_bpe({"ab ab ba"}, {U'a', U'b', U'c', U'd', U'e', U'f', U'g', U'h'}, 12);
  ASSERT_EQ(bpe.n_vocab(), 12u);
  const TransformerModel m = init_model(c, 3);
  EXPECT_EQ(generate(m, bpe, "ab  ba", 0, GenerationStrategy::greedy()), "ab ba");
}

TEST(GenerateTest, ZeroModelGreedyRepeatsTokenZero) {
  const TransformerModel z = zeroed(init_model(toy_config(), 1));
  const TokenSeq out = generate_tokens(z, {5}, 12, GenerationStrategy::greedy());
  ASSERT_EQ(out.size(), 13u);
  EXPECT_EQ(out[0], 5u);
  for (std::size_t i = 1; i < out.size(); ++i) EXPECT_EQ(out[i], 0u);
}

TEST(GenerateTest, SlidingWindowKeepsMostRecentContext) {
  const TransformerModel m = init_model(toy_config(), 21);
  const TokenSeq long_run = generate_tokens(m, {1, 2, 3}, 10, GenerationStrategy::greedy());
  // The token following any prefix longer than n_ctx depends only on its last n_ctx tokens.
  for (std::size_t len = 9; len < long_run.size(); ++len) {
    const TokenSeq window(long_run.begin() + static_cast<std::ptrdiff_t>(len - 8), long_run.begin() + static_cast<std::ptrdiff_t>(len));
    EXPECT_EQ(predict_next(m, window), long_run[len]);
  }
}

TEST(GenerateTest, SeededSamplingIsReproducible) {
  const TransformerModel m = init_model(toy_config(), 22);
  const auto a = generate_tokens(m, {4}, 20, GenerationStrategy::sample(1.5, 7));
  const auto b = generate_tokens(m, {4}, 20, GenerationStrategy::sample(1.5, 7));
  EXPECT_EQ(a, b);
  const auto c = generate_tokens(m, {4}, 20, GenerationStrategy::sample(1.5, 8));
  EXPECT_NE(a, c);
}

TEST(GenerateTest, Errors) {
  const TransformerModel m = init_model(toy_config(), 22);
  EXPECT_THROW(generate_tokens(m, {}, 3, GenerationStrategy::greedy()), DomainError);
  EXPECT_THROW(generate_tokens(m, {1}, 3, GenerationStrategy::sample(0.0, 1)), ConfigError);
  const BpeModel bpe = train_bpe({"ab ab ba"}, {U'a', U'b', U'c', U'd', U'e', U'f', U'g', U'h'}, 12);
  EXPECT_THROW(generate(m, bpe, "   ", 3, GenerationStrategy::greedy()), DomainError);
  const BpeModel small = BpeModel::create({U'a'}, {});
  EXPECT_THROW(generate(m, small, "a", 3, GenerationStrategy::greedy()), ConfigError);
}

}  // namespace
}  // namespace minigpt
