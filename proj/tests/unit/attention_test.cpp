// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "generators.hpp"
#include "minigpt/attention.hpp"
#include "minigpt/errors.hpp"

namespace minigpt {
namespace {

using testing::Gen;

// Independent rank oracle: singular values above the tolerance.
std::size_t svd_rank(const Matrix& m, double tol = 1e-9) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(e).singularValues();
  return static_cast<std::size_t>((s.array() > tol).count());
}

AttentionHead zero_qk_head(std::size_t d, HeadOptions options, const Matrix& ov_output, const Matrix& ov_value) {
  return AttentionHead(Matrix(ov_value.rows(), d), Matrix(ov_value.rows(), d), ov_value, ov_output, options);
}

TEST(AssembleHeadTest, RankOneQueryKey) {
  const AttentionHead h = assemble_head(Matrix{{1, 0}}, Matrix{{1, 0}}, Matrix{{0, 1}}, Matrix{{1}, {0}});
  EXPECT_EQ(h.qk(), (Matrix{{1, 0}, {0, 0}}));
  EXPECT_EQ(h.ov(), (Matrix{{0, 1}, {0, 0}}));
  EXPECT_EQ(h.d(), 2u);
  EXPECT_EQ(h.d_head(), 1u);
}

TEST(AssembleHeadTest, ZeroFactors) {
  const AttentionHead h(Matrix(2, 5), Matrix(2, 5), Matrix(2, 5), Matrix(5, 2));
  EXPECT_EQ(h.qk(), Matrix(5, 5));
  EXPECT_EQ(h.ov(), Matrix(5, 5));
}

TEST(AssembleHeadTest, ShapeErrors) {
  EXPECT_THROW(AttentionHead(Matrix(2, 2), Matrix(2, 2), Matrix(2, 2), Matrix(2, 2)), ConfigError);  // d_head == d
  EXPECT_THROW(AttentionHead(Matrix(1, 3), Matrix(1, 2), Matrix(1, 3), Matrix(3, 1)), ConfigError);
  EXPECT_THROW(AttentionHead(Matrix(1, 3), Matrix(1, 3), Matrix(1, 3), Matrix(1, 3)), ConfigError);
}

TEST(AssembleHeadTest, FactorizedMatricesAreLowRank) {
  Gen g(13);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = g.size(2, 8), dh = g.size(1, d - 1);
    const AttentionHead h = g.head(d, dh);
    EXPECT_LE(svd_rank(h.qk()), dh);
    EXPECT_LE(svd_rank(h.ov()), dh);
    EXPECT_EQ(numerical_rank(h.qk()), svd_rank(h.qk()));
    EXPECT_EQ(numerical_rank(h.ov()), svd_rank(h.ov()));
  }
  const AttentionHead h = g.head(8, 2);
  EXPECT_EQ(svd_rank(h.qk()), 2u);
}

TEST(AttentionPatternTest, ZeroQueryKeyIsUniformOverUnmasked) {
  const Matrix x{{1, 2, 3}, {4, 5, 6}};
  const AttentionHead global_head = zero_qk_head(3, {SoftmaxMode::PaperGlobal}, Matrix(3, 1), Matrix(1, 3));
  const Matrix a = attention_pattern(global_head, x);
  EXPECT_NEAR(a(0, 0), 1.0 / 3, 1e-15);
  EXPECT_EQ(a(0, 1), 0.0);
  EXPECT_NEAR(a(1, 0), 1.0 / 3, 1e-15);
  EXPECT_NEAR(a(1, 1), 1.0 / 3, 1e-15);
  const AttentionHead rowwise = zero_qk_head(3, {SoftmaxMode::RowWise}, Matrix(3, 1), Matrix(1, 3));
  EXPECT_EQ(attention_pattern(rowwise, x), (Matrix{{1, 0}, {0.5, 0.5}}));
}

TEST(AttentionPatternTest, MatchesPairwiseBilinearForm) {
  // W_QK = [[1,0],[0,0]] so <x_i, x_j> = x_i1 * x_j1.
  const AttentionHead h = assemble_head(Matrix{{1, 0}}, Matrix{{1, 0}}, Matrix{{0, 0}}, Matrix{{0}, {0}});
  const double l2 = std::log(2.0);
  const Matrix x{{1, 0}, {l2, 0}};
  const double s00 = 1.0, s10 = l2, s11 = l2 * l2;
  const double z = std::exp(s00) + std::exp(s10) + std::exp(s11);
  const Matrix a = attention_pattern(h, x);
  EXPECT_NEAR(a(0, 0), std::exp(s00) / z, 1e-15);
  EXPECT_EQ(a(0, 1), 0.0);
  EXPECT_NEAR(a(1, 0), std::exp(s10) / z, 1e-15);
  EXPECT_NEAR(a(1, 1), std::exp(s11) / z, 1e-15);
}

TEST(AttentionPatternTest, ScoresAreBilinearFormOnRowPairs) {
  Gen g(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = g.size(2, 8), n = g.size(1, 8);
    const AttentionHead h = g.head(d, g.size(1, d - 1));
    const Matrix x = g.matrix(n, d);
    const Matrix s = attention_scores(h, x);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double form = 0.0;
        for (std::size_t p = 0; p < d; ++p)
          for (std::size_t q = 0; q < d; ++q) form += x(i, p) * h.qk()(p, q) * x(j, q);
        EXPECT_NEAR(s(i, j), form, 1e-12);
      }
  }
}

TEST(AttentionPatternTest, OptionalScoreScaling) {
  Gen g(9);
  const AttentionHead plain = g.head(6, 2);
  const AttentionHead scaled(plain.query(), plain.key(), plain.value(), plain.output(), {SoftmaxMode::PaperGlobal, true});
  const Matrix x = g.matrix(4, 6);
  EXPECT_LE(max_abs_diff(attention_scores(scaled, x), scale(attention_scores(plain, x), 1.0 / std::sqrt(2.0))), 1e-15);
}

TEST(AttentionPatternTest, WidthMismatch) {
  Gen g(1);
  EXPECT_THROW(attention_pattern(g.head(4, 2), Matrix(3, 5)), DimensionError);
  EXPECT_THROW(attention_head_apply(g.head(4, 2), Matrix(3, 5)), DimensionError);
}

TEST(AttentionHeadApplyTest, SingleRowWithIdentityOutputValue) {
  // W_O W_V = I_2 needs d_head >= 2, so use d = 3 with OV = diag(1,1,0) and
  // compare against x W_OV^T directly.
  const AttentionHead h(Matrix(2, 3), Matrix(2, 3), Matrix{{1, 0, 0}, {0, 1, 0}}, Matrix{{1, 0}, {0, 1}, {0, 0}});
  const Matrix x{{0.5, -2.0, 7.0}};
  EXPECT_EQ(attention_pattern(h, x), Matrix{{1.0}});
  EXPECT_EQ(attention_head_apply(h, x), (Matrix{{0.5, -2.0, 0.0}}));
}

TEST(AttentionHeadApplyTest, ZeroOutputValue) {
  Gen g(2);
  const AttentionHead h(g.matrix(2, 4), g.matrix(2, 4), Matrix(2, 4), g.matrix(4, 2));
  EXPECT_EQ(attention_head_apply(h, g.matrix(3, 4)), Matrix(3, 4));
}

TEST(AttentionHeadApplyTest, UniformPatternTimesX) {
  // W_QK = 0, OV acts as identity on the first two coordinates, X = [I_2 | 0].
  const AttentionHead h(Matrix(2, 3), Matrix(2, 3), Matrix{{1, 0, 0}, {0, 1, 0}}, Matrix{{1, 0}, {0, 1}, {0, 0}});
  const Matrix out = attention_head_apply(h, Matrix{{1, 0, 0}, {0, 1, 0}});
  const double t = 1.0 / 3;
  EXPECT_LE(max_abs_diff(out, Matrix{{t, 0, 0}, {t, t, 0}}), 1e-15);
}

TEST(AttentionHeadApplyTest, TensorFormAgreesWithMatrixForm) {
  Gen g(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = g.size(2, 8), n = g.size(1, 8);
    const SoftmaxMode mode = g.coin() ? SoftmaxMode::RowWise : SoftmaxMode::PaperGlobal;
    const AttentionHead h = g.head(d, g.size(1, d - 1), {mode});
    const Matrix x = g.matrix(n, d);
    EXPECT_LE(max_abs_diff(attention_head_apply_tensor(h, x), attention_head_apply(h, x)), 1e-12);
  }
}

TEST(AttentionHeadApplyTest, RowWiseIsCausal) {
  Gen g(29);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t d = g.size(2, 8), n = g.size(2, 8);
    const AttentionHead h = g.head(d, g.size(1, d - 1), {SoftmaxMode::RowWise});
    const Matrix x = g.matrix(n, d);
    const Matrix base = attention_head_apply(h, x);
    const std::size_t keep = g.size(1, n - 1);
    Matrix y = x;
    for (std::size_t r = keep; r < n; ++r)
      for (double& v : y.row(r)) v = g.real(-3, 3);
    const Matrix out = attention_head_apply(h, y);
    for (std::size_t r = 0; r < keep; ++r)
      EXPECT_TRUE(std::equal(out.row(r).begin(), out.row(r).end(), base.row(r).begin()));
  }
}

TEST(AttentionHeadApplyTest, PaperGlobalPatternHasUnitMass) {
  Gen g(37);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t d = g.size(2, 8), n = g.size(1, 8);
    const Matrix a = attention_pattern(g.head(d, g.size(1, d - 1)), g.matrix(n, d));
    EXPECT_NEAR(sum(a), 1.0, 1e-12);
  }
}

TEST(MultiHeadTest, RequiresUniformDimensions) {
  Gen g(3);
  EXPECT_THROW(MultiHead({}), ConfigError);
  EXPECT_THROW(MultiHead({g.head(4, 2), g.head(4, 1)}), ConfigError);
  EXPECT_THROW(MultiHead({g.head(4, 2), g.head(5, 2)}), ConfigError);
  EXPECT_EQ(MultiHead({g.head(4, 2), g.head(4, 2)}).d_head(), 2u);
}

TEST(AttentionLayerTest, ZeroOutputValueIsResidualIdentity) {
  Gen g(4);
  const AttentionHead h(g.matrix(2, 4), g.matrix(2, 4), Matrix(2, 4), g.matrix(4, 2));
  const Matrix x = g.matrix(3, 4);
  EXPECT_EQ(attention_layer(MultiHead({h}), x), x);
}

TEST(AttentionLayerTest, SumsHeads) {
  Gen g(5);
  const AttentionHead h = g.head(5, 2);
  const Matrix x = g.matrix(4, 5);
  EXPECT_LE(max_abs_diff(attention_layer(MultiHead({h, h}), x), add(x, scale(attention_head_apply(h, x), 2.0))), 1e-15);
  EXPECT_EQ(attention_layer(MultiHead({h}), x), add(x, attention_head_apply(h, x)));
}

TEST(ComposeHeadsTest, IdentityInnerHead) {
  // A head cannot have W_OV = I (rank <= d_head < d), so take an inner head
  // whose OV is the identity on the subspace the input lives in.
  Gen g(6);
  const std::size_t n = 4;
  const AttentionHead outer = g.head(3, 2);
  const AttentionHead inner(g.matrix(2, 3), g.matrix(2, 3), Matrix{{1, 0, 0}, {0, 1, 0}}, Matrix{{1, 0}, {0, 1}, {0, 0}});
  Matrix x = g.matrix(n, 3);
  for (std::size_t r = 0; r < n; ++r) x(r, 2) = 0.0;
  const Matrix a1 = g.matrix(n, n);
  const Matrix pats[] = {a1, Matrix::identity(n)};
  const VirtualHead v = compose_heads(outer, inner);
  EXPECT_EQ(v.length(), 2u);
  EXPECT_EQ(v.ov(), matmul(outer.ov(), inner.ov()));
  EXPECT_LE(max_abs_diff(apply_virtual(v, pats, x), apply_with_pattern(outer, a1, x)), 1e-12);
}

TEST(ComposeHeadsTest, SingleHeadVirtualHeadActsLikeTheHead) {
  Gen g(7);
  const AttentionHead h = g.head(4, 2);
  const VirtualHead v(h);
  const Matrix x = g.matrix(3, 4);
  const Matrix a = attention_pattern(h, x);
  const Matrix pats[] = {a};
  EXPECT_LE(max_abs_diff(apply_virtual(v, pats, x), attention_head_apply(h, x)), 1e-15);
}

TEST(ComposeHeadsTest, IdentityPatternsGiveOvProduct) {
  Gen g(8);
  const AttentionHead h1 = g.head(3, 2), h2 = g.head(3, 1);
  const VirtualHead v = compose_heads(h1, h2);
  const Matrix x = g.matrix(4, 3);
  const Matrix pats[] = {Matrix::identity(4), Matrix::identity(4)};
  EXPECT_LE(max_abs_diff(apply_virtual(v, pats, x), matmul(x, transpose(matmul(h1.ov(), h2.ov())))), 1e-15);
}

TEST(ComposeHeadsTest, TwoStepApplicationMatchesVirtualHead) {
  Gen g(9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4, d = 3;
    const AttentionHead h1 = g.head(d, g.size(1, 2)), h2 = g.head(d, g.size(1, 2));
    const Matrix a1 = g.matrix(n, n), a2 = g.matrix(n, n), x = g.matrix(n, d);
    const Matrix two_step = apply_with_pattern(h1, a1, apply_with_pattern(h2, a2, x));
    const Matrix pats[] = {a1, a2};
    EXPECT_LE(max_abs_diff(apply_virtual(compose_heads(h1, h2), pats, x), two_step), 1e-12);
  }
}

TEST(ComposeHeadsTest, ChainsOfThreeAreAssociative) {
  Gen g(10);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = g.size(1, 6), d = g.size(2, 6);
    const AttentionHead h1 = g.head(d, 1), h2 = g.head(d, 1), h3 = g.head(d, 1);
    const Matrix a1 = g.matrix(n, n), a2 = g.matrix(n, n), a3 = g.matrix(n, n), x = g.matrix(n, d);
    const Matrix pats[] = {a1, a2, a3};
    const VirtualHead left = compose_heads(compose_heads(h1, h2), h3);
    const VirtualHead right = compose_heads(h1, compose_heads(h2, h3));
    const Matrix sequential = apply_with_pattern(h1, a1, apply_with_pattern(h2, a2, apply_with_pattern(h3, a3, x)));
    EXPECT_LE(max_abs_diff(apply_virtual(left, pats, x), sequential), 1e-12);
    EXPECT_LE(max_abs_diff(apply_virtual(right, pats, x), sequential), 1e-12);
  }
}

TEST(ComposeHeadsTest, WidthMismatch) {
  Gen g(11);
  EXPECT_THROW(compose_heads(g.head(3, 1), g.head(4, 1)), ConfigError);
  const VirtualHead v = compose_heads(g.head(3, 1), g.head(3, 1));
  const Matrix one[] = {Matrix::identity(2)};
  EXPECT_THROW(apply_virtual(v, one, Matrix(2, 3)), DimensionError);
}

}  // namespace
}  // namespace minigpt
