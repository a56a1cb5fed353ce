#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "arhq/error.hpp"
#include "arhq/quantizers.hpp"
#include "oracles.hpp"

using namespace arhq;

namespace {

std::vector<QuantizerSpec> all_specs() {
  std::vector<QuantizerSpec> specs = {QuantizerSpec::identity(), QuantizerSpec::block_fp4(16),
                                      QuantizerSpec::block_fp4(4)};
  for (int bits = 2; bits <= 8; ++bits) {
    for (Granularity g : {Granularity::per_tensor, Granularity::per_row, Granularity::per_column}) {
      specs.push_back(QuantizerSpec::uniform(bits, g));
    }
    QuantizerSpec block = QuantizerSpec::uniform(bits, Granularity::per_block);
    block.block_size = 8;
    specs.push_back(block);
  }
  QuantizerSpec clipped = QuantizerSpec::uniform(4);
  clipped.clip = 1.5;
  specs.push_back(clipped);
  QuantizerSpec fp4_clipped = QuantizerSpec::block_fp4(16);
  fp4_clipped.clip = 2.0;
  specs.push_back(fp4_clipped);
  return specs;
}

}  // namespace

TEST(Quantize, IdentityReturnsInputExactly) {
  std::mt19937_64 rng(1);
  const Matrix x = oracle::random_matrix(5, 7, rng);
  EXPECT_TRUE(quantize(x, QuantizerSpec::identity()) == x);
}

TEST(Quantize, ZeroIsFixedPoint) {
  for (const QuantizerSpec& spec : all_specs()) {
    EXPECT_TRUE(quantize(Matrix::Zero(3, 20), spec) == Matrix::Zero(3, 20));
  }
}

TEST(Quantize, FourBitGridPointsReproduce) {
  // Enumerate the 15-level 4-bit grid: k * s for k in -7..7.
  for (double s : {1.0, 0.37, 1e-3, 123.5}) {
    Matrix x(1, 15);
    for (int k = -7; k <= 7; ++k) x(0, k + 7) = k * s;
    const Matrix q = quantize(x, QuantizerSpec::uniform(4, Granularity::per_row));
    for (Index j = 0; j < 15; ++j) EXPECT_NEAR(q(0, j), x(0, j), 4e-16 * 7 * s);
  }
}

TEST(Quantize, ResidualWithinHalfStep) {
  std::mt19937_64 rng(2);
  for (int bits = 2; bits <= 8; ++bits) {
    const Matrix x = oracle::random_matrix(16, 33, rng);
    const Matrix q = quantize(x, QuantizerSpec::uniform(bits, Granularity::per_row));
    for (Index i = 0; i < x.rows(); ++i) {
      const double step = uniform_step(x.row(i).cwiseAbs().maxCoeff(), bits);
      EXPECT_LE((q.row(i) - x.row(i)).cwiseAbs().maxCoeff(), step / 2 * (1 + 1e-12));
    }
  }
}

TEST(Quantize, IdempotentForEverySpec) {
  std::mt19937_64 rng(3);
  for (const QuantizerSpec& spec : all_specs()) {
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix x = oracle::random_matrix(6, 37, rng, std::pow(10.0, trial % 7 - 3));
      const Matrix q = quantize(x, spec);
      EXPECT_TRUE(quantize(q, spec) == q) << to_string(spec.family) << " " << spec.bits;
    }
  }
}

TEST(Quantize, SignPreserved) {
  std::mt19937_64 rng(4);
  for (const QuantizerSpec& spec : all_specs()) {
    const Matrix x = oracle::random_matrix(4, 40, rng);
    const Matrix q = quantize(x, spec);
    for (Index i = 0; i < x.size(); ++i) {
      const double qv = q.data()[i];
      EXPECT_TRUE(qv == 0.0 || std::signbit(qv) == std::signbit(x.data()[i]));
    }
  }
}

TEST(Quantize, PerColumnUsesChannelScale) {
  Matrix x(2, 2);
  x << 1.0, 100.0, -0.5, 50.0;
  const Matrix q = quantize(x, QuantizerSpec::uniform(4, Granularity::per_column));
  // Column 0 has absmax 1 -> -0.5 is 3.5 steps of 1/7, rounds away to 4/7.
  EXPECT_DOUBLE_EQ(q(0, 0), 1.0);
  EXPECT_NEAR(q(1, 0), -4.0 / 7.0, 1e-15);
  // 50 is also an exact tie (3.5 steps of 100/7) and rounds away to 400/7.
  EXPECT_NEAR(q(1, 1), 400.0 / 7.0, 1e-13);
}

TEST(Quantize, ClipSaturates) {
  QuantizerSpec spec = QuantizerSpec::uniform(4, Granularity::per_tensor);
  spec.clip = 1.0;
  Matrix x(1, 3);
  x << 5.0, -3.0, 0.5;
  const Matrix q = quantize(x, spec);
  EXPECT_NEAR(q(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(q(0, 1), -1.0, 1e-15);
  EXPECT_NEAR(q(0, 2), 4.0 / 7.0, 1e-15);
}

TEST(Quantize, SpecValidation) {
  EXPECT_THROW(quantize(Matrix::Ones(1, 2), QuantizerSpec::uniform(1)), ParameterError);
  EXPECT_THROW(quantize(Matrix::Ones(1, 2), QuantizerSpec::uniform(9)), ParameterError);
  EXPECT_THROW(quantize(Matrix::Ones(1, 2), QuantizerSpec::block_fp4(1)), ParameterError);
  QuantizerSpec bad = QuantizerSpec::block_fp4();
  bad.granularity = Granularity::per_row;
  EXPECT_THROW(quantize(Matrix::Ones(1, 2), bad), ParameterError);
  Matrix nan = Matrix::Ones(1, 2);
  nan(0, 0) = std::nan("");
  EXPECT_THROW(quantize(nan, QuantizerSpec::uniform(4)), DataError);
}

TEST(BlockFp4, GridPointsReproduce) {
  Matrix x(1, 16);
  x << 6, -6, 0, 3, 0.5, -1, 1.5, -2, 4, 3, -4, 0.5, 1, -1.5, 2, 0;
  for (double scale : {1.0, 0.01, 7.25}) {
    const Matrix xs = x * scale;
    EXPECT_TRUE(quantize_block_fp4(xs, QuantizerSpec::block_fp4(16)) == xs) << scale;
  }
}

TEST(BlockFp4, EqualValuesMapToThemselves) {
  for (double c : {2.5, -0.3, 1e5}) {
    const Matrix x = Matrix::Constant(2, 16, c);
    EXPECT_TRUE(quantize_block_fp4(x, QuantizerSpec::block_fp4(16)) == x);
  }
}

TEST(BlockFp4, MatchesBruteForceOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix x = oracle::random_matrix(1, 16, rng);
    EXPECT_TRUE(quantize_block_fp4(x, QuantizerSpec::block_fp4(16)) ==
                oracle::block_fp4_reference(x, 16));
  }
}

TEST(BlockFp4, TiesRoundAwayFromZero) {
  Matrix x(1, 4);
  x << 6.0, 2.5, -0.25, 5.0;  // scale = 1
  const Matrix q = quantize_block_fp4(x, QuantizerSpec::block_fp4(4));
  EXPECT_EQ(q(0, 1), 3.0);
  EXPECT_EQ(q(0, 2), -0.5);
  EXPECT_EQ(q(0, 3), 6.0);
}

TEST(BlockFp4, PartialTrailingBlock) {
  Matrix x(1, 5);
  x << 6, 3, 1, 1, 0.4;  // second block holds only 0.4 -> its own absmax
  const Matrix q = quantize_block_fp4(x, QuantizerSpec::block_fp4(4));
  EXPECT_DOUBLE_EQ(q(0, 4), 0.4);
  EXPECT_DOUBLE_EQ(q(0, 1), 3.0);
}
