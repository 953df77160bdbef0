// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "spiel/accounting.hpp"
#include "spiel/error.hpp"
#include "spiel/kernels.hpp"
#include "spiel/quantizer.hpp"
#include "test_util.hpp"

using namespace spiel;
using spiel::testing::random_matrix;
using spiel::testing::random_slice;
using spiel::testing::random_vector;

namespace {

// Nearest level by exhaustive search, lower level on ties.
uint8_t brute_nearest(double u) {
  const auto& lv = codebook_levels(Codebook::kLinear16);
  uint8_t best = 0;
  for (uint8_t k = 1; k < 16; ++k) {
    if (std::fabs(u - lv[k]) < std::fabs(u - lv[best])) best = k;
  }
  return best;
}

}  // namespace

TEST(Codebook, Linear16Levels) {
  const auto& lv = codebook_levels(Codebook::kLinear16);
  EXPECT_EQ(lv.front(), -1.0f);
  EXPECT_EQ(lv.back(), 1.0f);
  for (std::size_t k = 1; k < 16; ++k) EXPECT_LT(lv[k - 1], lv[k]);
  EXPECT_NEAR(codebook_max_gap(Codebook::kLinear16), 2.0 / 15.0, 1e-7);
  // 0 sits between levels 7 and 8; the tie goes low.
  EXPECT_EQ(codebook_zero_code(Codebook::kLinear16), 7);
}

TEST(Codebook, NearestLevelMatchesBruteForce) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 20000; ++i) {
    const double x = u(rng);
    ASSERT_EQ(nearest_level(Codebook::kLinear16, x), brute_nearest(x)) << x;
  }
  for (double x : {-1.0, 1.0, 0.0}) EXPECT_EQ(nearest_level(Codebook::kLinear16, x), brute_nearest(x));
}

TEST(Quantize, ZeroBlockDequantizesToZeros) {
  const std::vector<float> zeros(130, 0.0f);
  const auto q = quantize(zeros, 10, 13, 64);
  EXPECT_EQ(q.num_blocks(), 3u);
  for (float s : q.block_scales) EXPECT_EQ(s, 0.0f);
  EXPECT_EQ(dequantize<float>(q), zeros);
}

TEST(Quantize, EndpointsRoundTripExactly) {
  std::mt19937_64 rng(2);
  auto v = random_vector<float>(64, rng, -0.5, 0.5);
  v[3] = 1.75f;
  v[40] = -1.75f;
  const auto q = quantize(v, 1, 64, 64);
  const auto d = dequantize<float>(q);
  EXPECT_EQ(d[3], 1.75f);
  EXPECT_EQ(d[40], -1.75f);
}

TEST(Quantize, ThreeValueBlock) {
  const std::vector<float> v{3.0f, -3.0f, 1.5f};
  const auto q = quantize(v, 1, 3, 64);
  EXPECT_EQ(q.block_scales[0], 3.0f);
  EXPECT_EQ(q.code_at(0), 15);
  EXPECT_EQ(q.code_at(1), 0);
  // 0.5 lies between -1 + 22/15 and -1 + 24/15; brute force agrees.
  EXPECT_EQ(q.code_at(2), brute_nearest(0.5));
  const auto d = dequantize<float>(q);
  EXPECT_EQ(d[0], 3.0f);
  EXPECT_EQ(d[1], -3.0f);
  EXPECT_LE(std::fabs(d[2] - 1.5f), 3.0f / 15.0f);
}

TEST(Quantize, ErrorBoundAgainstBruteForceCodes) {
  std::mt19937_64 rng(3);
  const auto v = random_vector<float>(64 * 200 + 17, rng, -4.0, 4.0);
  const auto q = quantize(v, 1, v.size(), 64);
  const auto d = dequantize<double>(q);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double scale = q.block_scales[i / 64];
    ASSERT_EQ(q.code_at(i), brute_nearest(static_cast<double>(v[i]) / scale));
    ASSERT_LE(std::fabs(d[i] - v[i]), scale / 15.0 * (1 + 1e-6));
  }
}

TEST(Quantize, RequantizingIsIdempotent) {
  std::mt19937_64 rng(4);
  for (uint32_t block : {1u, 7u, 64u, 256u}) {
    const auto v = random_vector<float>(1000, rng, -2.0, 2.0);
    const auto q = quantize(v, 20, 50, block);
    const auto again = quantize(dequantize<float>(q), 20, 50, block);
    EXPECT_EQ(again, q) << "block " << block;
  }
}

TEST(Quantize, DeterministicAndRejectsBadInput) {
  std::mt19937_64 rng(5);
  auto v = random_vector<float>(100, rng);
  EXPECT_EQ(quantize(v, 10, 10), quantize(v, 10, 10));
  EXPECT_THROW(quantize(v, 10, 10, 0), Error);
  EXPECT_THROW(quantize(v, 10, 11), Error);
  v[5] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(quantize(v, 10, 10), Error);
}

TEST(Quantize, NibblePacking) {
  std::vector<float> v(5, 0.0f);
  v[0] = -1.0f;  // code 0
  v[1] = 1.0f;   // code 15
  const auto q = quantize(v, 1, 5, 64);
  EXPECT_EQ(q.codes.size(), 3u);
  EXPECT_EQ(q.codes[0], 0xF0);
}

TEST(QForward, EmptySliceIsDequantizedMatmul) {
  std::mt19937_64 rng(6);
  const auto w = random_vector<float>(6 * 4, rng);
  const auto q = quantize(w, 6, 4, 8);
  const auto x = random_matrix<double>(3, 6, rng);
  const DeltaSlice<double> empty;
  const auto y = qforward<double>(q, empty, x);
  const auto deq = dequantize<double>(q);
  Matrix<double> want;
  kernels::matmul<double>(x, deq, 4, want);
  EXPECT_EQ(y, want);
}

TEST(QForward, LosslessWhenWeightsSitOnLevels) {
  std::mt19937_64 rng(7);
  const auto& lv = codebook_levels(Codebook::kLinear16);
  std::uniform_int_distribution<int> code(0, 15);
  std::vector<float> w(8 * 5);
  for (std::size_t b = 0; b < w.size(); b += 8) {
    for (std::size_t i = 0; i < 8; ++i) w[b + i] = lv[code(rng)] * 0.5f;
    w[b] = 0.5f;  // pin the block absmax to the scale
  }
  const auto q = quantize(w, 8, 5, 8);
  EXPECT_EQ(dequantize<float>(q), w);
  const auto x = random_matrix<float>(4, 8, rng);
  const auto slice = random_slice<float>(40, 9, rng);
  const auto y = qforward<float>(q, slice, x);
  Matrix<float> want;
  kernels::matmul<float>(x, scatter_add<float>(slice, w), 5, want);
  EXPECT_EQ(y, want);
}

TEST(QForward, MatchesDensifyOracle) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto w = random_vector<float>(16 * 12, rng);
    const auto q = quantize(w, 16, 12, 32);
    const auto x = random_matrix<double>(5, 16, rng);
    const auto slice = random_slice<double>(16 * 12, 20, rng);
    const auto y = qforward<double>(q, slice, x);
    const auto dense = scatter_add<double>(slice, dequantize<double>(q));
    for (std::size_t b = 0; b < 5; ++b) {
      for (std::size_t o = 0; o < 12; ++o) {
        double want = 0.0;
        for (std::size_t i = 0; i < 16; ++i) want += x(b, i) * dense[i * 12 + o];
        ASSERT_NEAR(y(b, o), want, 1e-6 * (1 + std::fabs(want)));
      }
    }
  }
}

TEST(QForward, DequantizedBaseIsTransient) {
  std::mt19937_64 rng(9);
  const auto q = quantize(random_vector<float>(64, rng), 8, 8, 16);
  const auto x = random_matrix<float>(2, 8, rng);
  accounting::reset_peaks();
  qforward<float>(q, DeltaSlice<float>{}, x);
  const auto s = accounting::stats(accounting::BufferKind::kDequantized);
  EXPECT_EQ(s.allocations, 1u);
  EXPECT_EQ(s.live, 0);
}

TEST(QuantizedFormat, RoundTripAndRejections) {
  std::mt19937_64 rng(10);
  const auto q = quantize(random_vector<float>(77, rng), 7, 11, 16);
  std::stringstream ss;
  write_quantized(ss, q);
  const std::string bytes = ss.str();
  std::istringstream in(bytes);
  EXPECT_EQ(read_quantized(in), q);

  for (std::size_t cut = 0; cut < bytes.size(); cut += 3) {
    std::istringstream t(bytes.substr(0, cut));
    EXPECT_THROW(read_quantized(t), FormatError) << "cut at " << cut;
  }
  std::string bad = bytes;
  bad[0] = 'X';
  std::istringstream b(bad);
  EXPECT_THROW(read_quantized(b), FormatError);
}
