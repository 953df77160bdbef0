// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "spiel/error.hpp"
#include "spiel/kernels.hpp"
#include "spiel/lora.hpp"
#include "spiel/trainer.hpp"
#include "test_util.hpp"

using namespace spiel;
using spiel::testing::random_matrix;
using spiel::testing::random_vector;

TEST(LoraMerge, ZeroBIsIdentity) {
  std::mt19937_64 rng(1);
  LoraFactors<double> f{random_matrix<double>(2, 5, rng), Matrix<double>(3, 2)};
  const auto w = random_vector<double>(15, rng);
  EXPECT_EQ(lora_merge<double>(f, 8.0, w), w);
}

TEST(LoraMerge, RankOneIsScaledOuterProduct) {
  std::mt19937_64 rng(2);
  const std::size_t d_in = 4, d_out = 3;
  const auto a = random_vector<double>(d_in, rng);
  const auto b = random_vector<double>(d_out, rng);
  LoraFactors<double> f{Matrix<double>(1, d_in, a), Matrix<double>(d_out, 1, b)};
  const auto w = random_vector<double>(d_in * d_out, rng);
  const double alpha = 16.0;  // scaling alpha / r with r = 1
  const auto merged = lora_merge<double>(f, alpha, w);
  for (std::size_t i = 0; i < d_in; ++i) {
    for (std::size_t o = 0; o < d_out; ++o) {
      EXPECT_NEAR(merged[i * d_out + o], w[i * d_out + o] + alpha * b[o] * a[i], 1e-14);
    }
  }
}

TEST(LoraMerge, MergedAndUnmergedForwardsAgree) {
  std::mt19937_64 rng(3);
  for (std::size_t r : {1u, 2u, 4u, 8u}) {
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t d_in = 12, d_out = 9;
      LoraFactors<double> f{random_matrix<double>(r, d_in, rng), random_matrix<double>(d_out, r, rng)};
      const double s = 16.0 / static_cast<double>(r);
      const auto w = random_vector<double>(d_in * d_out, rng);
      const auto x = random_matrix<double>(5, d_in, rng);
      const auto unmerged = lora_forward<double>(f, s, w, x);
      Matrix<double> merged;
      kernels::matmul<double>(x, lora_merge<double>(f, s, w), d_out, merged);
      for (std::size_t i = 0; i < merged.size(); ++i) {
        ASSERT_NEAR(unmerged.flat()[i], merged.flat()[i], 1e-6);
      }
    }
  }
}

TEST(LoraMerge, ShapeErrors) {
  LoraFactors<double> f{Matrix<double>(2, 4), Matrix<double>(3, 2)};
  EXPECT_THROW(lora_merge<double>(f, 1.0, std::vector<double>(11)), Error);
  LoraFactors<double> g{Matrix<double>(2, 4), Matrix<double>(3, 1)};
  EXPECT_THROW(lora_merge<double>(g, 1.0, std::vector<double>(12)), Error);
}

TEST(LoraAdapter, InitAndValidation) {
  const auto spec = MlpSpec::make(6, std::vector<std::size_t>{5}, 2, Activation::kTanh, LossKind::kMse);
  LoraAdapter<double> ad(spec, 2, 16.0, 0.1, 7);
  EXPECT_EQ(ad.scaling(), 8.0);
  EXPECT_EQ(ad.parameter_count(), 2u * (6 + 5) + 2u * (5 + 2));
  for (const auto& f : ad.factors()) {
    for (double v : f.b.flat()) EXPECT_EQ(v, 0.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(f.a.cols()));
    for (double v : f.a.flat()) EXPECT_LE(std::fabs(v), bound);
  }
  EXPECT_THROW(LoraAdapter<double>(spec, 0, 16.0, 0.1, 7), ConfigError);
  EXPECT_THROW(LoraAdapter<double>(spec, 2, 16.0, 1.0, 7), ConfigError);
}

TEST(LoraAdapter, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(4);
  const auto spec = MlpSpec::make(4, std::vector<std::size_t>{5}, 3, Activation::kTanh, LossKind::kMse);
  std::vector<std::vector<double>> w, b;
  init_dense<double>(spec, 11, w, b);
  const auto store = store_from_dense<double>(spec, w, b);
  LoraAdapter<double> ad(spec, 2, 4.0, 0.0, 3);
  for (auto& f : ad.factors()) {
    for (auto& v : f.b.flat()) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  }
  Batch<double> batch;
  batch.inputs = random_matrix<double>(6, 4, rng);
  batch.targets = random_matrix<double>(6, 3, rng);
  Network<double> net(spec);
  SparseWeights<double> src(store, nullptr);
  ad.zero_grad();
  net.forward(src, batch, &ad);
  net.backward_sparse({});
  const auto grads = ad.grads();
  auto loss = [&]() {
    Network<double> probe(spec);
    return probe.forward(src, batch, &ad);
  };
  const double h = 1e-6;
  for (std::size_t l = 0; l < ad.factors().size(); ++l) {
    for (int which = 0; which < 2; ++which) {
      auto& param = which == 0 ? ad.factors()[l].a : ad.factors()[l].b;
      const auto& grad = which == 0 ? grads[l].a : grads[l].b;
      for (std::size_t i = 0; i < param.size(); ++i) {
        const double keep = param.flat()[i];
        param.flat()[i] = keep + h;
        const double up = loss();
        param.flat()[i] = keep - h;
        const double down = loss();
        param.flat()[i] = keep;
        const double fd = (up - down) / (2 * h);
        ASSERT_NEAR(grad.flat()[i], fd, 1e-5 * std::max(1.0, std::fabs(fd)));
      }
    }
  }
}

TEST(LoraTrainer, MergedDeltaReproducesAdapterForward) {
  std::mt19937_64 rng(5);
  RunConfig c;
  c.method = Method::kLora;
  c.schedule.total_steps = 30;
  c.schedule.interval = 10;
  c.batch = 8;
  c.lr = 1e-2;
  c.lora_dropout = 0.0;
  const auto spec = MlpSpec::make(20, std::vector<std::size_t>{24}, 2, Activation::kTanh, LossKind::kMse);
  std::vector<std::vector<double>> w, b;
  init_dense<double>(spec, 3, w, b);
  const auto store = store_from_dense<double>(spec, w, b);
  Batch<double> train;
  train.inputs = random_matrix<double>(64, 20, rng);
  train.targets = random_matrix<double>(64, 2, rng);
  LoraTrainer<double> trainer(c, spec, store, train);
  trainer.run();

  const auto delta = trainer.merged_delta();
  Network<double> net(spec);
  SparseWeights<double> merged(store, &delta);
  net.forward(merged, train);
  const auto y_merged = net.output();
  trainer.adapter().set_training(false);
  SparseWeights<double> base(store, nullptr);
  net.forward(base, train, &trainer.adapter());
  for (std::size_t i = 0; i < y_merged.size(); ++i) {
    ASSERT_NEAR(y_merged.flat()[i], net.output().flat()[i], 1e-9);
  }

  const auto mem = trainer.memory();
  EXPECT_EQ(mem.d_phi, trainer.adapter().parameter_count());
  EXPECT_EQ(mem.optimizer_total(), 2 * mem.d_phi);
  EXPECT_TRUE(mem.flagged().empty());
}
