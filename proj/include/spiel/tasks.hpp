// SPDX-License-Identifier: Apache-2.0
//
// Synthetic teacher/student tasks and a minimal CSV reader.
//
// Task A labels inputs with a random teacher network. Task B uses the same
// teacher with a small fraction of its weights perturbed, so the function to
// learn moves by a sparse change in weight space.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "spiel/network.hpp"

namespace spiel {

enum class TaskKind { kRegressionShift, kClassificationShift, kCsv };

TaskKind parse_task_kind(const std::string& name);
const char* to_string(TaskKind kind);

struct TaskConfig {
  TaskKind kind = TaskKind::kRegressionShift;
  uint64_t seed = 1;
  std::size_t input_dim = 32;
  std::size_t output_dim = 1;
  std::vector<std::size_t> teacher_hidden = {128, 128};
  std::size_t train_samples = 4096;
  std::size_t test_samples = 1024;
  double shift_fraction = 0.01;
  double shift_magnitude = 5.0;  // in units of the layer's init std
  double noise = 0.0;
  // kCsv only: numeric files; the trailing `csv_targets` columns are targets
  // (a single integer label column when output_dim classes > 1 and
  // csv_classify is set).
  std::string csv_a_train, csv_a_test, csv_b_train, csv_b_test;
  std::size_t csv_targets = 1;
  bool csv_classify = false;

  void validate() const;
};

template <typename T>
struct TaskData {
  LossKind loss = LossKind::kMse;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  Batch<T> train_a, test_a, train_b, test_b;
};

// Deterministic in the config: the same seed regenerates identical data.
template <typename T>
TaskData<T> make_task(const TaskConfig& config);

// Draws `size` rows uniformly with replacement.
template <typename T>
Batch<T> sample_batch(const Batch<T>& data, std::size_t size, std::mt19937_64& rng);

// Reads a headerless numeric CSV into a batch.
template <typename T>
Batch<T> read_csv(const std::string& path, std::size_t target_columns, bool classify);

// Uniform random subset of {0..n-1} of size k, ascending (selection
// sampling; O(1) extra memory).
std::vector<uint64_t> sample_without_replacement(uint64_t n, uint64_t k, std::mt19937_64& rng);

}  // namespace spiel
