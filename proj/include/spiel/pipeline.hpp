// SPDX-License-Identifier: Apache-2.0
//
// End-to-end runs: pretrain on task A, fine-tune on task B, evaluate, and
// write artifacts.
//
// Base model snapshot (little-endian):
//   "SPBM"               4-byte magic
//   u32 version = 1
//   u8 loss, u32 layer count, per layer: u64 d_in, u64 d_out, u8 activation
//   u32 subvector count, per subvector:
//     u32 name length, name bytes, u64 rows, u64 cols,
//     u8 storage (0 = dense f32[rows*cols], 1 = quantized tensor blob)

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "spiel/config.hpp"
#include "spiel/delta_store.hpp"
#include "spiel/memory_report.hpp"
#include "spiel/network.hpp"
#include "spiel/tasks.hpp"
#include "spiel/trainer.hpp"

namespace spiel {

struct BaseModel {
  MlpSpec spec;
  ParamStore<float> store;
};

void write_base_model(std::ostream& out, const BaseModel& model);
BaseModel read_base_model(std::istream& in);
void save_base_model(const BaseModel& model, const std::filesystem::path& path);
BaseModel load_base_model(const std::filesystem::path& path);

// The network the config describes for this task.
MlpSpec network_for(const RunConfig& config, const TaskData<float>& data);

// One metrics.jsonl record (no trailing newline).
std::string metrics_line(const StepMetrics& m, double wall_time_s = -1.0);

struct PretrainResult {
  BaseModel base;
  std::string metrics_jsonl;
  EvalResult test_a;
};

// Dense training of weights and biases on task A from a random init.
PretrainResult pretrain(const RunConfig& config, const TaskData<float>& data);

// Quantizes the weight matrices when the config asks for it (biases stay
// dense); an already quantized base is returned unchanged.
BaseModel prepare_base(const RunConfig& config, const BaseModel& base);

struct EvalSummary {
  EvalResult base_a, base_b, tuned_a, tuned_b;
  std::string to_json() const;
};

EvalSummary evaluate_delta(const BaseModel& base, const DeltaModel<float>* delta,
                           const TaskData<float>& data);

struct FinetuneResult {
  DeltaModel<float> delta;
  std::vector<StepMetrics> steps;
  std::string metrics_jsonl;
  std::string age_histogram_csv;
  MemoryReport memory;
  EvalSummary eval;
};

FinetuneResult finetune(const RunConfig& config, const BaseModel& base,
                        const TaskData<float>& data);

// Writes delta.spiel, metrics.jsonl, age_histogram.csv, memory.json,
// eval.json and config.txt into `dir`, each atomically.
void write_finetune_artifacts(const FinetuneResult& result, const RunConfig& config,
                              const std::filesystem::path& dir);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace spiel
