// SPDX-License-Identifier: Apache-2.0
//
// Training loops.
//
// SparseTrainer runs the update/drop/grow controller over the weight
// matrices of a frozen network (spiel-ag, spiel-ma) or keeps its random
// initial index set forever (fixed-mask). One call to step() does:
//   1. draw a batch, forward through base + scattered delta;
//   2. backward. The dense gradient path is taken only when this step feeds
//      a growth statistic (an AG estimation window, or dense SM3
//      accumulation); the gathered gradients are the same either way;
//   3. one optimizer step on the active entries;
//   4. at t = S, 2S, ...: drop k entries, grow k, snapshot phi0.
//
// DenseTrainer covers pretraining and full fine-tuning; LoraTrainer trains
// low-rank adapters on a frozen base.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "spiel/config.hpp"
#include "spiel/delta_store.hpp"
#include "spiel/growth.hpp"
#include "spiel/lora.hpp"
#include "spiel/memory_report.hpp"
#include "spiel/network.hpp"
#include "spiel/optimizers.hpp"

namespace spiel {

// Independent RNG streams derived from one run seed.
enum class Stream : uint64_t { kData = 1, kMask = 2, kInit = 3, kLora = 4, kPretrainData = 5 };
uint64_t derive_seed(uint64_t seed, Stream stream);

struct StepMetrics {
  int64_t step = 0;
  double loss = 0.0;
  uint64_t churn = 0;       // entries dropped at this step (scheduled k summed)
  uint64_t grown = 0;       // entries newly grown
  uint64_t reinserted = 0;  // dropped entries put back for lack of candidates
  std::vector<double> density;  // per adapted subvector
  uint64_t persistent_scalars = 0;
  uint64_t param_grad_madds = 0;
  bool dense_grad = false;
};

struct UpdateRecord {
  int64_t step = 0;
  std::vector<uint64_t> scheduled;   // k(i, t)
  std::vector<uint64_t> grown;       // newly grown per subvector
  std::vector<uint64_t> reinserted;  // scheduled - grown
};

// Everything a sparse run carries from one step to the next.
template <typename T>
struct SparseTrainerState {
  int64_t step = 0;
  DeltaModel<T> deltas;
  std::vector<AdamState<T>> adam;    // spiel-ag, fixed-mask
  std::vector<Sm3State<T>> sm3;      // spiel-ma
  std::vector<CandidateSet<T>> candidates;
  std::vector<std::vector<uint32_t>> grown_at;  // step each entry was last grown
  std::mt19937_64 data_rng;
};

template <typename T>
class SparseTrainer {
 public:
  // `store` and `train` must outlive the trainer. The index sets are drawn
  // uniformly without replacement and all values start at zero.
  SparseTrainer(const RunConfig& config, const MlpSpec& spec, const ParamStore<T>& store,
                const Batch<T>& train);

  StepMetrics step();
  bool done() const { return state_.step >= config_.schedule.total_steps; }
  void run(const std::function<void(const StepMetrics&)>& on_step = {});

  const SparseTrainerState<T>& state() const { return state_; }
  // Replaces the run state, e.g. to continue another trainer's run.
  void set_state(SparseTrainerState<T> state);

  const DeltaModel<T>& deltas() const { return state_.deltas; }
  const std::vector<UpdateRecord>& updates() const { return updates_; }
  const MlpSpec& spec() const { return spec_; }
  MemoryReport memory() const;

  // (grown_at step, count) pairs, ascending; counts sum to d_phi.
  std::vector<std::pair<uint32_t, uint64_t>> age_histogram() const;

 private:
  void update_indices(int64_t t, StepMetrics& metrics);
  bool needs_dense(int64_t t) const;

  RunConfig config_;
  MlpSpec spec_;
  const ParamStore<T>& store_;
  const Batch<T>& train_;
  Network<T> net_;
  std::vector<uint64_t> sizes_;
  SparseTrainerState<T> state_;
  std::vector<UpdateRecord> updates_;
};

// Random dense initialization: N(0, 1/fan_in) weights, zero biases.
template <typename T>
void init_dense(const MlpSpec& spec, uint64_t seed, std::vector<std::vector<T>>& weights,
                std::vector<std::vector<T>>& biases);

// Materializes the (dequantized) weights and biases of a store.
template <typename T>
void dense_from_store(const MlpSpec& spec, const ParamStore<T>& store,
                      std::vector<std::vector<T>>& weights, std::vector<std::vector<T>>& biases);

// Builds a store with one subvector per weight and bias; weights are
// block-quantized when `quant_block` is non-zero.
template <typename T>
ParamStore<T> store_from_dense(const MlpSpec& spec, const std::vector<std::vector<T>>& weights,
                               const std::vector<std::vector<T>>& biases,
                               std::size_t quant_block = 0);

// Dense Adam over every weight, plus the biases when `train_biases`.
template <typename T>
class DenseTrainer {
 public:
  DenseTrainer(const MlpSpec& spec, std::vector<std::vector<T>> weights,
               std::vector<std::vector<T>> biases, const Batch<T>& train, AdamHyper hyper,
               std::size_t batch, int64_t total_steps, uint64_t data_seed, bool train_biases);

  StepMetrics step();
  bool done() const { return step_ >= total_steps_; }
  void run(const std::function<void(const StepMetrics&)>& on_step = {});

  const std::vector<std::vector<T>>& weights() const { return weights_; }
  const std::vector<std::vector<T>>& biases() const { return biases_; }
  uint64_t persistent_scalars() const;

 private:
  MlpSpec spec_;
  std::vector<std::vector<T>> weights_;
  std::vector<std::vector<T>> biases_;
  const Batch<T>& train_;
  std::size_t batch_;
  int64_t total_steps_;
  bool train_biases_;
  int64_t step_ = 0;
  Network<T> net_;
  std::mt19937_64 rng_;
  std::vector<DenseAdam<T>> w_opt_;
  std::vector<DenseAdam<T>> b_opt_;
};

// Full fine-tuning of the weight matrices (biases frozen) from a store.
template <typename T>
DenseTrainer<T> make_full_finetune(const RunConfig& config, const MlpSpec& spec,
                                   const ParamStore<T>& store, const Batch<T>& train);

template <typename T>
MemoryReport full_finetune_memory(const MlpSpec& spec);

// Full fine-tuning result as a dense delta over every weight matrix.
template <typename T>
DeltaModel<T> dense_delta(const MlpSpec& spec, const ParamStore<T>& store,
                          const std::vector<std::vector<T>>& tuned);

template <typename T>
class LoraTrainer {
 public:
  LoraTrainer(const RunConfig& config, const MlpSpec& spec, const ParamStore<T>& store,
              const Batch<T>& train);

  StepMetrics step();
  bool done() const { return step_ >= config_.schedule.total_steps; }
  void run(const std::function<void(const StepMetrics&)>& on_step = {});

  LoraAdapter<T>& adapter() { return *adapter_; }
  // Merged weights as a dense delta over every weight matrix.
  DeltaModel<T> merged_delta() const;
  MemoryReport memory() const;

 private:
  RunConfig config_;
  MlpSpec spec_;
  const ParamStore<T>& store_;
  const Batch<T>& train_;
  Network<T> net_;
  std::unique_ptr<LoraAdapter<T>> adapter_;
  std::vector<DenseAdam<T>> a_opt_;
  std::vector<DenseAdam<T>> b_opt_;
  std::mt19937_64 rng_;
  int64_t step_ = 0;
};

}  // namespace spiel
