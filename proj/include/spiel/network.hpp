// SPDX-License-Identifier: Apache-2.0
//
// A small feed-forward network with hand-written forward and backward passes.
//
// Layer l computes Z = X W + b followed by an elementwise activation, where W
// is a row-major (d_in x d_out) subvector in a ParamStore. Weights are always
// produced on demand by a WeightSource into a counted transient buffer, so the
// only thing the network keeps between forward and backward is the activation
// cache.
//
// Parameter gradients come in two flavours:
//   * dense: the full X^T dZ for a layer is built in a transient buffer, shown
//     to an optional visitor, gathered at the requested indices and released
//     before the next layer's backward starts;
//   * sparse: only the requested entries are computed, each as the dot product
//     of column r of X with column c of dZ (b multiply-adds per entry).
// Both paths sum in the same order, so they agree bit for bit.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spiel/delta_store.hpp"
#include "spiel/matrix.hpp"

namespace spiel {

enum class Activation : uint8_t { kIdentity = 0, kTanh = 1, kRelu = 2 };
enum class LossKind : uint8_t { kMse = 0, kSoftmaxCrossEntropy = 1 };

struct LayerSpec {
  std::string weight;  // ParamStore name of the (d_in x d_out) matrix
  std::string bias;    // ParamStore name of the (1 x d_out) bias
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  Activation activation = Activation::kIdentity;
};

struct MlpSpec {
  std::vector<LayerSpec> layers;
  LossKind loss = LossKind::kMse;

  // Hidden layers use `hidden_activation`; the output layer is linear.
  static MlpSpec make(std::size_t d_in, std::span<const std::size_t> hidden, std::size_t d_out,
                      Activation hidden_activation, LossKind loss);

  std::size_t input_dim() const { return layers.front().d_in; }
  std::size_t output_dim() const { return layers.back().d_out; }
  void validate() const;
};

template <typename T>
struct Batch {
  Matrix<T> inputs;               // b x d_in
  Matrix<T> targets;              // b x d_out, regression
  std::vector<uint32_t> labels;   // length b, classification

  std::size_t size() const { return inputs.rows(); }
};

// Supplies the effective weights seen by the network.
template <typename T>
class WeightSource {
 public:
  virtual ~WeightSource() = default;
  virtual void weight(const LayerSpec& layer, std::span<T> out) const = 0;
  virtual std::span<const T> bias(const LayerSpec& layer) const = 0;
};

// Frozen (possibly quantized) base plus an optional scattered delta.
template <typename T>
class SparseWeights final : public WeightSource<T> {
 public:
  SparseWeights(const ParamStore<T>& store, const DeltaModel<T>* deltas)
      : store_(store), deltas_(deltas) {}
  void weight(const LayerSpec& layer, std::span<T> out) const override;
  std::span<const T> bias(const LayerSpec& layer) const override;

 private:
  const ParamStore<T>& store_;
  const DeltaModel<T>* deltas_;
};

// Caller-owned dense weights and biases, one entry per layer.
template <typename T>
class DenseWeights final : public WeightSource<T> {
 public:
  DenseWeights(const MlpSpec& spec, const std::vector<std::vector<T>>& weights,
               const std::vector<std::vector<T>>& biases)
      : spec_(spec), weights_(weights), biases_(biases) {}
  void weight(const LayerSpec& layer, std::span<T> out) const override;
  std::span<const T> bias(const LayerSpec& layer) const override;

 private:
  std::size_t index_of(const LayerSpec& layer) const;
  const MlpSpec& spec_;
  const std::vector<std::vector<T>>& weights_;
  const std::vector<std::vector<T>>& biases_;
};

// Additive side path on every linear layer (used by LoRA): Z += branch(X).
template <typename T>
class LinearBranch {
 public:
  virtual ~LinearBranch() = default;
  virtual void forward(std::size_t layer, const Matrix<T>& x, Matrix<T>& z) = 0;
  // Accumulates the branch's own parameter gradients and adds its input
  // gradient into `dx` when `dx` is non-null.
  virtual void backward(std::size_t layer, const Matrix<T>& x, const Matrix<T>& dz,
                        Matrix<T>* dx) = 0;
};

enum class GradPath { kSparse, kDense };

template <typename T>
struct BackwardPlan {
  GradPath path = GradPath::kSparse;
  // Flat weight indices whose gradient is wanted, per layer. Missing or empty
  // entries request nothing for that layer.
  std::vector<std::span<const uint64_t>> active;
  // Dense path only; sees each layer's full weight gradient before release.
  std::function<void(std::size_t layer, std::span<const T> grad)> on_dense_grad;
  bool bias_grads = false;
};

template <typename T>
struct GradReport {
  T loss = T(0);
  std::vector<std::vector<T>> weight_grads;   // aligned with plan.active
  std::vector<std::vector<T>> bias_grads;     // filled when requested
  std::vector<uint64_t> param_grad_madds;     // per layer
  uint64_t total_param_grad_madds() const;
};

template <typename T>
class Network {
 public:
  explicit Network(MlpSpec spec);

  const MlpSpec& spec() const { return spec_; }

  // Caches activations and returns the mean loss over the batch. The weight
  // source must stay valid and unchanged until backward() returns.
  T forward(const WeightSource<T>& weights, const Batch<T>& batch,
            LinearBranch<T>* branch = nullptr);

  bool has_forward() const { return weights_ != nullptr; }
  const Matrix<T>& output() const;
  T loss() const { return loss_; }

  // Uses the cached forward, which stays valid until the next forward();
  // throws if there is none.
  GradReport<T> backward(const BackwardPlan<T>& plan);

  GradReport<T> backward_sparse(const std::vector<std::span<const uint64_t>>& active,
                                bool bias_grads = false);

  // Materializes every layer's full weight gradient. Oracle and test use only:
  // it deliberately keeps all of them alive at once.
  std::vector<std::vector<T>> backward_dense();

 private:
  MlpSpec spec_;
  const WeightSource<T>* weights_ = nullptr;
  LinearBranch<T>* branch_ = nullptr;
  std::vector<Matrix<T>> inputs_;  // input of each layer
  std::vector<Matrix<T>> pre_;     // pre-activations
  Matrix<T> out_;
  Matrix<T> dout_;                 // dLoss/dOutput
  T loss_ = T(0);
};

// Loss and (for classification) accuracy over a full set of examples,
// evaluated in chunks.
struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

template <typename T>
EvalResult evaluate(Network<T>& net, const WeightSource<T>& weights, const Batch<T>& data,
                    std::size_t chunk = 256, LinearBranch<T>* branch = nullptr);

}  // namespace spiel
