// SPDX-License-Identifier: Apache-2.0

#include "spiel/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spiel/accounting.hpp"
#include "spiel/error.hpp"
#include "spiel/kernels.hpp"

namespace spiel {

using accounting::BufferKind;
using accounting::TransientBuffer;

MlpSpec MlpSpec::make(std::size_t d_in, std::span<const std::size_t> hidden, std::size_t d_out,
                      Activation hidden_activation, LossKind loss) {
  MlpSpec spec;
  spec.loss = loss;
  std::size_t prev = d_in;
  for (std::size_t l = 0; l <= hidden.size(); ++l) {
    const bool last = l == hidden.size();
    LayerSpec layer;
    layer.weight = "layer" + std::to_string(l) + ".weight";
    layer.bias = "layer" + std::to_string(l) + ".bias";
    layer.d_in = prev;
    layer.d_out = last ? d_out : hidden[l];
    layer.activation = last ? Activation::kIdentity : hidden_activation;
    prev = layer.d_out;
    spec.layers.push_back(std::move(layer));
  }
  spec.validate();
  return spec;
}

void MlpSpec::validate() const {
  if (layers.empty()) throw ConfigError("network needs at least one layer");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.d_in == 0 || layer.d_out == 0) {
      throw ConfigError("layer " + std::to_string(l) + " has a zero dimension");
    }
    if (l > 0 && layers[l - 1].d_out != layer.d_in) {
      throw ConfigError("layer " + std::to_string(l) + " input width " +
                        std::to_string(layer.d_in) + " does not match previous output " +
                        std::to_string(layers[l - 1].d_out));
    }
  }
  if (loss == LossKind::kSoftmaxCrossEntropy && output_dim() < 2) {
    throw ConfigError("cross-entropy loss needs at least two output classes");
  }
}

template <typename T>
void SparseWeights<T>::weight(const LayerSpec& layer, std::span<T> out) const {
  const auto& sub = store_.at(layer.weight);
  if (sub.rows() != layer.d_in || sub.cols() != layer.d_out) {
    throw Error("subvector '" + layer.weight + "' shape does not match its layer");
  }
  sub.materialize(out);
  if (deltas_ != nullptr) {
    if (const auto* slice = deltas_->find(layer.weight)) scatter_add_inplace<T>(*slice, out);
  }
}

template <typename T>
std::span<const T> SparseWeights<T>::bias(const LayerSpec& layer) const {
  return store_.at(layer.bias).dense();
}

template <typename T>
std::size_t DenseWeights<T>::index_of(const LayerSpec& layer) const {
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    if (spec_.layers[l].weight == layer.weight) return l;
  }
  throw Error("unknown layer '" + layer.weight + "'");
}

template <typename T>
void DenseWeights<T>::weight(const LayerSpec& layer, std::span<T> out) const {
  const auto& w = weights_.at(index_of(layer));
  if (w.size() != out.size()) throw Error("dense weight '" + layer.weight + "' has wrong length");
  std::copy(w.begin(), w.end(), out.begin());
}

template <typename T>
std::span<const T> DenseWeights<T>::bias(const LayerSpec& layer) const {
  return biases_.at(index_of(layer));
}

template <typename T>
uint64_t GradReport<T>::total_param_grad_madds() const {
  uint64_t n = 0;
  for (auto m : param_grad_madds) n += m;
  return n;
}

template <typename T>
Network<T>::Network(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
}

namespace {

template <typename T>
void activate(Activation act, const Matrix<T>& z, Matrix<T>& a) {
  a = z;
  switch (act) {
    case Activation::kIdentity:
      break;
    case Activation::kTanh:
      for (auto& v : a.flat()) v = std::tanh(v);
      break;
    case Activation::kRelu:
      for (auto& v : a.flat()) v = v > T(0) ? v : T(0);
      break;
  }
}

// dz = da * act'(z), in place on da.
template <typename T>
void activation_backward(Activation act, const Matrix<T>& z, Matrix<T>& da) {
  auto g = da.flat();
  auto zz = z.flat();
  switch (act) {
    case Activation::kIdentity:
      break;
    case Activation::kTanh:
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T t = std::tanh(zz[i]);
        g[i] *= T(1) - t * t;
      }
      break;
    case Activation::kRelu:
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(zz[i] > T(0))) g[i] = T(0);
      }
      break;
  }
}

template <typename T>
void check_finite(const Matrix<T>& m, std::size_t layer) {
  for (T v : m.flat()) {
    if (!std::isfinite(v)) {
      throw Error("non-finite activation in layer " + std::to_string(layer));
    }
  }
}

// Mean loss over the batch and its gradient with respect to the output.
template <typename T>
T loss_and_grad(LossKind kind, const Matrix<T>& y, const Batch<T>& batch, Matrix<T>& dy) {
  const std::size_t b = y.rows();
  const std::size_t d = y.cols();
  dy = Matrix<T>(b, d);
  if (kind == LossKind::kMse) {
    if (batch.targets.rows() != b || batch.targets.cols() != d) {
      throw Error("regression targets have shape " + std::to_string(batch.targets.rows()) + "x" +
                  std::to_string(batch.targets.cols()) + ", expected " + std::to_string(b) + "x" +
                  std::to_string(d));
    }
    const T inv = T(1) / static_cast<T>(b * d);
    T total = T(0);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t o = 0; o < d; ++o) {
        const T diff = y(i, o) - batch.targets(i, o);
        total += diff * diff;
        dy(i, o) = T(2) * diff * inv;
      }
    }
    return total * inv;
  }
  if (batch.labels.size() != b) throw Error("classification batch is missing labels");
  const T inv = T(1) / static_cast<T>(b);
  T total = T(0);
  for (std::size_t i = 0; i < b; ++i) {
    const uint32_t label = batch.labels[i];
    if (label >= d) throw Error("label " + std::to_string(label) + " out of range");
    const T* row = y.row(i);
    const T mx = *std::max_element(row, row + d);
    T denom = T(0);
    for (std::size_t o = 0; o < d; ++o) denom += std::exp(row[o] - mx);
    const T log_denom = std::log(denom);
    total += -(row[label] - mx - log_denom);
    for (std::size_t o = 0; o < d; ++o) {
      const T p = std::exp(row[o] - mx - log_denom);
      dy(i, o) = (p - (o == label ? T(1) : T(0))) * inv;
    }
  }
  return total * inv;
}

}  // namespace

template <typename T>
T Network<T>::forward(const WeightSource<T>& weights, const Batch<T>& batch,
                      LinearBranch<T>* branch) {
  weights_ = nullptr;
  if (batch.size() == 0) throw Error("empty batch");
  if (batch.inputs.cols() != spec_.input_dim()) {
    throw Error("batch width " + std::to_string(batch.inputs.cols()) + " does not match input dim " +
                std::to_string(spec_.input_dim()));
  }
  const std::size_t n_layers = spec_.layers.size();
  inputs_.assign(n_layers, {});
  pre_.assign(n_layers, {});
  inputs_[0] = batch.inputs;
  check_finite(inputs_[0], 0);
  Matrix<T>& out = out_;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = spec_.layers[l];
    {
      TransientBuffer<T> w(BufferKind::kDenseWeight, layer.d_in * layer.d_out);
      weights.weight(layer, w.span());
      kernels::matmul<T>(inputs_[l], w.span(), layer.d_out, pre_[l]);
    }
    const auto b = weights.bias(layer);
    if (b.size() != layer.d_out) throw Error("bias '" + layer.bias + "' has wrong length");
    for (std::size_t i = 0; i < pre_[l].rows(); ++i) {
      T* row = pre_[l].row(i);
      for (std::size_t o = 0; o < layer.d_out; ++o) row[o] += b[o];
    }
    if (branch != nullptr) branch->forward(l, inputs_[l], pre_[l]);
    check_finite(pre_[l], l);
    activate(layer.activation, pre_[l], l + 1 < n_layers ? inputs_[l + 1] : out);
  }
  loss_ = loss_and_grad(spec_.loss, out, batch, dout_);
  if (!std::isfinite(loss_)) throw Error("non-finite loss");
  weights_ = &weights;
  branch_ = branch;
  return loss_;
}

template <typename T>
const Matrix<T>& Network<T>::output() const {
  if (!has_forward()) throw Error("no forward pass cached");
  return out_;
}

template <typename T>
GradReport<T> Network<T>::backward(const BackwardPlan<T>& plan) {
  if (!has_forward()) throw Error("backward called before forward");
  const std::size_t n_layers = spec_.layers.size();
  GradReport<T> report;
  report.loss = loss_;
  report.weight_grads.resize(n_layers);
  report.param_grad_madds.assign(n_layers, 0);
  if (plan.bias_grads) report.bias_grads.resize(n_layers);

  Matrix<T> dz = dout_;
  activation_backward(spec_.layers.back().activation, pre_.back(), dz);
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto& layer = spec_.layers[l];
    const Matrix<T>& x = inputs_[l];
    const std::size_t b = x.rows();
    std::span<const uint64_t> active;
    if (l < plan.active.size()) active = plan.active[l];
    for (uint64_t idx : active) {
      if (idx >= layer.d_in * layer.d_out) {
        throw Error("active index " + std::to_string(idx) + " out of range for '" + layer.weight +
                    "'");
      }
    }

    auto& g = report.weight_grads[l];
    g.resize(active.size());
    if (plan.path == GradPath::kDense) {
      TransientBuffer<T> dense(BufferKind::kDenseGrad, layer.d_in * layer.d_out);
      kernels::outer_grad<T>(x, dz, dense.span());
      report.param_grad_madds[l] = static_cast<uint64_t>(b) * layer.d_in * layer.d_out;
      if (plan.on_dense_grad) plan.on_dense_grad(l, dense.span());
      for (std::size_t k = 0; k < active.size(); ++k) g[k] = dense[active[k]];
    } else {
      for (std::size_t k = 0; k < active.size(); ++k) {
        const std::size_t r = active[k] / layer.d_out;
        const std::size_t c = active[k] % layer.d_out;
        g[k] = kernels::column_dot(x, r, dz, c);
      }
      report.param_grad_madds[l] = static_cast<uint64_t>(b) * active.size();
    }

    if (plan.bias_grads) {
      auto& gb = report.bias_grads[l];
      gb.assign(layer.d_out, T(0));
      for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t o = 0; o < layer.d_out; ++o) gb[o] += dz(i, o);
      }
    }

    const bool need_dx = l > 0;
    Matrix<T> dx;
    if (need_dx) {
      TransientBuffer<T> w(BufferKind::kDenseWeight, layer.d_in * layer.d_out);
      weights_->weight(layer, w.span());
      kernels::matmul_transposed<T>(dz, w.span(), layer.d_in, dx);
    }
    if (branch_ != nullptr) branch_->backward(l, x, dz, need_dx ? &dx : nullptr);
    if (need_dx) {
      activation_backward(spec_.layers[l - 1].activation, pre_[l - 1], dx);
      dz = std::move(dx);
    }
  }
  return report;
}

template <typename T>
GradReport<T> Network<T>::backward_sparse(const std::vector<std::span<const uint64_t>>& active,
                                          bool bias_grads) {
  BackwardPlan<T> plan;
  plan.path = GradPath::kSparse;
  plan.active = active;
  plan.bias_grads = bias_grads;
  return backward(plan);
}

template <typename T>
std::vector<std::vector<T>> Network<T>::backward_dense() {
  std::vector<std::vector<T>> grads(spec_.layers.size());
  BackwardPlan<T> plan;
  plan.path = GradPath::kDense;
  plan.on_dense_grad = [&](std::size_t l, std::span<const T> g) {
    grads[l].assign(g.begin(), g.end());
  };
  backward(plan);
  return grads;
}

template <typename T>
EvalResult evaluate(Network<T>& net, const WeightSource<T>& weights, const Batch<T>& data,
                    std::size_t chunk, LinearBranch<T>* branch) {
  const std::size_t n = data.size();
  if (n == 0) throw Error("evaluate: empty data set");
  const bool classify = net.spec().loss == LossKind::kSoftmaxCrossEntropy;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t end = std::min(n, start + chunk);
    Batch<T> part;
    const std::size_t d_in = data.inputs.cols();
    part.inputs = Matrix<T>(end - start, d_in,
                            std::vector<T>(data.inputs.row(start), data.inputs.row(start) + (end - start) * d_in));
    if (classify) {
      part.labels.assign(data.labels.begin() + start, data.labels.begin() + end);
    } else {
      const std::size_t d_out = data.targets.cols();
      part.targets = Matrix<T>(end - start, d_out,
                               std::vector<T>(data.targets.row(start),
                                              data.targets.row(start) + (end - start) * d_out));
    }
    loss_sum += static_cast<double>(net.forward(weights, part, branch)) * (end - start);
    if (classify) {
      const auto& y = net.output();
      for (std::size_t i = 0; i < y.rows(); ++i) {
        const T* row = y.row(i);
        const auto pred = static_cast<uint32_t>(std::max_element(row, row + y.cols()) - row);
        if (pred == part.labels[i]) ++correct;
      }
    }
  }
  EvalResult r;
  r.loss = loss_sum / static_cast<double>(n);
  r.accuracy = classify ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
  return r;
}

#define SPIEL_INSTANTIATE(T)                                                                  \
  template class SparseWeights<T>;                                                            \
  template class DenseWeights<T>;                                                             \
  template struct GradReport<T>;                                                              \
  template class Network<T>;                                                                  \
  template EvalResult evaluate<T>(Network<T>&, const WeightSource<T>&, const Batch<T>&,       \
                                  std::size_t, LinearBranch<T>*);

SPIEL_INSTANTIATE(float)
SPIEL_INSTANTIATE(double)
#undef SPIEL_INSTANTIATE

}  // namespace spiel
