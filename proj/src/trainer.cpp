// SPDX-License-Identifier: Apache-2.0

#include "spiel/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "spiel/error.hpp"
#include "spiel/tasks.hpp"

namespace spiel {

uint64_t derive_seed(uint64_t seed, Stream stream) {
  // splitmix64 finalizer over (seed, stream).
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<uint64_t>(stream) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

AdamHyper adam_hyper(const RunConfig& c) {
  AdamHyper h;
  h.lr = c.effective_lr();
  h.beta1 = c.beta1;
  h.beta2 = c.beta2;
  h.eps = c.eps;
  h.weight_decay = c.lambda;
  return h;
}

uint64_t sum_rows_cols(const MlpSpec& spec) {
  uint64_t n = 0;
  for (const auto& l : spec.layers) n += l.d_in + l.d_out;
  return n;
}

uint64_t adapted_size(const MlpSpec& spec) {
  uint64_t n = 0;
  for (const auto& l : spec.layers) n += l.d_in * l.d_out;
  return n;
}

uint64_t largest_layer(const MlpSpec& spec) {
  uint64_t n = 0;
  for (const auto& l : spec.layers) n = std::max<uint64_t>(n, l.d_in * l.d_out);
  return n;
}

// Removes slice positions from every per-entry array of a subvector.
template <typename T>
void drop_entries(DeltaSlice<T>& slice, AdamState<T>* adam, std::vector<uint32_t>& grown_at,
                  std::span<const std::size_t> positions) {
  apply_drop(slice, positions);
  if (adam != nullptr) {
    erase_positions(adam->m, positions);
    erase_positions(adam->v, positions);
  }
  erase_positions(grown_at, positions);
}

// Merges freshly grown indices (disjoint from the slice) as zero entries.
template <typename T>
void insert_grown(DeltaSlice<T>& slice, AdamState<T>* adam, std::vector<uint32_t>& grown_at,
                  std::span<const uint64_t> grown, uint32_t step) {
  const std::size_t n = slice.size() + grown.size();
  DeltaSlice<T> out;
  out.indices.reserve(n);
  out.values.reserve(n);
  out.phi0.reserve(n);
  out.ages.reserve(n);
  std::vector<T> m, v;
  std::vector<uint32_t> tags;
  tags.reserve(n);
  std::size_t a = 0;
  std::size_t g = 0;
  while (a < slice.size() || g < grown.size()) {
    const bool take_old = g == grown.size() || (a < slice.size() && slice.indices[a] < grown[g]);
    if (take_old) {
      out.indices.push_back(slice.indices[a]);
      out.values.push_back(slice.values[a]);
      out.phi0.push_back(slice.phi0[a]);
      out.ages.push_back(slice.ages[a]);
      if (adam != nullptr) {
        m.push_back(adam->m[a]);
        v.push_back(adam->v[a]);
      }
      tags.push_back(grown_at[a]);
      ++a;
    } else {
      if (a < slice.size() && slice.indices[a] == grown[g]) {
        throw Error("grown index " + std::to_string(grown[g]) + " is already active");
      }
      out.indices.push_back(grown[g]);
      out.values.push_back(T(0));
      out.phi0.push_back(T(0));
      out.ages.push_back(0);
      if (adam != nullptr) {
        m.push_back(T(0));
        v.push_back(T(0));
      }
      tags.push_back(step);
      ++g;
    }
  }
  slice = std::move(out);
  if (adam != nullptr) {
    adam->m = std::move(m);
    adam->v = std::move(v);
  }
  grown_at = std::move(tags);
}

}  // namespace

template <typename T>
SparseTrainer<T>::SparseTrainer(const RunConfig& config, const MlpSpec& spec,
                                const ParamStore<T>& store, const Batch<T>& train)
    : config_(config), spec_(spec), store_(store), train_(train), net_(spec) {
  config_.validate();
  if (!is_sparse(config_.method)) {
    throw ConfigError(std::string("method ") + to_string(config_.method) + " is not a sparse method");
  }
  for (const auto& layer : spec_.layers) {
    const auto& sub = store_.at(layer.weight);
    if (sub.rows() != layer.d_in || sub.cols() != layer.d_out) {
      throw ConfigError("base tensor '" + layer.weight + "' does not match the network shape");
    }
    sizes_.push_back(sub.size());
  }
  uint64_t total = 0;
  for (auto s : sizes_) total += s;
  const auto budget = static_cast<uint64_t>(
      std::min(std::floor(config_.density * static_cast<double>(total) + 0.5), static_cast<double>(total)));
  if (budget == 0) throw ConfigError("density gives an empty delta budget");
  const auto d_phi = allocate_budget(sizes_, budget);

  std::mt19937_64 mask_rng(derive_seed(config_.seed, Stream::kMask));
  const bool use_sm3 = config_.method == Method::kSpielMa;
  Sm3Hyper sm3h;
  sm3h.lr = config_.effective_lr();
  sm3h.eps = config_.eps;
  sm3h.weight_decay = config_.lambda;
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    const auto& layer = spec_.layers[l];
    auto indices = sample_without_replacement(sizes_[l], d_phi[l], mask_rng);
    state_.deltas.add(layer.weight, sizes_[l], make_slice(std::move(indices), std::vector<T>(d_phi[l], T(0)), sizes_[l]));
    if (use_sm3) {
      state_.sm3.push_back(Sm3State<T>::zeros(layer.d_in, layer.d_out, sm3h));
    } else {
      state_.adam.push_back(AdamState<T>::zeros(d_phi[l], adam_hyper(config_)));
    }
    state_.candidates.emplace_back();
    state_.grown_at.emplace_back(d_phi[l], 0);
  }
  state_.data_rng.seed(derive_seed(config_.seed, Stream::kData));
}

template <typename T>
void SparseTrainer<T>::set_state(SparseTrainerState<T> state) {
  const std::size_t n = spec_.layers.size();
  if (state.deltas.size() != n || state.candidates.size() != n || state.grown_at.size() != n) {
    throw Error("trainer state does not match the network");
  }
  if (config_.method == Method::kSpielMa ? state.sm3.size() != n : state.adam.size() != n) {
    throw Error("trainer state lacks optimizer buffers for method " +
                std::string(to_string(config_.method)));
  }
  state.deltas.check_against(store_);
  state_ = std::move(state);
}

template <typename T>
bool SparseTrainer<T>::needs_dense(int64_t t) const {
  if (config_.method == Method::kSpielMa) {
    return config_.sm3_accumulation == Sm3Accumulation::kDense;
  }
  if (config_.method != Method::kSpielAg) return false;
  const int64_t target = config_.schedule.window_target(t);
  if (target == 0) return false;
  for (std::size_t l = 0; l < sizes_.size(); ++l) {
    const uint64_t d_phi = state_.deltas.entries()[l].slice.size();
    if (d_phi < sizes_[l] && replacement_count(config_.schedule, target, d_phi) > 0) return true;
  }
  return false;
}

template <typename T>
StepMetrics SparseTrainer<T>::step() {
  if (done()) throw Error("training already finished");
  const int64_t t = state_.step + 1;
  StepMetrics metrics;
  metrics.step = t;

  const Batch<T> batch = sample_batch(train_, config_.batch, state_.data_rng);
  SparseWeights<T> weights(store_, &state_.deltas);
  net_.forward(weights, batch);

  const std::size_t n = spec_.layers.size();
  auto& entries = state_.deltas.entries();
  BackwardPlan<T> plan;
  plan.path = needs_dense(t) ? GradPath::kDense : GradPath::kSparse;
  for (const auto& e : entries) plan.active.emplace_back(e.slice.indices);

  const int64_t target = config_.schedule.window_target(t);
  if (plan.path == GradPath::kDense) {
    plan.on_dense_grad = [&](std::size_t l, std::span<const T> grad) {
      if (config_.method == Method::kSpielMa) {
        sm3_accumulate(state_.sm3[l], grad);
        return;
      }
      const uint64_t d_phi = entries[l].slice.size();
      if (d_phi < sizes_[l] && replacement_count(config_.schedule, target, d_phi) > 0) {
        ag_estimation_step<T>(state_.candidates[l], grad, entries[l].slice.indices, d_phi);
      }
    };
  }
  const GradReport<T> report = net_.backward(plan);
  metrics.loss = static_cast<double>(report.loss);
  metrics.param_grad_madds = report.total_param_grad_madds();
  metrics.dense_grad = plan.path == GradPath::kDense;

  for (std::size_t l = 0; l < n; ++l) {
    auto& slice = entries[l].slice;
    const std::span<const T> g = report.weight_grads[l];
    if (config_.method == Method::kSpielMa) {
      if (config_.sm3_accumulation == Sm3Accumulation::kActive) {
        sm3_accumulate_active<T>(state_.sm3[l], slice.indices, g);
      }
      sm3_step<T>(state_.sm3[l], slice, g);
    } else {
      adam_step<T>(state_.adam[l], slice, g);
    }
  }
  state_.step = t;

  if (config_.method != Method::kFixedMask && config_.schedule.is_update_step(t)) {
    update_indices(t, metrics);
  }

  uint64_t persistent = state_.deltas.persistent_scalars();
  for (const auto& a : state_.adam) persistent += a.persistent_scalars();
  for (const auto& s : state_.sm3) persistent += s.persistent_scalars();
  metrics.persistent_scalars = persistent;
  for (std::size_t l = 0; l < n; ++l) {
    metrics.density.push_back(static_cast<double>(entries[l].slice.size()) /
                              static_cast<double>(sizes_[l]));
  }
  return metrics;
}

template <typename T>
void SparseTrainer<T>::update_indices(int64_t t, StepMetrics& metrics) {
  const std::size_t n = spec_.layers.size();
  UpdateRecord rec;
  rec.step = t;
  auto& entries = state_.deltas.entries();
  const bool ag = config_.method == Method::kSpielAg;
  for (std::size_t l = 0; l < n; ++l) {
    auto& slice = entries[l].slice;
    const uint64_t d_phi = slice.size();
    const uint64_t k = replacement_count(config_.schedule, t, d_phi);
    AdamState<T>* adam = ag ? &state_.adam[l] : nullptr;
    uint64_t grown = 0;
    if (k > 0) {
      if (ag) {
        // Only as many entries as there are candidates to replace them are
        // actually removed; the rest of the scheduled drops (the highest
        // scoring ones) stay in place untouched.
        const GrowthSelection<T> sel = select_grow_ag(state_.candidates[l], k);
        grown = sel.indices.size();
        const auto drop = select_drop(slice, grown, config_.drop_criterion);
        drop_entries(slice, adam, state_.grown_at[l], drop);
        insert_grown(slice, adam, state_.grown_at[l], sel.indices, static_cast<uint32_t>(t));
        seed_momenta<T>(*adam, slice, sel.indices, sel.mean_grad, sel.mean_sq_grad,
                        config_.effective_seed_age());
      } else {
        const auto drop = select_drop(slice, k, config_.drop_criterion);
        drop_entries<T>(slice, nullptr, state_.grown_at[l], drop);
        const auto picked = select_grow_ma(state_.sm3[l], slice.indices, k);
        if (picked.size() != k) throw Error("momentum growth found too few positions");
        grown = picked.size();
        insert_grown<T>(slice, nullptr, state_.grown_at[l], picked, static_cast<uint32_t>(t));
      }
    }
    slice.phi0 = slice.values;
    state_.candidates[l].clear();
    rec.scheduled.push_back(k);
    rec.grown.push_back(grown);
    rec.reinserted.push_back(k - grown);
    metrics.churn += k;
    metrics.grown += grown;
    metrics.reinserted += k - grown;
  }
  updates_.push_back(std::move(rec));
}

template <typename T>
void SparseTrainer<T>::run(const std::function<void(const StepMetrics&)>& on_step) {
  while (!done()) {
    const StepMetrics m = step();
    if (on_step) on_step(m);
  }
}

template <typename T>
MemoryReport SparseTrainer<T>::memory() const {
  MemoryReport r;
  r.method = to_string(config_.method);
  r.d_theta = adapted_size(spec_);
  r.d_phi = state_.deltas.d_phi();
  r.sum_rows_cols = sum_rows_cols(spec_);
  r.components.push_back({"delta (indices, values, phi0, ages)", state_.deltas.persistent_scalars(),
                          ComponentKind::kPersistent, false});
  if (config_.method == Method::kSpielMa) {
    uint64_t s = 0;
    for (const auto& st : state_.sm3) s += st.persistent_scalars();
    r.components.push_back({"sm3 row/col accumulators", s, ComponentKind::kPersistent, true});
  } else {
    uint64_t s = 0;
    for (const auto& a : state_.adam) s += a.persistent_scalars();
    r.components.push_back({"adam m, v", s, ComponentKind::kPersistent, true});
  }
  if (config_.method == Method::kSpielAg) {
    r.components.push_back({"growth candidates (window only)", 3 * r.d_phi, ComponentKind::kTransient, false});
  }
  r.components.push_back({"dense gradient (one layer)", largest_layer(spec_), ComponentKind::kTransient, false});
  r.components.push_back({"weight materialization (one layer)", largest_layer(spec_),
                          ComponentKind::kTransient, false});
  r.components.push_back({"grown-at tags", r.d_phi, ComponentKind::kInstrumentation, false});
  return r;
}

template <typename T>
std::vector<std::pair<uint32_t, uint64_t>> SparseTrainer<T>::age_histogram() const {
  std::map<uint32_t, uint64_t> counts;
  for (const auto& tags : state_.grown_at) {
    for (uint32_t t : tags) ++counts[t];
  }
  return {counts.begin(), counts.end()};
}

template <typename T>
void init_dense(const MlpSpec& spec, uint64_t seed, std::vector<std::vector<T>>& weights,
                std::vector<std::vector<T>>& biases) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  weights.clear();
  biases.clear();
  for (const auto& layer : spec.layers) {
    const double std = 1.0 / std::sqrt(static_cast<double>(layer.d_in));
    std::vector<T> w(layer.d_in * layer.d_out);
    for (auto& v : w) v = static_cast<T>(normal(rng) * std);
    weights.push_back(std::move(w));
    biases.emplace_back(layer.d_out, T(0));
  }
}

template <typename T>
void dense_from_store(const MlpSpec& spec, const ParamStore<T>& store,
                      std::vector<std::vector<T>>& weights, std::vector<std::vector<T>>& biases) {
  weights.clear();
  biases.clear();
  for (const auto& layer : spec.layers) {
    const auto& w = store.at(layer.weight);
    std::vector<T> dense(w.size());
    w.materialize(dense);
    weights.push_back(std::move(dense));
    const auto& b = store.at(layer.bias);
    std::vector<T> bias(b.size());
    b.materialize(bias);
    biases.push_back(std::move(bias));
  }
}

template <typename T>
ParamStore<T> store_from_dense(const MlpSpec& spec, const std::vector<std::vector<T>>& weights,
                               const std::vector<std::vector<T>>& biases, std::size_t quant_block) {
  ParamStore<T> store;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& layer = spec.layers[l];
    if (quant_block > 0) {
      std::vector<float> as_float(weights[l].begin(), weights[l].end());
      store.add(ParamSubvector<T>(layer.weight,
                                  quantize(as_float, layer.d_in, layer.d_out, quant_block,
                                           Codebook::kLinear16)));
    } else {
      store.add(ParamSubvector<T>(layer.weight, layer.d_in, layer.d_out, weights[l]));
    }
    store.add(ParamSubvector<T>(layer.bias, 1, layer.d_out, biases[l]));
  }
  return store;
}

template <typename T>
DenseTrainer<T>::DenseTrainer(const MlpSpec& spec, std::vector<std::vector<T>> weights,
                              std::vector<std::vector<T>> biases, const Batch<T>& train,
                              AdamHyper hyper, std::size_t batch, int64_t total_steps,
                              uint64_t data_seed, bool train_biases)
    : spec_(spec),
      weights_(std::move(weights)),
      biases_(std::move(biases)),
      train_(train),
      batch_(batch),
      total_steps_(total_steps),
      train_biases_(train_biases),
      net_(spec),
      rng_(data_seed) {
  if (weights_.size() != spec_.layers.size() || biases_.size() != spec_.layers.size()) {
    throw Error("dense trainer: parameter count does not match the network");
  }
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    w_opt_.emplace_back(weights_[l].size(), hyper);
    if (train_biases_) b_opt_.emplace_back(biases_[l].size(), hyper);
  }
}

template <typename T>
StepMetrics DenseTrainer<T>::step() {
  if (done()) throw Error("training already finished");
  const int64_t t = step_ + 1;
  const Batch<T> batch = sample_batch(train_, batch_, rng_);
  DenseWeights<T> source(spec_, weights_, biases_);
  net_.forward(source, batch);
  const std::size_t n = spec_.layers.size();
  // Full-model gradients are the price of this baseline.
  std::vector<std::vector<T>> grads(n);
  BackwardPlan<T> plan;
  plan.path = GradPath::kDense;
  plan.bias_grads = train_biases_;
  plan.on_dense_grad = [&](std::size_t l, std::span<const T> g) { grads[l].assign(g.begin(), g.end()); };
  const GradReport<T> report = net_.backward(plan);
  for (std::size_t l = 0; l < n; ++l) {
    w_opt_[l].step(weights_[l], grads[l], static_cast<uint64_t>(t));
    if (train_biases_) b_opt_[l].step(biases_[l], report.bias_grads[l], static_cast<uint64_t>(t));
  }
  step_ = t;
  StepMetrics m;
  m.step = t;
  m.loss = static_cast<double>(report.loss);
  m.param_grad_madds = report.total_param_grad_madds();
  m.dense_grad = true;
  m.persistent_scalars = persistent_scalars();
  for (std::size_t l = 0; l < n; ++l) m.density.push_back(1.0);
  return m;
}

template <typename T>
void DenseTrainer<T>::run(const std::function<void(const StepMetrics&)>& on_step) {
  while (!done()) {
    const StepMetrics m = step();
    if (on_step) on_step(m);
  }
}

template <typename T>
uint64_t DenseTrainer<T>::persistent_scalars() const {
  uint64_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    n += weights_[l].size() + w_opt_[l].persistent_scalars();
    if (train_biases_) n += biases_[l].size() + b_opt_[l].persistent_scalars();
  }
  return n;
}

template <typename T>
DenseTrainer<T> make_full_finetune(const RunConfig& config, const MlpSpec& spec,
                                   const ParamStore<T>& store, const Batch<T>& train) {
  config.validate();
  std::vector<std::vector<T>> w, b;
  dense_from_store(spec, store, w, b);
  return DenseTrainer<T>(spec, std::move(w), std::move(b), train, adam_hyper(config), config.batch,
                         config.schedule.total_steps, derive_seed(config.seed, Stream::kData),
                         false);
}

template <typename T>
MemoryReport full_finetune_memory(const MlpSpec& spec) {
  MemoryReport r;
  r.method = "full";
  r.d_theta = adapted_size(spec);
  r.d_phi = r.d_theta;
  r.sum_rows_cols = sum_rows_cols(spec);
  r.components.push_back({"trainable weight copy", r.d_theta, ComponentKind::kPersistent, false});
  r.components.push_back({"adam m, v", 2 * r.d_theta, ComponentKind::kPersistent, true});
  r.components.push_back({"dense gradients (all layers)", r.d_theta, ComponentKind::kTransient, false});
  return r;
}

template <typename T>
DeltaModel<T> dense_delta(const MlpSpec& spec, const ParamStore<T>& store,
                          const std::vector<std::vector<T>>& tuned) {
  DeltaModel<T> out;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& sub = store.at(spec.layers[l].weight);
    std::vector<T> base(sub.size());
    sub.materialize(base);
    if (tuned.at(l).size() != base.size()) throw Error("dense_delta: shape mismatch");
    std::vector<uint64_t> idx(base.size());
    std::vector<T> val(base.size());
    for (std::size_t j = 0; j < base.size(); ++j) {
      idx[j] = j;
      val[j] = tuned[l][j] - base[j];
    }
    out.add(sub.name(), sub.size(), make_slice(std::move(idx), std::move(val), sub.size()));
  }
  return out;
}

template <typename T>
LoraTrainer<T>::LoraTrainer(const RunConfig& config, const MlpSpec& spec,
                            const ParamStore<T>& store, const Batch<T>& train)
    : config_(config), spec_(spec), store_(store), train_(train), net_(spec) {
  config_.validate();
  adapter_ = std::make_unique<LoraAdapter<T>>(spec_, config_.lora_rank, config_.lora_alpha,
                                              config_.lora_dropout,
                                              derive_seed(config_.seed, Stream::kLora));
  const AdamHyper h = adam_hyper(config_);
  for (const auto& f : adapter_->factors()) {
    a_opt_.emplace_back(f.a.size(), h);
    b_opt_.emplace_back(f.b.size(), h);
  }
  rng_.seed(derive_seed(config_.seed, Stream::kData));
}

template <typename T>
StepMetrics LoraTrainer<T>::step() {
  if (done()) throw Error("training already finished");
  const int64_t t = step_ + 1;
  const Batch<T> batch = sample_batch(train_, config_.batch, rng_);
  SparseWeights<T> base(store_, nullptr);
  adapter_->set_training(true);
  adapter_->zero_grad();
  net_.forward(base, batch, adapter_.get());
  const GradReport<T> report = net_.backward_sparse({});
  auto& factors = adapter_->factors();
  auto& grads = adapter_->grads();
  for (std::size_t l = 0; l < factors.size(); ++l) {
    a_opt_[l].step(factors[l].a.flat(), grads[l].a.flat(), static_cast<uint64_t>(t));
    b_opt_[l].step(factors[l].b.flat(), grads[l].b.flat(), static_cast<uint64_t>(t));
  }
  step_ = t;
  StepMetrics m;
  m.step = t;
  m.loss = static_cast<double>(report.loss);
  m.persistent_scalars = 3 * adapter_->parameter_count();
  for (const auto& layer : spec_.layers) {
    const double r = static_cast<double>(adapter_->rank());
    m.density.push_back(r * static_cast<double>(layer.d_in + layer.d_out) /
                        static_cast<double>(layer.d_in * layer.d_out));
  }
  return m;
}

template <typename T>
void LoraTrainer<T>::run(const std::function<void(const StepMetrics&)>& on_step) {
  while (!done()) {
    const StepMetrics m = step();
    if (on_step) on_step(m);
  }
}

template <typename T>
DeltaModel<T> LoraTrainer<T>::merged_delta() const {
  std::vector<std::vector<T>> merged;
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    const auto& sub = store_.at(spec_.layers[l].weight);
    std::vector<T> base(sub.size());
    sub.materialize(base);
    merged.push_back(lora_merge<T>(adapter_->factors()[l], adapter_->scaling(), base));
  }
  return dense_delta(spec_, store_, merged);
}

template <typename T>
MemoryReport LoraTrainer<T>::memory() const {
  MemoryReport r;
  r.method = "lora";
  r.d_theta = adapted_size(spec_);
  r.d_phi = adapter_->parameter_count();
  r.sum_rows_cols = sum_rows_cols(spec_);
  r.components.push_back({"adapter factors A, B", r.d_phi, ComponentKind::kPersistent, false});
  r.components.push_back({"adam m, v", 2 * r.d_phi, ComponentKind::kPersistent, true});
  r.components.push_back({"weight materialization (one layer)", largest_layer(spec_),
                          ComponentKind::kTransient, false});
  return r;
}

#define SPIEL_INSTANTIATE(T)                                                                     \
  template class SparseTrainer<T>;                                                               \
  template class DenseTrainer<T>;                                                                \
  template class LoraTrainer<T>;                                                                 \
  template void init_dense<T>(const MlpSpec&, uint64_t, std::vector<std::vector<T>>&,            \
                              std::vector<std::vector<T>>&);                                     \
  template void dense_from_store<T>(const MlpSpec&, const ParamStore<T>&,                        \
                                    std::vector<std::vector<T>>&, std::vector<std::vector<T>>&); \
  template ParamStore<T> store_from_dense<T>(const MlpSpec&, const std::vector<std::vector<T>>&, \
                                             const std::vector<std::vector<T>>&, std::size_t);   \
  template DenseTrainer<T> make_full_finetune<T>(const RunConfig&, const MlpSpec&,               \
                                                 const ParamStore<T>&, const Batch<T>&);         \
  template MemoryReport full_finetune_memory<T>(const MlpSpec&);                                 \
  template DeltaModel<T> dense_delta<T>(const MlpSpec&, const ParamStore<T>&,                    \
                                        const std::vector<std::vector<T>>&);

SPIEL_INSTANTIATE(float)
SPIEL_INSTANTIATE(double)
#undef SPIEL_INSTANTIATE

}  // namespace spiel
