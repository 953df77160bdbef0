// SPDX-License-Identifier: Apache-2.0

#include "spiel/delta_store.hpp"

#include <algorithm>
#include <string>

#include "spiel/error.hpp"

namespace spiel {

template <typename T>
DeltaSlice<T> make_slice(std::vector<uint64_t> indices, std::vector<T> values, uint64_t d_theta) {
  if (indices.size() != values.size()) {
    throw Error("make_slice: " + std::to_string(indices.size()) + " indices but " +
                std::to_string(values.size()) + " values");
  }
  DeltaSlice<T> s;
  s.indices = std::move(indices);
  s.values = std::move(values);
  s.phi0 = s.values;
  s.ages.assign(s.indices.size(), 0);
  check_slice(s, d_theta);
  return s;
}

template <typename T>
void check_slice(const DeltaSlice<T>& slice, uint64_t d_theta) {
  const std::size_t n = slice.indices.size();
  if (slice.values.size() != n || slice.phi0.size() != n || slice.ages.size() != n) {
    throw Error("delta slice arrays have mismatched lengths");
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (slice.indices[k] >= d_theta) {
      throw Error("delta index " + std::to_string(slice.indices[k]) + " out of range for length " +
                  std::to_string(d_theta));
    }
    if (k > 0 && slice.indices[k] <= slice.indices[k - 1]) {
      throw Error("delta indices must be strictly increasing (position " + std::to_string(k) + ")");
    }
  }
}

template <typename T>
ParamSubvector<T>::ParamSubvector(std::string name, uint64_t rows, uint64_t cols,
                                  std::vector<T> base)
    : name_(std::move(name)), rows_(rows), cols_(cols), base_(std::move(base)) {
  if (std::get<std::vector<T>>(base_).size() != rows * cols) {
    throw Error("subvector '" + name_ + "': base has " +
                std::to_string(std::get<std::vector<T>>(base_).size()) + " values, shape is " +
                std::to_string(rows) + "x" + std::to_string(cols));
  }
}

template <typename T>
ParamSubvector<T>::ParamSubvector(std::string name, QuantizedTensor base)
    : name_(std::move(name)), rows_(base.rows), cols_(base.cols), base_(std::move(base)) {
  if (rows_ * cols_ != std::get<QuantizedTensor>(base_).n) {
    throw Error("subvector '" + name_ + "': quantized shape does not match its length");
  }
}

template <typename T>
const std::vector<T>& ParamSubvector<T>::dense() const {
  if (is_quantized()) throw Error("subvector '" + name_ + "' is quantized");
  return std::get<std::vector<T>>(base_);
}

template <typename T>
const QuantizedTensor& ParamSubvector<T>::quantized() const {
  if (!is_quantized()) throw Error("subvector '" + name_ + "' is not quantized");
  return std::get<QuantizedTensor>(base_);
}

template <typename T>
void ParamSubvector<T>::materialize(std::span<T> out) const {
  if (out.size() != size()) throw Error("materialize: buffer length mismatch for '" + name_ + "'");
  if (is_quantized()) {
    dequantize_into<T>(std::get<QuantizedTensor>(base_), out);
  } else {
    const auto& v = std::get<std::vector<T>>(base_);
    std::copy(v.begin(), v.end(), out.begin());
  }
}

template <typename T>
void ParamStore<T>::add(ParamSubvector<T> sub) {
  if (find(sub.name()) != nullptr) throw Error("duplicate subvector name '" + sub.name() + "'");
  subs_.push_back(std::move(sub));
}

template <typename T>
const ParamSubvector<T>* ParamStore<T>::find(std::string_view name) const {
  for (const auto& s : subs_) {
    if (s.name() == name) return &s;
  }
  return nullptr;
}

template <typename T>
const ParamSubvector<T>& ParamStore<T>::at(std::string_view name) const {
  const auto* s = find(name);
  if (s == nullptr) throw Error("no subvector named '" + std::string(name) + "'");
  return *s;
}

template <typename T>
uint64_t ParamStore<T>::total_size() const {
  uint64_t n = 0;
  for (const auto& s : subs_) n += s.size();
  return n;
}

template <typename T>
void DeltaModel<T>::add(std::string name, uint64_t d_theta, DeltaSlice<T> slice) {
  if (find(name) != nullptr) throw Error("duplicate delta entry '" + name + "'");
  check_slice(slice, d_theta);
  entries_.push_back({std::move(name), d_theta, std::move(slice)});
}

template <typename T>
const DeltaSlice<T>* DeltaModel<T>::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e.slice;
  }
  return nullptr;
}

template <typename T>
DeltaSlice<T>* DeltaModel<T>::find(std::string_view name) {
  for (auto& e : entries_) {
    if (e.name == name) return &e.slice;
  }
  return nullptr;
}

template <typename T>
const DeltaEntry<T>& DeltaModel<T>::entry(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw Error("no delta entry named '" + std::string(name) + "'");
}

template <typename T>
uint64_t DeltaModel<T>::d_phi() const {
  uint64_t n = 0;
  for (const auto& e : entries_) n += e.slice.size();
  return n;
}

template <typename T>
uint64_t DeltaModel<T>::persistent_scalars() const {
  uint64_t n = 0;
  for (const auto& e : entries_) n += e.slice.persistent_scalars();
  return n;
}

template <typename T>
void DeltaModel<T>::check_against(const ParamStore<T>& store) const {
  for (const auto& e : entries_) {
    const auto* sub = store.find(e.name);
    if (sub == nullptr) throw Error("delta entry '" + e.name + "' has no base subvector");
    if (sub->size() != e.d_theta) {
      throw Error("delta entry '" + e.name + "' expects length " + std::to_string(e.d_theta) +
                  ", base has " + std::to_string(sub->size()));
    }
    check_slice(e.slice, e.d_theta);
  }
}

std::vector<uint64_t> allocate_budget(std::span<const uint64_t> sizes, uint64_t total_budget) {
  unsigned __int128 total = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] == 0) throw Error("allocate_budget: subvector " + std::to_string(i) + " is empty");
    total += sizes[i];
  }
  if (total_budget > total) {
    throw Error("allocate_budget: budget " + std::to_string(total_budget) +
                " exceeds the total parameter count " + std::to_string(static_cast<uint64_t>(total)));
  }
  std::vector<uint64_t> out(sizes.size());
  std::vector<unsigned __int128> remainder(sizes.size());
  uint64_t assigned = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const unsigned __int128 num = static_cast<unsigned __int128>(total_budget) * sizes[i];
    out[i] = static_cast<uint64_t>(num / total);
    remainder[i] = num % total;
    assigned += out[i];
  }
  std::vector<std::size_t> order(sizes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t r = 0; assigned < total_budget; ++r, ++assigned) ++out[order[r]];
  return out;
}

template <typename T>
void scatter_add_inplace(const DeltaSlice<T>& slice, std::span<T> dense) {
  if (slice.values.size() != slice.indices.size()) {
    throw Error("scatter_add: indices/values length mismatch");
  }
  for (std::size_t k = 0; k < slice.indices.size(); ++k) {
    if (slice.indices[k] >= dense.size()) {
      throw Error("scatter_add: index " + std::to_string(slice.indices[k]) +
                  " out of range for length " + std::to_string(dense.size()));
    }
    dense[slice.indices[k]] += slice.values[k];
  }
}

template <typename T>
std::vector<T> scatter_add(const DeltaSlice<T>& slice, std::span<const T> base) {
  std::vector<T> out(base.begin(), base.end());
  scatter_add_inplace<T>(slice, out);
  return out;
}

template <typename T>
std::vector<T> gather(std::span<const T> dense, std::span<const uint64_t> indices) {
  std::vector<T> out(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= dense.size()) {
      throw Error("gather: index " + std::to_string(indices[k]) + " out of range for length " +
                  std::to_string(dense.size()));
    }
    out[k] = dense[indices[k]];
  }
  return out;
}

namespace {

template <typename T>
void check_same_layout(const DeltaModel<T>& a, const DeltaModel<T>& b) {
  if (a.size() != b.size()) throw Error("compose: deltas adapt different subvector sets");
  for (const auto& e : a.entries()) {
    const auto& other = b.entry(e.name);
    if (other.d_theta != e.d_theta) {
      throw Error("compose: subvector '" + e.name + "' has mismatched lengths");
    }
  }
}

}  // namespace

template <typename T>
DeltaModel<T> compose(const DeltaModel<T>& a, const DeltaModel<T>& b) {
  check_same_layout(a, b);
  DeltaModel<T> out;
  for (const auto& ea : a.entries()) {
    const auto& sa = ea.slice;
    const auto& sb = b.entry(ea.name).slice;
    std::vector<uint64_t> idx;
    std::vector<T> val;
    idx.reserve(sa.size() + sb.size());
    val.reserve(sa.size() + sb.size());
    std::size_t i = 0, j = 0;
    while (i < sa.size() || j < sb.size()) {
      if (j == sb.size() || (i < sa.size() && sa.indices[i] < sb.indices[j])) {
        idx.push_back(sa.indices[i]);
        val.push_back(sa.values[i++]);
      } else if (i == sa.size() || sb.indices[j] < sa.indices[i]) {
        idx.push_back(sb.indices[j]);
        val.push_back(sb.values[j++]);
      } else {
        idx.push_back(sa.indices[i]);
        val.push_back(sa.values[i++] + sb.values[j++]);
      }
    }
    out.add(ea.name, ea.d_theta, make_slice<T>(std::move(idx), std::move(val), ea.d_theta));
  }
  return out;
}

template <typename T>
uint64_t count_overlap(const DeltaModel<T>& a, const DeltaModel<T>& b) {
  check_same_layout(a, b);
  uint64_t n = 0;
  for (const auto& ea : a.entries()) {
    const auto& ia = ea.slice.indices;
    const auto& ib = b.entry(ea.name).slice.indices;
    std::size_t i = 0, j = 0;
    while (i < ia.size() && j < ib.size()) {
      if (ia[i] < ib[j]) {
        ++i;
      } else if (ib[j] < ia[i]) {
        ++j;
      } else {
        ++n, ++i, ++j;
      }
    }
  }
  return n;
}

#define SPIEL_INSTANTIATE(T)                                                                   \
  template DeltaSlice<T> make_slice<T>(std::vector<uint64_t>, std::vector<T>, uint64_t);       \
  template void check_slice<T>(const DeltaSlice<T>&, uint64_t);                                \
  template class ParamSubvector<T>;                                                            \
  template class ParamStore<T>;                                                                \
  template class DeltaModel<T>;                                                                \
  template std::vector<T> scatter_add<T>(const DeltaSlice<T>&, std::span<const T>);            \
  template void scatter_add_inplace<T>(const DeltaSlice<T>&, std::span<T>);                    \
  template std::vector<T> gather<T>(std::span<const T>, std::span<const uint64_t>);            \
  template DeltaModel<T> compose<T>(const DeltaModel<T>&, const DeltaModel<T>&);               \
  template uint64_t count_overlap<T>(const DeltaModel<T>&, const DeltaModel<T>&);

SPIEL_INSTANTIATE(float)
SPIEL_INSTANTIATE(double)
#undef SPIEL_INSTANTIATE

}  // namespace spiel
