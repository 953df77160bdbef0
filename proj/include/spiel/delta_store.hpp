// SPDX-License-Identifier: Apache-2.0
//
// Frozen base parameters and the sparse delta representation on top of them.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "spiel/delta_slice.hpp"
#include "spiel/quantizer.hpp"

namespace spiel {

// One frozen parameter tensor, flattened row-major. The base is either dense
// or block-quantized and is never modified once constructed.
template <typename T>
class ParamSubvector {
 public:
  ParamSubvector(std::string name, uint64_t rows, uint64_t cols, std::vector<T> base);
  ParamSubvector(std::string name, QuantizedTensor base);

  const std::string& name() const { return name_; }
  uint64_t rows() const { return rows_; }
  uint64_t cols() const { return cols_; }
  uint64_t size() const { return rows_ * cols_; }

  bool is_quantized() const { return std::holds_alternative<QuantizedTensor>(base_); }
  const std::vector<T>& dense() const;
  const QuantizedTensor& quantized() const;

  // Writes the (dequantized) base into `out`.
  void materialize(std::span<T> out) const;

 private:
  std::string name_;
  uint64_t rows_;
  uint64_t cols_;
  std::variant<std::vector<T>, QuantizedTensor> base_;
};

template <typename T>
class ParamStore {
 public:
  // Names must be unique.
  void add(ParamSubvector<T> sub);

  const ParamSubvector<T>& at(std::string_view name) const;
  const ParamSubvector<T>* find(std::string_view name) const;
  const std::vector<ParamSubvector<T>>& subvectors() const { return subs_; }
  uint64_t total_size() const;

 private:
  std::vector<ParamSubvector<T>> subs_;
};

template <typename T>
struct DeltaEntry {
  std::string name;
  uint64_t d_theta = 0;
  DeltaSlice<T> slice;

  bool operator==(const DeltaEntry&) const = default;
};

// One DeltaSlice per adapted subvector, kept in insertion order so that
// checkpoints are byte-stable.
template <typename T>
class DeltaModel {
 public:
  // Validates the slice against d_theta; names must be unique.
  void add(std::string name, uint64_t d_theta, DeltaSlice<T> slice);

  const DeltaSlice<T>* find(std::string_view name) const;
  DeltaSlice<T>* find(std::string_view name);
  const DeltaEntry<T>& entry(std::string_view name) const;

  const std::vector<DeltaEntry<T>>& entries() const { return entries_; }
  std::vector<DeltaEntry<T>>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }

  uint64_t d_phi() const;
  uint64_t persistent_scalars() const;

  // Throws unless every entry names a subvector of matching length in `store`.
  void check_against(const ParamStore<T>& store) const;

  bool operator==(const DeltaModel&) const = default;

 private:
  std::vector<DeltaEntry<T>> entries_;
};

// Splits `total_budget` across subvectors so that d_phi_i / size_i is as
// equal as integer rounding allows (largest remainder, ties to the lower
// position).
std::vector<uint64_t> allocate_budget(std::span<const uint64_t> subvector_sizes,
                                      uint64_t total_budget);

// base + scatter(indices, values). The input is left untouched.
template <typename T>
std::vector<T> scatter_add(const DeltaSlice<T>& slice, std::span<const T> base);

// In-place variant used on transient weight buffers.
template <typename T>
void scatter_add_inplace(const DeltaSlice<T>& slice, std::span<T> dense);

template <typename T>
std::vector<T> gather(std::span<const T> dense, std::span<const uint64_t> indices);

// Coordinatewise sum of two deltas over the same subvector set. Overlapping
// indices are summed; the result may hold more entries than either input.
template <typename T>
DeltaModel<T> compose(const DeltaModel<T>& a, const DeltaModel<T>& b);

// Number of positions present in both a and b.
template <typename T>
uint64_t count_overlap(const DeltaModel<T>& a, const DeltaModel<T>& b);

}  // namespace spiel
