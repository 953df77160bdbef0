// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

namespace spiel {

// The (eta, phi) pair for one parameter subvector.
//
// `indices` are 0-based row-major flat positions (row * cols + col), strictly
// increasing. The four arrays always share one length, d_phi_i. `phi0` is the
// snapshot of `values` taken at the last index update and `ages` counts
// optimizer steps since each entry was last grown.
template <typename T>
struct DeltaSlice {
  std::vector<uint64_t> indices;
  std::vector<T> values;
  std::vector<T> phi0;
  std::vector<uint32_t> ages;

  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }

  // Persistent footprint in scalars (indices + values + phi0 + ages).
  uint64_t persistent_scalars() const { return 4 * static_cast<uint64_t>(indices.size()); }

  bool operator==(const DeltaSlice&) const = default;
};

// Builds a slice from sorted indices with the given values; phi0 = values,
// ages = 0. Validates ordering and range.
template <typename T>
DeltaSlice<T> make_slice(std::vector<uint64_t> indices, std::vector<T> values, uint64_t d_theta);

// Throws spiel::Error if the slice invariants do not hold for a subvector of
// length d_theta.
template <typename T>
void check_slice(const DeltaSlice<T>& slice, uint64_t d_theta);

}  // namespace spiel
