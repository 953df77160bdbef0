// SPDX-License-Identifier: Apache-2.0
//
// Delta checkpoint format (all integers little-endian):
//
//   "SPIEL\0"            6-byte magic
//   u32 version = 1
//   u32 subvector count
//   per subvector:
//     u32 name length, name bytes
//     u64 d_theta, u64 d_phi
//     u64 indices[d_phi]  (ascending)
//     f32 values[d_phi]
//
// Ages and phi0 are not stored; a loaded slice has phi0 = values, ages = 0.

#pragma once

#include <filesystem>
#include <functional>
#include <istream>
#include <ostream>

#include "spiel/delta_store.hpp"

namespace spiel {

template <typename T>
void write_checkpoint(std::ostream& out, const DeltaModel<T>& model);

template <typename T>
DeltaModel<T> read_checkpoint(std::istream& in);

// Written through a temporary file and renamed into place.
template <typename T>
void save_checkpoint(const DeltaModel<T>& model, const std::filesystem::path& path);

template <typename T>
DeltaModel<T> load_checkpoint(const std::filesystem::path& path);

// Writes via `<path>.tmp` then renames; the temporary is removed if `writer`
// throws, so a failed write never leaves a partial file at `path`.
void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& writer);

}  // namespace spiel
