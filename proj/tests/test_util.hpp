// SPDX-License-Identifier: Apache-2.0
// Small helpers shared by the unit tests.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "spiel/delta_slice.hpp"
#include "spiel/matrix.hpp"
#include "spiel/tasks.hpp"

namespace spiel::testing {

template <typename T>
std::vector<T> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(u(rng));
  return v;
}

template <typename T>
Matrix<T> random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  return Matrix<T>(rows, cols, random_vector<T>(rows * cols, rng));
}

// Random valid slice with `n` entries over a subvector of length d_theta.
template <typename T>
DeltaSlice<T> random_slice(uint64_t d_theta, uint64_t n, std::mt19937_64& rng) {
  auto idx = sample_without_replacement(d_theta, n, rng);
  auto vals = random_vector<T>(n, rng);
  return make_slice(std::move(idx), std::move(vals), d_theta);
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("spiel_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace spiel::testing
