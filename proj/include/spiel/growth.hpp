// SPDX-License-Identifier: Apache-2.0
//
// Drop and grow selection. All rankings are deterministic: equal scores are
// ordered by lower flat index.

#pragma once

#include <cstdint>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "spiel/delta_slice.hpp"
#include "spiel/optimizers.hpp"

namespace spiel {

enum class DropCriterion {
  kDeltaChange,  // |phi - phi0|
  kMagnitude,    // |phi|
};

DropCriterion parse_drop_criterion(const std::string& name);
const char* to_string(DropCriterion c);

// Keeps the k best (score, index) pairs seen so far: higher score wins, and
// on equal scores the lower index wins. Memory is O(k).
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) {}

  void offer(double score, uint64_t index) {
    if (k_ == 0) return;
    const Item item{score, index};
    if (heap_.size() < k_) {
      heap_.push(item);
    } else if (Better{}(item, heap_.top())) {
      heap_.pop();
      heap_.push(item);
    }
  }

  // Selected indices in ascending index order.
  std::vector<uint64_t> take_sorted_indices();

 private:
  struct Item {
    double score;
    uint64_t index;
  };
  struct Better {
    bool operator()(const Item& a, const Item& b) const {
      return a.score > b.score || (a.score == b.score && a.index < b.index);
    }
  };
  std::size_t k_;
  // Top of the heap is the worst retained item.
  std::priority_queue<Item, std::vector<Item>, Better> heap_;
};

// Slice positions (not flat indices) of the k entries with the smallest
// score, ascending.
template <typename T>
std::vector<std::size_t> select_drop(const DeltaSlice<T>& slice, std::size_t k,
                                     DropCriterion criterion);

// Removes the given slice positions, preserving the order of the rest.
template <typename T>
void apply_drop(DeltaSlice<T>& slice, std::span<const std::size_t> positions);

// Removes `positions` from any parallel array.
template <typename U>
void erase_positions(std::vector<U>& values, std::span<const std::size_t> sorted_positions);

// Growth candidates of one subvector during a gradient estimation window.
template <typename T>
struct CandidateSet {
  std::vector<uint64_t> indices;  // ascending, disjoint from the active set
  std::vector<T> grad_sum;
  std::vector<T> grad_sq_sum;
  uint32_t batches_seen = 0;

  void clear() { *this = CandidateSet{}; }
  uint64_t scalars() const { return indices.size() + grad_sum.size() + grad_sq_sum.size(); }
};

// On the first batch of a window, picks the `capacity` largest |grad|
// positions outside `active`; on every batch, accumulates grad and grad^2 at
// the candidate positions. `dense_grad` is only read.
template <typename T>
void ag_estimation_step(CandidateSet<T>& cands, std::span<const T> dense_grad,
                        std::span<const uint64_t> active, std::size_t capacity);

template <typename T>
struct GrowthSelection {
  std::vector<uint64_t> indices;  // ascending
  std::vector<T> mean_grad;
  std::vector<T> mean_sq_grad;
};

// The k candidates with the largest |grad_sum / batches_seen|. Fewer are
// returned when fewer candidates exist.
template <typename T>
GrowthSelection<T> select_grow_ag(const CandidateSet<T>& cands, std::size_t k);

// The k non-active positions with the largest r_i * c_j, streamed row by row.
template <typename T>
std::vector<uint64_t> select_grow_ma(const Sm3State<T>& sm3, std::span<const uint64_t> active,
                                     std::size_t k);

}  // namespace spiel
