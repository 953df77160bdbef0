// SPDX-License-Identifier: Apache-2.0
//
// Allocation instrumentation for the memory-overhead contract.
//
// Persistent training state is counted by asking each state object for its
// float/int footprint. Transient dense buffers (weight materialization,
// dense gradients, dequantized bases) go through TransientBuffer, which keeps
// per-kind live/peak counters so tests can assert that nothing d_theta-sized
// outlives the step that created it.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace spiel::accounting {

enum class BufferKind : int {
  kDenseGrad = 0,
  kDenseWeight = 1,
  kDequantized = 2,
};
inline constexpr int kNumBufferKinds = 3;

struct BufferStats {
  int64_t live = 0;
  int64_t peak = 0;
  uint64_t allocations = 0;
  uint64_t live_elements = 0;
  uint64_t peak_elements = 0;
};

BufferStats stats(BufferKind kind);

// Resets peaks and allocation counts to the current live values.
void reset_peaks();

// Live buffers across all kinds.
int64_t total_live();

namespace detail {
void on_acquire(BufferKind kind, std::size_t elements);
void on_release(BufferKind kind, std::size_t elements);
}  // namespace detail

// Counted scratch array. Non-copyable; released on destruction.
template <typename T>
class TransientBuffer {
 public:
  TransientBuffer(BufferKind kind, std::size_t size, T fill = T(0))
      : kind_(kind), data_(size, fill) {
    detail::on_acquire(kind_, data_.size());
  }
  ~TransientBuffer() { release(); }

  TransientBuffer(const TransientBuffer&) = delete;
  TransientBuffer& operator=(const TransientBuffer&) = delete;
  TransientBuffer(TransientBuffer&& other) noexcept
      : kind_(other.kind_), data_(std::move(other.data_)), held_(other.held_) {
    other.held_ = false;
  }
  TransientBuffer& operator=(TransientBuffer&&) = delete;

  void release() {
    if (held_) {
      detail::on_release(kind_, data_.size());
      held_ = false;
      std::vector<T>().swap(data_);
    }
  }

  std::size_t size() const { return data_.size(); }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }

 private:
  BufferKind kind_;
  std::vector<T> data_;
  bool held_ = true;
};

}  // namespace spiel::accounting
