// SPDX-License-Identifier: Apache-2.0

#include "spiel/accounting.hpp"

#include <algorithm>
#include <array>

namespace spiel::accounting {
namespace {

thread_local std::array<BufferStats, kNumBufferKinds> g_stats{};

BufferStats& slot(BufferKind kind) { return g_stats[static_cast<int>(kind)]; }

}  // namespace

BufferStats stats(BufferKind kind) { return slot(kind); }

void reset_peaks() {
  for (auto& s : g_stats) {
    s.peak = s.live;
    s.peak_elements = s.live_elements;
    s.allocations = 0;
  }
}

int64_t total_live() {
  int64_t n = 0;
  for (const auto& s : g_stats) n += s.live;
  return n;
}

namespace detail {

void on_acquire(BufferKind kind, std::size_t elements) {
  auto& s = slot(kind);
  ++s.live;
  ++s.allocations;
  s.live_elements += elements;
  s.peak = std::max(s.peak, s.live);
  s.peak_elements = std::max(s.peak_elements, s.live_elements);
}

void on_release(BufferKind kind, std::size_t elements) {
  auto& s = slot(kind);
  --s.live;
  s.live_elements -= elements;
}

}  // namespace detail
}  // namespace spiel::accounting
