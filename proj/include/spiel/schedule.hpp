// SPDX-License-Identifier: Apache-2.0
//
// When and how much of the active set is replaced.
//
// Index updates happen at t = S, 2S, ... (t is 1-based and counts optimizer
// steps). The first update replaces every entry. Later updates replace
//   linear: xi * (T - t) / T * d_phi
//   cosine: xi / 2 * (1 + cos(pi * t / T)) * d_phi
// rounded half up and clamped to [0, d_phi]. The gradient estimation window
// for the update at step u covers steps u - gamma + 1 .. u.

#pragma once

#include <cstdint>
#include <string>

namespace spiel {

enum class ScheduleKind { kLinear, kCosine };

struct Schedule {
  ScheduleKind kind = ScheduleKind::kLinear;
  double xi = 0.2;
  int64_t total_steps = 2000;    // T
  int64_t interval = 20;         // S
  int64_t estimation_steps = 5;  // gamma

  // Throws ConfigError unless 1 <= gamma <= S <= T and 0 <= xi <= 1.
  void validate() const;

  bool is_update_step(int64_t t) const { return t > 0 && t <= total_steps && t % interval == 0; }
  bool is_first_update(int64_t t) const { return t == interval; }
  // The update step whose estimation window contains t, or 0 if none.
  int64_t window_target(int64_t t) const;
};

uint64_t replacement_count(const Schedule& schedule, int64_t t, uint64_t d_phi);

ScheduleKind parse_schedule_kind(const std::string& name);
const char* to_string(ScheduleKind kind);

}  // namespace spiel
