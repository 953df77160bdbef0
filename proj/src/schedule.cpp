// SPDX-License-Identifier: Apache-2.0

#include "spiel/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spiel/error.hpp"

namespace spiel {

void Schedule::validate() const {
  if (estimation_steps < 1) throw ConfigError("gamma must be at least 1");
  if (interval < estimation_steps) {
    throw ConfigError("S (" + std::to_string(interval) + ") must be at least gamma (" +
                      std::to_string(estimation_steps) + ")");
  }
  if (total_steps < interval) {
    throw ConfigError("T (" + std::to_string(total_steps) + ") must be at least S (" +
                      std::to_string(interval) + ")");
  }
  if (!(xi >= 0.0 && xi <= 1.0)) throw ConfigError("xi must lie in [0, 1]");
}

int64_t Schedule::window_target(int64_t t) const {
  if (t <= 0) return 0;
  const int64_t target = ((t + interval - 1) / interval) * interval;
  if (target > total_steps) return 0;
  return t > target - estimation_steps ? target : 0;
}

uint64_t replacement_count(const Schedule& s, int64_t t, uint64_t d_phi) {
  if (s.is_first_update(t)) return d_phi;
  const double T = static_cast<double>(s.total_steps);
  const double tt = static_cast<double>(t);
  double fraction = 0.0;
  switch (s.kind) {
    case ScheduleKind::kLinear:
      fraction = s.xi * (T - tt) / T;
      break;
    case ScheduleKind::kCosine:
      fraction = s.xi / 2.0 * (1.0 + std::cos(tt * std::numbers::pi / T));
      break;
  }
  const double k = std::floor(fraction * static_cast<double>(d_phi) + 0.5);
  return static_cast<uint64_t>(std::clamp(k, 0.0, static_cast<double>(d_phi)));
}

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::kLinear;
  if (name == "cosine") return ScheduleKind::kCosine;
  throw ConfigError("unknown schedule '" + name + "' (expected linear or cosine)");
}

const char* to_string(ScheduleKind kind) {
  return kind == ScheduleKind::kLinear ? "linear" : "cosine";
}

}  // namespace spiel
