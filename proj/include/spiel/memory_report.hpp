// SPDX-License-Identifier: Apache-2.0
//
// Float/int-count accounting of a training run's state.
//
// Components are tagged persistent (kept across steps for the whole run),
// transient (live only inside a step or an update) or instrumentation (kept
// for reporting only). The linear-scaling bound applies to persistent state:
//   persistent <= 6 * d_phi + sum_i (rows_i + cols_i).

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace spiel {

enum class ComponentKind { kPersistent, kTransient, kInstrumentation };

const char* to_string(ComponentKind kind);

struct MemoryComponent {
  std::string name;
  uint64_t scalars = 0;
  ComponentKind kind = ComponentKind::kPersistent;
  bool optimizer = false;
};

struct MemoryReport {
  std::string method;
  uint64_t d_theta = 0;        // adapted parameter count
  uint64_t d_phi = 0;          // trainable count (all of d_theta for full FT)
  uint64_t sum_rows_cols = 0;  // over adapted matrices
  std::vector<MemoryComponent> components;

  uint64_t persistent_total() const;
  uint64_t optimizer_total() const;
  uint64_t bound() const { return 6 * d_phi + sum_rows_cols; }
  bool within_bound() const { return persistent_total() <= bound(); }
  // Persistent components whose size reaches d_theta, i.e. that scale with
  // the model rather than with the delta.
  std::vector<std::string> flagged() const;

  std::string to_json() const;
  static MemoryReport from_json(const std::string& text);
  // Human-readable table with the bound check and any flags.
  std::string table() const;
};

}  // namespace spiel
