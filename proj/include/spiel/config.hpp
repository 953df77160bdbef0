// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a line-oriented key=value file. Blank lines and lines
// starting with '#' are ignored; unknown keys are errors.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spiel/growth.hpp"
#include "spiel/network.hpp"
#include "spiel/schedule.hpp"
#include "spiel/tasks.hpp"

namespace spiel {

enum class Method { kSpielAg, kSpielMa, kFixedMask, kFull, kLora };

Method parse_method(const std::string& name);
const char* to_string(Method m);
bool is_sparse(Method m);

enum class Sm3Accumulation { kDense, kActive };

struct RunConfig {
  Method method = Method::kSpielAg;
  double density = 0.02;
  // Unset means 1e-3, or 1e-2 for spiel-ma.
  std::optional<double> lr;
  double lambda = 0.0;
  Schedule schedule;
  std::size_t batch = 32;
  uint64_t seed = 1;
  bool quantize = false;
  std::size_t quant_block = 64;
  DropCriterion drop_criterion = DropCriterion::kDeltaChange;

  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Sm3Accumulation sm3_accumulation = Sm3Accumulation::kDense;
  // Age given to grown entries whose momenta are seeded; unset means gamma.
  std::optional<uint32_t> seed_age;

  std::vector<std::size_t> hidden = {128, 128};
  Activation activation = Activation::kTanh;
  int64_t pretrain_steps = 4000;
  double pretrain_lr = 2e-3;

  std::size_t lora_rank = 2;
  double lora_alpha = 16.0;
  double lora_dropout = 0.1;

  bool log_wall_time = false;

  TaskConfig task;

  double effective_lr() const;
  uint32_t effective_seed_age() const;
  // Throws ConfigError on any inconsistency.
  void validate() const;
};

// Applies one key=value assignment.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Canonical text form; parse_config(to_text(c)) reproduces c.
std::string to_text(const RunConfig& config);

}  // namespace spiel
