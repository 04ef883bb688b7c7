// SPDX-License-Identifier: Apache-2.0
//
// Run configuration. Every field has a flat key; config files hold one
// `key = value` pair per line ('#' starts a comment) and CLI flags use the
// same keys (`--key value`).

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "thrlab/objective.hpp"
#include "thrlab/tasks.hpp"
#include "thrlab/thr.hpp"

namespace thrlab {

enum class Scheme {
  kGrpo,
  kThrOnly,
  kThrP,
  kPassK,
  kPassKMixed,
  kStaticMixed,
  kPosOnly,
  kNegOnly,
  kCovKl,
};

enum class Objective { kGrpo, kGspoToken };

std::string_view to_string(Scheme s);
std::string_view to_string(Objective o);
/// Throws ConfigError on unknown names.
Scheme parse_scheme(std::string_view name);
Objective parse_objective(std::string_view name);

struct RunConfig {
  // task
  int vocab_size = 12;
  int eos = -1;  // -1 means V - 1
  int modulus = 7;
  int max_len = 5;
  int n_questions = 32;
  uint64_t task_seed = 0;
  // policy
  int dim = 8;
  double init_scale = 0.5;
  // training
  int steps = 40;
  int groups_per_batch = 8;
  int updates_per_batch = 4;
  int group_size = 8;
  double lr = 0.5;
  double temperature = 1.0;
  double epsilon = 0.2;
  double kl_coef = 1e-4;
  int max_attempts = 0;  // 0 means 20 * groups_per_batch
  // advantage shaping
  Scheme scheme = Scheme::kGrpo;
  double p = 0.0;
  int passk_k = 4;
  double chi = 0.2;
  double covkl_top_frac = 0.2;
  TauMode tau_mode = TauMode::kEq8Mean;
  bool entropy_aug = false;
  double entropy_top_frac = 0.2;
  Objective objective = Objective::kGrpo;
  // evaluation
  int eval_every = 10;
  int eval_samples = 64;
  std::vector<int> eval_k{1, 2, 4, 8, 16, 32, 64};
  uint64_t seed = 0;

  /// Sets a field from its flat key. Throws ConfigError on unknown keys or
  /// unparsable values.
  void set(std::string_view key, std::string_view value);

  /// All fields as (key, value) in a fixed order; round-trips through set().
  std::vector<std::pair<std::string, std::string>> to_pairs() const;

  /// Throws ConfigError on any out-of-range field or missing scheme input.
  void validate() const;

  TaskSpec task() const;
  Vocab vocab() const;
  ClipConfig clip() const;
  ThrConfig thr() const;
  PasskConfig passk() const;

  static std::vector<std::string> keys();
};

/// Applies a `key = value` file on top of `cfg`.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

std::string config_text(const RunConfig& cfg);

}  // namespace thrlab
