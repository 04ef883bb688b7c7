// SPDX-License-Identifier: Apache-2.0
//
// Verifier suites: seeded random instances, independent oracles, and the
// checks run by `thrlab verify`.

#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "thrlab/objective.hpp"
#include "thrlab/policy.hpp"
#include "thrlab/rollout.hpp"

namespace thrlab {

struct InstanceShape {
  int vocab = 8;
  int dim = 4;
  int group_size = 4;
  int max_len = 4;
  int n_groups = 1;
  double temperature = 1.0;
  double perturb = 0.0;  // std-dev of the current-vs-old parameter offset
};

/// Groups sampled from `old` with random rewards (at least one correct and
/// one incorrect response each); `current` is `old` plus Gaussian noise of
/// scale `perturb` on the readout and every visited feature.
struct RandomInstance {
  PolicyParams old;
  PolicyParams current;
  std::vector<Group> groups;
};

RandomInstance random_instance(uint64_t seed, const InstanceShape& shape);

/// G one-token responses of which the first n_pos are correct.
Group synthetic_group(int group_size, int n_pos);

struct PasskPair {
  double pos = 0.0;
  double neg = 0.0;
};

/// Question-level Pass@K advantages from the subset mean and deviation:
/// R = 1 - B, sigma = sqrt(R (1 - R)), pos = (1 - R) / sigma and
/// neg = (1 - R - C(N- - 1, K - 1) / C(G - 1, K - 1)) / sigma.
PasskPair passk_direct(int group_size, int n_pos, int k);

/// Averages (r_S - mean) / std over every K-subset containing a response.
PasskPair passk_enumerate(int group_size, int n_pos, int k);

/// Every rollout context of the groups, sorted.
std::vector<ContextKey> touched_contexts(std::span<const Group> groups);

using ValueFn = std::function<double(const PolicyParams&)>;

/// Central differences of f at `at` over every readout entry and every
/// feature of `contexts`, compared with `analytic` by
/// ||a - n|| / max(||a||, ||n||).
double gradient_rel_error(const PolicyParams& at, const ParamGrad& analytic, const ValueFn& f,
                          std::span<const ContextKey> contexts, double h = 1e-5);

/// GSPO-token total with every stop-gradient factor frozen at `frozen`:
/// the ratio of token k is s_i(frozen) * pi(y_ik) / pi_frozen(y_ik).
double gspo_token_frozen_total(const PolicyParams& params, const PolicyParams& frozen,
                               std::span<const ScoredGroup> groups, const ClipConfig& cfg,
                               const PolicyParams* ref = nullptr);

/// Deliberately wrong GSPO-token gradient that differentiates through the
/// sequence ratio (unclipped tokens only, no KL).
ParamGrad gspo_token_full_derivative_grad(const PolicyParams& params,
                                          std::span<const ScoredGroup> groups,
                                          const ClipConfig& cfg);

struct VerifyRow {
  std::string check;
  uint64_t instance = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double error = 0.0;
  double eta = 0.0;
  bool pass = true;
};

struct VerifyReport {
  std::string suite;
  std::vector<VerifyRow> rows;
  bool passed() const;
  double max_error(const std::string& check) const;
};

std::vector<std::string> verify_suites();

/// Runs a named suite on n seeded instances. Throws ConfigError on an
/// unknown suite name or n < 1.
VerifyReport run_verify(const std::string& suite, int n_instances, uint64_t seed);

void write_verify_csv(const VerifyReport& report, std::ostream& out);

}  // namespace thrlab
