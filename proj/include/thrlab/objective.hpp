// SPDX-License-Identifier: Apache-2.0
//
// Surrogate objectives with analytic gradients.
//
// Every objective reports `total = -surrogate + kl_coef * kl`, the quantity
// that gradient descent minimizes, and returns the gradient of `total`.
// Per-group terms are evaluated in parallel and reduced in group order, so
// results do not depend on the thread count.

#pragma once

#include <span>
#include <vector>

#include "thrlab/advantage.hpp"
#include "thrlab/policy.hpp"
#include "thrlab/rollout.hpp"

namespace thrlab {

struct ClipConfig {
  double epsilon = 0.2;
  double kl_coef = 1e-4;

  void validate() const;
};

struct LossReport {
  double surrogate = 0.0;
  double kl = 0.0;
  double total = 0.0;
  double clipped_fraction = 0.0;
  double grad_norm = 0.0;
};

struct ScoredGroup {
  const Group* group = nullptr;
  AdvantageTable adv;
};

struct LossAndGrad {
  LossReport report;
  ParamGrad grad;
};

/// Clipped token-level GRPO surrogate, token-mean per group and mean over
/// groups. Ratios are taken against the stored old log-probabilities. The
/// clipped branch contributes no gradient. If `ref` is given, kl_coef times
/// the exact KL to `ref` is added.
LossAndGrad grpo_loss_and_grad(const PolicyParams& params, std::span<const ScoredGroup> groups,
                               const ClipConfig& cfg, const PolicyParams* ref = nullptr);

/// Length-normalized sequence ratio s_i = exp(mean_k (log pi - log pi_old)).
double gspo_ratio(const PolicyParams& params, const Group& group, int response);

/// GSPO-token: every token of response i uses the numeric ratio s_i, but
/// its gradient flows only through its own log-probability,
///   d/dtheta [unclipped term] = A_ik * s_i * grad log pi(y_ik),
/// with the 1/G * 1/|y_i| normalization.
LossAndGrad gspo_token_loss_and_grad(const PolicyParams& params,
                                     std::span<const ScoredGroup> groups, const ClipConfig& cfg,
                                     const PolicyParams* ref = nullptr);

/// Value of the sequence-level GSPO surrogate (1/G) sum_i min(s_i A_i,
/// clip(s_i) A_i). Requires response-constant advantages.
double gspo_sequence_objective(const PolicyParams& params, std::span<const ScoredGroup> groups,
                               const ClipConfig& cfg);

struct KlResult {
  double value = 0.0;
  ParamGrad grad;
};

/// Exact KL(pi_theta || pi_ref) summed over the rollout contexts, normalized
/// like the GRPO surrogate. Gradient is with respect to `params` only.
KlResult kl_penalty_and_grad(const PolicyParams& params, const PolicyParams& ref,
                             std::span<const ScoredGroup> groups);

/// Restricts the KL sum to the flat token indices in `selected[g]` for
/// group g (normalization unchanged).
KlResult kl_penalty_subset(const PolicyParams& params, const PolicyParams& ref,
                           std::span<const ScoredGroup> groups,
                           std::span<const std::vector<std::size_t>> selected);

struct CovKlSelection {
  std::vector<Vec> covariance;                   // per group, per token
  std::vector<std::vector<std::size_t>> selected;  // per group, flat indices
};

/// Covariance between log pi(.|ctx) and the logit change predicted by a
/// step along the GRPO surrogate gradient; the top ceil(top_frac * T) tokens
/// per group are selected, ties to the earlier flat index.
CovKlSelection covkl_select(const PolicyParams& params, std::span<const ScoredGroup> groups,
                            double top_frac, const ClipConfig& cfg);

/// Vanilla clipped GRPO plus kl_coef times the KL to `ref` restricted to
/// the Cov-KL selected tokens.
LossAndGrad covkl_baseline(const PolicyParams& params, const PolicyParams& ref,
                           std::span<const ScoredGroup> groups, double top_frac,
                           const ClipConfig& cfg);

}  // namespace thrlab
