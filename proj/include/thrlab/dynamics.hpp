// SPDX-License-Identifier: Apache-2.0
//
// Numerical checks of the likelihood and entropy dynamics of the
// shared-readout softmax model.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "thrlab/policy.hpp"
#include "thrlab/rng.hpp"
#include "thrlab/rollout.hpp"

namespace thrlab {

struct IdentityReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double rel_err = 0.0;
  double step = 0.0;
};

/// |lhs - rhs| / max(|lhs|, |rhs|, 1e-12)
double relative_error(double lhs, double rhs);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

/// Compares the finite-difference rate of change of
///   F = sum_{i correct} (1/|y_i|) ln pi(y_i | x)
/// under one readout-only step of size `step` along the gradient of the
/// unclipped GRPO surrogate (features frozen) with the THR reconstruction
///   (1/Z) sum_t c_t THR_t,  c_t = q+ on correct tokens, q- on incorrect.
/// `params` must be the policy the group was sampled from; temperature 1.
IdentityReport theorem1_check(const Group& group, const PolicyParams& params, double step);

/// Slope of |lhs - rhs| against the step over `steps` (first order: ~1).
double theorem1_slope(const Group& group, const PolicyParams& params,
                      std::span<const double> steps);

/// Q = pi * log(pi) / H(pi). Throws ZeroEntropyContext when H = 0.
Vec q_vector(std::span<const double> probs);

struct EntropyProbe {
  TokenDist dist;
  Vec logit_delta;
  double dh_pred = 0.0;    // -Cov_pi(log pi, dl)
  double dh_actual = 0.0;  // H(softmax(l + dl)) - H(softmax(l))
  Vec q;                   // empty when H = 0
};

/// First-order entropy change of a softmax distribution under a logit
/// perturbation versus the exact change. Requires strictly positive probs.
EntropyProbe entropy_lemma_check(std::span<const double> probs, std::span<const double> dl);

/// Slope of |dh_actual - dh_pred| against the perturbation scale.
double entropy_residual_slope(std::span<const double> probs, std::span<const double> dl,
                              std::span<const double> scales);

/// Entropy change at ctx_o after a readout step of size `step` that raises
/// log pi(token_u | ctx_u), against the first-order cross-context formula
///   step * H(pi_o) * <-Q_o - pi_o, e_u - pi_u> * <h_u, h_o>.
/// Throws ZeroEntropyContext if H(pi_o) = 0.
IdentityReport cross_context_entropy_check(const PolicyParams& params, const ContextKey& ctx_o,
                                           const ContextKey& ctx_u, Token token_u, double step);

/// Cosine similarity of (e_o - pi) and (Q + pi).
double q_alignment_cosine(std::span<const double> probs, std::size_t o);

/// Distribution with argmax probability `peak` at index 0 and the remaining
/// mass spread by random weights, resampled until index 0 stays the strict
/// argmax. Throws DegenerateDistribution for peak >= 1 or peak <= 1/V.
Vec random_peaked_distribution(int vocab, double peak, Rng& rng);

struct QAlignmentCell {
  int vocab = 0;
  double peak = 0.0;
  double mean_cosine = 0.0;
  double std_error = 0.0;
  int trials = 0;
};

/// Mean cosine over `trials` random distributions per (V, peak) cell.
std::vector<QAlignmentCell> q_alignment_sweep(std::span<const int> vocab_sizes,
                                              std::span<const double> peaks, int trials,
                                              uint64_t seed);

}  // namespace thrlab
