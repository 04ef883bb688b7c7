// SPDX-License-Identifier: Apache-2.0
//
// Token Hidden Reward.
//
// For a token t' at position k' of response j, THR aggregates, over every
// position k of every correct response i, the product of two inner products:
// the prediction-error alignment <e_k - pi_k, e_t' - pi_t'> and the hidden
// alignment <h_k, h_t'>. The sum over each correct response is normalized by
// its length and the total is signed by (2 r_j - 1):
//
//   THR_t' = (2 r_j - 1) * sum_{i correct} 1/|y_i| * sum_{k in y_i} A[k,t'] S[k,t']
//
// Positive THR tokens raise the likelihood of the group's correct answers
// under a GRPO step (exploitation); negative ones spread probability mass to
// alternatives (exploration).
//
// The kernels below are OpenMP-parallel; the thrlab::serial namespace keeps
// single-threaded references that produce bit-identical results.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "thrlab/advantage.hpp"
#include "thrlab/rollout.hpp"

namespace thrlab {

/// Error-vector and hidden-vector Gram matrices over all tokens of a group.
struct GramPair {
  std::size_t tokens = 0;
  Vec errors;  // A, T x T row-major
  Vec hidden;  // S, T x T row-major

  double a(std::size_t t, std::size_t u) const { return errors[t * tokens + u]; }
  double s(std::size_t t, std::size_t u) const { return hidden[t * tokens + u]; }
};

enum class TauMode { kEq8Mean, kAbsMean };

struct ThrConfig {
  double p = 0.0;
  bool entropy_aug = false;
  double entropy_top_frac = 0.2;
  TauMode tau_mode = TauMode::kEq8Mean;

  /// Throws ConfigError on p outside [-1, 1] or top_frac outside (0, 1].
  void validate() const;
};

struct ThrTable {
  Vec thr;
  double tau = 0.0;
  std::vector<bool> dominant;
  double p = 0.0;
  bool used_fallback = false;  // abs-mean threshold used
};

GramPair gram_pair(const Group& group);

/// THR of token k' of response j with respect to the single correct
/// response i_pos. Throws NotPositiveResponse if i_pos is incorrect.
double thr_pairwise(const Group& group, const GramPair& grams, int i_pos, int j, int k_prime);

/// Group THR for every token (positive-response tokens included).
Vec thr_group(const Group& group, const GramPair& grams);

/// Dominance threshold. kEq8Mean averages, over tokens of each correct
/// response, their influence on the other correct responses and clamps at 0;
/// with a single correct response (or in kAbsMean mode) it is mean |THR|.
/// `used_fallback` reports which rule was applied.
double tau_threshold(const Group& group, const GramPair& grams, std::span<const double> thr,
                     const ThrConfig& cfg, bool* used_fallback = nullptr);

/// Scores a group end to end: Gram matrices, THR, tau and the dominance mask.
ThrTable score_group(const Group& group, const ThrConfig& cfg);

/// Indices of the top `count` entries by value, ties to the smaller index.
std::vector<std::size_t> top_indices(std::span<const double> values, std::size_t count);

struct ReweightStats {
  std::size_t dominant = 0;
  std::size_t entropy_kept = 0;
};

/// A' = 1[|THR| > tau] (1 + sign(THR) p) A. With entropy augmentation, the
/// top entropy_top_frac tokens by entropy that are not dominant keep A.
AdvantageTable reweight(const AdvantageTable& adv, std::span<const double> thr, double tau,
                        const ThrConfig& cfg, std::span<const double> entropies,
                        ReweightStats* stats = nullptr);

/// |top-n by |THR|  intersect  top-n by entropy| / n. Requires 1 <= n <= size.
double entropy_thr_overlap(std::span<const double> thr, std::span<const double> entropies,
                           std::size_t n);

namespace serial {

GramPair gram_pair(const Group& group);
Vec thr_group(const Group& group, const GramPair& grams);

}  // namespace serial

}  // namespace thrlab
