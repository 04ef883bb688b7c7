// SPDX-License-Identifier: Apache-2.0
//
// Group-relative advantages and question-level shaping (Pass@K, mixed,
// static-mixed, sign masks). Tables are flat, aligned with Group::flat_stats.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "thrlab/rollout.hpp"

namespace thrlab {

enum class AdvScheme {
  kGrpo,
  kPassK,
  kPassKMixed,
  kStaticMixed,
  kPosOnly,
  kNegOnly,
  kThr,
};

std::string_view to_string(AdvScheme s);

struct AdvantageTable {
  Vec values;
  AdvScheme scheme = AdvScheme::kGrpo;
  double qplus = 0.0;   // sqrt((1-q)/q)
  double qminus = 0.0;  // sqrt(q/(1-q))
};

struct PasskConfig {
  int k = 4;
  double chi = 0.2;
};

/// Exact binomial coefficient for n <= 64 (0 when k < 0 or k > n).
uint64_t binomial(int n, int k);

/// q+ and q- for a group, throwing GroupDegenerate if q is 0 or 1.
std::pair<double, double> group_scales(const Group& group);

/// +q+ on correct-response tokens, -q- on incorrect-response tokens.
AdvantageTable grpo_advantages(const Group& group);

/// B = C(N-, K) / C(G, K), the chance that a size-K draw is all wrong.
double all_wrong_probability(int group_size, int n_neg, int k);

/// Pass@K-shaped advantages: sqrt(B/(1-B)) * sqrt(q/(1-q)) * A_grpo.
/// Throws KTooLarge if K > G and GroupDegenerate on degenerate groups.
AdvantageTable passk_advantages(const Group& group, const PasskConfig& cfg);

/// q * A_grpo + (1 - q) * A_passk.
AdvantageTable passk_mixed(const Group& group, const PasskConfig& cfg);

/// chi * A_passk + (1 - chi) * A_grpo.
AdvantageTable static_mixed(const Group& group, const PasskConfig& cfg);

enum class SignMode { kPosOnly, kNegOnly };

AdvantageTable sign_mask(const AdvantageTable& table, SignMode mode);

}  // namespace thrlab
