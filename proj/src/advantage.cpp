// SPDX-License-Identifier: Apache-2.0

#include "thrlab/advantage.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "thrlab/errors.hpp"

namespace thrlab {

std::string_view to_string(AdvScheme s) {
  switch (s) {
    case AdvScheme::kGrpo: return "grpo";
    case AdvScheme::kPassK: return "passk";
    case AdvScheme::kPassKMixed: return "passk_mixed";
    case AdvScheme::kStaticMixed: return "static_mixed";
    case AdvScheme::kPosOnly: return "pos_only";
    case AdvScheme::kNegOnly: return "neg_only";
    case AdvScheme::kThr: return "thr";
  }
  return "unknown";
}

uint64_t binomial(int n, int k) {
  if (n < 0) throw std::invalid_argument("binomial: negative n");
  if (n > 64) throw std::invalid_argument("binomial: n > 64 overflows exact arithmetic");
  if (k < 0 || k > n) return 0;
  if (k > n - k) k = n - k;
  unsigned __int128 c = 1;
  for (int i = 0; i < k; ++i) c = c * static_cast<unsigned>(n - i) / static_cast<unsigned>(i + 1);
  return static_cast<uint64_t>(c);
}

std::pair<double, double> group_scales(const Group& group) {
  if (group.degenerate())
    throw GroupDegenerate("group for question " + std::to_string(group.question.id) +
                          " has zero reward variance (N+ = " + std::to_string(group.n_pos) +
                          ", N- = " + std::to_string(group.n_neg) + ")");
  const double q = group.q;
  return {std::sqrt((1.0 - q) / q), std::sqrt(q / (1.0 - q))};
}

namespace {

// Fills a response-constant table: pos on correct tokens, neg on the rest.
AdvantageTable response_constant(const Group& group, double pos, double neg, AdvScheme scheme) {
  auto [qp, qm] = group_scales(group);
  AdvantageTable t;
  t.scheme = scheme;
  t.qplus = qp;
  t.qminus = qm;
  t.values.resize(group.num_tokens());
  for (const Response& r : group.responses)
    for (std::size_t s = r.stats_begin; s < r.stats_end; ++s) t.values[s] = r.reward ? pos : neg;
  return t;
}

// sqrt(B/(1-B)) * sqrt(q/(1-q)), the Pass@K rescaling of GRPO advantages.
double passk_factor(const Group& group, int k) {
  if (k < 1) throw std::invalid_argument("Pass@K needs K >= 1");
  if (k > group.size())
    throw KTooLarge("K = " + std::to_string(k) + " exceeds group size " +
                    std::to_string(group.size()));
  auto [qp, qm] = group_scales(group);
  const double b = all_wrong_probability(group.size(), group.n_neg, k);
  return std::sqrt(b / (1.0 - b)) * qm;
}

}  // namespace

double all_wrong_probability(int group_size, int n_neg, int k) {
  return static_cast<double>(binomial(n_neg, k)) / static_cast<double>(binomial(group_size, k));
}

AdvantageTable grpo_advantages(const Group& group) {
  auto [qp, qm] = group_scales(group);
  return response_constant(group, qp, -qm, AdvScheme::kGrpo);
}

AdvantageTable passk_advantages(const Group& group, const PasskConfig& cfg) {
  const double f = passk_factor(group, cfg.k);
  auto [qp, qm] = group_scales(group);
  return response_constant(group, f * qp, -f * qm, AdvScheme::kPassK);
}

AdvantageTable passk_mixed(const Group& group, const PasskConfig& cfg) {
  const double f = passk_factor(group, cfg.k);
  auto [qp, qm] = group_scales(group);
  const double q = group.q;
  return response_constant(group, q * qp + (1.0 - q) * f * qp, -(q * qm + (1.0 - q) * f * qm),
                           AdvScheme::kPassKMixed);
}

AdvantageTable static_mixed(const Group& group, const PasskConfig& cfg) {
  if (!(cfg.chi >= 0.0 && cfg.chi <= 1.0)) throw std::invalid_argument("chi must lie in [0, 1]");
  const double f = passk_factor(group, cfg.k);
  auto [qp, qm] = group_scales(group);
  const double chi = cfg.chi;
  return response_constant(group, chi * f * qp + (1.0 - chi) * qp,
                           -(chi * f * qm + (1.0 - chi) * qm), AdvScheme::kStaticMixed);
}

AdvantageTable sign_mask(const AdvantageTable& table, SignMode mode) {
  AdvantageTable out = table;
  out.scheme = mode == SignMode::kPosOnly ? AdvScheme::kPosOnly : AdvScheme::kNegOnly;
  for (double& v : out.values) {
    if (mode == SignMode::kPosOnly && v < 0.0) v = 0.0;
    if (mode == SignMode::kNegOnly && v > 0.0) v = 0.0;
  }
  return out;
}

}  // namespace thrlab
