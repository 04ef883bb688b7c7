// SPDX-License-Identifier: Apache-2.0

#include "thrlab/thr.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>
#include <string>

#include "thrlab/errors.hpp"

namespace thrlab {

void ThrConfig::validate() const {
  if (!(p >= -1.0 && p <= 1.0)) throw ConfigError("THR reweight p must lie in [-1, 1]");
  if (!(entropy_top_frac > 0.0 && entropy_top_frac <= 1.0))
    throw ConfigError("entropy_top_frac must lie in (0, 1]");
}

GramPair gram_pair(const Group& group) {
  const std::size_t n = group.num_tokens();
  GramPair g;
  g.tokens = n;
  g.errors.assign(n * n, 0.0);
  g.hidden.assign(n * n, 0.0);
  const auto& st = group.flat_stats;
  // Upper triangle computed once and mirrored; each entry is written by
  // exactly one iteration, so the result does not depend on the schedule.
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t ti = 0; ti < static_cast<std::ptrdiff_t>(n); ++ti) {
    const auto t = static_cast<std::size_t>(ti);
    for (std::size_t u = t; u < n; ++u) {
      const double a = dot(st[t].error, st[u].error);
      const double s = dot(st[t].hidden, st[u].hidden);
      g.errors[t * n + u] = a;
      g.errors[u * n + t] = a;
      g.hidden[t * n + u] = s;
      g.hidden[u * n + t] = s;
    }
  }
  return g;
}

namespace {

// sum_{k in response i} A[k,u] S[k,u]
double response_influence(const GramPair& grams, const Response& r, std::size_t u) {
  double acc = 0.0;
  for (std::size_t k = r.stats_begin; k < r.stats_end; ++k) acc += grams.a(k, u) * grams.s(k, u);
  return acc;
}

double reward_sign(const Response& r) { return r.reward ? 1.0 : -1.0; }

double token_thr(const Group& group, const GramPair& grams, std::size_t u) {
  double acc = 0.0;
  for (const Response& r : group.responses) {
    if (!r.reward) continue;
    acc += response_influence(grams, r, u) / static_cast<double>(r.size());
  }
  const Response& owner = group.responses[static_cast<std::size_t>(group.flat_stats[u].response)];
  return reward_sign(owner) * acc;
}

}  // namespace

double thr_pairwise(const Group& group, const GramPair& grams, int i_pos, int j, int k_prime) {
  const Response& pos = group.responses.at(static_cast<std::size_t>(i_pos));
  if (!pos.reward)
    throw NotPositiveResponse("response " + std::to_string(i_pos) + " is not correct");
  const Response& other = group.responses.at(static_cast<std::size_t>(j));
  if (k_prime < 0 || static_cast<std::size_t>(k_prime) >= other.size())
    throw std::out_of_range("thr_pairwise: position out of range");
  const std::size_t u = other.stats_begin + static_cast<std::size_t>(k_prime);
  return reward_sign(other) * response_influence(grams, pos, u);
}

Vec thr_group(const Group& group, const GramPair& grams) {
  const std::size_t n = group.num_tokens();
  Vec out(n, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t u = 0; u < static_cast<std::ptrdiff_t>(n); ++u)
    out[static_cast<std::size_t>(u)] = token_thr(group, grams, static_cast<std::size_t>(u));
  return out;
}

double tau_threshold(const Group& group, const GramPair& grams, std::span<const double> thr,
                     const ThrConfig& cfg, bool* used_fallback) {
  if (group.n_pos < 1) throw GroupDegenerate("tau threshold needs a correct response");
  const bool fallback = cfg.tau_mode == TauMode::kAbsMean || group.n_pos == 1;
  if (used_fallback) *used_fallback = fallback;
  if (fallback) {
    if (thr.empty()) return 0.0;
    double s = 0.0;
    for (double x : thr) s += std::abs(x);
    return s / static_cast<double>(thr.size());
  }
  // Average influence of each correct-response token on the likelihoods of
  // the other correct responses.
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t owner = 0; owner < group.responses.size(); ++owner) {
    const Response& ro = group.responses[owner];
    if (!ro.reward) continue;
    for (std::size_t u = ro.stats_begin; u < ro.stats_end; ++u) {
      double infl = 0.0;
      for (std::size_t i = 0; i < group.responses.size(); ++i) {
        const Response& ri = group.responses[i];
        if (i == owner || !ri.reward) continue;
        infl += response_influence(grams, ri, u) / static_cast<double>(ri.size());
      }
      total += infl;
      ++count;
    }
  }
  const double mean = count ? total / static_cast<double>(count) : 0.0;
  return std::max(mean, 0.0);
}

ThrTable score_group(const Group& group, const ThrConfig& cfg) {
  cfg.validate();
  const GramPair grams = gram_pair(group);
  ThrTable t;
  t.p = cfg.p;
  t.thr = thr_group(group, grams);
  t.tau = tau_threshold(group, grams, t.thr, cfg, &t.used_fallback);
  t.dominant.resize(t.thr.size());
  for (std::size_t i = 0; i < t.thr.size(); ++i) t.dominant[i] = std::abs(t.thr[i]) > t.tau;
  return t;
}

std::vector<std::size_t> top_indices(std::span<const double> values, std::size_t count) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  count = std::min(count, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (values[a] != values[b]) return values[a] > values[b];
                      return a < b;
                    });
  idx.resize(count);
  return idx;
}

AdvantageTable reweight(const AdvantageTable& adv, std::span<const double> thr, double tau,
                        const ThrConfig& cfg, std::span<const double> entropies,
                        ReweightStats* stats) {
  cfg.validate();
  const std::size_t n = adv.values.size();
  if (thr.size() != n || (cfg.entropy_aug && entropies.size() != n))
    throw std::invalid_argument("reweight: tables are not aligned");
  AdvantageTable out = adv;
  out.scheme = AdvScheme::kThr;
  std::vector<bool> keep_plain(n, false);
  ReweightStats local;
  if (cfg.entropy_aug && n > 0) {
    const auto count = static_cast<std::size_t>(
        std::ceil(cfg.entropy_top_frac * static_cast<double>(n) - 1e-12));
    for (std::size_t t : top_indices(entropies, count)) keep_plain[t] = true;
  }
  for (std::size_t t = 0; t < n; ++t) {
    const bool dominant = std::abs(thr[t]) > tau;
    if (dominant) {
      const double sign = thr[t] > 0.0 ? 1.0 : (thr[t] < 0.0 ? -1.0 : 0.0);
      out.values[t] = (1.0 + sign * cfg.p) * adv.values[t];
      ++local.dominant;
    } else if (keep_plain[t]) {
      ++local.entropy_kept;
    } else {
      out.values[t] = 0.0;
    }
  }
  if (local.dominant == 0 && n > 0)
    std::clog << "thrlab: warning: no dominant THR tokens (tau = " << tau
              << "); group contributes no gradient\n";
  if (stats) *stats = local;
  return out;
}

double entropy_thr_overlap(std::span<const double> thr, std::span<const double> entropies,
                           std::size_t n) {
  if (thr.size() != entropies.size())
    throw std::invalid_argument("entropy_thr_overlap: size mismatch");
  if (n < 1 || n > thr.size())
    throw BadArity("entropy_thr_overlap: n must lie in [1, token count]");
  Vec abs_thr(thr.size());
  for (std::size_t i = 0; i < thr.size(); ++i) abs_thr[i] = std::abs(thr[i]);
  std::vector<bool> in_thr(thr.size(), false);
  for (std::size_t i : top_indices(abs_thr, n)) in_thr[i] = true;
  std::size_t both = 0;
  for (std::size_t i : top_indices(entropies, n)) both += in_thr[i] ? 1 : 0;
  return static_cast<double>(both) / static_cast<double>(n);
}

}  // namespace thrlab
