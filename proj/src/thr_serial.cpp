// SPDX-License-Identifier: Apache-2.0
//
// Single-threaded references for the THR kernels. Kept deliberately plain:
// the parallel versions must match these bit for bit.

#include "thrlab/numeric.hpp"
#include "thrlab/thr.hpp"

namespace thrlab::serial {

GramPair gram_pair(const Group& group) {
  const std::size_t n = group.num_tokens();
  GramPair g;
  g.tokens = n;
  g.errors.assign(n * n, 0.0);
  g.hidden.assign(n * n, 0.0);
  const auto& st = group.flat_stats;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t u = t; u < n; ++u) {
      g.errors[t * n + u] = g.errors[u * n + t] = dot(st[t].error, st[u].error);
      g.hidden[t * n + u] = g.hidden[u * n + t] = dot(st[t].hidden, st[u].hidden);
    }
  }
  return g;
}

Vec thr_group(const Group& group, const GramPair& grams) {
  const std::size_t n = group.num_tokens();
  Vec out(n, 0.0);
  for (std::size_t u = 0; u < n; ++u) {
    double acc = 0.0;
    for (const Response& r : group.responses) {
      if (!r.reward) continue;
      double inner = 0.0;
      for (std::size_t k = r.stats_begin; k < r.stats_end; ++k)
        inner += grams.a(k, u) * grams.s(k, u);
      acc += inner / static_cast<double>(r.size());
    }
    const Response& owner = group.responses[static_cast<std::size_t>(group.flat_stats[u].response)];
    out[u] = (owner.reward ? 1.0 : -1.0) * acc;
  }
  return out;
}

}  // namespace thrlab::serial
