// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace oracle {

using namespace thrlab;

namespace {

struct RawToken {
  Vec err;
  Vec h;
};

// Raw (error, feature) per token of every response, from the old policy.
std::vector<std::vector<RawToken>> raw_tokens(const PolicyParams& old, const Group& g) {
  std::vector<std::vector<RawToken>> out;
  for (const auto& r : g.responses) {
    std::vector<RawToken> row;
    ContextKey ctx{g.question.id, {}};
    for (Token t : r.tokens) {
      const Vec h = old.feature(ctx);
      Vec l(static_cast<std::size_t>(old.vocab_size()), 0.0);
      for (int v = 0; v < old.vocab_size(); ++v) {
        double s = 0.0;
        for (int j = 0; j < old.dim(); ++j)
          s += old.readout()(static_cast<std::size_t>(v), static_cast<std::size_t>(j)) *
               h[static_cast<std::size_t>(j)];
        l[static_cast<std::size_t>(v)] = s / g.temperature;
      }
      const double mx = *std::max_element(l.begin(), l.end());
      double z = 0.0;
      for (double x : l) z += std::exp(x - mx);
      Vec e(l.size());
      for (std::size_t v = 0; v < l.size(); ++v)
        e[v] = (static_cast<Token>(v) == t ? 1.0 : 0.0) - std::exp(l[v] - mx) / z;
      row.push_back({e, h});
      ctx.prefix.push_back(t);
    }
    out.push_back(std::move(row));
  }
  return out;
}

double inner(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

Vec thr_naive(const PolicyParams& old, const Group& g) {
  const auto raw = raw_tokens(old, g);
  Vec out;
  for (std::size_t j = 0; j < raw.size(); ++j) {
    const double sign = g.responses[j].reward ? 1.0 : -1.0;
    for (std::size_t kp = 0; kp < raw[j].size(); ++kp) {
      double total = 0.0;
      for (std::size_t i = 0; i < raw.size(); ++i) {
        if (!g.responses[i].reward) continue;
        double per = 0.0;
        for (std::size_t k = 0; k < raw[i].size(); ++k)
          per += inner(raw[i][k].err, raw[j][kp].err) * inner(raw[i][k].h, raw[j][kp].h);
        total += per / static_cast<double>(raw[i].size());
      }
      out.push_back(sign * total);
    }
  }
  return out;
}

double tau_naive(const PolicyParams& old, const Group& g) {
  const auto raw = raw_tokens(old, g);
  double total = 0.0;
  int count = 0;
  for (std::size_t o = 0; o < raw.size(); ++o) {
    if (!g.responses[o].reward) continue;
    for (const RawToken& u : raw[o]) {
      for (std::size_t i = 0; i < raw.size(); ++i) {
        if (i == o || !g.responses[i].reward) continue;
        double per = 0.0;
        for (const RawToken& k : raw[i]) per += inner(k.err, u.err) * inner(k.h, u.h);
        total += per / static_cast<double>(raw[i].size());
      }
      ++count;
    }
  }
  return std::max(total / count, 0.0);
}

double standardized(const std::vector<int>& rewards, std::size_t i) {
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (int r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (int r : rewards) var += (r - mean) * (r - mean);
  return (rewards[i] - mean) / std::sqrt(var / n);
}

McEstimate pass_at_k_mc(int m, int c, int k, int resamples, Rng& rng) {
  std::vector<int> items(static_cast<std::size_t>(m), 0);
  std::fill_n(items.begin(), c, 1);
  int hits = 0;
  for (int s = 0; s < resamples; ++s) {
    // partial Fisher-Yates draw of k items without replacement
    bool any = false;
    for (int j = 0; j < k; ++j) {
      std::uniform_int_distribution<int> pick(j, m - 1);
      std::swap(items[static_cast<std::size_t>(j)], items[static_cast<std::size_t>(pick(rng))]);
      any = any || items[static_cast<std::size_t>(j)];
    }
    hits += any ? 1 : 0;
  }
  const double p = static_cast<double>(hits) / resamples;
  return {p, std::sqrt(p * (1.0 - p) / resamples)};
}

double kl_direct(const Vec& p, const Vec& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
  return s;
}

long count_correct(const TaskSpec& spec, const Question& q) {
  long count = 0;
  TokenSeq seq;
  std::function<void()> rec = [&] {
    if (static_cast<int>(seq.size()) >= spec.max_len) return;
    for (int t = 0; t < spec.vocab.size; ++t) {
      seq.push_back(static_cast<Token>(t));
      if (t == spec.vocab.eos)
        count += reward(spec, q, seq);
      else
        rec();
      seq.pop_back();
    }
  };
  rec();
  return count;
}

Vec flatten(const ParamGrad& g, const std::vector<ContextKey>& contexts, int dim) {
  Vec out(g.dW.data().begin(), g.dW.data().end());
  for (const ContextKey& c : contexts) {
    auto it = g.dH.find(c);
    for (int j = 0; j < dim; ++j)
      out.push_back(it == g.dH.end() ? 0.0 : it->second[static_cast<std::size_t>(j)]);
  }
  return out;
}

}  // namespace oracle
