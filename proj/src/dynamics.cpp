// SPDX-License-Identifier: Apache-2.0

#include "thrlab/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "thrlab/advantage.hpp"
#include "thrlab/errors.hpp"
#include "thrlab/thr.hpp"

namespace thrlab {

double relative_error(double lhs, double rhs) {
  const double denom = std::max({std::abs(lhs), std::abs(rhs), 1e-12});
  return std::abs(lhs - rhs) / denom;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("loglog_slope needs two or more paired points");
  double mx = 0.0, my = 0.0;
  const auto n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

namespace {

// sum_{i correct} (1/|y_i|) ln pi(y_i | x)
double correct_loglik(const PolicyParams& params, const Group& g) {
  double f = 0.0;
  for (const Response& r : g.responses)
    if (r.reward)
      f += logprob_sequence(params, g.question.id, r.tokens, g.temperature) /
           static_cast<double>(r.size());
  return f;
}

// Readout gradient of the unclipped surrogate (1/Z) sum_t A_t * ratio_t at
// ratio 1, from the cached rollout statistics.
Matrix surrogate_readout_grad(const Group& g, const PolicyParams& params) {
  const AdvantageTable adv = grpo_advantages(g);
  Matrix dw(static_cast<std::size_t>(params.vocab_size()), static_cast<std::size_t>(params.dim()));
  const double norm = 1.0 / static_cast<double>(g.num_tokens());
  for (std::size_t t = 0; t < g.num_tokens(); ++t)
    add_outer(dw, adv.values[t] * norm / g.temperature, g.flat_stats[t].error,
              g.flat_stats[t].hidden);
  return dw;
}

double thr_reconstruction(const Group& g) {
  auto [qp, qm] = group_scales(g);
  const Vec thr = thr_group(g, gram_pair(g));
  double acc = 0.0;
  for (std::size_t t = 0; t < thr.size(); ++t) {
    const Response& owner = g.responses[static_cast<std::size_t>(g.flat_stats[t].response)];
    acc += (owner.reward ? qp : qm) * thr[t];
  }
  return acc / static_cast<double>(g.num_tokens());
}

double theorem1_lhs(const Group& g, const PolicyParams& params, const Matrix& dw, double base,
                    double step) {
  PolicyParams moved = params.snapshot();
  axpy(step, dw.data(), moved.readout().data());
  return (correct_loglik(moved, g) - base) / step;
}

}  // namespace

IdentityReport theorem1_check(const Group& group, const PolicyParams& params, double step) {
  group_scales(group);  // GroupDegenerate on q in {0, 1}
  const Matrix dw = surrogate_readout_grad(group, params);
  const double base = correct_loglik(params, group);
  IdentityReport rep;
  rep.step = step;
  rep.lhs = theorem1_lhs(group, params, dw, base, step);
  rep.rhs = thr_reconstruction(group);
  rep.rel_err = relative_error(rep.lhs, rep.rhs);
  return rep;
}

double theorem1_slope(const Group& group, const PolicyParams& params,
                      std::span<const double> steps) {
  group_scales(group);
  const Matrix dw = surrogate_readout_grad(group, params);
  const double base = correct_loglik(params, group);
  const double rhs = thr_reconstruction(group);
  std::vector<double> residual;
  for (double s : steps) residual.push_back(std::abs(theorem1_lhs(group, params, dw, base, s) - rhs));
  return loglog_slope(steps, residual);
}

Vec q_vector(std::span<const double> probs) {
  const double h = entropy_of(probs);
  if (!(h > 0.0)) throw ZeroEntropyContext("Q is undefined for a zero-entropy distribution");
  Vec q(probs.size(), 0.0);
  for (std::size_t v = 0; v < probs.size(); ++v)
    if (probs[v] > 0.0) q[v] = probs[v] * std::log(probs[v]) / h;
  return q;
}

EntropyProbe entropy_lemma_check(std::span<const double> probs, std::span<const double> dl) {
  if (probs.size() != dl.size()) throw std::invalid_argument("entropy probe: size mismatch");
  Vec l(probs.size());
  for (std::size_t v = 0; v < probs.size(); ++v) {
    if (!(probs[v] > 0.0)) throw std::invalid_argument("entropy probe needs positive probs");
    l[v] = std::log(probs[v]);
  }
  EntropyProbe probe;
  probe.dist = softmax_dist(l, 1.0);
  probe.logit_delta.assign(dl.begin(), dl.end());
  double e_xy = 0.0, e_x = 0.0, e_y = 0.0;
  for (std::size_t v = 0; v < probs.size(); ++v) {
    e_xy += probs[v] * l[v] * dl[v];
    e_x += probs[v] * l[v];
    e_y += probs[v] * dl[v];
  }
  probe.dh_pred = -(e_xy - e_x * e_y);
  Vec shifted(l);
  for (std::size_t v = 0; v < l.size(); ++v) shifted[v] += dl[v];
  probe.dh_actual = softmax_dist(shifted, 1.0).entropy - entropy_of(probs);
  if (entropy_of(probs) > 0.0) probe.q = q_vector(probs);
  return probe;
}

double entropy_residual_slope(std::span<const double> probs, std::span<const double> dl,
                              std::span<const double> scales) {
  std::vector<double> residual;
  for (double s : scales) {
    Vec scaled(dl.begin(), dl.end());
    for (double& x : scaled) x *= s;
    const EntropyProbe p = entropy_lemma_check(probs, scaled);
    residual.push_back(std::abs(p.dh_actual - p.dh_pred));
  }
  return loglog_slope(scales, residual);
}

IdentityReport cross_context_entropy_check(const PolicyParams& params, const ContextKey& ctx_o,
                                           const ContextKey& ctx_u, Token token_u, double step) {
  const Vec h_o = params.feature(ctx_o);
  const Vec h_u = params.feature(ctx_u);
  const TokenDist pi_o = softmax_dist(matvec(params.readout(), h_o), 1.0);
  const TokenDist pi_u = softmax_dist(matvec(params.readout(), h_u), 1.0);
  const Vec q = q_vector(pi_o.probs);

  Vec err_u(pi_u.probs.size());
  for (std::size_t v = 0; v < err_u.size(); ++v)
    err_u[v] = (static_cast<Token>(v) == token_u ? 1.0 : 0.0) - pi_u.probs[v];

  double align = 0.0;
  for (std::size_t v = 0; v < err_u.size(); ++v) align += (-q[v] - pi_o.probs[v]) * err_u[v];

  PolicyParams moved = params.snapshot();
  add_outer(moved.readout(), step, err_u, h_u);
  const TokenDist after = softmax_dist(matvec(moved.readout(), h_o), 1.0);

  IdentityReport rep;
  rep.step = step;
  rep.lhs = after.entropy - pi_o.entropy;
  rep.rhs = step * pi_o.entropy * align * dot(h_u, h_o);
  rep.rel_err = relative_error(rep.lhs, rep.rhs);
  return rep;
}

double q_alignment_cosine(std::span<const double> probs, std::size_t o) {
  const Vec q = q_vector(probs);
  Vec a(probs.size()), b(probs.size());
  for (std::size_t v = 0; v < probs.size(); ++v) {
    a[v] = (v == o ? 1.0 : 0.0) - probs[v];
    b[v] = q[v] + probs[v];
  }
  const double na = norm2(a), nb = norm2(b);
  if (na == 0.0 || nb == 0.0) throw DegenerateDistribution("cosine of a zero vector");
  return dot(a, b) / (na * nb);
}

Vec random_peaked_distribution(int vocab, double peak, Rng& rng) {
  if (vocab < 2) throw DegenerateDistribution("need at least two outcomes");
  if (!(peak < 1.0)) throw DegenerateDistribution("peak probability 1 gives zero vectors");
  if (!(peak > 1.0 / vocab))
    throw DegenerateDistribution("peak must exceed 1/V to be the argmax");
  const double rest = 1.0 - peak;
  Vec p(static_cast<std::size_t>(vocab));
  for (int attempt = 0; attempt < 10000; ++attempt) {
    double sum = 0.0;
    for (std::size_t v = 1; v < p.size(); ++v) {
      p[v] = uniform01(rng);
      sum += p[v];
    }
    if (sum <= 0.0) continue;
    double mx = 0.0;
    for (std::size_t v = 1; v < p.size(); ++v) {
      p[v] = rest * p[v] / sum;
      mx = std::max(mx, p[v]);
    }
    if (mx < peak) {
      p[0] = peak;
      return p;
    }
  }
  throw DegenerateDistribution("could not draw a tail below the peak");
}

std::vector<QAlignmentCell> q_alignment_sweep(std::span<const int> vocab_sizes,
                                              std::span<const double> peaks, int trials,
                                              uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("q_alignment_sweep needs trials >= 1");
  std::vector<QAlignmentCell> cells;
  for (int v : vocab_sizes) {
    for (double pk : peaks) {
      if (!(pk < 1.0)) throw DegenerateDistribution("peak probability 1 gives zero vectors");
      if (!(pk > 1.0 / v)) throw DegenerateDistribution("peak must exceed 1/V");
      cells.push_back({v, pk, 0.0, 0.0, trials});
    }
  }
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(cells.size()); ++ci) {
    QAlignmentCell& c = cells[static_cast<std::size_t>(ci)];
    Rng rng = substream(seed, {tag(Stream::kVerify), static_cast<uint64_t>(c.vocab),
                               static_cast<uint64_t>(std::llround(c.peak * 1e9))});
    double s = 0.0, s2 = 0.0;
    for (int t = 0; t < trials; ++t) {
      const Vec p = random_peaked_distribution(c.vocab, c.peak, rng);
      const double cos = q_alignment_cosine(p, 0);
      s += cos;
      s2 += cos * cos;
    }
    c.mean_cosine = s / trials;
    const double var = trials > 1 ? std::max(0.0, (s2 - s * s / trials) / (trials - 1)) : 0.0;
    c.std_error = std::sqrt(var / trials);
  }
  return cells;
}

}  // namespace thrlab
