// SPDX-License-Identifier: Apache-2.0

#include "thrlab/objective.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <stdexcept>

#include "thrlab/errors.hpp"
#include "thrlab/thr.hpp"

namespace thrlab {

void ClipConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("clip epsilon must lie in (0, 1)");
  if (!(kl_coef >= 0.0)) throw ConfigError("kl_coef must be >= 0");
}

namespace {

struct TokenView {
  const Response& response;
  std::size_t response_index;
  std::size_t flat;
  std::size_t position;
  const ContextKey& ctx;
  const Vec& h;
  const Vec& logp;  // log-softmax at the group temperature
};

// Visits every rollout token with its context, current feature and current
// log-probabilities.
template <class Fn>
void for_each_token(const PolicyParams& params, const Group& g, Fn&& fn) {
  for (std::size_t i = 0; i < g.responses.size(); ++i) {
    const Response& r = g.responses[i];
    ContextKey ctx{g.question.id, {}};
    for (std::size_t k = 0; k < r.tokens.size(); ++k) {
      const Vec h = params.feature(ctx);
      const Vec logp = log_softmax(matvec(params.readout(), h), g.temperature);
      fn(TokenView{r, i, r.stats_begin + k, k, ctx, h, logp});
      ctx.prefix.push_back(r.tokens[k]);
    }
  }
}

// (e_token - pi) / T
Vec logprob_logit_grad(const Vec& logp, Token token, double temperature) {
  Vec g(logp.size());
  for (std::size_t v = 0; v < logp.size(); ++v)
    g[v] = ((static_cast<Token>(v) == token ? 1.0 : 0.0) - std::exp(logp[v])) / temperature;
  return g;
}

void check_group(const ScoredGroup& sg) {
  if (!sg.group) throw std::invalid_argument("scored group without a group");
  if (sg.group->degenerate())
    throw GroupDegenerate("objective received a zero-variance group for question " +
                          std::to_string(sg.group->question.id));
  if (sg.adv.values.size() != sg.group->num_tokens())
    throw std::invalid_argument("advantage table not aligned with group tokens");
}

struct GroupTerm {
  double surrogate = 0.0;
  double kl = 0.0;
  std::size_t tokens = 0;
  std::size_t clipped = 0;
  ParamGrad grad;  // gradient of (-surrogate + kl_coef * kl), already /n_groups
};

// Evaluates fn(group_index) -> GroupTerm in parallel and reduces in order.
template <class Fn>
LossAndGrad reduce_groups(const PolicyParams& params, std::span<const ScoredGroup> groups,
                          const ClipConfig& cfg, Fn&& fn) {
  cfg.validate();
  const std::size_t n = groups.size();
  std::vector<GroupTerm> terms(n);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t gi = 0; gi < static_cast<std::ptrdiff_t>(n); ++gi) {
    try {
      terms[static_cast<std::size_t>(gi)] = fn(static_cast<std::size_t>(gi));
    } catch (...) {
#pragma omp critical(thrlab_objective_error)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  LossAndGrad out;
  out.grad = ParamGrad(params.vocab_size(), params.dim());
  std::size_t tokens = 0;
  std::size_t clipped = 0;
  for (const GroupTerm& t : terms) {
    out.report.surrogate += t.surrogate;
    out.report.kl += t.kl;
    tokens += t.tokens;
    clipped += t.clipped;
    out.grad.add(t.grad);
  }
  if (n > 0) {
    out.report.surrogate /= static_cast<double>(n);
    out.report.kl /= static_cast<double>(n);
  }
  out.report.total = -out.report.surrogate + cfg.kl_coef * out.report.kl;
  out.report.clipped_fraction = tokens ? static_cast<double>(clipped) / tokens : 0.0;
  out.report.grad_norm = out.grad.norm();
  return out;
}

// KL(pi || ref) at one context and its logit gradient (pre-temperature).
double context_kl(const Vec& logp, const Vec& ref_logp, double temperature, Vec* g_logits) {
  double kl = 0.0;
  for (std::size_t v = 0; v < logp.size(); ++v) kl += std::exp(logp[v]) * (logp[v] - ref_logp[v]);
  if (g_logits) {
    g_logits->resize(logp.size());
    for (std::size_t v = 0; v < logp.size(); ++v)
      (*g_logits)[v] = std::exp(logp[v]) * ((logp[v] - ref_logp[v]) - kl) / temperature;
  }
  return kl;
}

// Adds the KL over the tokens accepted by `keep` to `term`, scaled by
// 1/(Z * n_groups); gradient scaled additionally by kl_coef.
template <class Keep>
void accumulate_kl(const PolicyParams& params, const PolicyParams& ref, const Group& g,
                   double norm, double grad_scale, GroupTerm& term, Keep&& keep) {
  for_each_token(params, g, [&](const TokenView& tv) {
    if (!keep(tv.flat)) return;
    const Vec ref_logp = log_softmax(matvec(ref.readout(), ref.feature(tv.ctx)), g.temperature);
    Vec gl;
    const double kl = context_kl(tv.logp, ref_logp, g.temperature, &gl);
    term.kl += kl * norm;
    term.grad.add_logit_grad(params, tv.ctx, tv.h, gl, grad_scale * norm);
  });
}

double clip(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

// min(ratio * A, clip(ratio) * A); returns true when the clipped constant
// branch is strictly smaller, i.e. the token carries no gradient.
bool clipped_term(double ratio, double adv, double eps, double* term) {
  const double unclipped = ratio * adv;
  const double clipped = clip(ratio, 1.0 - eps, 1.0 + eps) * adv;
  if (clipped < unclipped) {
    *term = clipped;
    return true;
  }
  *term = unclipped;
  return false;
}

}  // namespace

LossAndGrad grpo_loss_and_grad(const PolicyParams& params, std::span<const ScoredGroup> groups,
                               const ClipConfig& cfg, const PolicyParams* ref) {
  const double inv_groups = groups.empty() ? 0.0 : 1.0 / static_cast<double>(groups.size());
  return reduce_groups(params, groups, cfg, [&](std::size_t gi) {
    const ScoredGroup& sg = groups[gi];
    check_group(sg);
    const Group& g = *sg.group;
    GroupTerm term;
    term.grad = ParamGrad(params.vocab_size(), params.dim());
    const double norm = 1.0 / static_cast<double>(g.num_tokens());
    for_each_token(params, g, [&](const TokenView& tv) {
      const Token tok = tv.response.tokens[tv.position];
      const double lp = tv.logp[static_cast<std::size_t>(tok)];
      const double ratio = std::exp(lp - tv.response.old_logprobs[tv.position]);
      const double adv = sg.adv.values[tv.flat];
      double value = 0.0;
      ++term.tokens;
      if (clipped_term(ratio, adv, cfg.epsilon, &value)) {
        ++term.clipped;
      } else if (adv != 0.0) {
        const Vec gl = logprob_logit_grad(tv.logp, tok, g.temperature);
        term.grad.add_logit_grad(params, tv.ctx, tv.h, gl, -adv * ratio * norm * inv_groups);
      }
      term.surrogate += value * norm;
    });
    if (ref) accumulate_kl(params, *ref, g, norm, cfg.kl_coef * inv_groups, term,
                           [](std::size_t) { return true; });
    return term;
  });
}

double gspo_ratio(const PolicyParams& params, const Group& group, int response) {
  const Response& r = group.responses.at(static_cast<std::size_t>(response));
  ContextKey ctx{group.question.id, {}};
  double acc = 0.0;
  for (std::size_t k = 0; k < r.tokens.size(); ++k) {
    const Vec logp = log_softmax(logits(params, ctx), group.temperature);
    acc += logp[static_cast<std::size_t>(r.tokens[k])] - r.old_logprobs[k];
    ctx.prefix.push_back(r.tokens[k]);
  }
  return std::exp(acc / static_cast<double>(r.tokens.size()));
}

LossAndGrad gspo_token_loss_and_grad(const PolicyParams& params,
                                     std::span<const ScoredGroup> groups, const ClipConfig& cfg,
                                     const PolicyParams* ref) {
  const double inv_groups = groups.empty() ? 0.0 : 1.0 / static_cast<double>(groups.size());
  return reduce_groups(params, groups, cfg, [&](std::size_t gi) {
    const ScoredGroup& sg = groups[gi];
    check_group(sg);
    const Group& g = *sg.group;
    GroupTerm term;
    term.grad = ParamGrad(params.vocab_size(), params.dim());
    Vec seq_ratio(g.responses.size());
    for (std::size_t i = 0; i < g.responses.size(); ++i)
      seq_ratio[i] = gspo_ratio(params, g, static_cast<int>(i));
    const double inv_g = 1.0 / static_cast<double>(g.size());
    for_each_token(params, g, [&](const TokenView& tv) {
      const Token tok = tv.response.tokens[tv.position];
      // s_ik = sg[s_i] * pi / sg[pi]: numerically s_i.
      const double ratio = seq_ratio[tv.response_index];
      const double adv = sg.adv.values[tv.flat];
      const double w = inv_g / static_cast<double>(tv.response.size());
      double value = 0.0;
      ++term.tokens;
      if (clipped_term(ratio, adv, cfg.epsilon, &value)) {
        ++term.clipped;
      } else if (adv != 0.0) {
        const Vec gl = logprob_logit_grad(tv.logp, tok, g.temperature);
        term.grad.add_logit_grad(params, tv.ctx, tv.h, gl, -adv * ratio * w * inv_groups);
      }
      term.surrogate += value * w;
    });
    if (ref) accumulate_kl(params, *ref, g, 1.0 / static_cast<double>(g.num_tokens()),
                           cfg.kl_coef * inv_groups, term, [](std::size_t) { return true; });
    return term;
  });
}

double gspo_sequence_objective(const PolicyParams& params, std::span<const ScoredGroup> groups,
                               const ClipConfig& cfg) {
  cfg.validate();
  double total = 0.0;
  for (const ScoredGroup& sg : groups) {
    check_group(sg);
    const Group& g = *sg.group;
    double acc = 0.0;
    for (std::size_t i = 0; i < g.responses.size(); ++i) {
      const Response& r = g.responses[i];
      const double adv = sg.adv.values[r.stats_begin];
      for (std::size_t s = r.stats_begin; s < r.stats_end; ++s)
        if (sg.adv.values[s] != adv)
          throw std::invalid_argument("sequence-level GSPO needs response-constant advantages");
      double value = 0.0;
      clipped_term(gspo_ratio(params, g, static_cast<int>(i)), adv, cfg.epsilon, &value);
      acc += value;
    }
    total += acc / static_cast<double>(g.size());
  }
  return groups.empty() ? 0.0 : total / static_cast<double>(groups.size());
}

KlResult kl_penalty_subset(const PolicyParams& params, const PolicyParams& ref,
                           std::span<const ScoredGroup> groups,
                           std::span<const std::vector<std::size_t>> selected) {
  if (selected.size() != groups.size())
    throw std::invalid_argument("kl_penalty_subset: one selection per group required");
  ClipConfig unit;
  unit.kl_coef = 1.0;
  const double inv_groups = groups.empty() ? 0.0 : 1.0 / static_cast<double>(groups.size());
  LossAndGrad lg = reduce_groups(params, groups, unit, [&](std::size_t gi) {
    const Group& g = *groups[gi].group;
    std::vector<bool> keep(g.num_tokens(), false);
    for (std::size_t t : selected[gi]) keep.at(t) = true;
    GroupTerm term;
    term.grad = ParamGrad(params.vocab_size(), params.dim());
    accumulate_kl(params, ref, g, 1.0 / static_cast<double>(g.num_tokens()), inv_groups, term,
                  [&](std::size_t flat) { return keep[flat]; });
    return term;
  });
  return {lg.report.kl, std::move(lg.grad)};
}

KlResult kl_penalty_and_grad(const PolicyParams& params, const PolicyParams& ref,
                             std::span<const ScoredGroup> groups) {
  std::vector<std::vector<std::size_t>> all(groups.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    all[gi].resize(groups[gi].group->num_tokens());
    for (std::size_t t = 0; t < all[gi].size(); ++t) all[gi][t] = t;
  }
  return kl_penalty_subset(params, ref, groups, all);
}

CovKlSelection covkl_select(const PolicyParams& params, std::span<const ScoredGroup> groups,
                            double top_frac, const ClipConfig& cfg) {
  if (!(top_frac > 0.0 && top_frac <= 1.0)) throw ConfigError("top_frac must lie in (0, 1]");
  // Ascent direction of the surrogate: minus the gradient of -surrogate.
  const LossAndGrad base = grpo_loss_and_grad(params, groups, cfg, nullptr);
  const ParamGrad& desc = base.grad;
  CovKlSelection sel;
  sel.covariance.resize(groups.size());
  sel.selected.resize(groups.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const Group& g = *groups[gi].group;
    Vec& cov = sel.covariance[gi];
    cov.assign(g.num_tokens(), 0.0);
    for_each_token(params, g, [&](const TokenView& tv) {
      // dl = dW h + W dh for the ascent step (negated descent gradient).
      Vec dl = matvec(desc.dW, tv.h);
      if (auto it = desc.dH.find(tv.ctx); it != desc.dH.end()) {
        const Vec wdh = matvec(params.readout(), it->second);
        for (std::size_t v = 0; v < dl.size(); ++v) dl[v] += wdh[v];
      }
      for (double& x : dl) x = -x;
      double e_xy = 0.0, e_x = 0.0, e_y = 0.0;
      for (std::size_t v = 0; v < dl.size(); ++v) {
        const double p = std::exp(tv.logp[v]);
        e_xy += p * tv.logp[v] * dl[v];
        e_x += p * tv.logp[v];
        e_y += p * dl[v];
      }
      cov[tv.flat] = e_xy - e_x * e_y;
    });
    const auto count = static_cast<std::size_t>(
        std::ceil(top_frac * static_cast<double>(g.num_tokens()) - 1e-12));
    sel.selected[gi] = top_indices(cov, std::max<std::size_t>(count, 1));
    std::sort(sel.selected[gi].begin(), sel.selected[gi].end());
  }
  return sel;
}

LossAndGrad covkl_baseline(const PolicyParams& params, const PolicyParams& ref,
                           std::span<const ScoredGroup> groups, double top_frac,
                           const ClipConfig& cfg) {
  const CovKlSelection sel = covkl_select(params, groups, top_frac, cfg);
  LossAndGrad out = grpo_loss_and_grad(params, groups, cfg, nullptr);
  KlResult kl = kl_penalty_subset(params, ref, groups, sel.selected);
  out.report.kl = kl.value;
  out.report.total = -out.report.surrogate + cfg.kl_coef * kl.value;
  out.grad.add(kl.grad, cfg.kl_coef);
  out.report.grad_norm = out.grad.norm();
  return out;
}

}  // namespace thrlab
