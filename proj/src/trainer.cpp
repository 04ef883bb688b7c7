// SPDX-License-Identifier: Apache-2.0

#include "thrlab/trainer.hpp"

#include <cmath>

#include "thrlab/errors.hpp"
#include "thrlab/thr.hpp"

namespace thrlab {

namespace {

AdvantageTable base_advantages(const RunConfig& cfg, const Group& g) {
  switch (cfg.scheme) {
    case Scheme::kPassK:
      return passk_advantages(g, cfg.passk());
    case Scheme::kPassKMixed:
      return passk_mixed(g, cfg.passk());
    case Scheme::kStaticMixed:
      return static_mixed(g, cfg.passk());
    case Scheme::kPosOnly:
      return sign_mask(grpo_advantages(g), SignMode::kPosOnly);
    case Scheme::kNegOnly:
      return sign_mask(grpo_advantages(g), SignMode::kNegOnly);
    default:
      return grpo_advantages(g);
  }
}

bool uses_thr(Scheme s) { return s == Scheme::kThrOnly || s == Scheme::kThrP; }

}  // namespace

std::vector<ScoredGroup> score_batch(const RunConfig& cfg, const std::vector<Group>& groups,
                                     BatchScoreStats* stats) {
  const ThrConfig tcfg = cfg.thr();
  std::vector<ScoredGroup> out;
  out.reserve(groups.size());
  double tau = 0.0, fallback = 0.0, overlap = 0.0;
  std::size_t dominant = 0, tokens = 0;
  for (const Group& g : groups) {
    ScoredGroup sg{&g, base_advantages(cfg, g)};
    const ThrTable table = score_group(g, tcfg);
    Vec ent(g.num_tokens());
    for (std::size_t t = 0; t < ent.size(); ++t) ent[t] = g.flat_stats[t].dist.entropy;
    if (uses_thr(cfg.scheme)) sg.adv = reweight(sg.adv, table.thr, table.tau, tcfg, ent);
    tau += table.tau;
    fallback += table.used_fallback ? 1.0 : 0.0;
    for (bool d : table.dominant) dominant += d ? 1 : 0;
    tokens += g.num_tokens();
    const auto n = static_cast<std::size_t>(
        std::ceil(tcfg.entropy_top_frac * static_cast<double>(g.num_tokens())));
    overlap += entropy_thr_overlap(table.thr, ent, std::max<std::size_t>(n, 1));
    out.push_back(std::move(sg));
  }
  if (stats && !groups.empty()) {
    const auto ng = static_cast<double>(groups.size());
    stats->tau_mean = tau / ng;
    stats->fallback_fraction = fallback / ng;
    stats->dominant_fraction = static_cast<double>(dominant) / static_cast<double>(tokens);
    stats->overlap_mean = overlap / ng;
    stats->has_thr = true;
  }
  return out;
}

LossAndGrad objective_step(const RunConfig& cfg, const PolicyParams& params,
                           const PolicyParams& ref, std::span<const ScoredGroup> scored) {
  const ClipConfig clip = cfg.clip();
  if (cfg.scheme == Scheme::kCovKl)
    return covkl_baseline(params, ref, scored, cfg.covkl_top_frac, clip);
  const PolicyParams* kl_ref = cfg.kl_coef > 0.0 ? &ref : nullptr;
  if (cfg.objective == Objective::kGspoToken)
    return gspo_token_loss_and_grad(params, scored, clip, kl_ref);
  return grpo_loss_and_grad(params, scored, clip, kl_ref);
}

EvalStats evaluate(const RunConfig& cfg, const PolicyParams& params, int step) {
  const TaskSpec task = cfg.task();
  const std::vector<Question> questions = generate_dataset(task);
  EvalConfig ec;
  ec.samples = cfg.eval_samples;
  ec.k_list = cfg.eval_k;
  ec.temperature = cfg.temperature;
  ec.seed = cfg.seed;
  // same sampling stream at every eval step: curves differ only through params
  (void)step;
  ec.step = 0;
  return eval_suite(params, task, questions, ec);
}

void log_eval(MetricLog& log, int step, const EvalStats& stats) {
  log.add(step, "greedy_acc", stats.greedy_acc);
  for (const auto& [k, v] : stats.pass_at_k) log.add(step, "pass_at_k", v, k);
}

TrainResult train(const RunConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  const TaskSpec task = cfg.task();
  const std::vector<Question> questions = generate_dataset(task);
  TrainResult res{MetricLog{}, PolicyParams(cfg.vocab(), cfg.dim, cfg.init_scale, cfg.seed), {}};
  PolicyParams& params = res.params;
  const PolicyParams ref = params.snapshot();

  auto run_eval = [&](int step) {
    res.final_eval = evaluate(cfg, params, step);
    log_eval(res.log, step, res.final_eval);
  };
  run_eval(0);

  std::size_t cursor = 0;
  for (int step = 1; step <= cfg.steps; ++step) {
    const PolicyParams old = params.snapshot();
    DynamicSamplingConfig dcfg;
    dcfg.group_size = cfg.group_size;
    dcfg.batch_groups = cfg.groups_per_batch;
    dcfg.temperature = cfg.temperature;
    dcfg.max_len = cfg.max_len;
    dcfg.max_attempts = cfg.max_attempts;
    dcfg.seed = cfg.seed;
    dcfg.step = static_cast<uint64_t>(step);
    DynamicBatch batch;
    try {
      batch = dynamic_sample_batch(old, task, questions, dcfg, cursor);
    } catch (BatchStarvation& e) {
      e.set_step(step);
      throw;
    }
    cursor = batch.next_cursor;
    if (opts.rollouts) dump_rollouts(batch.groups, *opts.rollouts);

    BatchScoreStats bs;
    const std::vector<ScoredGroup> scored = score_batch(cfg, batch.groups, &bs);

    LossReport mean{};
    for (int u = 0; u < cfg.updates_per_batch; ++u) {
      LossAndGrad lg = objective_step(cfg, params, ref, scored);
      sgd_step(params, lg.grad, cfg.lr);
      mean.surrogate += lg.report.surrogate;
      mean.kl += lg.report.kl;
      mean.total += lg.report.total;
      mean.clipped_fraction += lg.report.clipped_fraction;
      mean.grad_norm += lg.report.grad_norm;
    }
    const double nu = cfg.updates_per_batch;

    double q = 0.0, ent = 0.0;
    std::size_t tokens = 0;
    for (const Group& g : batch.groups) {
      q += g.q;
      for (const TokenStats& s : g.flat_stats) ent += s.dist.entropy;
      tokens += g.num_tokens();
    }
    MetricLog& log = res.log;
    log.add(step, "batch_reward", q / static_cast<double>(batch.groups.size()));
    log.add(step, "attempts", batch.attempts);
    log.add(step, "token_entropy", ent / static_cast<double>(tokens));
    log.add(step, "loss", mean.total / nu);
    log.add(step, "surrogate", mean.surrogate / nu);
    log.add(step, "kl", mean.kl / nu);
    log.add(step, "clipped_fraction", mean.clipped_fraction / nu);
    log.add(step, "grad_norm", mean.grad_norm / nu);
    log.add(step, "tau", bs.tau_mean);
    log.add(step, "dominant_fraction", bs.dominant_fraction);
    log.add(step, "tau_fallback_fraction", bs.fallback_fraction);
    log.add(step, "thr_entropy_overlap", bs.overlap_mean);

    if (step == cfg.steps || (cfg.eval_every > 0 && step % cfg.eval_every == 0)) run_eval(step);
  }
  return res;
}

}  // namespace thrlab
