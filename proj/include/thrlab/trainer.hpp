// SPDX-License-Identifier: Apache-2.0
//
// Training loop: dynamic sampling from a frozen snapshot, advantage shaping,
// several clipped updates per batch, periodic evaluation.

#pragma once

#include <ostream>
#include <vector>

#include "thrlab/config.hpp"
#include "thrlab/eval.hpp"
#include "thrlab/metrics.hpp"
#include "thrlab/objective.hpp"
#include "thrlab/policy.hpp"
#include "thrlab/rollout.hpp"

namespace thrlab {

struct BatchScoreStats {
  double tau_mean = 0.0;
  double dominant_fraction = 0.0;
  double fallback_fraction = 0.0;  // groups scored with the |THR| mean threshold
  double overlap_mean = 0.0;       // THR / entropy top-n overlap
  bool has_thr = false;
};

/// Advantages for every group of a batch under the configured scheme. THR
/// statistics are computed for every scheme so they can be logged.
std::vector<ScoredGroup> score_batch(const RunConfig& cfg, const std::vector<Group>& groups,
                                     BatchScoreStats* stats = nullptr);

/// One objective evaluation under the configured objective and scheme.
LossAndGrad objective_step(const RunConfig& cfg, const PolicyParams& params,
                           const PolicyParams& ref, std::span<const ScoredGroup> scored);

struct TrainOptions {
  std::ostream* rollouts = nullptr;  // JSONL dump of every sampled batch
};

struct TrainResult {
  MetricLog log;
  PolicyParams params;
  EvalStats final_eval;
};

/// Runs cfg.steps training steps. Throws BatchStarvation (with the failing
/// step) if dynamic sampling cannot fill a batch.
TrainResult train(const RunConfig& cfg, const TrainOptions& opts = {});

/// Evaluation of `params` under cfg's eval settings. Every step reuses the
/// same sampling substream; `step` only labels the rows.
EvalStats evaluate(const RunConfig& cfg, const PolicyParams& params, int step);

void log_eval(MetricLog& log, int step, const EvalStats& stats);

}  // namespace thrlab
