// SPDX-License-Identifier: Apache-2.0
//
// Group sampling from the frozen old policy, dynamic sampling, and the
// per-token statistics (distribution, prediction error, hidden feature)
// cached at rollout time for THR scoring.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "thrlab/policy.hpp"
#include "thrlab/rng.hpp"
#include "thrlab/tasks.hpp"

namespace thrlab {

struct TokenStats {
  TokenDist dist;  // old policy at the sampling temperature
  Vec error;       // e_token - dist.probs
  Vec hidden;      // h_ctx
  Token token = 0;
  int response = 0;
  int position = 0;
};

struct Response {
  TokenSeq tokens;
  int reward = 0;
  Vec old_logprobs;
  std::size_t stats_begin = 0;  // [stats_begin, stats_end) in Group::flat_stats
  std::size_t stats_end = 0;

  std::size_t size() const { return tokens.size(); }
};

struct Group {
  Question question;
  std::vector<Response> responses;
  std::vector<TokenStats> flat_stats;
  double q = 0.0;  // N+ / G
  int n_pos = 0;
  int n_neg = 0;
  double temperature = 1.0;

  int size() const { return static_cast<int>(responses.size()); }
  /// Z = sum_i |y_i|.
  std::size_t num_tokens() const { return flat_stats.size(); }
  bool degenerate() const { return n_pos == 0 || n_neg == 0; }
};

/// Builds a group from explicit token sequences and rewards, filling the
/// old-policy statistics. Sequences must be nonempty.
Group assemble_group(const PolicyParams& old, const Question& question,
                     std::vector<TokenSeq> sequences, std::span<const int> rewards,
                     double temperature);

/// One response sampled token by token until eos or max_len.
TokenSeq sample_response(const PolicyParams& old, int question_id, double temperature,
                         int max_len, Rng& rng);

/// G responses scored with the task checker. Requires G >= 2.
Group sample_group(const PolicyParams& old, const TaskSpec& task, const Question& q, int G,
                   double temperature, int max_len, Rng& rng);

struct DynamicSamplingConfig {
  int group_size = 8;
  int batch_groups = 8;
  double temperature = 1.0;
  int max_len = 5;
  int max_attempts = 0;  // 0 means 20 * batch_groups
  uint64_t seed = 0;
  uint64_t step = 0;
};

struct DynamicBatch {
  std::vector<Group> groups;
  int attempts = 0;         // candidate groups consumed
  std::size_t next_cursor = 0;  // dataset position for the next call
};

/// Samples groups for questions[cursor], questions[cursor+1], ... (cycling)
/// and keeps those with 0 < q < 1 until batch_groups are collected. Attempt a
/// draws from the substream (seed, step, a), so the kept batch does not
/// depend on how many threads sample in parallel. Throws BatchStarvation
/// when max_attempts candidates yield too few usable groups.
DynamicBatch dynamic_sample_batch(const PolicyParams& old, const TaskSpec& task,
                                  std::span<const Question> questions,
                                  const DynamicSamplingConfig& cfg, std::size_t cursor = 0);

/// Serial reference for dynamic_sample_batch.
DynamicBatch dynamic_sample_batch_serial(const PolicyParams& old, const TaskSpec& task,
                                         std::span<const Question> questions,
                                         const DynamicSamplingConfig& cfg,
                                         std::size_t cursor = 0);

/// One JSON object per response: question id, tokens, reward, old logprob sum.
void dump_rollouts(std::span<const Group> groups, std::ostream& out);

}  // namespace thrlab
