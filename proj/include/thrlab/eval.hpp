// SPDX-License-Identifier: Apache-2.0
//
// Exploitation (greedy accuracy) and exploration (unbiased Pass@K) metrics.

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "thrlab/policy.hpp"
#include "thrlab/tasks.hpp"

namespace thrlab {

struct EvalStats {
  int samples = 0;                  // M per question
  std::vector<int> correct;         // C per question
  std::map<int, double> pass_at_k;  // K -> mean over questions
  double greedy_acc = 0.0;
};

/// Argmax decoding until eos or max_len; ties go to the smaller token id.
TokenSeq greedy_decode(const PolicyParams& params, const Question& q, int max_len);

/// 1 - C(M-C, K) / C(M, K). Exact integer binomials for M <= 64, product
/// form otherwise. Throws BadArity unless 0 <= C <= M and 1 <= K <= M.
double pass_at_k(int m, int c, int k);

struct EvalConfig {
  int samples = 64;
  std::vector<int> k_list{1, 2, 4, 8, 16, 32, 64};
  double temperature = 1.0;
  uint64_t seed = 0;
  uint64_t step = 0;
};

/// Samples M responses per question (substream keyed by seed, step and
/// question id), averages Pass@K over questions, and scores greedy decoding.
EvalStats eval_suite(const PolicyParams& params, const TaskSpec& task,
                     std::span<const Question> questions, const EvalConfig& cfg);

double greedy_accuracy(const PolicyParams& params, const TaskSpec& task,
                       std::span<const Question> questions);

}  // namespace thrlab
