// SPDX-License-Identifier: Apache-2.0

#include "thrlab/eval.hpp"

#include <algorithm>
#include <string>

#include "thrlab/advantage.hpp"
#include "thrlab/errors.hpp"
#include "thrlab/rng.hpp"
#include "thrlab/rollout.hpp"

namespace thrlab {

TokenSeq greedy_decode(const PolicyParams& params, const Question& q, int max_len) {
  ContextKey ctx{q.id, {}};
  while (static_cast<int>(ctx.prefix.size()) < max_len) {
    const Vec l = logits(params, ctx);
    // max_element returns the first maximum, i.e. the smallest id on ties.
    const auto best = static_cast<Token>(std::max_element(l.begin(), l.end()) - l.begin());
    ctx.prefix.push_back(best);
    if (best == params.vocab().eos) break;
  }
  return std::move(ctx.prefix);
}

double pass_at_k(int m, int c, int k) {
  if (m < 1 || c < 0 || c > m)
    throw BadArity("pass_at_k needs 0 <= C <= M and M >= 1 (M=" + std::to_string(m) +
                   ", C=" + std::to_string(c) + ")");
  if (k < 1 || k > m)
    throw BadArity("pass_at_k needs 1 <= K <= M (K=" + std::to_string(k) + ", M=" +
                   std::to_string(m) + ")");
  if (k == 1) return static_cast<double>(c) / static_cast<double>(m);
  if (m - c < k) return 1.0;
  if (m <= 64)
    return 1.0 - static_cast<double>(binomial(m - c, k)) / static_cast<double>(binomial(m, k));
  // C(M-C, K) / C(M, K) = prod_{i=M-C+1}^{M} (1 - K / i)
  double ratio = 1.0;
  for (int i = m - c + 1; i <= m; ++i) ratio *= 1.0 - static_cast<double>(k) / i;
  return 1.0 - ratio;
}

double greedy_accuracy(const PolicyParams& params, const TaskSpec& task,
                       std::span<const Question> questions) {
  if (questions.empty()) return 0.0;
  int hits = 0;
  for (const Question& q : questions) hits += reward(task, q, greedy_decode(params, q, task.max_len));
  return static_cast<double>(hits) / static_cast<double>(questions.size());
}

EvalStats eval_suite(const PolicyParams& params, const TaskSpec& task,
                     std::span<const Question> questions, const EvalConfig& cfg) {
  for (int k : cfg.k_list)
    if (k < 1 || k > cfg.samples)
      throw BadArity("eval K=" + std::to_string(k) + " outside [1, M=" +
                     std::to_string(cfg.samples) + "]");
  EvalStats st;
  st.samples = cfg.samples;
  st.correct.assign(questions.size(), 0);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t qi = 0; qi < static_cast<std::ptrdiff_t>(questions.size()); ++qi) {
    const Question& q = questions[static_cast<std::size_t>(qi)];
    Rng rng = substream(cfg.seed, {tag(Stream::kEval), cfg.step, static_cast<uint64_t>(q.id)});
    int c = 0;
    for (int s = 0; s < cfg.samples; ++s)
      c += reward(task, q, sample_response(params, q.id, cfg.temperature, task.max_len, rng));
    st.correct[static_cast<std::size_t>(qi)] = c;
  }
  for (int k : cfg.k_list) {
    double acc = 0.0;
    for (int c : st.correct) acc += pass_at_k(cfg.samples, c, k);
    st.pass_at_k[k] = questions.empty() ? 0.0 : acc / static_cast<double>(questions.size());
  }
  st.greedy_acc = greedy_accuracy(params, task, questions);
  return st;
}

}  // namespace thrlab
