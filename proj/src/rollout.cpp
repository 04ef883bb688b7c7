// SPDX-License-Identifier: Apache-2.0

#include "thrlab/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "thrlab/errors.hpp"

namespace thrlab {

Group assemble_group(const PolicyParams& old, const Question& question,
                     std::vector<TokenSeq> sequences, std::span<const int> rewards,
                     double temperature) {
  if (sequences.size() != rewards.size())
    throw std::invalid_argument("assemble_group: sequences and rewards differ in length");
  Group g;
  g.question = question;
  g.temperature = temperature;
  const auto vsize = static_cast<std::size_t>(old.vocab_size());
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (sequences[i].empty()) throw std::invalid_argument("assemble_group: empty response");
    Response r;
    r.tokens = std::move(sequences[i]);
    r.reward = rewards[i] ? 1 : 0;
    r.stats_begin = g.flat_stats.size();
    ContextKey ctx{question.id, {}};
    for (std::size_t k = 0; k < r.tokens.size(); ++k) {
      const Token tok = r.tokens[k];
      TokenStats st;
      st.hidden = old.feature(ctx);
      const Vec lp = log_softmax(matvec(old.readout(), st.hidden), temperature);
      st.dist.probs.resize(vsize);
      double h = 0.0;
      for (std::size_t v = 0; v < vsize; ++v) {
        st.dist.probs[v] = std::exp(lp[v]);
        h -= st.dist.probs[v] * lp[v];
      }
      st.dist.entropy = std::max(h, 0.0);
      st.error.resize(vsize);
      for (std::size_t v = 0; v < vsize; ++v)
        st.error[v] = (static_cast<Token>(v) == tok ? 1.0 : 0.0) - st.dist.probs[v];
      st.token = tok;
      st.response = static_cast<int>(i);
      st.position = static_cast<int>(k);
      r.old_logprobs.push_back(lp.at(static_cast<std::size_t>(tok)));
      g.flat_stats.push_back(std::move(st));
      ctx.prefix.push_back(tok);
    }
    r.stats_end = g.flat_stats.size();
    (r.reward ? g.n_pos : g.n_neg) += 1;
    g.responses.push_back(std::move(r));
  }
  g.q = g.responses.empty() ? 0.0 : static_cast<double>(g.n_pos) / g.responses.size();
  return g;
}

TokenSeq sample_response(const PolicyParams& old, int question_id, double temperature,
                         int max_len, Rng& rng) {
  ContextKey ctx{question_id, {}};
  const Token eos = old.vocab().eos;
  while (static_cast<int>(ctx.prefix.size()) < max_len) {
    const TokenDist d = dist(old, ctx, temperature);
    const double u = uniform01(rng);
    double acc = 0.0;
    Token pick = static_cast<Token>(d.probs.size()) - 1;
    for (std::size_t v = 0; v < d.probs.size(); ++v) {
      acc += d.probs[v];
      if (u < acc) {
        pick = static_cast<Token>(v);
        break;
      }
    }
    ctx.prefix.push_back(pick);
    if (pick == eos) break;
  }
  return std::move(ctx.prefix);
}

Group sample_group(const PolicyParams& old, const TaskSpec& task, const Question& q, int G,
                   double temperature, int max_len, Rng& rng) {
  if (G < 2) throw std::invalid_argument("sample_group requires G >= 2");
  std::vector<TokenSeq> seqs;
  std::vector<int> rewards;
  seqs.reserve(static_cast<std::size_t>(G));
  for (int i = 0; i < G; ++i) {
    seqs.push_back(sample_response(old, q.id, temperature, max_len, rng));
    rewards.push_back(reward(task, q, seqs.back()));
  }
  return assemble_group(old, q, std::move(seqs), rewards, temperature);
}

namespace {

int resolved_max_attempts(const DynamicSamplingConfig& cfg) {
  return cfg.max_attempts > 0 ? cfg.max_attempts : 20 * cfg.batch_groups;
}

Group sample_attempt(const PolicyParams& old, const TaskSpec& task,
                     std::span<const Question> questions, const DynamicSamplingConfig& cfg,
                     std::size_t cursor, int attempt) {
  const Question& q = questions[(cursor + static_cast<std::size_t>(attempt)) % questions.size()];
  Rng rng = substream(cfg.seed, {tag(Stream::kRollout), cfg.step, static_cast<uint64_t>(attempt)});
  return sample_group(old, task, q, cfg.group_size, cfg.temperature, cfg.max_len, rng);
}

void check_batch_args(std::span<const Question> questions, const DynamicSamplingConfig& cfg) {
  if (cfg.batch_groups < 1) throw std::invalid_argument("batch_groups must be >= 1");
  if (questions.empty()) throw std::invalid_argument("dynamic sampling needs questions");
}

[[noreturn]] void starve(int kept, const DynamicSamplingConfig& cfg, int attempts) {
  throw BatchStarvation("dynamic sampling kept " + std::to_string(kept) + " of " +
                        std::to_string(cfg.batch_groups) + " groups after " +
                        std::to_string(attempts) + " attempts");
}

}  // namespace

DynamicBatch dynamic_sample_batch_serial(const PolicyParams& old, const TaskSpec& task,
                                         std::span<const Question> questions,
                                         const DynamicSamplingConfig& cfg, std::size_t cursor) {
  check_batch_args(questions, cfg);
  const int max_attempts = resolved_max_attempts(cfg);
  DynamicBatch batch;
  int a = 0;
  for (; a < max_attempts && static_cast<int>(batch.groups.size()) < cfg.batch_groups; ++a) {
    Group g = sample_attempt(old, task, questions, cfg, cursor, a);
    if (!g.degenerate()) batch.groups.push_back(std::move(g));
  }
  if (static_cast<int>(batch.groups.size()) < cfg.batch_groups)
    starve(static_cast<int>(batch.groups.size()), cfg, a);
  batch.attempts = a;
  batch.next_cursor = (cursor + static_cast<std::size_t>(a)) % questions.size();
  return batch;
}

DynamicBatch dynamic_sample_batch(const PolicyParams& old, const TaskSpec& task,
                                  std::span<const Question> questions,
                                  const DynamicSamplingConfig& cfg, std::size_t cursor) {
  check_batch_args(questions, cfg);
  const int max_attempts = resolved_max_attempts(cfg);
  DynamicBatch batch;
  int a0 = 0;
  int used = 0;
  while (a0 < max_attempts && static_cast<int>(batch.groups.size()) < cfg.batch_groups) {
    const int chunk = std::min(cfg.batch_groups, max_attempts - a0);
    std::vector<std::optional<Group>> slots(static_cast<std::size_t>(chunk));
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (int c = 0; c < chunk; ++c) {
      try {
        slots[static_cast<std::size_t>(c)] =
            sample_attempt(old, task, questions, cfg, cursor, a0 + c);
      } catch (...) {
#pragma omp critical(thrlab_rollout_error)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
    for (int c = 0; c < chunk && static_cast<int>(batch.groups.size()) < cfg.batch_groups; ++c) {
      used = a0 + c + 1;
      Group& g = *slots[static_cast<std::size_t>(c)];
      if (!g.degenerate()) batch.groups.push_back(std::move(g));
    }
    a0 += chunk;
  }
  if (static_cast<int>(batch.groups.size()) < cfg.batch_groups)
    starve(static_cast<int>(batch.groups.size()), cfg, used);
  batch.attempts = used;
  batch.next_cursor = (cursor + static_cast<std::size_t>(used)) % questions.size();
  return batch;
}

void dump_rollouts(std::span<const Group> groups, std::ostream& out) {
  for (const Group& g : groups) {
    for (const Response& r : g.responses) {
      nlohmann::ordered_json row;
      row["question"] = g.question.id;
      row["tokens"] = r.tokens;
      row["reward"] = r.reward;
      double sum = 0.0;
      for (double lp : r.old_logprobs) sum += lp;
      row["old_logprob"] = sum;
      out << row.dump() << '\n';
    }
  }
}

}  // namespace thrlab
