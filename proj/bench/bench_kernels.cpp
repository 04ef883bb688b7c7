// SPDX-License-Identifier: Apache-2.0
//
// Serial reference vs OpenMP kernels: THR Gram/score on a large group and
// dynamic batch sampling. Also checks the two paths agree bit for bit.
//
// usage: bench_kernels [reps]

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>

#include "thrlab/rollout.hpp"
#include "thrlab/tasks.hpp"
#include "thrlab/thr.hpp"
#include "thrlab/verify.hpp"

using namespace thrlab;

namespace {

double best_ms(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void report(const char* name, double serial, double parallel, bool same) {
  std::printf("%-22s serial %9.3f ms  openmp %9.3f ms  speedup %5.2fx  %s\n", name, serial,
              parallel, serial / parallel, same ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 5;
  std::printf("threads: %d\n", omp_get_max_threads());

  InstanceShape shape;
  shape.vocab = 64;
  shape.dim = 32;
  shape.group_size = 64;
  shape.max_len = 24;
  const RandomInstance inst = random_instance(7, shape);
  const Group& g = inst.groups[0];
  std::printf("group tokens: %zu\n", g.num_tokens());

  GramPair gs, gp;
  const double t_gs = best_ms(reps, [&] { gs = serial::gram_pair(g); });
  const double t_gp = best_ms(reps, [&] { gp = gram_pair(g); });
  report("gram_pair", t_gs, t_gp, gs.errors == gp.errors && gs.hidden == gp.hidden);

  Vec ts, tp;
  const double t_ts = best_ms(reps, [&] { ts = serial::thr_group(g, gs); });
  const double t_tp = best_ms(reps, [&] { tp = thr_group(g, gp); });
  report("thr_group", t_ts, t_tp, ts == tp);

  TaskSpec task;
  task.vocab = Vocab{12, 11};
  task.n_questions = 256;
  const auto questions = generate_dataset(task);
  const PolicyParams policy(task.vocab, 8, 0.5, 3);
  DynamicSamplingConfig dcfg;
  dcfg.batch_groups = 64;
  dcfg.group_size = 16;
  DynamicBatch bs, bp;
  const double t_ds = best_ms(reps, [&] { bs = dynamic_sample_batch_serial(policy, task, questions, dcfg); });
  const double t_dp = best_ms(reps, [&] { bp = dynamic_sample_batch(policy, task, questions, dcfg); });
  bool same = bs.attempts == bp.attempts && bs.groups.size() == bp.groups.size();
  for (std::size_t i = 0; same && i < bs.groups.size(); ++i)
    for (std::size_t r = 0; same && r < bs.groups[i].responses.size(); ++r)
      same = bs.groups[i].responses[r].tokens == bp.groups[i].responses[r].tokens &&
             bs.groups[i].responses[r].old_logprobs == bp.groups[i].responses[r].old_logprobs;
  report("dynamic_sample_batch", t_ds, t_dp, same);
  return 0;
}
