// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Prints one PASS/FAIL line per criterion followed by
// the supporting numbers. Exit status covers the hard criteria; the two
// directional training criteria are soft and only reported.
// Usage: acceptance [report-file]

#include <omp.h>

#include <boost/math/distributions/binomial.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "thrlab/errors.hpp"
#include "thrlab/eval.hpp"
#include "thrlab/sweep.hpp"
#include "thrlab/thr.hpp"
#include "thrlab/trainer.hpp"
#include "thrlab/verify.hpp"

using namespace thrlab;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  bool soft;
  std::function<Outcome()> run;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

Outcome theorem1() {
  const auto t0 = std::chrono::steady_clock::now();
  const VerifyReport rep = run_verify("theorem1", 100, 0);
  const double secs = seconds_since(t0);
  double slo = 1e9, shi = -1e9;
  std::size_t failed = 0;
  for (const VerifyRow& r : rep.rows) {
    failed += r.pass ? 0 : 1;
    if (r.check == "theorem1_slope") {
      slo = std::min(slo, r.lhs);
      shi = std::max(shi, r.lhs);
    }
  }
  return {failed == 0 && secs < 60.0,
          fmt("100 groups, max rel_err %.3g at eta=1e-4, slopes in [%.4f, %.4f], %zu failing rows, "
              "%.2fs",
              rep.max_error("theorem1"), slo, shi, failed, secs)};
}

Outcome thr_naive() {
  double worst = 0.0;
  for (uint64_t s = 0; s < 200; ++s) {
    Rng rng = substream(s, {99});
    InstanceShape shape;
    shape.vocab = 2 + static_cast<int>(rng() % 7);
    shape.dim = 1 + static_cast<int>(rng() % 4);
    shape.group_size = 2 + static_cast<int>(rng() % 3);
    shape.max_len = 1 + static_cast<int>(rng() % 4);
    const RandomInstance inst = random_instance(mix_keys(s, {99}), shape);
    const Group& g = inst.groups[0];
    const Vec fast = thr_group(g, gram_pair(g));
    const Vec naive = oracle::thr_naive(inst.old, g);
    for (std::size_t t = 0; t < fast.size(); ++t) worst = std::max(worst, std::abs(fast[t] - naive[t]));
  }
  return {worst <= 1e-10, fmt("200 groups, max |gram - naive| = %.3g", worst)};
}

Outcome passk_exact() {
  const VerifyReport rep = run_verify("passk_oracle", 1, 0);
  std::size_t cells = 0;
  for (const VerifyRow& r : rep.rows) cells += r.check == "passk_pos_direct" ? 1 : 0;
  return {rep.passed(),
          fmt("%zu (G,N+,K) cells; max err direct %.3g/%.3g, enumeration %.3g/%.3g, relation %.3g",
              cells, rep.max_error("passk_pos_direct"), rep.max_error("passk_neg_direct"),
              rep.max_error("passk_pos_enum"), rep.max_error("passk_neg_enum"),
              rep.max_error("passk_neg_relation"))};
}

// Two-sided exact binomial tail of the observed hit count under the exact value.
double binomial_two_sided(int hits, int n, double p) {
  if (p <= 0.0 || p >= 1.0) return hits == static_cast<int>(p * n) ? 1.0 : 0.0;
  const boost::math::binomial_distribution<double> b(n, p);
  const double lower = boost::math::cdf(b, hits);
  const double upper = hits == 0 ? 1.0 : boost::math::cdf(boost::math::complement(b, hits - 1));
  return std::min(1.0, 2.0 * std::min(lower, upper));
}

Outcome passk_estimator() {
  constexpr int kResamples = 10000;
  constexpr double kThreeSigma = 0.0026997960632601866;
  int cells = 0, outside_se = 0, rejected = 0;
  bool k1_exact = true;
  std::string misses;
  for (int m : {8, 64}) {
    for (int c = 0; c <= m; ++c) {
      if (pass_at_k(m, c, 1) != static_cast<double>(c) / m) k1_exact = false;
      for (int k = 1; k <= m; k *= 2) {
        Rng rng = substream(0, {static_cast<uint64_t>(m), static_cast<uint64_t>(c),
                                static_cast<uint64_t>(k)});
        const oracle::McEstimate mc = oracle::pass_at_k_mc(m, c, k, kResamples, rng);
        const double exact = pass_at_k(m, c, k);
        const double diff = std::abs(mc.mean - exact);
        const double se = std::sqrt(exact * (1.0 - exact) / kResamples);
        const int hits = static_cast<int>(std::lround(mc.mean * kResamples));
        const double pval = binomial_two_sided(hits, kResamples, exact);
        ++cells;
        const bool beyond = diff > 3.0 * se;
        outside_se += beyond;
        rejected += pval < kThreeSigma;
        if (beyond)
          misses += fmt("\n    M=%d C=%d K=%d: exact %.9f, mc %.6f, |d|=%.3g, 3se=%.3g, exact tail p=%.3g",
                        m, c, k, exact, mc.mean, diff, 3.0 * se, pval);
      }
    }
  }
  return {rejected == 0 && k1_exact,
          fmt("%d cells; exact binomial tail below the 3-sigma level in %d; |d| > 3 SE (normal "
              "approximation) in %d; K=1 exact: %s",
              cells, rejected, outside_se, k1_exact ? "yes" : "no") +
              misses};
}

Outcome gradients() {
  const VerifyReport rep = run_verify("gradcheck", 50, 0);
  std::size_t caught = 0, points = 0;
  double mut_min = 1e300;
  for (const VerifyRow& r : rep.rows)
    if (r.check == "grad_gspo_mutant") {
      ++points;
      caught += r.pass ? 1 : 0;
      mut_min = std::min(mut_min, r.error);
    }
  return {rep.passed() && caught == points,
          fmt("50 points: max rel err grpo %.3g, gspo_token %.3g, kl %.3g; mutant caught at %zu/%zu "
              "(min err %.3g)",
              rep.max_error("grad_grpo"), rep.max_error("grad_gspo_token"),
              rep.max_error("grad_kl"), caught, points, mut_min)};
}

Outcome entropy_lemma() {
  const VerifyReport rep = run_verify("entropy", 100, 0);
  double lo = 1e9, hi = -1e9, fixed = 0.0;
  for (const VerifyRow& r : rep.rows) {
    if (r.check == "entropy_slope") {
      lo = std::min(lo, r.lhs);
      hi = std::max(hi, r.lhs);
    } else {
      fixed = r.error;
    }
  }
  return {rep.passed(), fmt("100 random probes, slopes in [%.4f, %.4f]; (0.8,0.2) residual %.3g",
                            lo, hi, fixed)};
}

Outcome q_alignment() {
  const VerifyReport rep = run_verify("qalign", 1000, 0);
  std::string table;
  for (const VerifyRow& r : rep.rows)
    if (r.check.rfind("qalign_mean", 0) == 0)
      table += fmt(" %s@%.1f=%.4f+-%.4f", r.check.c_str() + 12, r.eta, r.lhs, r.rhs);
  return {rep.passed(), fmt("V=2 max | |cos|-1 | %.3g; uniform max |Q+pi| %.3g;%s",
                            rep.max_error("qalign_v2"), rep.max_error("qalign_uniform"),
                            table.c_str())};
}

struct ToySweep {
  SweepResult result;
  double secs = 0.0;
};

std::vector<uint64_t> ten_seeds() { return {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}; }

Outcome directional(ToySweep& sw) {
  SweepSpec spec;
  spec.base.scheme = Scheme::kThrP;
  spec.axis = "p";
  spec.values = {"-0.2", "0", "0.2"};
  spec.seeds = ten_seeds();
  const auto t0 = std::chrono::steady_clock::now();
  sw.result = run_sweep(spec);
  sw.secs = seconds_since(t0);
  int exploit = 0, explore = 0, both = 0;
  std::string table = "\n    seed  greedy(-0.2) greedy(0) greedy(+0.2)  pass@16(-0.2) pass@16(0) pass@16(+0.2)";
  for (uint64_t s : spec.seeds) {
    const double gm = sw.result.final_metric("-0.2", s, "greedy_acc");
    const double g0 = sw.result.final_metric("0", s, "greedy_acc");
    const double gp = sw.result.final_metric("0.2", s, "greedy_acc");
    const double pm = sw.result.final_metric("-0.2", s, "pass_at_k", 16);
    const double p0 = sw.result.final_metric("0", s, "pass_at_k", 16);
    const double pp = sw.result.final_metric("0.2", s, "pass_at_k", 16);
    const bool a = gp >= gm, b = pm >= pp;
    exploit += a;
    explore += b;
    both += a && b;
    table += fmt("\n    %4llu  %12.4f %9.4f %12.4f  %13.4f %10.4f %13.4f  %s%s",
                 static_cast<unsigned long long>(s), gm, g0, gp, pm, p0, pp, a ? "G" : "-",
                 b ? "P" : "-");
  }
  std::size_t failed_cells = 0;
  for (const SweepCell& c : sw.result.cells) failed_cells += c.ok ? 0 : 1;
  return {exploit >= 7 && explore >= 7 && failed_cells == 0 && sw.secs < 600.0,
          fmt("greedy(+0.2) >= greedy(-0.2) in %d/10 seeds, pass@16(-0.2) >= pass@16(+0.2) in "
              "%d/10, both in %d/10; %zu failed cells; %.1fs",
              exploit, explore, both, failed_cells, sw.secs) +
              table};
}

Outcome thr_parity() {
  SweepSpec spec;
  spec.axis = "scheme";
  spec.values = {"grpo", "thr_only"};
  spec.seeds = ten_seeds();
  const SweepResult r = run_sweep(spec);
  std::vector<double> grpo, thr;
  std::string table = "\n    seed  grpo     thr_only";
  for (uint64_t s : spec.seeds) {
    grpo.push_back(r.final_metric("grpo", s, "greedy_acc"));
    thr.push_back(r.final_metric("thr_only", s, "greedy_acc"));
    table += fmt("\n    %4llu  %.4f   %.4f", static_cast<unsigned long long>(s), grpo.back(),
                 thr.back());
  }
  const double mg = median(grpo), mt = median(thr);
  return {std::abs(mg - mt) <= 0.05 && !std::isnan(mg) && !std::isnan(mt),
          fmt("median final greedy: grpo %.4f, thr_only %.4f, gap %.1f pp", mg, mt,
              100.0 * std::abs(mg - mt)) +
              table};
}

Outcome degenerate() {
  // Early training on the toy task: plenty of all-wrong groups occur.
  RunConfig cfg;
  const TaskSpec task = cfg.task();
  const auto questions = generate_dataset(task);
  const PolicyParams policy(task.vocab, cfg.dim, cfg.init_scale, 0);
  int discarded = 0, kept = 0, bad = 0;
  std::size_t cursor = 0;
  for (uint64_t step = 1; step <= 50; ++step) {
    DynamicSamplingConfig d;
    d.step = step;
    const DynamicBatch b = dynamic_sample_batch(policy, task, questions, d, cursor);
    cursor = b.next_cursor;
    discarded += b.attempts - static_cast<int>(b.groups.size());
    kept += static_cast<int>(b.groups.size());
    for (const Group& g : b.groups) bad += g.degenerate() ? 1 : 0;
  }
  bool raised_adv = false, raised_obj = false, raised_thr = false;
  const Group all_right = synthetic_group(8, 8), all_wrong = synthetic_group(8, 0);
  try {
    grpo_advantages(all_right);
  } catch (const GroupDegenerate&) {
    raised_adv = true;
  }
  try {
    AdvantageTable zero;
    zero.values.assign(8, 0.0);
    const std::vector<ScoredGroup> v{{&all_wrong, zero}};
    grpo_loss_and_grad(PolicyParams(Vocab{2, 1}, 1, 0.5, 0), v, ClipConfig{});
  } catch (const GroupDegenerate&) {
    raised_obj = true;
  }
  try {
    score_group(all_wrong, ThrConfig{});
  } catch (const GroupDegenerate&) {
    raised_thr = true;
  }
  return {bad == 0 && discarded > 0 && raised_adv && raised_obj && raised_thr,
          fmt("50 batches: %d kept, %d discarded, %d degenerate kept; GroupDegenerate raised by "
              "advantages/objective/THR: %d/%d/%d",
              kept, discarded, bad, raised_adv, raised_obj, raised_thr)};
}

std::string jsonl(const MetricLog& log) {
  std::ostringstream out;
  log.write_jsonl(out);
  return out.str();
}

Outcome determinism(const ToySweep& sw) {
  RunConfig cfg;
  cfg.scheme = Scheme::kThrP;
  cfg.p = 0.2;
  cfg.seed = 3;
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const std::string serial = jsonl(train(cfg).log);
  omp_set_num_threads(std::max(saved, 4));
  const std::string par1 = jsonl(train(cfg).log);
  const std::string par2 = jsonl(train(cfg).log);
  omp_set_num_threads(saved);
  std::string cell;
  for (const SweepCell& c : sw.result.cells)
    if (c.value == "0.2" && c.seed == 3) cell = jsonl(c.log);
  const bool ok = serial == par1 && par1 == par2 && cell == par1;
  return {ok, fmt("%zu-byte metric stream; 1 thread vs %d threads %s, replay %s, sweep cell %s",
                  serial.size(), std::max(saved, 4), serial == par1 ? "identical" : "DIFFER",
                  par1 == par2 ? "identical" : "DIFFER", cell == par1 ? "identical" : "DIFFER")};
}

Outcome overlap() {
  RunConfig cfg;
  cfg.scheme = Scheme::kThrP;
  cfg.p = 0.2;
  cfg.eval_every = 5;
  const TrainResult r = train(cfg);
  std::vector<int> eval_steps, overlap_steps;
  bool in_range = true;
  for (const MetricRow& row : r.log.rows()) {
    if (row.key == "greedy_acc") eval_steps.push_back(row.step);
    if (row.key == "thr_entropy_overlap") {
      overlap_steps.push_back(row.step);
      in_range = in_range && row.value >= 0.0 && row.value <= 1.0;
    }
  }
  bool covered = true;
  for (int s : eval_steps)
    if (s > 0 && std::find(overlap_steps.begin(), overlap_steps.end(), s) == overlap_steps.end())
      covered = false;
  // full-size sets on real groups
  const TaskSpec task = cfg.task();
  const auto qs = generate_dataset(task);
  DynamicSamplingConfig d;
  const DynamicBatch b = dynamic_sample_batch(r.params, task, qs, d);
  bool full_one = true;
  for (const Group& g : b.groups) {
    const ThrTable t = score_group(g, ThrConfig{});
    Vec ent;
    for (const TokenStats& s : g.flat_stats) ent.push_back(s.dist.entropy);
    full_one = full_one && entropy_thr_overlap(t.thr, ent, g.num_tokens()) == 1.0;
  }
  const auto series = r.log.series("thr_entropy_overlap");
  return {covered && in_range && full_one && !series.empty(),
          fmt("logged at %zu steps (every eval step covered: %s), range [%.3f, %.3f], "
              "n = token count gives 1.0 on %zu groups: %s",
              series.size(), covered ? "yes" : "no",
              *std::min_element(series.begin(), series.end()),
              *std::max_element(series.begin(), series.end()), b.groups.size(),
              full_one ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  ToySweep sweep;
  const std::vector<Criterion> criteria = {
      {1, "theorem1 reconstruction", false, theorem1},
      {2, "THR naive-oracle equivalence", false, thr_naive},
      {3, "Pass@K advantage exactness", false, passk_exact},
      {4, "Pass@K estimator vs Monte Carlo", false, passk_estimator},
      {5, "gradient correctness and GSPO-token mutant", false, gradients},
      {6, "entropy lemma order", false, entropy_lemma},
      {7, "Q-alignment shape", false, q_alignment},
      {8, "directional exploration/exploitation (soft)", true, [&] { return directional(sweep); }},
      {9, "THR-only parity with GRPO (soft)", true, thr_parity},
      {10, "degenerate-group handling", false, degenerate},
      {11, "determinism", false, [&] { return determinism(sweep); }},
      {12, "overlap statistic", false, overlap},
  };
  std::ofstream file;
  if (argc > 1) file.open(argv[1]);
  const auto emit = [&](const std::string& line) {
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    if (file) file << line << '\n' << std::flush;
  };
  int hard_failed = 0, soft_failed = 0, soft = 0;
  for (const Criterion& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    soft += c.soft;
    (c.soft ? soft_failed : hard_failed) += o.pass ? 0 : 1;
    emit(fmt("%s criterion %d: %s", o.pass ? "PASS" : "FAIL", c.id, c.name));
    emit("    " + o.detail);
  }
  const int hard = static_cast<int>(criteria.size()) - soft;
  emit(fmt("hard criteria passed: %d/%d; soft criteria passed: %d/%d", hard - hard_failed, hard,
           soft - soft_failed, soft));
  return hard_failed ? 1 : 0;
}
