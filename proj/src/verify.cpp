// SPDX-License-Identifier: Apache-2.0

#include "thrlab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "thrlab/advantage.hpp"
#include "thrlab/dynamics.hpp"
#include "thrlab/errors.hpp"
#include "thrlab/metrics.hpp"
#include "thrlab/rng.hpp"

namespace thrlab {

namespace {

void add_noise(Vec& v, double scale, Rng& rng) {
  std::normal_distribution<double> n(0.0, scale);
  for (double& x : v) x += n(rng);
}

uint64_t instance_seed(uint64_t seed, uint64_t suite_tag, uint64_t i) {
  return mix_keys(seed, {tag(Stream::kVerify), suite_tag, i});
}

}  // namespace

RandomInstance random_instance(uint64_t seed, const InstanceShape& shape) {
  Rng rng = substream(seed, {tag(Stream::kVerify)});
  Vocab vocab{shape.vocab, static_cast<Token>(shape.vocab - 1)};
  RandomInstance inst{PolicyParams(vocab, shape.dim, 0.5, seed), {}, {}};
  std::uniform_int_distribution<int> npos(1, shape.group_size - 1);
  for (int gi = 0; gi < shape.n_groups; ++gi) {
    std::vector<TokenSeq> seqs;
    for (int i = 0; i < shape.group_size; ++i)
      seqs.push_back(sample_response(inst.old, gi, shape.temperature, shape.max_len, rng));
    std::vector<int> rewards(static_cast<std::size_t>(shape.group_size), 0);
    std::fill_n(rewards.begin(), npos(rng), 1);
    std::shuffle(rewards.begin(), rewards.end(), rng);
    inst.groups.push_back(
        assemble_group(inst.old, Question{gi, 0}, std::move(seqs), rewards, shape.temperature));
  }
  inst.current = inst.old.snapshot();
  if (shape.perturb > 0.0) {
    std::normal_distribution<double> n(0.0, shape.perturb);
    Matrix& w = inst.current.readout();
    for (std::size_t r = 0; r < w.rows(); ++r)
      for (std::size_t c = 0; c < w.cols(); ++c) w(r, c) += n(rng);
    for (const ContextKey& ctx : touched_contexts(inst.groups))
      add_noise(inst.current.feature_mut(ctx), shape.perturb, rng);
  }
  return inst;
}

Group synthetic_group(int group_size, int n_pos) {
  const PolicyParams p(Vocab{2, 1}, 1, 0.5, 0);
  std::vector<TokenSeq> seqs(static_cast<std::size_t>(group_size), TokenSeq{1});
  std::vector<int> rewards(static_cast<std::size_t>(group_size), 0);
  for (int i = 0; i < n_pos && i < group_size; ++i) rewards[static_cast<std::size_t>(i)] = 1;
  return assemble_group(p, Question{0, 0}, std::move(seqs), rewards, 1.0);
}

PasskPair passk_direct(int group_size, int n_pos, int k) {
  const int n_neg = group_size - n_pos;
  const double b = static_cast<double>(binomial(n_neg, k)) /
                   static_cast<double>(binomial(group_size, k));
  const double mean = 1.0 - b;
  const double sigma = std::sqrt(mean * (1.0 - mean));
  if (sigma == 0.0) return {0.0, 0.0};
  const double miss = static_cast<double>(binomial(n_neg - 1, k - 1)) /
                      static_cast<double>(binomial(group_size - 1, k - 1));
  return {(1.0 - mean) / sigma, (1.0 - mean - miss) / sigma};
}

PasskPair passk_enumerate(int group_size, int n_pos, int k) {
  // Responses 0..n_pos-1 are correct. Walk all K-subsets as bitmasks.
  std::vector<uint32_t> subsets;
  std::vector<double> reward;
  for (uint32_t m = 0; m < (1u << group_size); ++m) {
    if (std::popcount(m) != k) continue;
    subsets.push_back(m);
    reward.push_back((m & ((1u << n_pos) - 1u)) ? 1.0 : 0.0);
  }
  double mean = 0.0;
  for (double r : reward) mean += r;
  mean /= static_cast<double>(reward.size());
  double var = 0.0;
  for (double r : reward) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / static_cast<double>(reward.size()));
  auto response_adv = [&](int idx) {
    if (sd == 0.0) return 0.0;
    double acc = 0.0;
    int count = 0;
    for (std::size_t s = 0; s < subsets.size(); ++s) {
      if (!(subsets[s] >> idx & 1u)) continue;
      acc += (reward[s] - mean) / sd;
      ++count;
    }
    return acc / count;
  };
  return {response_adv(0), n_pos < group_size ? response_adv(group_size - 1) : 0.0};
}

std::vector<ContextKey> touched_contexts(std::span<const Group> groups) {
  std::set<ContextKey> seen;
  for (const Group& g : groups)
    for (const Response& r : g.responses) {
      ContextKey ctx{g.question.id, {}};
      for (Token t : r.tokens) {
        seen.insert(ctx);
        ctx.prefix.push_back(t);
      }
    }
  return {seen.begin(), seen.end()};
}

double gradient_rel_error(const PolicyParams& at, const ParamGrad& analytic, const ValueFn& f,
                          std::span<const ContextKey> contexts, double h) {
  PolicyParams work = at.snapshot();
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  auto accumulate = [&](double& slot, double a) {
    const double saved = slot;
    slot = saved + h;
    const double up = f(work);
    slot = saved - h;
    const double down = f(work);
    slot = saved;
    const double num = (up - down) / (2.0 * h);
    diff2 += (a - num) * (a - num);
    a2 += a * a;
    n2 += num * num;
  };
  Matrix& w = work.readout();
  for (std::size_t r = 0; r < w.rows(); ++r)
    for (std::size_t c = 0; c < w.cols(); ++c) accumulate(w(r, c), analytic.dW(r, c));
  for (const ContextKey& ctx : contexts) {
    const auto it = analytic.dH.find(ctx);
    for (std::size_t j = 0; j < static_cast<std::size_t>(work.dim()); ++j) {
      const double a = it == analytic.dH.end() ? 0.0 : it->second[j];
      accumulate(work.feature_mut(ctx)[j], a);
    }
  }
  const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
  return denom == 0.0 ? 0.0 : std::sqrt(diff2) / denom;
}

double gspo_token_frozen_total(const PolicyParams& params, const PolicyParams& frozen,
                               std::span<const ScoredGroup> groups, const ClipConfig& cfg,
                               const PolicyParams* ref) {
  double surr = 0.0;
  for (const ScoredGroup& sg : groups) {
    const Group& g = *sg.group;
    double acc = 0.0;
    for (std::size_t i = 0; i < g.responses.size(); ++i) {
      const Response& r = g.responses[i];
      const double s = gspo_ratio(frozen, g, static_cast<int>(i));
      ContextKey ctx{g.question.id, {}};
      double racc = 0.0;
      for (std::size_t k = 0; k < r.tokens.size(); ++k) {
        const auto tok = static_cast<std::size_t>(r.tokens[k]);
        const double lp = log_softmax(logits(params, ctx), g.temperature)[tok];
        const double lp0 = log_softmax(logits(frozen, ctx), g.temperature)[tok];
        const double c = s * std::exp(lp - lp0);
        const double a = sg.adv.values[r.stats_begin + k];
        racc += std::min(c * a, std::clamp(c, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon) * a);
        ctx.prefix.push_back(r.tokens[k]);
      }
      acc += racc / static_cast<double>(r.size());
    }
    surr += acc / static_cast<double>(g.size());
  }
  if (!groups.empty()) surr /= static_cast<double>(groups.size());
  double total = -surr;
  if (ref) total += cfg.kl_coef * kl_penalty_and_grad(params, *ref, groups).value;
  return total;
}

ParamGrad gspo_token_full_derivative_grad(const PolicyParams& params,
                                          std::span<const ScoredGroup> groups,
                                          const ClipConfig& cfg) {
  ParamGrad out(params.vocab_size(), params.dim());
  const double inv_groups = groups.empty() ? 0.0 : 1.0 / static_cast<double>(groups.size());
  for (const ScoredGroup& sg : groups) {
    const Group& g = *sg.group;
    for (std::size_t i = 0; i < g.responses.size(); ++i) {
      const Response& r = g.responses[i];
      const double s = gspo_ratio(params, g, static_cast<int>(i));
      if (s < 1.0 - cfg.epsilon || s > 1.0 + cfg.epsilon) continue;
      const double len = static_cast<double>(r.size());
      double adv_sum = 0.0;
      for (std::size_t k = 0; k < r.tokens.size(); ++k) adv_sum += sg.adv.values[r.stats_begin + k];
      // d s_i = s_i * (1/|y|) sum_k' d log pi(y_ik')
      const double scale = -inv_groups / static_cast<double>(g.size()) / len * adv_sum * s / len;
      ContextKey ctx{g.question.id, {}};
      for (Token t : r.tokens) {
        const Vec h = params.feature(ctx);
        const Vec logp = log_softmax(matvec(params.readout(), h), g.temperature);
        Vec gl(logp.size());
        for (std::size_t v = 0; v < gl.size(); ++v)
          gl[v] = ((static_cast<Token>(v) == t ? 1.0 : 0.0) - std::exp(logp[v])) / g.temperature;
        out.add_logit_grad(params, ctx, h, gl, scale);
        ctx.prefix.push_back(t);
      }
    }
  }
  return out;
}

bool VerifyReport::passed() const {
  return std::all_of(rows.begin(), rows.end(), [](const VerifyRow& r) { return r.pass; });
}

double VerifyReport::max_error(const std::string& check) const {
  double m = 0.0;
  for (const VerifyRow& r : rows)
    if (r.check == check) m = std::max(m, r.error);
  return m;
}

std::vector<std::string> verify_suites() {
  return {"theorem1", "entropy", "cross_entropy", "qalign", "gradcheck", "passk_oracle"};
}

namespace {

constexpr double kTheoremStep = 1e-4;
constexpr double kTheoremTol = 1e-3;
constexpr double kGradTol = 1e-5;

void suite_theorem1(VerifyReport& rep, int n, uint64_t seed) {
  const double steps[] = {1e-3, 1e-4, 1e-5};
  for (int i = 0; i < n; ++i) {
    const uint64_t s = instance_seed(seed, 1, static_cast<uint64_t>(i));
    InstanceShape shape;
    shape.group_size = i % 2 == 0 ? 4 : 8;
    const RandomInstance inst = random_instance(s, shape);
    const Group& g = inst.groups[0];
    const IdentityReport r = theorem1_check(g, inst.old, kTheoremStep);
    rep.rows.push_back({"theorem1", s, r.lhs, r.rhs, r.rel_err, kTheoremStep, r.rel_err < kTheoremTol});
    const double slope = theorem1_slope(g, inst.old, steps);
    rep.rows.push_back({"theorem1_slope", s, slope, 1.0, std::abs(slope - 1.0), 0.0,
                        slope >= 0.9 && slope <= 1.1});
  }
}

void suite_entropy(VerifyReport& rep, int n, uint64_t seed) {
  {
    const double probs[] = {0.8, 0.2};
    const double dl[] = {0.01, 0.0};
    const EntropyProbe p = entropy_lemma_check(probs, dl);
    const double err = std::abs(p.dh_actual - p.dh_pred);
    rep.rows.push_back({"entropy_fixed", 0, p.dh_actual, p.dh_pred, err, 0.01, err < 5e-6});
  }
  const double scales[] = {1e-2, 1e-3, 1e-4};
  for (int i = 0; i < n; ++i) {
    const uint64_t s = instance_seed(seed, 2, static_cast<uint64_t>(i));
    Rng rng = substream(s, {});
    const int v = std::uniform_int_distribution<int>(2, 16)(rng);
    Vec probs(static_cast<std::size_t>(v));
    for (double& x : probs) x = 0.05 + uniform01(rng);
    const double z = std::accumulate(probs.begin(), probs.end(), 0.0);
    for (double& x : probs) x /= z;
    Vec dl(probs.size());
    std::normal_distribution<double> nd(0.0, 1.0);
    for (double& x : dl) x = nd(rng);
    const double slope = entropy_residual_slope(probs, dl, scales);
    rep.rows.push_back({"entropy_slope", s, slope, 2.0, std::abs(slope - 2.0), 0.0,
                        slope >= 1.9 && slope <= 2.1});
  }
}

void suite_cross_entropy(VerifyReport& rep, int n, uint64_t seed) {
  const double steps[] = {1e-2, 1e-3, 1e-4};
  for (int i = 0; i < n; ++i) {
    const uint64_t s = instance_seed(seed, 3, static_cast<uint64_t>(i));
    Rng rng = substream(s, {});
    const PolicyParams params(Vocab{8, 7}, 4, 0.5, s);
    std::uniform_int_distribution<int> tok(0, 7);
    const ContextKey o{0, {static_cast<Token>(tok(rng))}};
    const ContextKey u{1, {static_cast<Token>(tok(rng))}};
    const Token tu = static_cast<Token>(tok(rng));
    std::vector<double> residual;
    IdentityReport mid;
    for (double eta : steps) {
      const IdentityReport r = cross_context_entropy_check(params, o, u, tu, eta);
      residual.push_back(std::abs(r.lhs - r.rhs));
      if (eta == 1e-4) mid = r;
    }
    rep.rows.push_back({"cross_entropy", s, mid.lhs, mid.rhs, mid.rel_err, mid.step, true});
    const double slope = loglog_slope(steps, residual);
    rep.rows.push_back({"cross_entropy_slope", s, slope, 2.0, std::abs(slope - 2.0), 0.0,
                        slope >= 1.8 && slope <= 2.2});
  }
}

void suite_qalign(VerifyReport& rep, int n, uint64_t seed) {
  // V = 2: both vectors are multiples of (1, -1).
  Rng rng = substream(seed, {tag(Stream::kVerify), 4});
  for (int i = 0; i < 20; ++i) {
    const double p0 = 0.01 + 0.98 * uniform01(rng);
    const double probs[] = {p0, 1.0 - p0};
    for (std::size_t o = 0; o < 2; ++o) {
      const double c = q_alignment_cosine(probs, o);
      const double err = std::abs(std::abs(c) - 1.0);
      rep.rows.push_back({"qalign_v2", static_cast<uint64_t>(i), c, c > 0 ? 1.0 : -1.0, err, p0,
                          err < 1e-12});
    }
  }
  for (int v : {2, 10, 100, 1000}) {
    const Vec uni(static_cast<std::size_t>(v), 1.0 / v);
    const Vec q = q_vector(uni);
    double m = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) m = std::max(m, std::abs(q[j] + uni[j]));
    rep.rows.push_back({"qalign_uniform", static_cast<uint64_t>(v), m, 0.0, m, 0.0, m < 1e-10});
  }
  const int vocabs[] = {10, 100, 1000};
  const double peaks[] = {0.3, 0.5, 0.7, 0.9};
  const auto cells = q_alignment_sweep(vocabs, peaks, n, seed);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const QAlignmentCell& cell = cells[c];
    bool ok = true;
    double gap = 0.0;
    if (c > 0 && cells[c - 1].vocab == cell.vocab) {
      const QAlignmentCell& prev = cells[c - 1];
      const double se = std::hypot(prev.std_error, cell.std_error);
      gap = prev.mean_cosine - cell.mean_cosine;
      ok = gap <= 2.0 * se;
    }
    rep.rows.push_back({"qalign_mean_v" + std::to_string(cell.vocab), static_cast<uint64_t>(cell.trials),
                        cell.mean_cosine, cell.std_error, std::max(gap, 0.0), cell.peak, ok});
  }
}

AdvantageTable jittered_grpo(const Group& g, Rng& rng) {
  AdvantageTable t = grpo_advantages(g);
  for (double& a : t.values) a *= 0.5 + uniform01(rng);
  return t;
}

void suite_gradcheck(VerifyReport& rep, int n, uint64_t seed) {
  for (int i = 0; i < n; ++i) {
    const uint64_t s = instance_seed(seed, 5, static_cast<uint64_t>(i));
    InstanceShape shape;
    shape.n_groups = 2;
    shape.temperature = 0.7;
    // Small offsets keep every ratio well inside the clip range.
    shape.perturb = 0.02;
    const RandomInstance inst = random_instance(s, shape);
    Rng rng = substream(s, {1});
    std::vector<ScoredGroup> scored;
    for (const Group& g : inst.groups) scored.push_back({&g, jittered_grpo(g, rng)});
    const auto ctxs = touched_contexts(inst.groups);
    const PolicyParams ref = random_instance(s ^ 0x5bd1e995ULL, {}).old;
    ClipConfig cfg;
    cfg.kl_coef = 0.05;

    const LossAndGrad grpo = grpo_loss_and_grad(inst.current, scored, cfg, &ref);
    const double e_grpo = gradient_rel_error(
        inst.current, grpo.grad,
        [&](const PolicyParams& p) { return grpo_loss_and_grad(p, scored, cfg, &ref).report.total; },
        ctxs);
    rep.rows.push_back({"grad_grpo", s, grpo.report.total, grpo.report.clipped_fraction, e_grpo,
                        1e-5, e_grpo < kGradTol && grpo.report.clipped_fraction == 0.0});

    const LossAndGrad gspo = gspo_token_loss_and_grad(inst.current, scored, cfg, &ref);
    const double e_gspo = gradient_rel_error(
        inst.current, gspo.grad,
        [&](const PolicyParams& p) {
          return gspo_token_frozen_total(p, inst.current, scored, cfg, &ref);
        },
        ctxs);
    rep.rows.push_back({"grad_gspo_token", s, gspo.report.total, gspo.report.clipped_fraction,
                        e_gspo, 1e-5, e_gspo < kGradTol && gspo.report.clipped_fraction == 0.0});

    const KlResult kl = kl_penalty_and_grad(inst.current, ref, scored);
    const double e_kl = gradient_rel_error(
        inst.current, kl.grad,
        [&](const PolicyParams& p) { return kl_penalty_and_grad(p, ref, scored).value; }, ctxs);
    rep.rows.push_back({"grad_kl", s, kl.value, 0.0, e_kl, 1e-5, e_kl < kGradTol});

    // The mutant must be caught: its error has to exceed the tolerance.
    const ParamGrad mutant = gspo_token_full_derivative_grad(inst.current, scored, cfg);
    const double e_mut = gradient_rel_error(
        inst.current, mutant,
        [&](const PolicyParams& p) {
          return gspo_token_frozen_total(p, inst.current, scored, cfg, nullptr);
        },
        ctxs);
    rep.rows.push_back({"grad_gspo_mutant", s, e_mut, kGradTol, e_mut, 1e-5, e_mut > kGradTol});
  }
}

void suite_passk(VerifyReport& rep) {
  PasskConfig pc;
  for (int g = 2; g <= 10; ++g) {
    for (int np = 1; np <= g - 1; ++np) {
      const Group grp = synthetic_group(g, np);
      for (int k = 1; k <= g; ++k) {
        pc.k = k;
        const AdvantageTable t = passk_advantages(grp, pc);
        const double pos = t.values.front();
        const double neg = t.values.back();
        const PasskPair d = passk_direct(g, np, k);
        const PasskPair e = passk_enumerate(g, np, k);
        const uint64_t id = static_cast<uint64_t>(g * 10000 + np * 100 + k);
        auto row = [&](const char* name, double a, double b) {
          const double err = std::abs(a - b);
          rep.rows.push_back({name, id, a, b, err, 0.0, err <= 1e-12});
        };
        row("passk_pos_direct", pos, d.pos);
        row("passk_neg_direct", neg, d.neg);
        row("passk_pos_enum", pos, e.pos);
        row("passk_neg_enum", neg, e.neg);
        const double q = static_cast<double>(np) / g;
        row("passk_neg_relation", neg, -(q / (1.0 - q)) * pos);
      }
    }
  }
}

}  // namespace

VerifyReport run_verify(const std::string& suite, int n_instances, uint64_t seed) {
  if (n_instances < 1) throw ConfigError("verify needs n >= 1");
  VerifyReport rep;
  rep.suite = suite;
  if (suite == "theorem1")
    suite_theorem1(rep, n_instances, seed);
  else if (suite == "entropy")
    suite_entropy(rep, n_instances, seed);
  else if (suite == "cross_entropy")
    suite_cross_entropy(rep, n_instances, seed);
  else if (suite == "qalign")
    suite_qalign(rep, n_instances, seed);
  else if (suite == "gradcheck")
    suite_gradcheck(rep, n_instances, seed);
  else if (suite == "passk_oracle")
    suite_passk(rep);
  else
    throw ConfigError("unknown verify suite '" + suite + "'");
  return rep;
}

void write_verify_csv(const VerifyReport& report, std::ostream& out) {
  out << "check,instance,lhs,rhs,error,eta,pass\n";
  for (const VerifyRow& r : report.rows)
    out << r.check << ',' << r.instance << ',' << format_double(r.lhs) << ','
        << format_double(r.rhs) << ',' << format_double(r.error) << ',' << format_double(r.eta)
        << ',' << (r.pass ? 1 : 0) << '\n';
}

}  // namespace thrlab
