// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "oracles.hpp"
#include "thrlab/errors.hpp"
#include "thrlab/policy.hpp"
#include "thrlab/verify.hpp"

using namespace thrlab;

namespace {

PolicyParams small(uint64_t seed = 1, int v = 6, int d = 3) {
  return PolicyParams(Vocab{v, static_cast<Token>(v - 1)}, d, 0.5, seed);
}

}  // namespace

TEST(Policy, ZeroReadoutGivesZeroLogits) {
  PolicyParams p = small();
  for (double& w : p.readout().data()) w = 0.0;
  for (double l : logits(p, ContextKey{3, {1, 2}})) EXPECT_EQ(l, 0.0);
}

TEST(Policy, HandComputedLogits) {
  PolicyParams p(Vocab{4, 3}, 2, 0.5, 0);
  Matrix& w = p.readout();
  for (double& x : w.data()) x = 0.0;
  w(0, 0) = 1.0;
  w(1, 1) = 1.0;
  const ContextKey ctx{0, {}};
  p.feature_mut(ctx) = {1.0, -1.0};
  const Vec l = logits(p, ctx);
  EXPECT_EQ(l, (Vec{1.0, -1.0, 0.0, 0.0}));
}

TEST(Policy, LazyFeaturesArePureFunctionOfSeedAndContext) {
  PolicyParams a = small(9), b = small(9);
  const ContextKey c1{2, {0, 1}}, c2{5, {}};
  // different query order, same resulting state
  logits(a, c1);
  logits(a, c2);
  logits(b, c2);
  logits(b, c1);
  EXPECT_EQ(a, b);
  EXPECT_EQ(logits(a, c1), logits(small(9), c1));
  EXPECT_NE(small(9).feature(c1), small(10).feature(c1));
}

TEST(Policy, ConstReadDoesNotAllocate) {
  const PolicyParams p = small();
  const ContextKey c{1, {2}};
  const Vec h = p.feature(c);
  EXPECT_FALSE(p.has_feature(c));
  EXPECT_EQ(h, p.initial_feature(c));
}

TEST(Policy, UniformAndShiftInvariance) {
  const Vec zero(4, 0.0);
  const TokenDist d = softmax_dist(zero, 1.0);
  for (double x : d.probs) EXPECT_DOUBLE_EQ(x, 0.25);
  EXPECT_NEAR(d.entropy, std::log(4.0), 1e-15);
  // dyadic shift: exact
  const Vec l{0.5, -1.25, 2.0, 0.0};
  Vec shifted = l;
  for (double& x : shifted) x += 1024.0;
  EXPECT_EQ(softmax_dist(l, 1.0).probs, softmax_dist(shifted, 1.0).probs);
  for (double c : {-3.7, 1e-3, 12345.678}) {
    Vec s = l;
    for (double& x : s) x += c;
    const Vec a = softmax_dist(l, 1.0).probs, b = softmax_dist(s, 1.0).probs;
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
  }
  const Vec constant(5, 7.3);
  for (double x : softmax_dist(constant, 1.0).probs) EXPECT_DOUBLE_EQ(x, 0.2);
}

TEST(Policy, TwoTokenSoftmax) {
  const Vec l{1.0, 0.0};
  const TokenDist d = softmax_dist(l, 1.0);
  EXPECT_NEAR(d.probs[0], std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
  EXPECT_NEAR(d.probs[0], 0.73106, 1e-5);
  EXPECT_NEAR(d.probs[1], 0.26894, 1e-5);
}

TEST(Policy, TemperatureDividesLogits) {
  const Vec l{2.0, 0.5, -1.0};
  const Vec half{1.0, 0.25, -0.5};
  const Vec a = softmax_dist(l, 2.0).probs, b = softmax_dist(half, 1.0).probs;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
  EXPECT_THROW(log_softmax(l, 0.0), std::invalid_argument);
}

TEST(Policy, NonFiniteLogitThrows) {
  const Vec bad{1.0, std::nan("")};
  EXPECT_THROW(log_softmax(bad, 1.0), NonFiniteLogit);
  const Vec inf{1.0, INFINITY};
  EXPECT_THROW(softmax_dist(inf, 1.0), NonFiniteLogit);
}

TEST(Policy, DistributionsNormalizedWithBoundedEntropy) {
  Rng rng(5);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    Vec l(2 + trial % 15);
    for (double& x : l) x = n(rng);
    const TokenDist d = softmax_dist(l, 0.5 + trial % 3);
    EXPECT_NEAR(std::accumulate(d.probs.begin(), d.probs.end(), 0.0), 1.0, 1e-12);
    EXPECT_GE(d.entropy, 0.0);
    EXPECT_LE(d.entropy, std::log(static_cast<double>(l.size())) + 1e-12);
  }
}

TEST(Policy, LogprobSequenceDefinitions) {
  const PolicyParams p = small(3);
  const TokenSeq one{2};
  EXPECT_DOUBLE_EQ(logprob_sequence(p, 4, one), std::log(dist(p, ContextKey{4, {}}).probs[2]));
  const TokenSeq seq{1, 3, 0, 5};
  double acc = 0.0;
  ContextKey ctx{4, {}};
  for (Token t : seq) {
    acc += std::log(dist(p, ctx, 0.8).probs[static_cast<std::size_t>(t)]);
    ctx.prefix.push_back(t);
  }
  EXPECT_NEAR(logprob_sequence(p, 4, seq, 0.8), acc, 1e-12);
}

TEST(Policy, SaturatedPolicyOnArgmaxPath) {
  PolicyParams p(Vocab{3, 2}, 1, 0.5, 0);
  for (double& x : p.readout().data()) x = 0.0;
  p.readout()(1, 0) = 50.0;
  const TokenSeq path{1, 1, 1};
  ContextKey ctx{0, {}};
  for (std::size_t k = 0; k < path.size(); ++k) {
    p.feature_mut(ctx) = {1.0};
    ctx.prefix.push_back(path[k]);
  }
  EXPECT_GE(logprob_sequence(p, 0, path), -1e-10);
}

TEST(Policy, GradLogprobOneHotIsZero) {
  PolicyParams p(Vocab{3, 2}, 2, 0.5, 0);
  for (double& x : p.readout().data()) x = 0.0;
  p.readout()(0, 0) = 1e4;
  const ContextKey ctx{0, {}};
  p.feature_mut(ctx) = {1.0, 0.0};
  const LogprobGrad g = grad_logprob(p, ctx, 0);
  for (double x : g.dW.data()) EXPECT_EQ(x, 0.0);
  for (double x : g.dh) EXPECT_EQ(x, 0.0);
}

TEST(Policy, GradLogprobColumnsSumToZero) {
  const PolicyParams p = small(8, 7, 4);
  const LogprobGrad g = grad_logprob(p, ContextKey{1, {3}}, 2, 1.3);
  for (std::size_t j = 0; j < 4; ++j) {
    double s = 0.0;
    for (std::size_t v = 0; v < 7; ++v) s += g.dW(v, j);
    EXPECT_NEAR(s, 0.0, 1e-14);
  }
}

TEST(Policy, GradLogprobMatchesFiniteDifferences) {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const int v = 2 + trial % 15, d = 1 + trial % 8;
    const double temp = 0.5 + 0.25 * (trial % 4);
    PolicyParams p = small(static_cast<uint64_t>(trial), v, d);
    const int qid = trial;
    TokenSeq seq;
    for (int k = 0; k < 3; ++k) seq.push_back(static_cast<Token>(rng() % static_cast<unsigned>(v)));
    ParamGrad analytic(v, d);
    std::vector<ContextKey> ctxs;
    ContextKey ctx{qid, {}};
    for (Token t : seq) {
      const LogprobGrad g = grad_logprob(p, ctx, t, temp);
      ParamGrad one(v, d);
      one.dW = g.dW;
      one.dH[ctx] = g.dh;
      analytic.add(one);
      ctxs.push_back(ctx);
      ctx.prefix.push_back(t);
    }
    const double err = gradient_rel_error(
        p, analytic, [&](const PolicyParams& q) { return logprob_sequence(q, qid, seq, temp); },
        ctxs);
    EXPECT_LT(err, 1e-5) << "trial " << trial;
  }
}

TEST(Policy, SnapshotSemantics) {
  PolicyParams p = small(4);
  const ContextKey c{0, {1}};
  logits(p, c);
  const PolicyParams s = p.snapshot();
  EXPECT_EQ(s.snapshot(), s);
  EXPECT_EQ(logprob_sequence(s, 0, TokenSeq{1, 2}), logprob_sequence(p, 0, TokenSeq{1, 2}));
  const Vec before = logits(s, c);
  p.readout()(0, 0) += 1.0;
  p.feature_mut(c)[0] += 1.0;
  EXPECT_EQ(logits(s, c), before);
}

TEST(Policy, SgdStep) {
  PolicyParams p = small(2);
  const ContextKey c{0, {}};
  logits(p, c);
  const PolicyParams before = p.snapshot();
  ParamGrad zero(p.vocab_size(), p.dim());
  sgd_step(p, zero, 0.3);
  EXPECT_EQ(p, before);
  ParamGrad g(p.vocab_size(), p.dim());
  g.dW(1, 2) = 0.5;
  g.dH[c] = {0.25, -0.5, 1.0};
  sgd_step(p, g, 0.0);
  EXPECT_EQ(p, before);
  PolicyParams full = before.snapshot(), halves = before.snapshot();
  sgd_step(full, g, 0.2);
  sgd_step(halves, g, 0.1);
  sgd_step(halves, g, 0.1);
  for (std::size_t i = 0; i < full.readout().data().size(); ++i)
    EXPECT_NEAR(full.readout().data()[i], halves.readout().data()[i], 1e-15);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(full.feature(c)[j], halves.feature(c)[j], 1e-15);
  EXPECT_NEAR(full.readout()(1, 2), before.readout()(1, 2) - 0.1, 1e-15);
}

TEST(Policy, CheckpointRoundTripIsBitExact) {
  PolicyParams p = small(12, 9, 5);
  for (int q = 0; q < 4; ++q) logits(p, ContextKey{q, {static_cast<Token>(q), 2}});
  p.readout()(3, 1) = 0.1;  // not representable in decimal
  const auto path = std::filesystem::temp_directory_path() / "thrlab_ckpt_test.txt";
  save_checkpoint(p, path);
  EXPECT_EQ(load_checkpoint(path), p);
  std::filesystem::remove(path);
}
