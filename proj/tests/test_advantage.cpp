// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "thrlab/advantage.hpp"
#include "thrlab/errors.hpp"
#include "thrlab/verify.hpp"

using namespace thrlab;

namespace {

std::vector<int> rewards_of(const Group& g) {
  std::vector<int> r;
  for (const Response& x : g.responses) r.push_back(x.reward);
  return r;
}

PasskConfig k_of(int k, double chi = 0.2) { return PasskConfig{k, chi}; }

}  // namespace

TEST(Advantage, Binomials) {
  EXPECT_EQ(binomial(8, 4), 70u);
  EXPECT_EQ(binomial(10, 0), 1u);
  EXPECT_EQ(binomial(3, 5), 0u);
  EXPECT_EQ(binomial(3, -1), 0u);
  EXPECT_EQ(binomial(64, 32), 1832624140942590534ull);
}

TEST(Advantage, GrpoMatchesStandardizedRewards) {
  const Group g = synthetic_group(8, 2);
  const AdvantageTable t = grpo_advantages(g);
  EXPECT_NEAR(t.values[0], 1.7320508, 1e-7);
  EXPECT_NEAR(t.values[7], -0.5773503, 1e-7);
  const auto r = rewards_of(g);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(t.values[i], oracle::standardized(r, i), 1e-14);
  const AdvantageTable half = grpo_advantages(synthetic_group(4, 2));
  EXPECT_EQ(half.values, (Vec{1.0, 1.0, -1.0, -1.0}));
}

TEST(Advantage, GroupMeanZero) {
  for (int g = 2; g <= 16; ++g)
    for (int np = 1; np < g; ++np) {
      const AdvantageTable t = grpo_advantages(synthetic_group(g, np));
      EXPECT_NEAR(np * t.qplus - (g - np) * t.qminus, 0.0, 1e-10);
    }
}

TEST(Advantage, DegenerateGroupsRejected) {
  EXPECT_THROW(grpo_advantages(synthetic_group(4, 4)), GroupDegenerate);
  EXPECT_THROW(grpo_advantages(synthetic_group(4, 0)), GroupDegenerate);
  EXPECT_THROW(passk_advantages(synthetic_group(4, 0), k_of(2)), GroupDegenerate);
}

TEST(Advantage, PasskExamples) {
  const AdvantageTable half = passk_advantages(synthetic_group(8, 4), k_of(4));
  EXPECT_NEAR(half.values[0], 1.0 / std::sqrt(69.0), 1e-15);
  EXPECT_NEAR(half.values[0], 0.1203859, 1e-7);
  EXPECT_NEAR(half.values[7], -1.0 / std::sqrt(69.0), 1e-15);

  for (double v : passk_advantages(synthetic_group(8, 6), k_of(4)).values) EXPECT_EQ(v, 0.0);

  const AdvantageTable quarter = passk_advantages(synthetic_group(8, 2), k_of(4));
  EXPECT_NEAR(quarter.values[0], 0.5222330, 1e-7);
  EXPECT_NEAR(quarter.values[7], -0.1740777, 1e-7);
  EXPECT_NEAR(quarter.values[7], -(0.25 / 0.75) * quarter.values[0], 1e-12);
}

TEST(Advantage, PasskMatchesIndependentForms) {
  for (int g = 2; g <= 10; ++g)
    for (int np = 1; np < g; ++np)
      for (int k = 1; k <= g; ++k) {
        const AdvantageTable t = passk_advantages(synthetic_group(g, np), k_of(k));
        const PasskPair d = passk_direct(g, np, k), e = passk_enumerate(g, np, k);
        EXPECT_NEAR(t.values.front(), d.pos, 1e-12);
        EXPECT_NEAR(t.values.back(), d.neg, 1e-12);
        EXPECT_NEAR(t.values.front(), e.pos, 1e-12);
        EXPECT_NEAR(t.values.back(), e.neg, 1e-12);
      }
}

TEST(Advantage, KTooLarge) {
  EXPECT_THROW(passk_advantages(synthetic_group(4, 2), k_of(5)), KTooLarge);
  EXPECT_THROW(passk_advantages(synthetic_group(4, 2), k_of(0)), std::invalid_argument);
}

TEST(Advantage, MixedSchemes) {
  const Group g = synthetic_group(8, 4);
  EXPECT_NEAR(passk_mixed(g, k_of(4)).values[0], 0.5601930, 1e-7);
  EXPECT_NEAR(static_mixed(g, k_of(4, 0.2)).values[0], 0.8240772, 1e-7);
  EXPECT_EQ(static_mixed(g, k_of(4, 0.0)).values, grpo_advantages(g).values);
  EXPECT_EQ(static_mixed(g, k_of(4, 1.0)).values, passk_advantages(g, k_of(4)).values);

  // B = 0: the mix reduces to q * A
  const Group easy = synthetic_group(8, 6);
  const AdvantageTable grpo = grpo_advantages(easy), mixed = passk_mixed(easy, k_of(4));
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(mixed.values[i], 0.75 * grpo.values[i]);
}

TEST(Advantage, QuestionLevelSchemesAreResponseConstant) {
  InstanceShape shape;
  shape.group_size = 8;
  const RandomInstance inst = random_instance(77, shape);
  const Group& g = inst.groups[0];
  for (const AdvantageTable& t : {grpo_advantages(g), passk_advantages(g, k_of(2)),
                                  passk_mixed(g, k_of(3)), static_mixed(g, k_of(4))})
    for (const Response& r : g.responses)
      for (std::size_t s = r.stats_begin; s < r.stats_end; ++s)
        EXPECT_EQ(t.values[s], t.values[r.stats_begin]);
}

TEST(Advantage, SignMasks) {
  const AdvantageTable t = grpo_advantages(synthetic_group(2, 1));
  EXPECT_EQ(t.values, (Vec{1.0, -1.0}));
  EXPECT_EQ(sign_mask(t, SignMode::kPosOnly).values, (Vec{1.0, 0.0}));
  EXPECT_EQ(sign_mask(t, SignMode::kNegOnly).values, (Vec{0.0, -1.0}));
  for (double v : sign_mask(sign_mask(t, SignMode::kPosOnly), SignMode::kNegOnly).values)
    EXPECT_EQ(v, 0.0);
}
