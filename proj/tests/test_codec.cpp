#include <cfloat>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "generators.hpp"
#include "qsync/codec.hpp"
#include "qsync/errors.hpp"

namespace qsync {
namespace {

using testing::Gen;

TEST(Quantize, SignConvention) {
  EXPECT_EQ(quantize(0.7, 2.0), 2.0);
  EXPECT_EQ(quantize(-0.3, 0.5), -0.5);
  EXPECT_EQ(quantize(0.0, 1.0), 1.0);
  EXPECT_EQ(quantize(-0.0, 1.0), 1.0);
  EXPECT_EQ(sign_bit(-1e-300), -1);
}

TEST(CoderStep, GeometricScheduleExample) {
  const CoderConfig cfg{5.0, 0.99, 0.0, 0.04};
  const auto out = coder_step(CoderState::initial(cfg), cfg, -1.2);
  EXPECT_EQ(out.word.bit, -1);
  EXPECT_EQ(out.value, -5.0);
  EXPECT_EQ(out.next.k, 1);
  EXPECT_DOUBLE_EQ(out.next.M, 4.95);
  EXPECT_FALSE(out.overflow);

  const auto dec = decoder_step(CoderState::initial(cfg), cfg, out.word);
  EXPECT_EQ(dec.eps_bar, -5.0);
  EXPECT_EQ(dec.next, out.next);
}

TEST(CoderStep, ConstantRangeWhenRhoIsOne) {
  const CoderConfig cfg{5.0, 1.0, 0.0, 0.04};
  const CoderState s{2, 5.0};
  const auto out = coder_step(s, cfg, 0.1);
  EXPECT_EQ(out.value, 5.0);
  EXPECT_EQ(out.next.M, 5.0);
}

TEST(CoderStep, SaturatedScheduleExample) {
  const CoderConfig cfg{5.0, 0.9, 0.1, 0.04};
  const auto next = advance(CoderState::initial(cfg), cfg);
  EXPECT_DOUBLE_EQ(next.M, (5.0 - 0.1) * 0.9 + 0.1);
  EXPECT_DOUBLE_EQ(next.M, 4.51);
}

TEST(CoderStep, FlagsOverflowBeyondTwiceTheRange) {
  const CoderConfig cfg{1.0, 0.5, 0.0, 0.1};
  const auto s = CoderState::initial(cfg);
  EXPECT_FALSE(coder_step(s, cfg, 2.0).overflow);
  EXPECT_TRUE(coder_step(s, cfg, 2.0000001).overflow);
  EXPECT_TRUE(coder_step(s, cfg, -3.0).overflow);
}

TEST(Schedule, MatchesClosedFormAndIsMonotone) {
  Gen g(21);
  for (int trial = 0; trial < 100; ++trial) {
    const double M0 = g.log_uniform(1e-3, 1e3);
    const double M_inf = g.coin() ? 0.0 : g.uniform(0.0, 0.5) * M0;
    const CoderConfig cfg{M0, g.uniform(0.5, 1.0), M_inf, 0.01};
    auto s = CoderState::initial(cfg);
    for (int k = 1; k <= 200; ++k) {
      const auto next = advance(s, cfg);
      EXPECT_LE(next.M, s.M);
      EXPECT_GE(next.M, cfg.M_inf);
      EXPECT_EQ(next.k, k);
      s = next;
    }
    const double closed = (M0 - M_inf) * std::pow(cfg.rho, 200) + M_inf;
    EXPECT_NEAR(s.M, closed, 1e-11 * M0);
  }
}

TEST(Schedule, RangeNeverReachesZero) {
  const CoderConfig cfg{1.0, 0.01, 0.0, 1.0};
  auto s = CoderState::initial(cfg);
  for (int k = 0; k < 400; ++k) s = advance(s, cfg);
  EXPECT_EQ(s.M, DBL_MIN);
  EXPECT_EQ(advance(s, cfg).M, DBL_MIN);
}

TEST(CoderConfig, ValidationRejectsOutOfRangeFields) {
  EXPECT_NO_THROW((CoderConfig{5.0, 1.0, 0.0, 0.04}.validate()));
  EXPECT_THROW((CoderConfig{0.0, 0.9, 0.0, 0.04}.validate()), ConfigError);
  EXPECT_THROW((CoderConfig{5.0, 0.0, 0.0, 0.04}.validate()), ConfigError);
  EXPECT_THROW((CoderConfig{5.0, 1.1, 0.0, 0.04}.validate()), ConfigError);
  EXPECT_THROW((CoderConfig{5.0, 0.9, 5.0, 0.04}.validate()), ConfigError);
  EXPECT_THROW((CoderConfig{5.0, 0.9, -1.0, 0.04}.validate()), ConfigError);
  EXPECT_THROW((CoderConfig{5.0, 0.9, 0.0, 0.0}.validate()), ConfigError);
}

TEST(Lockstep, DecoderReplaysCoderBitForBit) {
  Gen g(22);
  for (int trial = 0; trial < 20; ++trial) {
    const CoderConfig cfg{g.uniform(0.1, 10.0), g.uniform(0.9, 1.0),
                          g.coin() ? 0.0 : 0.01, 0.04};
    auto enc = CoderState::initial(cfg);
    auto dec = CoderState::initial(cfg);
    for (int k = 0; k < 1000; ++k) {
      const double eps = g.uniform(-3.0, 3.0) * enc.M;
      const auto c = coder_step(enc, cfg, eps);
      const auto d = decoder_step(dec, cfg, c.word);
      ASSERT_EQ(c.next, d.next);
      ASSERT_EQ(c.value, d.eps_bar);
      enc = c.next;
      dec = d.next;
    }
  }
}

TEST(Lockstep, UnitRhoDecodesToPlusMinusM0) {
  const CoderConfig cfg{2.5, 1.0, 0.0, 0.1};
  Gen g(23);
  auto s = CoderState::initial(cfg);
  for (int k = 0; k < 500; ++k) {
    const auto d = decoder_step(s, cfg, Codeword{g.coin() ? 1 : -1});
    EXPECT_EQ(std::abs(d.eps_bar), 2.5);
    s = d.next;
  }
}

TEST(QuantizationError, BoundedByRangeInsideTwiceTheRange) {
  Gen g(24);
  for (int k = 0; k < 100000; ++k) {
    const double M = g.log_uniform(1e-6, 1e6);
    const double eps = g.uniform(-2.0, 2.0) * M;
    EXPECT_LE(std::abs(eps - quantize(eps, M)), M);
  }
}

TEST(BitBudget, OneSymbolPerSample) {
  EXPECT_DOUBLE_EQ(bit_budget(CoderConfig{5.0, 1.0, 0.0, 0.04}, 10.0).rate, 25.0);
  EXPECT_DOUBLE_EQ(bit_budget(CoderConfig{5.0, 1.0, 0.0, 0.02}, 10.0).rate, 50.0);
  EXPECT_DOUBLE_EQ(bit_budget(CoderConfig{5.0, 1.0, 0.0, 0.1}, 10.0).rate, 10.0);
  EXPECT_EQ(bit_budget(CoderConfig{5.0, 1.0, 0.0, 0.04}, 0.0).count, 1);
  EXPECT_EQ(bit_budget(CoderConfig{5.0, 1.0, 0.0, 0.04}, 1000.0).count, 25001);
  EXPECT_EQ(bit_budget(CoderConfig{5.0, 1.0, 0.0, 0.1}, 0.35).count, 4);
}

}  // namespace
}  // namespace qsync
