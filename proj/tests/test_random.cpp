#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "qsid/random.hpp"

using qsid::Philox;

// Known-answer vector for philox4x32-10 (counter 0, key 0).
TEST(Philox, KnownAnswerZeroCounterZeroKey) {
  const auto out = Philox::block({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x6627e8d5u);
  EXPECT_EQ(out[1], 0xe169c58du);
  EXPECT_EQ(out[2], 0xbc57ac4cu);
  EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerAllOnes) {
  const auto out = Philox::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out[0], 0x408f276du);
  EXPECT_EQ(out[1], 0x41c83b0eu);
  EXPECT_EQ(out[2], 0xa20bc7c6u);
  EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPiDigits) {
  const auto out = Philox::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(out[0], 0xd16cfe09u);
  EXPECT_EQ(out[1], 0x94fdccebu);
  EXPECT_EQ(out[2], 0x5001e420u);
  EXPECT_EQ(out[3], 0x24126ea1u);
}

TEST(Philox, FirstDrawPacksFirstBlock) {
  Philox rng(0);
  EXPECT_EQ(rng(), (std::uint64_t{0xe169c58du} << 32) | 0x6627e8d5u);
  EXPECT_EQ(rng(), (std::uint64_t{0x9b00dbd8u} << 32) | 0xbc57ac4cu);
}

TEST(Philox, SameSeedSameSequence) {
  Philox a = Philox::stream(42, {1, 2}), b = Philox::stream(42, {1, 2});
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a(), b());
}

TEST(Philox, TagsSeparateStreams) {
  std::set<std::uint64_t> firsts;
  for (std::uint64_t s = 0; s < 4; ++s)
    for (std::uint64_t t = 0; t < 4; ++t) firsts.insert(Philox::stream(7, {s, t})());
  EXPECT_EQ(firsts.size(), 16u);
  // tag order matters
  EXPECT_NE(Philox::stream(7, {1, 2})(), Philox::stream(7, {2, 1})());
}

TEST(Philox, UniformMoments) {
  Philox rng(3);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
    s2 += u * u;
  }
  EXPECT_NEAR(s / n, 0.5, 5 * std::sqrt(1.0 / 12 / n));
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12, 2e-3);
}

TEST(Philox, NormalMoments) {
  Philox rng(4);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 5 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Philox, BinomialEdgesAndMean) {
  Philox rng(5);
  EXPECT_EQ(rng.binomial(0, 0.5), 0);
  EXPECT_EQ(rng.binomial(10, 0.0), 0);
  EXPECT_EQ(rng.binomial(10, 1.0), 10);
  double s = 0;
  for (int i = 0; i < 2000; ++i) s += rng.binomial(100, 0.3);
  EXPECT_NEAR(s / 2000, 30.0, 5 * std::sqrt(21.0 / 2000));
}
