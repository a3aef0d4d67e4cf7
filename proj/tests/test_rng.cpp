#include <gtest/gtest.h>

#include <compkern/parallel.hpp>
#include <compkern/rng.hpp>

using namespace compkern;

// Known-answer vectors from the Random123 distribution (kat_vectors).
TEST(Philox, KnownAnswers) {
  auto z = Philox4x32::bijection({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(z[0], 0x6627e8d5u);
  EXPECT_EQ(z[1], 0xe169c58du);
  EXPECT_EQ(z[2], 0xbc57ac4cu);
  EXPECT_EQ(z[3], 0x9b00dbd8u);
  auto f = Philox4x32::bijection({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(f[0], 0x408f276du);
  EXPECT_EQ(f[1], 0x41c83b0eu);
  EXPECT_EQ(f[2], 0xa20bc7c6u);
  EXPECT_EQ(f[3], 0x6d5451fdu);
  auto p = Philox4x32::bijection({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(p[0], 0xd16cfe09u);
  EXPECT_EQ(p[1], 0x94fdccebu);
  EXPECT_EQ(p[2], 0x5001e420u);
  EXPECT_EQ(p[3], 0x24126ea1u);
}

TEST(Philox, SameSeedSameStream) {
  Philox4x32 a(42, 7), b(42, 7), c(42, 8);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a(), y = b(), z = c();
    EXPECT_EQ(x, y);
    differs |= (x != z);
  }
  EXPECT_TRUE(differs);
}

TEST(Philox, UniformIsOpenAndCentered) {
  Philox4x32 e(1);
  double s = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = e.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
  }
  EXPECT_NEAR(s / n, 0.5, 5 * std::sqrt(1.0 / 12 / n));
}

TEST(Parallel, ResultIndependentOfWorkerCount) {
  std::vector<double> one(64), many(64);
  setenv("COMPKERN_THREADS", "1", 1);
  parallel_for(64, [&](std::size_t i) { one[i] = substream(3, StreamTag::misc, i).uniform(); });
  setenv("COMPKERN_THREADS", "4", 1);
  parallel_for(64, [&](std::size_t i) { many[i] = substream(3, StreamTag::misc, i).uniform(); });
  unsetenv("COMPKERN_THREADS");
  EXPECT_EQ(one, many);
}
